"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own code paths: gradients
are checked against central finite differences, and quadratic training
dynamics against a per-mode recurrence in the eigenbasis of an independent
eigendecomposition.
"""

import numpy as np
import pytest

from steplab.problems import Dataset, MlpModel, make_dataset, make_quadratic


def fd_gradient(f, w, rel_step=1e-5):
    """Central finite differences with per-coordinate step rel_step*(1+|w_i|)."""
    w = np.asarray(w, dtype=float)
    grad = np.zeros_like(w)
    for i in range(len(w)):
        h = rel_step * (1.0 + abs(w[i]))
        wp = w.copy()
        wm = w.copy()
        wp[i] += h
        wm[i] -= h
        grad[i] = (f(wp) - f(wm)) / (2.0 * h)
    return grad


def fd_gradient_coords(f, w, coords, rel_step=1e-5):
    """Finite differences restricted to the given coordinates."""
    w = np.asarray(w, dtype=float)
    out = {}
    for i in coords:
        h = rel_step * (1.0 + abs(w[i]))
        wp = w.copy()
        wm = w.copy()
        wp[i] += h
        wm[i] -= h
        out[i] = (f(wp) - f(wm)) / (2.0 * h)
    return out


def eig_heavy_ball_losses(matrix, w0, eta, mu, steps):
    """Loss curve of heavy ball on f(w) = w.Aw via per-mode recurrences.

    Works in the eigenbasis of an independent eigendecomposition of A, so it
    shares no code with the training loop it checks.
    """
    lam, vecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    z = vecs.T @ np.asarray(w0, dtype=float)
    g = np.zeros_like(z)
    losses = [float(np.sum(lam * z * z))]
    for _ in range(steps):
        g = mu * g + 2.0 * lam * z
        z = z - eta * g
        losses.append(float(np.sum(lam * z * z)))
    return np.asarray(losses)


def eig_final_state(matrix, w0, eta, mu, steps):
    """Final parameter vector of the same recurrence, mapped back."""
    lam, vecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    z = vecs.T @ np.asarray(w0, dtype=float)
    g = np.zeros_like(z)
    for _ in range(steps):
        g = mu * g + 2.0 * lam * z
        z = z - eta * g
    return vecs @ z


@pytest.fixture(scope="session")
def moons() -> Dataset:
    return make_dataset("two_moons", 200, 0.1, seed=2)


@pytest.fixture(scope="session")
def toy_mlp() -> MlpModel:
    return MlpModel((2, 32, 32, 2), "tanh")


@pytest.fixture(scope="session")
def small_quadratic():
    return make_quadratic(10, 100.0, seed=1)
