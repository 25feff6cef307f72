"""Objective functions for the lab: random ill-conditioned quadratics, toy
multilayer perceptrons with manual backpropagation, and synthetic datasets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

DATASET_KINDS = ("two_gaussians", "two_moons", "random_labels")
ACTIVATIONS = ("tanh", "relu")


class Problem(Protocol):
    """Minimal contract shared by all objectives.

    ``evaluate`` and ``gradient`` accept an optional mini-batch; problems
    that do not need data (the quadratics) simply ignore it.  ``eval_grad``
    returns both at the cost of a single pass.
    """

    dimension: int

    @property
    def optimum_hint(self) -> np.ndarray | None: ...

    def evaluate(self, w: np.ndarray, batch: "Dataset | None" = None) -> float: ...

    def gradient(self, w: np.ndarray, batch: "Dataset | None" = None) -> np.ndarray: ...

    def eval_grad(
        self, w: np.ndarray, batch: "Dataset | None" = None
    ) -> tuple[float, np.ndarray]: ...

    def initial_point(self, seed: int) -> np.ndarray: ...

    def describe(self) -> dict: ...


# ---------------------------------------------------------------------------
# Quadratics
# ---------------------------------------------------------------------------


@dataclass
class QuadraticProblem:
    """f(w) = w . A w for a symmetric PSD matrix A; the minimum is f(0) = 0."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.eigenvalues = np.sort(np.asarray(self.eigenvalues, dtype=float).ravel())
        d = self.matrix.shape[0]
        if self.matrix.ndim != 2 or self.matrix.shape != (d, d):
            raise ValueError(f"matrix must be square, got shape {self.matrix.shape}")
        if self.eigenvalues.shape != (d,):
            raise ValueError("eigenvalues must match the matrix dimension")
        if not np.all(np.abs(self.matrix - self.matrix.T) <= 1e-10):
            raise ValueError("matrix is not symmetric within 1e-10 per entry")
        if self.eigenvalues[0] < 0:
            raise ValueError("eigenvalues must be non-negative")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition_number(self) -> float:
        lo = self.eigenvalues[0]
        if lo == 0.0:
            return float("inf")
        return float(self.eigenvalues[-1] / lo)

    @property
    def optimum_hint(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def _check(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dimension,):
            raise ValueError(
                f"expected vector of length {self.dimension}, got shape {w.shape}"
            )
        return w

    def eval_grad(self, w, batch=None):
        w = self._check(w)
        grad = 2.0 * (self.matrix @ w)
        # f = w.Aw = 0.5 * w.(2Aw), so the loss comes free with the gradient.
        loss = float(0.5 * (w @ grad))
        return loss, grad

    def evaluate(self, w, batch=None) -> float:
        return self.eval_grad(w)[0]

    def gradient(self, w, batch=None) -> np.ndarray:
        return self.eval_grad(w)[1]

    def initial_point(self, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).standard_normal(self.dimension)

    def describe(self) -> dict:
        return {
            "kind": "quadratic",
            "dimension": self.dimension,
            "condition_number": self.condition_number,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "quadratic",
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuadraticProblem":
        if data.get("version") != 1:
            raise ValueError(f"unsupported quadratic format version: {data.get('version')!r}")
        return cls(
            matrix=np.asarray(data["matrix"], dtype=float),
            eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
            seed=data.get("seed"),
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "QuadraticProblem":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_quadratic(dim: int, condition_number: float, seed: int) -> QuadraticProblem:
    """Random quadratic with a log-spaced spectrum from 1 to ``condition_number``.

    The matrix is Q diag(lam) Q^T where Q is the orthogonal factor of a seeded
    Gaussian matrix, so the condition number of the result equals the request
    exactly (up to eigensolver noise) and the same seed reproduces the same
    matrix bit for bit.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    if condition_number < 1:
        raise ValueError(f"condition_number must be >= 1, got {condition_number}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = np.logspace(0.0, np.log10(condition_number), dim)
    a = (q * lam) @ q.T
    a = (a + a.T) / 2.0  # restore exact symmetry lost to rounding
    return QuadraticProblem(matrix=a, eigenvalues=lam, seed=seed)


def quadratic_eval_grad(problem: QuadraticProblem, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss w.Aw and gradient 2Aw in one pass."""
    return problem.eval_grad(w)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """A small classification dataset: inputs (n, d), integer labels (n,)."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    kind: str = "custom"
    seed: int | None = None
    noise: float | None = None

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be a non-empty (n_samples, n_features) matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("labels must be one integer per sample")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain non-finite values")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            inputs=self.inputs[indices],
            labels=self.labels[indices],
            n_classes=self.n_classes,
            kind=self.kind,
            seed=self.seed,
            noise=self.noise,
        )

    def split(self, holdout_fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Seeded shuffle split into (train, holdout)."""
        if not 0.0 < holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")
        n_hold = max(1, int(round(self.n_samples * holdout_fraction)))
        if n_hold >= self.n_samples:
            raise ValueError("holdout_fraction leaves no training samples")
        perm = np.random.default_rng(seed).permutation(self.n_samples)
        return self.subset(perm[n_hold:]), self.subset(perm[:n_hold])

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "n_classes": self.n_classes,
            "seed": self.seed,
            "noise": self.noise,
        }

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": self.kind,
            "seed": self.seed,
            "noise": self.noise,
            "n_classes": self.n_classes,
            "inputs": self.inputs.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dataset":
        if data.get("version") != 1:
            raise ValueError(f"unsupported dataset format version: {data.get('version')!r}")
        return cls(
            inputs=np.asarray(data["inputs"], dtype=float),
            labels=np.asarray(data["labels"], dtype=int),
            n_classes=int(data["n_classes"]),
            kind=data.get("kind", "custom"),
            seed=data.get("seed"),
            noise=data.get("noise"),
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load_json(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_dataset(kind: str, n_samples: int, noise: float, seed: int) -> Dataset:
    """Synthesize a two-class dataset, balanced within one sample.

    Kinds: ``two_gaussians`` (two point clouds, linearly separable at zero
    noise), ``two_moons`` (interleaved half circles), ``random_labels``
    (Gaussian inputs with labels carrying no signal).
    """
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")

    rng = np.random.default_rng(seed)
    n0 = n_samples // 2
    n1 = n_samples - n0

    if kind == "two_gaussians":
        centers = np.array([[-1.5, 0.0], [1.5, 0.0]])
        x = np.vstack([np.tile(centers[0], (n0, 1)), np.tile(centers[1], (n1, 1))])
        y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
        if noise > 0:
            x = x + noise * rng.standard_normal(x.shape)
    elif kind == "two_moons":
        t0 = np.linspace(0.0, np.pi, n0)
        t1 = np.linspace(0.0, np.pi, n1)
        outer = np.column_stack([np.cos(t0), np.sin(t0)])
        inner = np.column_stack([1.0 - np.cos(t1), 1.0 - np.sin(t1) - 0.5])
        x = np.vstack([outer, inner])
        y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
        if noise > 0:
            x = x + noise * rng.standard_normal(x.shape)
    else:  # random_labels
        x = rng.standard_normal((n_samples, 2))
        y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])

    perm = rng.permutation(n_samples)
    return Dataset(
        inputs=x[perm], labels=y[perm], n_classes=2, kind=kind, seed=seed, noise=noise
    )


# ---------------------------------------------------------------------------
# Toy MLP with manual backpropagation
# ---------------------------------------------------------------------------


@dataclass
class MlpModel:
    """Fully connected classifier over a flat parameter vector.

    The architecture is fixed by ``layer_sizes``; the weights live outside
    the model, packed layer by layer as (W, b) into one vector, so the model
    plugs into the same optimizer loop as the quadratics.
    """

    layer_sizes: tuple[int, ...] = (2, 32, 32, 2)
    activation: str = "tanh"

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("layer_sizes needs at least input and output sizes")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}"
            )

    @property
    def dimension(self) -> int:
        sizes = self.layer_sizes
        return sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def optimum_hint(self) -> None:
        return None

    def initial_point(self, seed: int) -> np.ndarray:
        """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
        rng = np.random.default_rng(seed)
        chunks = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            chunks.append(w.ravel())
            chunks.append(np.zeros(fan_out))
        return np.concatenate(chunks)

    def _unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dimension,):
            raise ValueError(
                f"expected parameter vector of length {self.dimension}, got shape {w.shape}"
            )
        layers = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            mat = w[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            bias = w[offset : offset + fan_out]
            offset += fan_out
            layers.append((mat, bias))
        return layers

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def forward(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Class logits for a batch of inputs."""
        h = np.asarray(inputs, dtype=float)
        layers = self._unpack(w)
        for mat, bias in layers[:-1]:
            h = self._act(h @ mat + bias)
        mat, bias = layers[-1]
        return h @ mat + bias

    def predict(self, w: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(w, inputs), axis=1)

    def eval_grad(self, w, batch: Dataset | None = None):
        return mlp_eval_grad(self, w, batch)

    def evaluate(self, w, batch: Dataset | None = None) -> float:
        return self.eval_grad(w, batch)[0]

    def gradient(self, w, batch: Dataset | None = None) -> np.ndarray:
        return self.eval_grad(w, batch)[1]

    def describe(self) -> dict:
        return {
            "kind": "mlp",
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
        }


def mlp_eval_grad(
    model: MlpModel, w: np.ndarray, batch: Dataset | None
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its exact gradient.

    Weight decay is not part of the objective here; the optimizer couples it
    into the update instead.
    """
    if batch is None or batch.n_samples == 0:
        raise ValueError("mlp_eval_grad requires a non-empty batch")
    if batch.n_classes != model.n_classes:
        raise ValueError(
            f"batch has {batch.n_classes} classes, model outputs {model.n_classes}"
        )
    layers = model._unpack(w)
    x = batch.inputs
    y = batch.labels
    n = x.shape[0]

    # Forward pass, keeping the activations for the backward sweep.
    hs = [x]
    zs = []
    h = x
    for mat, bias in layers[:-1]:
        z = h @ mat + bias
        zs.append(z)
        h = model._act(z)
        hs.append(h)
    mat, bias = layers[-1]
    logits = h @ mat + bias

    # Stable softmax cross-entropy.
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n), y].mean())

    probs = np.exp(log_probs)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        mat, _ = layers[i]
        grads.append(delta.sum(axis=0))          # bias
        grads.append((hs[i].T @ delta).ravel())  # weights
        if i > 0:
            delta = delta @ mat.T
            if model.activation == "tanh":
                delta = delta * (1.0 - hs[i] ** 2)
            else:
                delta = delta * (zs[i - 1] > 0)
    grads.reverse()
    return loss, np.concatenate(grads)


def accuracy(model: MlpModel, w: np.ndarray, dataset: Dataset) -> float:
    """Fraction of correctly classified samples."""
    return float(np.mean(model.predict(w, dataset.inputs) == dataset.labels))
