"""Heavy-ball gradient descent, multi-phase schedules, and the training loop.

The update is the classic momentum recurrence: starting from a zero buffer,
g' = mu * g + (grad + weight_decay * w) and w' = w - learning_rate * g'.
Weight decay joins the raw gradient before the buffer accumulates it.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diagnostics import (
    ReferencePoint,
    TraceRow,
    TrainTrace,
    alignment,
    config_fingerprint,
)
from .problems import Dataset, Problem

ALGORITHMS = ("sgd_momentum",)
LOG_MODES = ("iteration", "epoch", "final")


class DivergenceError(RuntimeError):
    """Raised when an update would consume a non-finite gradient."""

    def __init__(self, step: int):
        super().__init__(f"non-finite gradient at step {step}")
        self.step = step


@dataclass(frozen=True)
class HyperParams:
    """The control knobs of one optimizer phase."""

    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
        }


@dataclass
class MomentumState:
    """Parameter vector and momentum buffer; the full optimizer state."""

    w: np.ndarray
    g: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.w.shape != self.g.shape:
            raise ValueError("parameter vector and momentum buffer must match in shape")
        if self.step < 0:
            raise ValueError("step count must be non-negative")

    @classmethod
    def initial(cls, w: np.ndarray) -> "MomentumState":
        w = np.asarray(w, dtype=float)
        return cls(w=w, g=np.zeros_like(w), step=0)


def momentum_step(state: MomentumState, grad: np.ndarray, hp: HyperParams) -> MomentumState:
    """One heavy-ball update; returns the new state, the input is untouched."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.w.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match state {state.w.shape}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(state.step)
    if hp.weight_decay != 0.0:
        grad = grad + hp.weight_decay * state.w
    g_new = hp.momentum * state.g + grad
    w_new = state.w - hp.learning_rate * g_new
    return MomentumState(w=w_new, g=g_new, step=state.step + 1)


@dataclass(frozen=True)
class PhaseSpec:
    """Settings for one schedule phase; batch_size None means full batch."""

    hyper: HyperParams
    batch_size: int | None = None
    algorithm: str = "sgd_momentum"

    def __post_init__(self) -> None:
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    def to_dict(self) -> dict:
        return {
            **self.hyper.to_dict(),
            "batch_size": self.batch_size,
            "algorithm": self.algorithm,
        }


@dataclass(frozen=True)
class ScheduleSpec:
    """Ordered phases with the epochs at which the run switches between them.

    A transition epoch belongs to the phase it switches to.  By default the
    momentum buffer is reset to zero at each boundary, as if the new phase's
    algorithm started fresh; pass reset_momentum_on_transition=False to carry
    the buffer across.
    """

    phases: tuple[PhaseSpec, ...]
    transition_epochs: tuple[int, ...] = ()
    reset_momentum_on_transition: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "transition_epochs", tuple(self.transition_epochs))
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        if len(self.transition_epochs) != len(self.phases) - 1:
            raise ValueError(
                f"{len(self.phases)} phases need {len(self.phases) - 1} transition epochs, "
                f"got {len(self.transition_epochs)}"
            )
        if any(e < 0 for e in self.transition_epochs):
            raise ValueError("transition epochs must be non-negative")
        if any(
            b <= a for a, b in zip(self.transition_epochs, self.transition_epochs[1:])
        ):
            raise ValueError("transition epochs must be strictly increasing")

    @classmethod
    def single_phase(
        cls, hyper: HyperParams, batch_size: int | None = None
    ) -> "ScheduleSpec":
        return cls(phases=(PhaseSpec(hyper=hyper, batch_size=batch_size),))

    def to_dict(self) -> dict:
        return {
            "phases": [p.to_dict() for p in self.phases],
            "transition_epochs": list(self.transition_epochs),
            "reset_momentum_on_transition": self.reset_momentum_on_transition,
        }


def active_phase_index(spec: ScheduleSpec, epoch: int) -> int:
    """Index of the phase governing ``epoch``; a transition epoch already
    belongs to the new phase."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return bisect_right(spec.transition_epochs, epoch)


def active_phase(spec: ScheduleSpec, epoch: int) -> PhaseSpec:
    return spec.phases[active_phase_index(spec, epoch)]


def reset_on_transition(state: MomentumState) -> MomentumState:
    """Zero the momentum buffer, keeping parameters and step count."""
    return MomentumState(w=state.w, g=np.zeros_like(state.g), step=state.step)


def _epoch_batches(
    dataset: Dataset | None,
    batch_size: int | None,
    n_iters: int,
    rng: np.random.Generator,
) -> list[Dataset | None]:
    """Batches for one epoch: shuffled without replacement for minibatch mode,
    the full dataset (or nothing) otherwise."""
    if dataset is None or batch_size is None:
        return [dataset] * n_iters
    batches: list[Dataset | None] = []
    while len(batches) < n_iters:
        perm = rng.permutation(dataset.n_samples)
        for lo in range(0, dataset.n_samples, batch_size):
            batches.append(dataset.subset(perm[lo : lo + batch_size]))
            if len(batches) == n_iters:
                break
    return batches


def _default_iters(dataset: Dataset | None, batch_size: int | None) -> int:
    if dataset is None or batch_size is None:
        return 1
    return -(-dataset.n_samples // batch_size)  # ceil


def train(
    problem: Problem,
    spec: ScheduleSpec,
    epochs: int,
    *,
    dataset: Dataset | None = None,
    iters_per_epoch: int | None = None,
    seed: int = 0,
    log: str | None = None,
    log_every: int = 1,
    store_snapshots: bool = False,
    trace_sink: Callable[[TraceRow], None] | None = None,
) -> tuple[MomentumState, TrainTrace]:
    """Run a schedule end to end and return the final state plus its trace.

    Logging granularity: ``iteration`` records every ``log_every``-th step and
    the final point (the default without a dataset), ``epoch`` records one row
    per epoch from a full-dataset evaluation (the default with a dataset),
    ``final`` records only the end point.  A non-finite loss ends the run
    early; the divergence step is recorded on the trace instead of raised.

    Everything downstream of ``seed`` is deterministic: the initial point,
    the shuffling, and therefore the trace.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if iters_per_epoch is not None and iters_per_epoch < 1:
        raise ValueError(f"iters_per_epoch must be >= 1, got {iters_per_epoch}")
    if log_every < 1:
        raise ValueError(f"log_every must be >= 1, got {log_every}")
    if any(e >= epochs for e in spec.transition_epochs):
        raise ValueError("transition epochs must lie within the epoch budget")
    if dataset is None and any(p.batch_size is not None for p in spec.phases):
        raise ValueError("minibatch phases require a dataset")
    if log is None:
        log = "iteration" if dataset is None else "epoch"
    if log not in LOG_MODES:
        raise ValueError(f"log must be one of {LOG_MODES}, got {log!r}")

    fingerprint = config_fingerprint(
        {
            "problem": problem.describe(),
            "dataset": dataset.describe() if dataset is not None else None,
            "schedule": spec.to_dict(),
            "epochs": epochs,
            "iters_per_epoch": iters_per_epoch,
            "seed": seed,
            "log": log,
            "log_every": log_every,
        }
    )

    rng = np.random.default_rng(seed)
    state = MomentumState.initial(problem.initial_point(seed))
    ref = (
        ReferencePoint(problem.optimum_hint, "known_optimum")
        if problem.optimum_hint is not None
        else None
    )

    rows: list[TraceRow] = []
    snapshots: list[tuple[int, np.ndarray, np.ndarray]] = []
    best_loss = np.inf
    best_step = 0
    diverged_at: int | None = None

    def record(epoch: int, phase_idx: int, lr: float, loss: float, grad: np.ndarray) -> None:
        grad_norm = float(np.linalg.norm(grad))
        momentum_norm = float(np.linalg.norm(state.g))
        r = momentum_norm / grad_norm if grad_norm > 0.0 else None
        s = alignment(state.g, state.w, ref) if ref is not None else None
        row = TraceRow(
            step=state.step,
            epoch=epoch,
            phase_index=phase_idx,
            loss=loss,
            grad_norm=grad_norm,
            momentum_norm=momentum_norm,
            scale=r,
            alignment=s,
            eta_effective=lr * r if r is not None else None,
        )
        rows.append(row)
        if store_snapshots:
            snapshots.append((state.step, state.w.copy(), state.g.copy()))
        if trace_sink is not None:
            trace_sink(row)

    prev_phase: int | None = None
    epoch = 0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for epoch in range(epochs):
            phase_idx = active_phase_index(spec, epoch)
            if (
                prev_phase is not None
                and phase_idx != prev_phase
                and spec.reset_momentum_on_transition
            ):
                state = reset_on_transition(state)
            prev_phase = phase_idx
            phase = spec.phases[phase_idx]
            n_iters = (
                iters_per_epoch
                if iters_per_epoch is not None
                else _default_iters(dataset, phase.batch_size)
            )
            for batch in _epoch_batches(dataset, phase.batch_size, n_iters, rng):
                loss, grad = problem.eval_grad(state.w, batch)
                if not np.isfinite(loss):
                    diverged_at = state.step
                    break
                if loss < best_loss:
                    best_loss, best_step = loss, state.step
                if log == "iteration" and state.step % log_every == 0:
                    record(epoch, phase_idx, phase.hyper.learning_rate, loss, grad)
                try:
                    state = momentum_step(state, grad, phase.hyper)
                except DivergenceError as err:
                    diverged_at = err.step
                    break
            if diverged_at is not None:
                break
            if log == "epoch":
                loss, grad = problem.eval_grad(state.w, dataset)
                if not np.isfinite(loss):
                    diverged_at = state.step
                    break
                record(epoch, phase_idx, phase.hyper.learning_rate, loss, grad)

        if diverged_at is None and log in ("iteration", "final"):
            loss, grad = problem.eval_grad(state.w, dataset)
            if np.isfinite(loss):
                if loss < best_loss:
                    best_loss, best_step = loss, state.step
                phase_idx = active_phase_index(spec, epoch)
                record(epoch, phase_idx, spec.phases[phase_idx].hyper.learning_rate, loss, grad)
            else:
                diverged_at = state.step

    trace = TrainTrace(
        rows=rows,
        config_fingerprint=fingerprint,
        snapshots=snapshots if store_snapshots else None,
        diverged_at_step=diverged_at,
        best_loss=None if np.isinf(best_loss) else float(best_loss),
        best_step=None if np.isinf(best_loss) else best_step,
    )
    return state, trace
