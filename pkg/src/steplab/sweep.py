"""Batch experiment harness: grid and random hyperparameter search plus
transition-epoch sweeps for two-phase schedules.

Every cell gets its own seed derived from the master seed and the cell
coordinates, so results do not depend on execution order and parallel runs
reproduce sequential ones bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np

from .diagnostics import TrainTrace
from .optim import HyperParams, ScheduleSpec, train
from .problems import Dataset, Problem, accuracy

DEFAULT_MAX_RUNS = 2500

SWEEP_CSV_COLUMNS = (
    "eta",
    "mu",
    "seed",
    "transition",
    "final_loss",
    "status",
    "repetition",
    "holdout_accuracy",
)


def derive_cell_seed(master_seed: int, *coords) -> int:
    """Stable per-cell seed from the master seed and the cell's coordinate
    values, so reordering the grid or the execution changes nothing."""
    blob = repr((master_seed, *coords)).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


@dataclass(frozen=True)
class SweepGrid:
    """Search space over learning rate and momentum, the latter via 1 - mu."""

    eta_values: tuple[float, ...]
    one_minus_mu_values: tuple[float, ...]
    repetitions: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta_values", tuple(float(e) for e in self.eta_values))
        object.__setattr__(
            self, "one_minus_mu_values", tuple(float(v) for v in self.one_minus_mu_values)
        )
        if not self.eta_values or not self.one_minus_mu_values:
            raise ValueError("grid axes must be non-empty")
        if any(e <= 0 for e in self.eta_values):
            raise ValueError("all learning rates must be positive")
        if any(not 0.0 < v <= 1.0 for v in self.one_minus_mu_values):
            raise ValueError("all 1 - mu values must lie in (0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @classmethod
    def log_spaced(
        cls,
        eta_range: tuple[float, float],
        n_eta: int,
        one_minus_mu_range: tuple[float, float] = (1.0, 1.0),
        n_mu: int = 1,
        repetitions: int = 1,
    ) -> "SweepGrid":
        etas = np.logspace(np.log10(eta_range[0]), np.log10(eta_range[1]), n_eta)
        mus = np.logspace(
            np.log10(one_minus_mu_range[0]), np.log10(one_minus_mu_range[1]), n_mu
        )
        return cls(tuple(etas), tuple(mus), repetitions)

    @property
    def size(self) -> int:
        return len(self.eta_values) * len(self.one_minus_mu_values) * self.repetitions


@dataclass
class CellResult:
    """Outcome of one training run in a sweep."""

    eta: float
    mu: float
    repetition: int
    seed: int
    final_loss: float | None
    diverged: bool
    diverged_at: int | None = None
    best_step: int | None = None
    transition: int | None = None
    holdout_accuracy: float | None = None
    trace: TrainTrace | None = None

    @property
    def status(self) -> str:
        return "diverged" if self.diverged else "ok"


@dataclass
class TransitionBin:
    """Median outcome over the runs whose transition falls in [lo, hi]."""

    lo: float
    hi: float
    n_runs: int
    median_final_loss: float | None
    median_holdout_accuracy: float | None = None


@dataclass
class SweepResult:
    """All cell outcomes of one sweep plus axis bookkeeping."""

    cells: list[CellResult]
    kind: str = "grid"
    eta_values: tuple[float, ...] | None = None
    mu_values: tuple[float, ...] | None = None
    repetitions: int = 1
    bins: list[TransitionBin] | None = None

    def completed(self) -> list[CellResult]:
        return [c for c in self.cells if not c.diverged]

    def best_cell(self) -> CellResult | None:
        done = self.completed()
        if not done:
            return None
        return min(done, key=lambda c: (c.final_loss, c.eta))

    def worst_cell(self) -> CellResult | None:
        done = self.completed()
        if not done:
            return None
        return max(done, key=lambda c: (c.final_loss, c.eta))

    def best_per_mu(self) -> dict[float, CellResult]:
        out: dict[float, CellResult] = {}
        for c in self.completed():
            cur = out.get(c.mu)
            if cur is None or (c.final_loss, c.eta) < (cur.final_loss, cur.eta):
                out[c.mu] = c
        return out

    # -- serialization ------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_CSV_COLUMNS)
        for c in self.cells:
            writer.writerow(
                [
                    repr(c.eta),
                    repr(c.mu),
                    c.seed,
                    "" if c.transition is None else c.transition,
                    "" if c.final_loss is None else repr(c.final_loss),
                    c.status,
                    c.repetition,
                    "" if c.holdout_accuracy is None else repr(c.holdout_accuracy),
                ]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source, kind: str | None = None) -> "SweepResult":
        text = source
        if "\n" not in str(source):
            text = Path(source).read_text(encoding="utf-8")
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != SWEEP_CSV_COLUMNS:
            raise ValueError(f"unexpected sweep CSV header: {header}")
        cells = []
        for rec in reader:
            if not rec:
                continue
            cells.append(
                CellResult(
                    eta=float(rec[0]),
                    mu=float(rec[1]),
                    seed=int(rec[2]),
                    transition=None if rec[3] == "" else int(rec[3]),
                    final_loss=None if rec[4] == "" else float(rec[4]),
                    diverged=rec[5] == "diverged",
                    repetition=int(rec[6]),
                    holdout_accuracy=None if rec[7] == "" else float(rec[7]),
                )
            )
        if kind is None:
            kind = "transition" if any(c.transition is not None for c in cells) else "grid"
        etas = tuple(sorted({c.eta for c in cells}))
        mus = tuple(sorted({c.mu for c in cells}))
        reps = max((c.repetition for c in cells), default=0) + 1
        return cls(
            cells=cells, kind=kind, eta_values=etas, mu_values=mus, repetitions=reps
        )

    def summary_dict(self) -> dict:
        best = self.best_cell()
        out = {
            "kind": self.kind,
            "n_cells": len(self.cells),
            "n_diverged": sum(1 for c in self.cells if c.diverged),
            "best": None
            if best is None
            else {
                "eta": best.eta,
                "mu": best.mu,
                "seed": best.seed,
                "transition": best.transition,
                "final_loss": best.final_loss,
            },
        }
        if self.bins is not None:
            out["bins"] = [
                {
                    "lo": b.lo,
                    "hi": b.hi,
                    "n_runs": b.n_runs,
                    "median_final_loss": b.median_final_loss,
                    "median_holdout_accuracy": b.median_holdout_accuracy,
                }
                for b in self.bins
            ]
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary_dict())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _guard_budget(total: int, max_runs: int, allow_large: bool) -> None:
    if total > max_runs and not allow_large:
        raise ValueError(
            f"sweep would launch {total} runs, above the cap of {max_runs}; "
            "pass allow_large=True to run it anyway"
        )


def _run_cell(problem, iterations, weight_decay, task):
    eta, mu, rep, cell_seed = task
    spec = ScheduleSpec.single_phase(
        HyperParams(eta, momentum=mu, weight_decay=weight_decay)
    )
    _, trace = train(
        problem, spec, epochs=1, iters_per_epoch=iterations, seed=cell_seed, log="final"
    )
    return CellResult(
        eta=eta,
        mu=mu,
        repetition=rep,
        seed=cell_seed,
        final_loss=None if trace.diverged else trace.final_loss,
        diverged=trace.diverged,
        diverged_at=trace.diverged_at_step,
        best_step=trace.best_step,
    )


def _map_tasks(worker, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks, chunksize=chunk))


def run_grid(
    problem: Problem,
    grid: SweepGrid,
    iterations: int,
    seed: int,
    *,
    weight_decay: float = 0.0,
    jobs: int = 1,
    max_runs: int = DEFAULT_MAX_RUNS,
    allow_large: bool = False,
) -> SweepResult:
    """One full-batch training per (eta, mu) cell, recording the final loss or
    the divergence point.  Cell seeds derive from cell coordinates, so
    permuting the grid or running in parallel changes nothing."""
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    _guard_budget(grid.size, max_runs, allow_large)
    tasks = []
    for eta in grid.eta_values:
        for omm in grid.one_minus_mu_values:
            mu = 1.0 - omm
            for rep in range(grid.repetitions):
                tasks.append((eta, mu, rep, derive_cell_seed(seed, eta, mu, rep)))
    worker = partial(_run_cell, problem, iterations, weight_decay)
    cells = _map_tasks(worker, tasks, jobs)
    return SweepResult(
        cells=cells,
        kind="grid",
        eta_values=grid.eta_values,
        mu_values=tuple(1.0 - v for v in grid.one_minus_mu_values),
        repetitions=grid.repetitions,
    )


def tune_learning_rate(
    problem: Problem,
    mu: float,
    eta_values,
    iterations: int,
    seed: int,
    *,
    weight_decay: float = 0.0,
    jobs: int = 1,
) -> tuple[float, SweepResult]:
    """Best learning rate for a fixed momentum by final loss; ties go to the
    smaller rate."""
    etas = tuple(float(e) for e in eta_values)
    tasks = [(eta, mu, 0, derive_cell_seed(seed, eta, mu, 0)) for eta in etas]
    worker = partial(_run_cell, problem, iterations, weight_decay)
    cells = _map_tasks(worker, tasks, jobs)
    result = SweepResult(
        cells=cells, kind="grid", eta_values=etas, mu_values=(mu,), repetitions=1
    )
    best = result.best_cell()
    if best is None:
        raise NoStableCellError(mu, etas)
    return best.eta, result


class NoStableCellError(RuntimeError):
    def __init__(self, mu: float, etas):
        super().__init__(
            f"every learning rate diverged for momentum {mu} over grid "
            f"[{min(etas):g}, {max(etas):g}]"
        )


def _run_transition(
    problem, dataset, template, epochs_total, iters_per_epoch, holdout, task
):
    candidate, seed = task
    spec = replace(template, transition_epochs=(candidate,))
    state, trace = train(
        problem,
        spec,
        epochs_total,
        dataset=dataset,
        iters_per_epoch=iters_per_epoch,
        seed=seed,
        log="epoch",
    )
    hyper = spec.phases[-1].hyper
    acc = None
    if holdout is not None and not trace.diverged and hasattr(problem, "predict"):
        acc = accuracy(problem, state.w, holdout)
    return CellResult(
        eta=hyper.learning_rate,
        mu=hyper.momentum,
        repetition=0,
        seed=seed,
        final_loss=None if trace.diverged or not trace.rows else trace.final_loss,
        diverged=trace.diverged,
        diverged_at=trace.diverged_at_step,
        transition=candidate,
        holdout_accuracy=acc,
        trace=trace,
    )


def _median_bins(
    cells: list[CellResult], candidates: list[int], n_bins: int
) -> list[TransitionBin]:
    lo, hi = min(candidates), max(candidates)
    edges = np.linspace(lo, hi, n_bins + 1) if hi > lo else np.array([lo, hi])
    bins = []
    for i in range(len(edges) - 1):
        left, right = float(edges[i]), float(edges[i + 1])
        last = i == len(edges) - 2
        members = [
            c
            for c in cells
            if not c.diverged
            and c.transition is not None
            and (left <= c.transition < right or (last and c.transition == right))
        ]
        losses = [c.final_loss for c in members]
        accs = [c.holdout_accuracy for c in members if c.holdout_accuracy is not None]
        bins.append(
            TransitionBin(
                lo=left,
                hi=right,
                n_runs=len(members),
                median_final_loss=float(np.median(losses)) if losses else None,
                median_holdout_accuracy=float(np.median(accs)) if accs else None,
            )
        )
    return bins


def transition_sweep(
    problem: Problem,
    dataset: Dataset | None,
    schedule_template: ScheduleSpec,
    transition_candidates,
    epochs_total: int,
    seeds,
    *,
    iters_per_epoch: int | None = None,
    n_bins: int = 10,
    holdout: Dataset | None = None,
    jobs: int = 1,
    max_runs: int = DEFAULT_MAX_RUNS,
    allow_large: bool = False,
) -> SweepResult:
    """One run per (transition epoch, seed) for a two-phase schedule, with
    per-bin medians of the final objective over the transition axis."""
    if len(schedule_template.phases) != 2:
        raise ValueError("transition_sweep expects a two-phase schedule template")
    candidates = [int(c) for c in transition_candidates]
    if not candidates:
        raise ValueError("need at least one transition candidate")
    bad = [c for c in candidates if not 0 <= c < epochs_total]
    if bad:
        raise ValueError(
            f"transition candidates must lie in [0, {epochs_total}), got {bad}"
        )
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    _guard_budget(len(candidates) * len(seeds), max_runs, allow_large)

    tasks = [(c, s) for c in candidates for s in seeds]
    worker = partial(
        _run_transition,
        problem,
        dataset,
        schedule_template,
        epochs_total,
        iters_per_epoch,
        holdout,
    )
    cells = _map_tasks(worker, tasks, jobs)
    n_bins = min(n_bins, max(1, len(set(candidates))))
    return SweepResult(
        cells=cells,
        kind="transition",
        eta_values=None,
        mu_values=None,
        repetitions=1,
        bins=_median_bins(cells, candidates, n_bins),
    )


def _run_random_cell(
    problem, dataset, mu, weight_decay, batch_size, epochs, iters_per_epoch, seed, task
):
    i, eta = task
    spec = ScheduleSpec.single_phase(
        HyperParams(eta, momentum=mu, weight_decay=weight_decay), batch_size=batch_size
    )
    _, trace = train(
        problem,
        spec,
        epochs,
        dataset=dataset,
        iters_per_epoch=iters_per_epoch,
        seed=seed,
        log="final" if dataset is None else "epoch",
    )
    has_rows = bool(trace.rows)
    return CellResult(
        eta=eta,
        mu=mu,
        repetition=i,
        seed=seed,
        final_loss=trace.final_loss if has_rows and not trace.diverged else None,
        diverged=trace.diverged,
        diverged_at=trace.diverged_at_step,
        best_step=trace.best_step,
    )


def random_search(
    problem: Problem,
    eta_range: tuple[float, float],
    mu: float,
    n_samples: int,
    *,
    dataset: Dataset | None = None,
    epochs: int = 1,
    iters_per_epoch: int | None = None,
    batch_size: int | None = None,
    seed: int = 0,
    weight_decay: float = 0.0,
    jobs: int = 1,
) -> SweepResult:
    """Sample learning rates log-uniformly in ``eta_range`` and train each one
    at fixed momentum.  All runs share the training seed so they differ only
    in the learning rate."""
    lo, hi = float(eta_range[0]), float(eta_range[1])
    if not 0 < lo < hi:
        raise ValueError(f"eta_range bounds must be positive and ordered, got {eta_range}")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    etas = np.exp(rng.uniform(np.log(lo), np.log(hi), n_samples))
    tasks = [(i, float(eta)) for i, eta in enumerate(etas)]
    worker = partial(
        _run_random_cell,
        problem,
        dataset,
        mu,
        weight_decay,
        batch_size,
        epochs,
        iters_per_epoch,
        seed,
    )
    cells = _map_tasks(worker, tasks, jobs)
    return SweepResult(
        cells=cells,
        kind="random",
        eta_values=tuple(float(e) for e in etas),
        mu_values=(mu,),
        repetitions=1,
    )
