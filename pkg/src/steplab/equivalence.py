"""Learning-rate/momentum equivalence: for a zero-momentum baseline run, find
the learning rate that makes a momentum run trace the closest loss curve in
L2 distance, then summarize matched rates with a linear fit."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .optim import HyperParams, ScheduleSpec, train
from .problems import Dataset, Problem

SPACES = ("raw", "log")


class NoMatchError(RuntimeError):
    """Every candidate diverged; carries the (eta, step) divergence points."""

    def __init__(self, divergences: list[tuple[float, int]]):
        points = ", ".join(f"eta={eta:g} at step {step}" for eta, step in divergences)
        super().__init__(f"all candidates diverged: {points}")
        self.divergences = divergences


@dataclass
class LossCurve:
    """Ordered losses from one run, with the settings that produced them."""

    values: np.ndarray
    hyper: HyperParams
    seed: int
    diverged_at: int | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("a loss curve needs at least one value")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("loss curves hold only the finite prefix of a run")

    def __len__(self) -> int:
        return len(self.values)


def training_curve(
    problem: Problem,
    hyper: HyperParams,
    *,
    epochs: int = 1,
    iters_per_epoch: int | None = None,
    dataset: Dataset | None = None,
    batch_size: int | None = None,
    seed: int = 0,
) -> LossCurve:
    """Loss curve of a single-phase run: per iteration without a dataset,
    per epoch with one."""
    spec = ScheduleSpec.single_phase(hyper, batch_size=batch_size)
    _, trace = train(
        problem,
        spec,
        epochs,
        dataset=dataset,
        iters_per_epoch=iters_per_epoch,
        seed=seed,
    )
    values = trace.losses()
    if len(values) == 0:
        # Diverged before the first logged point; keep the initial loss so the
        # curve object stays well formed.
        values = np.array([problem.evaluate(problem.initial_point(seed), dataset)])
    return LossCurve(
        values=values, hyper=hyper, seed=seed, diverged_at=trace.diverged_at_step
    )


def curve_distance(a: LossCurve, b: LossCurve, space: str = "raw") -> float:
    """L2 distance between two curves over their common prefix.

    In ``log`` space the distance is taken between the elementwise logs, which
    weights late small losses the same as early large ones.
    """
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    n = min(len(a), len(b))
    if n < 2:
        raise ValueError(f"curves must overlap in at least 2 points, got {n}")
    x = a.values[:n]
    y = b.values[:n]
    if space == "log":
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-space distance requires strictly positive losses")
        x = np.log(x)
        y = np.log(y)
    return float(np.linalg.norm(x - y))


@dataclass
class EquivalenceMatch:
    """Best momentum configuration matching a zero-momentum baseline."""

    baseline: LossCurve
    candidate_mu: float
    matched_eta: float
    distance: float
    ratio: float  # baseline learning rate / matched learning rate
    matched_curve: LossCurve
    rejected: list[tuple[float, int]]  # diverged candidates as (eta, step)


def find_equivalent_lr(
    problem: Problem,
    baseline: LossCurve,
    target_mu: float,
    eta_grid,
    *,
    epochs: int = 1,
    iters_per_epoch: int | None = None,
    dataset: Dataset | None = None,
    batch_size: int | None = None,
    seed: int | None = None,
    space: str = "raw",
) -> EquivalenceMatch:
    """Train one curve per grid candidate at ``target_mu`` and return the one
    closest to the baseline.

    Candidates that diverge are excluded from the argmin and reported on the
    match; ties break toward the smaller learning rate.  The run seed defaults
    to the baseline's so compared runs share initialization and shuffling.
    """
    if baseline.hyper.momentum != 0.0:
        raise ValueError("the baseline curve must come from a zero-momentum run")
    etas = sorted(float(e) for e in np.asarray(list(eta_grid), dtype=float))
    if not etas:
        raise ValueError("eta_grid must be non-empty")
    if seed is None:
        seed = baseline.seed

    best: tuple[float, float, LossCurve] | None = None  # (distance, eta, curve)
    rejected: list[tuple[float, int]] = []
    distances: list[float] = []
    for eta in etas:
        hyper = HyperParams(eta, momentum=target_mu, weight_decay=baseline.hyper.weight_decay)
        curve = training_curve(
            problem,
            hyper,
            epochs=epochs,
            iters_per_epoch=iters_per_epoch,
            dataset=dataset,
            batch_size=batch_size,
            seed=seed,
        )
        if curve.diverged_at is not None:
            rejected.append((eta, curve.diverged_at))
            continue
        d = curve_distance(baseline, curve, space)
        distances.append(d)
        if best is None or d < best[0]:
            best = (d, eta, curve)
    if best is None:
        raise NoMatchError(rejected)
    if not unimodal_around_min(distances):
        # Nothing guarantees a single basin; a violation usually means the
        # grid is too coarse or the horizon too short for a clean match.
        warnings.warn(
            "curve distance is not unimodal over the learning-rate grid; "
            "the matched rate may sit in a secondary basin",
            stacklevel=2,
        )
    distance, eta, curve = best
    return EquivalenceMatch(
        baseline=baseline,
        candidate_mu=target_mu,
        matched_eta=eta,
        distance=distance,
        ratio=baseline.hyper.learning_rate / eta,
        matched_curve=curve,
        rejected=rejected,
    )


def unimodal_around_min(values) -> bool:
    """True when the sequence falls to its minimum and rises after it."""
    values = list(values)
    if len(values) < 3:
        return True
    i = int(np.argmin(values))
    falling = all(b <= a for a, b in zip(values[: i + 1], values[1 : i + 1]))
    rising = all(b >= a for a, b in zip(values[i:], values[i + 1 :]))
    return falling and rising


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares y = slope * x + intercept, with R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("linear_fit needs two equal-length 1-d arrays of >= 2 points")
    xm = x.mean()
    ym = y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("linear_fit needs at least two distinct x values")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = ym - slope * xm
    residuals = y - (slope * x + intercept)
    ss_res = float((residuals**2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope=slope, intercept=float(intercept), r_squared=r_squared, n_points=len(x))


def default_candidate_grid(
    baseline_etas, mu: float, points_per_decade: int = 9, pad_decades: float = 1.0
):
    """Log-spaced candidate learning rates bracketing the scaled baseline range.

    The bracket centers on the baseline range shrunk by (1 - mu), which is
    where matched learning rates land when momentum only rescales the step.
    """
    baseline_etas = np.asarray(list(baseline_etas), dtype=float)
    lo = np.log10(baseline_etas.min() * (1.0 - mu)) - pad_decades
    hi = np.log10(baseline_etas.max() * (1.0 - mu)) + pad_decades
    n = max(2, int(round((hi - lo) * points_per_decade)) + 1)
    return np.logspace(lo, hi, n)


@dataclass
class EquivalenceSweepResult:
    matches: list[EquivalenceMatch]
    fits: dict[float, LinearFit | None]
    unmatched: list[tuple[float, float]]  # (mu, baseline_eta) with no stable candidate

    def match_table_csv(self) -> str:
        lines = ["mu,baseline_eta,matched_eta,distance,ratio"]
        for m in self.matches:
            lines.append(
                f"{m.candidate_mu!r},{m.baseline.hyper.learning_rate!r},"
                f"{m.matched_eta!r},{m.distance!r},{m.ratio!r}"
            )
        return "\n".join(lines) + "\n"

    def fit_summary(self) -> dict:
        out = {}
        for mu, fit in sorted(self.fits.items()):
            key = repr(mu)
            if fit is None:
                out[key] = None
            else:
                out[key] = {
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "n_points": fit.n_points,
                }
        return out


def equivalence_sweep(
    problem: Problem,
    baseline_etas,
    mus,
    *,
    candidate_grids=None,
    epochs: int = 1,
    iters_per_epoch: int | None = None,
    dataset: Dataset | None = None,
    batch_size: int | None = None,
    seed: int = 0,
    space: str = "raw",
    weight_decay: float = 0.0,
) -> EquivalenceSweepResult:
    """Match every baseline learning rate at every momentum value, then fit
    matched_eta against baseline_eta per momentum.

    ``candidate_grids`` maps each momentum to its candidate learning rates;
    missing entries fall back to ``default_candidate_grid``.  Momenta with
    fewer than two successful matches get no fit.
    """
    baseline_etas = sorted(float(e) for e in baseline_etas)
    if len(baseline_etas) == 0:
        raise ValueError("need at least one baseline learning rate")
    candidate_grids = dict(candidate_grids or {})

    matches: list[EquivalenceMatch] = []
    unmatched: list[tuple[float, float]] = []
    baselines: list[LossCurve] = []
    for eta in baseline_etas:
        baselines.append(
            training_curve(
                problem,
                HyperParams(eta, momentum=0.0, weight_decay=weight_decay),
                epochs=epochs,
                iters_per_epoch=iters_per_epoch,
                dataset=dataset,
                batch_size=batch_size,
                seed=seed,
            )
        )

    for mu in mus:
        grid = candidate_grids.get(mu)
        if grid is None:
            grid = default_candidate_grid(baseline_etas, mu)
        for baseline in baselines:
            if baseline.diverged_at is not None:
                unmatched.append((mu, baseline.hyper.learning_rate))
                continue
            try:
                matches.append(
                    find_equivalent_lr(
                        problem,
                        baseline,
                        mu,
                        grid,
                        epochs=epochs,
                        iters_per_epoch=iters_per_epoch,
                        dataset=dataset,
                        batch_size=batch_size,
                        space=space,
                    )
                )
            except NoMatchError:
                unmatched.append((mu, baseline.hyper.learning_rate))

    fits: dict[float, LinearFit | None] = {}
    for mu in mus:
        points = [
            (m.baseline.hyper.learning_rate, m.matched_eta)
            for m in matches
            if m.candidate_mu == mu
        ]
        if len(points) < 2:
            fits[mu] = None
        else:
            xs, ys = zip(*points)
            fits[mu] = linear_fit(xs, ys)
    return EquivalenceSweepResult(matches=matches, fits=fits, unmatched=unmatched)
