"""Loss-curve distance, learning-rate matching, and the linear-fit summary."""

import math

import numpy as np
import pytest

from steplab.equivalence import (
    EquivalenceMatch,
    LossCurve,
    NoMatchError,
    curve_distance,
    default_candidate_grid,
    equivalence_sweep,
    find_equivalent_lr,
    linear_fit,
    training_curve,
)
from steplab.optim import HyperParams
from steplab.problems import make_quadratic

from conftest import eig_heavy_ball_losses


def curve(values, eta=0.1, mu=0.0, seed=0):
    return LossCurve(np.asarray(values, dtype=float), HyperParams(eta, momentum=mu), seed)


class TestCurveDistance:
    def test_identical_curves(self):
        a = curve([3.0, 2.0, 1.0])
        assert curve_distance(a, a) == 0.0

    def test_single_differing_entry(self):
        assert curve_distance(curve([1.0, 1.0]), curve([1.0, 2.0])) == 1.0

    def test_log_space_hand_value(self):
        a = curve([math.e, math.e])
        b = curve([1.0, 1.0])
        assert curve_distance(a, b, space="log") == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_common_prefix_only(self):
        a = curve([1.0, 2.0, 3.0, 4.0])
        b = curve([1.0, 2.0])
        assert curve_distance(a, b) == 0.0

    def test_too_short_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            curve_distance(curve([1.0]), curve([1.0, 2.0]))

    def test_bad_space(self):
        with pytest.raises(ValueError, match="space"):
            curve_distance(curve([1.0, 2.0]), curve([1.0, 2.0]), space="l4")

    def test_log_space_requires_positive(self):
        with pytest.raises(ValueError, match="positive"):
            curve_distance(curve([1.0, 0.0]), curve([1.0, 2.0]), space="log")

    def test_metric_properties_on_random_curves(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            a = curve(rng.uniform(0.1, 5.0, n))
            b = curve(rng.uniform(0.1, 5.0, n))
            c = curve(rng.uniform(0.1, 5.0, n))
            dab = curve_distance(a, b)
            assert dab == pytest.approx(curve_distance(b, a), rel=1e-12)
            assert dab >= 0.0
            assert curve_distance(a, a) == 0.0
            assert dab <= curve_distance(a, c) + curve_distance(c, b) + 1e-12


class TestLinearFit:
    def test_exact_identity(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        fit = linear_fit(x, x)
        assert fit.slope == 1.0
        assert fit.intercept == 0.0
        assert fit.r_squared == 1.0
        assert fit.n_points == 4

    def test_known_line(self):
        x = np.linspace(0, 1, 20)
        fit = linear_fit(x, 3.0 * x + 0.5)
        assert fit.slope == pytest.approx(3.0, rel=1e-12)
        assert fit.intercept == pytest.approx(0.5, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_underdetermined(self):
        with pytest.raises(ValueError):
            linear_fit([1.0], [1.0])
        with pytest.raises(ValueError):
            linear_fit([2.0, 2.0], [1.0, 3.0])


@pytest.fixture(scope="module")
def quad():
    return make_quadratic(12, 50.0, seed=11)


@pytest.fixture(scope="module")
def baseline(quad):
    return training_curve(quad, HyperParams(2e-3), iters_per_epoch=600, seed=5)


class TestFindEquivalentLr:
    def test_requires_zero_momentum_baseline(self, quad):
        bad = curve([1.0, 0.5], mu=0.5)
        with pytest.raises(ValueError, match="zero-momentum"):
            find_equivalent_lr(quad, bad, 0.9, [1e-4], iters_per_epoch=10)

    def test_empty_grid(self, quad, baseline):
        with pytest.raises(ValueError, match="non-empty"):
            find_equivalent_lr(quad, baseline, 0.9, [])

    def test_self_match_is_exact(self, quad, baseline):
        match = find_equivalent_lr(
            quad, baseline, 0.0, [1e-3, 2e-3, 4e-3], iters_per_epoch=600
        )
        assert match.matched_eta == 2e-3
        assert match.distance == 0.0
        assert match.ratio == 1.0

    def test_ties_break_toward_smaller_eta(self, quad, baseline):
        match = find_equivalent_lr(quad, baseline, 0.0, [2e-3, 2e-3], iters_per_epoch=600)
        assert match.matched_eta == 2e-3
        assert match.distance == 0.0

    def test_all_divergent_grid_raises_with_points(self, quad, baseline):
        lam_max = float(np.linalg.eigvalsh(quad.matrix)[-1])
        grid = [3.0 / lam_max, 30.0 / lam_max]
        with pytest.raises(NoMatchError) as err:
            find_equivalent_lr(quad, baseline, 0.0, grid, iters_per_epoch=600)
        assert len(err.value.divergences) == 2
        assert all(step >= 0 for _, step in err.value.divergences)

    def test_matches_brute_force_eigen_oracle(self):
        """Baseline at a tenth of the stability limit: the matched rate must
        agree with a brute-force argmin over independently generated curves
        and land within one grid step of the 1/(1-mu) scaling."""
        problem = make_quadratic(20, 100.0, seed=11)
        lam_max = float(np.linalg.eigvalsh(problem.matrix)[-1])
        eta0 = 0.1 / lam_max
        mu = 0.9
        steps = 800
        base = training_curve(problem, HyperParams(eta0), iters_per_epoch=steps, seed=5)
        grid = default_candidate_grid([eta0], mu, points_per_decade=9, pad_decades=1.5)
        match = find_equivalent_lr(
            problem, base, mu, grid, iters_per_epoch=steps, space="log"
        )
        w0 = problem.initial_point(5)
        base_oracle = eig_heavy_ball_losses(problem.matrix, w0, eta0, 0.0, steps)
        best = None
        for eta in sorted(grid):
            losses = eig_heavy_ball_losses(problem.matrix, w0, eta, mu, steps)
            if not np.all(np.isfinite(losses)):
                continue
            d = float(np.linalg.norm(np.log(losses) - np.log(base_oracle)))
            if best is None or d < best[0]:
                best = (d, eta)
        assert match.matched_eta == pytest.approx(best[1], rel=1e-12)
        step = grid[1] / grid[0]
        target = 1.0 / (1.0 - mu)
        assert target / step <= match.ratio <= target * step

    def test_divergent_candidates_reported_not_matched(self, quad, baseline):
        lam_max = float(np.linalg.eigvalsh(quad.matrix)[-1])
        grid = [2e-4, 5.0 / lam_max]
        match = find_equivalent_lr(quad, baseline, 0.0, grid, iters_per_epoch=600)
        assert match.matched_eta == 2e-4
        assert [eta for eta, _ in match.rejected] == [5.0 / lam_max]


class TestEquivalenceSweep:
    def test_zero_momentum_identity_fit(self, quad):
        etas = [5e-4, 1e-3, 2e-3]
        result = equivalence_sweep(
            quad, etas, [0.0], candidate_grids={0.0: etas}, iters_per_epoch=300, seed=5
        )
        fit = result.fits[0.0]
        assert fit.slope == 1.0
        assert fit.intercept == 0.0
        assert fit.r_squared == 1.0
        assert all(m.distance == 0.0 for m in result.matches)

    def test_single_baseline_fit_unavailable(self, quad):
        result = equivalence_sweep(
            quad, [1e-3], [0.0], candidate_grids={0.0: [1e-3]}, iters_per_epoch=300, seed=5
        )
        assert result.fits[0.0] is None

    def test_all_divergent_mu_marked_unmatched(self, quad):
        lam_max = float(np.linalg.eigvalsh(quad.matrix)[-1])
        result = equivalence_sweep(
            quad,
            [1e-3],
            [0.5],
            candidate_grids={0.5: [5.0 / lam_max]},
            iters_per_epoch=300,
            seed=5,
        )
        assert result.fits[0.5] is None
        assert result.unmatched == [(0.5, 1e-3)]

    def test_match_table_csv_shape(self, quad):
        etas = [5e-4, 1e-3]
        result = equivalence_sweep(
            quad, etas, [0.0], candidate_grids={0.0: etas}, iters_per_epoch=300, seed=5
        )
        lines = result.match_table_csv().strip().split("\n")
        assert lines[0] == "mu,baseline_eta,matched_eta,distance,ratio"
        assert len(lines) == 1 + len(etas)

    def test_fit_summary_serializable(self, quad):
        etas = [5e-4, 1e-3]
        result = equivalence_sweep(
            quad, etas, [0.0], candidate_grids={0.0: etas}, iters_per_epoch=300, seed=5
        )
        summary = result.fit_summary()
        key = repr(0.0)
        assert summary[key]["slope"] == 1.0


class TestTrainingCurve:
    def test_records_divergence_point(self, quad):
        lam_max = float(np.linalg.eigvalsh(quad.matrix)[-1])
        c = training_curve(quad, HyperParams(20.0 / lam_max), iters_per_epoch=500, seed=5)
        assert c.diverged_at is not None
        assert np.all(np.isfinite(c.values))

    def test_curve_values_are_trace_losses(self, quad):
        c = training_curve(quad, HyperParams(1e-3), iters_per_epoch=100, seed=5)
        assert len(c) == 101
        assert c.values[0] > c.values[-1]
