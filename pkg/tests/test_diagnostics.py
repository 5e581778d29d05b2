"""
Tests for step records, the decay margin and the parameter-regime report.
"""

from math import erf, exp, log, pi, sqrt

import numpy as np
import pytest

from src.core import Ensemble, GibbsSummary, RngStream, Scheme
from src.diagnostics import (
    InitStats,
    StepRecord,
    check_conditions,
    decay_margin,
    diameter,
    energy_bound,
    initial_data_statistics,
    initial_spread,
    record,
    weighted_mean_gap_ok,
)
from src.dynamics import StopCriteria, run
from src.gibbs import summarize
from src.objectives import Objective, registry_get


def _summary(e, L, beta=10.0):
    return summarize(e, L.evaluate(e.positions), beta)


class TestDiameter:

    def test_three_four_five(self):
        assert diameter(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0

    def test_single_particle(self):
        assert diameter(np.array([[1.0, 2.0]])) == 0.0

    def test_matches_brute_force_across_blocks(self, np_rng):
        x = np_rng.normal(size=(1100, 3))
        brute = np.sqrt(np.max(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)))
        assert diameter(x) == pytest.approx(brute, rel=1e-15)


class TestRecord:

    def test_identical_particles(self, rastrigin2):
        e = Ensemble(np.tile([0.4, -0.9], (6, 1)))
        rec = record(e, _summary(e, rastrigin2), rastrigin2)
        assert rec.diameter == 0.0
        assert rec.energy == 0.0
        np.testing.assert_array_equal(rec.mean, rec.consensus_point)
        assert rec.mean_to_consensus == 0.0

    def test_two_particles_equal_weights(self, sphere2):
        e = Ensemble([[0.0, 0.0], [3.0, 4.0]], step=3, h=0.01)
        g = GibbsSummary(weights=np.array([0.5, 0.5]), consensus_point=np.array([1.5, 2.0]), log_mass=0.0)
        rec = record(e, g, sphere2)
        assert rec.diameter == 5.0
        np.testing.assert_array_equal(rec.component_diameters, [3.0, 4.0])
        np.testing.assert_array_equal(rec.component_min, [0.0, 0.0])
        np.testing.assert_array_equal(rec.component_max, [3.0, 4.0])
        assert rec.objective_at_consensus == pytest.approx(6.25)
        assert rec.time == pytest.approx(0.03)

    def test_energy_decomposition_on_random_ensembles(self, rastrigin2, np_rng):
        for _ in range(200):
            e = Ensemble(np_rng.uniform(-3.0, 3.0, (15, 2)))
            rec = record(e, _summary(e, rastrigin2, beta=3.0), rastrigin2)
            spread = np.mean(np.sum((e.positions - rec.mean) ** 2, axis=1))
            assert rec.energy == pytest.approx(spread + rec.mean_to_consensus ** 2, abs=1e-10)
            assert rec.energy >= rec.mean_to_consensus ** 2 - 1e-12

    def test_diameter_between_component_bounds(self, rastrigin2, np_rng):
        for _ in range(200):
            e = Ensemble(np_rng.uniform(-3.0, 3.0, (12, 2)))
            rec = record(e, _summary(e, rastrigin2), rastrigin2)
            assert rec.diameter >= rec.component_diameters.max() - 1e-12
            assert rec.diameter <= np.sqrt(np.sum(rec.component_diameters ** 2)) + 1e-12

    def test_weighted_mean_bound(self, rastrigin2, np_rng):
        for _ in range(200):
            e = Ensemble(np_rng.uniform(-3.0, 3.0, (9, 2)))
            assert weighted_mean_gap_ok(e, _summary(e, rastrigin2, beta=50.0))

    def test_csv_row_lines_up_with_columns(self, rastrigin2, np_rng):
        e = Ensemble(np_rng.uniform(-1.0, 1.0, (4, 3)))
        L = registry_get("rastrigin", 3, {"B": 0.0, "C": 0.0})
        rec = record(e, _summary(e, L), L)
        columns = StepRecord.csv_columns(3)
        assert len(columns) == 7 + 5 * 3
        assert columns[:5] == ["step", "time", "diameter", "diam_1", "diam_2"]
        assert columns[-4:] == ["mean_to_cons", "energy", "log_gibbs_mass", "obj_at_cons"]
        assert len(rec.csv_row()) == len(columns)

    def test_to_dict_is_json_ready(self, rastrigin2):
        e = Ensemble([[0.0, 1.0], [1.0, 0.0]])
        data = record(e, _summary(e, rastrigin2), rastrigin2).to_dict()
        assert data["kind"] == "step"
        assert isinstance(data["consensus_point"], list)


class TestGibbsMassAlongRun:

    def test_laplace_bounds_at_every_recorded_step(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=20, beta=10.0)
        init = Ensemble(np_rng.uniform(-2.0, 2.0, (20, 2)))
        times = [n * p.h for n in range(151)]
        trajectory = run(init, p, rastrigin2, StopCriteria(max_steps=150), RngStream(9, 0),
                         snapshot_times=times)
        assert len(trajectory.records) == len(trajectory.snapshots) == 151
        for rec, (_, positions) in zip(trajectory.records, trajectory.snapshots):
            lowest = float(rastrigin2.evaluate(positions).min())
            estimate = -rec.log_gibbs_mass / p.beta
            assert lowest - 1e-10 <= estimate <= lowest + log(p.n_particles) / p.beta + 1e-10


class TestDeterministicComponentDiameters:

    def test_never_exceed_initial_values(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=25, scheme=Scheme.DETERMINISTIC)
        init = Ensemble(np_rng.uniform(-2.0, 2.0, (25, 2)))
        trajectory = run(init, p, rastrigin2, StopCriteria(max_steps=200), None)
        d0 = trajectory.records[0].component_diameters
        for rec in trajectory.records:
            assert np.all(rec.component_diameters <= d0 + 1e-12)


class TestDecayMargin:

    @pytest.mark.parametrize("lam,h,sigma,expected", [
        (1.0, 0.01, 1.0, 0.99),
        (1.0, 0.01, 2.0, -2.01),
        (1.0, 0.01, 0.0, 1.99),
        (1.0, 0.5, 0.0, 1.75),
    ])
    def test_direct_substitution(self, lam, h, sigma, expected):
        assert decay_margin(lam, h, sigma) == pytest.approx(expected, abs=1e-14)

    def test_energy_bound(self):
        assert energy_bound(3.0, 1.0, 1.0, 1.0) == pytest.approx(6.0 * exp(-1.0))

    def test_initial_spread(self):
        assert initial_spread(np.array([[0.0], [2.0]])) == 1.0
        assert initial_spread(np.array([[0.0, 0.0], [2.0, 4.0]])) == 5.0


class TestCheckConditions:

    def test_default_noise_level(self, make_params, rastrigin2):
        report = check_conditions(make_params(sigma=1.0), rastrigin2)
        assert report.noise_below_drift
        assert report.noise_drift_margin == pytest.approx(1.0)
        assert report.h_noise_bound == pytest.approx(1.0)
        assert report.h_below_noise_bound
        assert report.decay_margin == pytest.approx(0.99)
        assert report.convergence.verdict == "unknown"

    def test_strong_noise_flags_hypotheses(self, make_params, rastrigin2):
        p = make_params(sigma=2.0)
        stats = initial_data_statistics(p, rastrigin2, -2.0, 2.0, RngStream(0, 0), draws=500)
        report = check_conditions(p, rastrigin2, stats)
        assert not report.noise_below_drift
        assert report.h_noise_bound is None
        assert not report.h_below_noise_bound
        assert report.decay_margin < 0
        assert report.convergence.verdict == "infeasible"
        assert any("2 lambda > sigma^2" in note for note in report.convergence.notes)

    def test_noise_free_large_step(self, make_params, rastrigin2):
        report = check_conditions(make_params(sigma=0.0, h=0.5), rastrigin2)
        assert report.h_below_inverse_lambda
        assert report.inverse_lambda_margin == pytest.approx(0.5)
        assert report.decay_margin == pytest.approx(1.75)

    def test_deterministic_scheme_uses_zero_noise(self, make_params, rastrigin2):
        report = check_conditions(make_params(sigma=2.0, scheme=Scheme.DETERMINISTIC), rastrigin2)
        assert report.effective_sigma == 0.0
        assert report.noise_below_drift

    def test_margin_sign_agrees_with_step_bound(self, make_params, rastrigin2, np_rng):
        for _ in range(500):
            lam = float(np_rng.uniform(0.1, 3.0))
            sigma = float(np_rng.uniform(0.0, 2.0))
            h = float(np_rng.uniform(0.001, 2.0))
            report = check_conditions(make_params(lam=lam, sigma=sigma, h=h), rastrigin2)
            if report.noise_below_drift:
                assert (report.decay_margin > 0) == report.h_below_noise_bound

    def test_missing_metadata_gives_unknown(self, make_params):
        L = Objective(name="bare", dim=2, fn=lambda x: np.sum(x ** 2, axis=-1))
        report = check_conditions(make_params(), L)
        assert report.convergence.verdict == "unknown"
        assert report.noise_below_drift

    def test_feasible_epsilon_from_statistics(self, make_params, sphere2):
        stats = InitStats(log_gibbs_expectation=log(0.5), log_gibbs_std_error=0.0,
                          spread_expectation=0.1, spread_std_error=0.0, draws=100)
        report = check_conditions(make_params(sigma=0.0, beta=1.0), sphere2, stats)
        # (1 - eps) * 0.5 >= 1 * 2 * 1 * exp(0) * 0.1
        assert report.convergence.verdict == "feasible"
        assert report.convergence.epsilon_max == pytest.approx(0.6)
        assert any("not > 0" in note for note in report.convergence.notes)

    def test_infeasible_when_gibbs_mass_too_small(self, make_params, sphere2):
        stats = InitStats(log_gibbs_expectation=log(0.1), log_gibbs_std_error=0.0,
                          spread_expectation=1.0, spread_std_error=0.0, draws=100)
        report = check_conditions(make_params(sigma=0.0, beta=1.0), sphere2, stats)
        assert report.convergence.verdict == "infeasible"
        assert report.convergence.epsilon_max is None

    def test_report_serializes_and_prints(self, make_params, rastrigin2):
        p = make_params()
        stats = initial_data_statistics(p, rastrigin2, -2.0, 2.0, RngStream(1, 0), draws=200)
        report = check_conditions(p, rastrigin2, stats)
        assert report.to_dict()["kind"] == "conditions"
        text = "\n".join(report.lines())
        assert "decay margin m = 0.99" in text
        assert "convergence-to-minimum condition" in text


class TestInitialDataStatistics:

    def test_gibbs_expectation_for_sphere(self, make_params):
        p = make_params(n_particles=2, dim=1, beta=1.0)
        L = registry_get("sphere", 1)
        stats = initial_data_statistics(p, L, -1.0, 1.0, RngStream(3, 0), draws=20_000)
        exact = log(sqrt(pi) / 2 * erf(1.0))
        assert abs(stats.log_gibbs_expectation - exact) <= 4 * stats.log_gibbs_std_error

    def test_spread_expectation_for_pairs(self, make_params):
        p = make_params(n_particles=2, dim=1, beta=1.0)
        L = registry_get("sphere", 1)
        stats = initial_data_statistics(p, L, -1.0, 1.0, RngStream(4, 0), draws=20_000)
        # max_i (x_i - mean)^2 = (x_1 - x_2)^2 / 4 with expectation 1/6
        assert abs(stats.spread_expectation - 1 / 6) <= 4 * stats.spread_std_error

    def test_needs_two_draws(self, make_params, rastrigin2):
        with pytest.raises(ValueError):
            initial_data_statistics(make_params(), rastrigin2, -2.0, 2.0, RngStream(0, 0), draws=1)
