"""
Tests for the time-stepping schemes, the run loop and uniform initialization.
"""

from math import exp, sqrt

import numpy as np
import pytest

from src.core import Ensemble, NoiseMode, Params, RngStream, Scheme, StepError, draw_step_noise
from src.diagnostics import diameter
from src.dynamics import (
    StopCriteria,
    init_uniform,
    run,
    step,
    step_batch,
    step_deterministic,
    step_euler,
    step_semi_exact,
)
from src.gibbs import gibbs_weights
from src.objectives import Objective, registry_get


def _pair_differences(positions):
    return positions[:, None, :] - positions[None, :, :]


def _random_ensemble(np_rng, n=10, d=2, half_width=2.0):
    return Ensemble(np_rng.uniform(-half_width, half_width, (n, d)))


class TestFixedPoints:

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_identical_particles_stay_put(self, make_params, rastrigin2, scheme):
        p = make_params(n_particles=5, scheme=scheme)
        e = Ensemble(np.tile([0.7, -1.3], (5, 1)))
        nxt = step(e, p, rastrigin2, RngStream(1, 0))
        np.testing.assert_array_equal(nxt.positions, e.positions)
        assert nxt.step == 1

    @pytest.mark.parametrize("scheme", [Scheme.EULER, Scheme.SEMI_EXACT])
    def test_single_particle_never_moves(self, make_params, rastrigin2, scheme):
        p = make_params(n_particles=1, sigma=2.0, scheme=scheme)
        e = Ensemble([[1.25, -0.5]])
        rng = RngStream(2, 0)
        for _ in range(20):
            e = step(e, p, rastrigin2, rng)
        np.testing.assert_array_equal(e.positions, [[1.25, -0.5]])


class TestDeterministicScheme:

    def test_pairwise_differences_scale_by_one_minus_lambda_h(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=100, sigma=0.0, scheme=Scheme.DETERMINISTIC)
        e = _random_ensemble(np_rng, n=100)
        diff0 = _pair_differences(e.positions)
        d0 = diameter(e.positions)
        for n in range(1, 2001):
            e = step_deterministic(e, p, rastrigin2)
            if n % 250 == 0:
                expected = (1 - p.lam * p.h) ** n * diff0
                assert np.max(np.abs(_pair_differences(e.positions) - expected)) <= 1e-12 * d0

    def test_lambda_h_one_jumps_to_consensus(self, make_params, rastrigin2, np_rng):
        p = make_params(lam=1.0, h=1.0, sigma=0.0, scheme=Scheme.DETERMINISTIC)
        e = _random_ensemble(np_rng)
        w = gibbs_weights(rastrigin2.evaluate(e.positions), p.beta)
        cons = w @ e.positions
        nxt = step_deterministic(e, p, rastrigin2)
        np.testing.assert_allclose(nxt.positions, np.tile(cons, (10, 1)), atol=1e-12)

    def test_diameter_below_exponential_envelope(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=30, scheme=Scheme.DETERMINISTIC)
        init = _random_ensemble(np_rng, n=30)
        trajectory = run(init, p, rastrigin2, StopCriteria(max_steps=500), None)
        d0 = trajectory.records[0].diameter
        for rec in trajectory.records:
            assert rec.diameter <= exp(-p.lam * rec.time) * d0 * (1 + 1e-12)

    def test_extremes_are_monotone_on_random_setups(self, np_rng):
        for _ in range(100):
            n = int(np_rng.integers(2, 51))
            d = int(np_rng.integers(1, 6))
            h = float(np_rng.uniform(0.01, 0.99))
            p = Params(lam=1.0, sigma=0.0, beta=10.0, h=h, n_particles=n, dim=d,
                       scheme=Scheme.DETERMINISTIC)
            L = registry_get("rastrigin", d, {"B": 0.0, "C": 0.0})
            trajectory = run(_random_ensemble(np_rng, n=n, d=d), p, L, StopCriteria(max_steps=50), None)
            hi = np.array([r.component_max for r in trajectory.records])
            lo = np.array([r.component_min for r in trajectory.records])
            slack = 1e-12 * (1.0 + np.abs(hi[:-1]))
            assert np.all(hi[1:] <= hi[:-1] + slack)
            slack = 1e-12 * (1.0 + np.abs(lo[:-1]))
            assert np.all(lo[1:] >= lo[:-1] - slack)

    def test_largest_norm_is_nonincreasing(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=20, scheme=Scheme.DETERMINISTIC)
        e = _random_ensemble(np_rng, n=20)
        previous = np.max(np.linalg.norm(e.positions, axis=1))
        for _ in range(300):
            e = step_deterministic(e, p, rastrigin2)
            current = np.max(np.linalg.norm(e.positions, axis=1))
            assert current <= previous * (1 + 1e-12)
            previous = current


class TestStochasticSchemes:

    def test_euler_matches_consensus_form_update(self, make_params, rastrigin2, np_rng):
        p = make_params(n_particles=12, dim=3, sigma=1.5, scheme=Scheme.EULER)
        L = registry_get("rastrigin", 3, {"B": 0.0, "C": 0.0})
        for k in range(20):
            e = _random_ensemble(np_rng, n=12, d=3)
            z = draw_step_noise(RngStream(7, k), p)
            nxt = step_euler(e, p, L, RngStream(7, k))

            x = e.positions
            w = gibbs_weights(L.evaluate(x), p.beta)
            pull = np.einsum("k,ikl->il", w, x[None, :, :] - x[:, None, :])
            cons = w @ x
            literal = x + p.lam * p.h * pull + p.sigma * sqrt(p.h) * (x - cons) * z
            np.testing.assert_allclose(nxt.positions, literal, atol=1e-10)

    def test_semi_exact_without_noise_contracts_by_exponential(self, make_params, rastrigin2, np_rng):
        p = make_params(sigma=0.0, scheme=Scheme.SEMI_EXACT)
        e = _random_ensemble(np_rng)
        nxt = step_semi_exact(e, p, rastrigin2, RngStream(3, 0))
        ratio = exp(-p.lam * p.h)
        np.testing.assert_allclose(
            _pair_differences(nxt.positions), ratio * _pair_differences(e.positions), atol=1e-14
        )

    def test_semi_exact_pair_factor(self, make_params, rastrigin2, np_rng):
        p = make_params(sigma=1.0, scheme=Scheme.SEMI_EXACT)
        e = _random_ensemble(np_rng)
        w = draw_step_noise(RngStream(5, 1), p)
        nxt = step_semi_exact(e, p, rastrigin2, RngStream(5, 1))
        factor = exp(-p.lam * p.h) * (1 + p.sigma * sqrt(p.h) * w)
        np.testing.assert_allclose(
            _pair_differences(nxt.positions), factor * _pair_differences(e.positions), atol=1e-13
        )

    def test_wrong_scheme_is_rejected(self, make_params, rastrigin2, np_rng):
        p = make_params(scheme=Scheme.SEMI_EXACT)
        with pytest.raises(ValueError, match="semi_exact"):
            step_euler(_random_ensemble(np_rng), p, rastrigin2, RngStream(0, 0))

    @pytest.mark.parametrize("scheme", [Scheme.EULER, Scheme.SEMI_EXACT])
    def test_deviation_ratios_are_invariant(self, make_params, np_rng, scheme):
        p = make_params(n_particles=10, dim=3, sigma=1.0, scheme=scheme, noise_mode=NoiseMode.COMMON)
        L = registry_get("rastrigin", 3, {"B": 0.0, "C": 0.0})
        e = _random_ensemble(np_rng, n=10, d=3)
        rng = RngStream(99, 0)

        dev0 = e.positions - e.positions.mean(axis=0)
        ref = np.argmax(np.abs(dev0), axis=0)
        ratio0 = dev0 / dev0[ref, np.arange(3)]
        for n in range(1, 1001):
            e = step(e, p, L, rng)
            if n % 100:
                continue
            dev = e.positions - e.positions.mean(axis=0)
            mask = (np.abs(dev) >= 1e-3) & (np.abs(dev0) >= 1e-3)
            ratio = dev / dev[ref, np.arange(3)]
            np.testing.assert_allclose(ratio[mask], ratio0[mask], rtol=1e-9)

    @pytest.mark.parametrize("scheme", [Scheme.EULER, Scheme.SEMI_EXACT])
    @pytest.mark.parametrize("mode", list(NoiseMode))
    def test_batch_step_matches_single_step(self, make_params, rastrigin2, np_rng, scheme, mode):
        p = make_params(n_particles=8, scheme=scheme, noise_mode=mode)
        positions = np_rng.uniform(-2.0, 2.0, (6, 8, 2))
        noise = np.stack([draw_step_noise(RngStream(4, b), p) for b in range(6)])
        batched = step_batch(positions, p, rastrigin2, noise)
        for b in range(6):
            single = step(Ensemble(positions[b]), p, rastrigin2, RngStream(4, b))
            np.testing.assert_allclose(batched[b], single.positions, atol=1e-12)

    def test_batch_step_needs_noise(self, make_params, rastrigin2):
        with pytest.raises(ValueError, match="noise block"):
            step_batch(np.zeros((2, 10, 2)), make_params(), rastrigin2)


class TestRun:

    def test_zero_tolerance_runs_exactly_max_steps(self, make_params, rastrigin2, np_rng):
        trajectory = run(_random_ensemble(np_rng), make_params(), rastrigin2,
                         StopCriteria(max_steps=37, diameter_tol=0.0), RngStream(0, 0))
        assert trajectory.steps == 37
        assert trajectory.stop_reason == "max_steps"
        assert [r.step for r in trajectory.records] == list(range(38))

    def test_single_particle_runs_to_max_steps(self, make_params, rastrigin2):
        p = make_params(n_particles=1)
        trajectory = run(Ensemble([[0.5, 0.5]]), p, rastrigin2,
                         StopCriteria(max_steps=15, diameter_tol=1e-3), RngStream(0, 0))
        assert trajectory.stop_reason == "max_steps"
        assert trajectory.steps == 15
        for rec in trajectory.records:
            np.testing.assert_array_equal(rec.mean, [0.5, 0.5])

    def test_stops_when_diameter_drops_below_tolerance(self, make_params, rastrigin2):
        p = make_params(n_particles=2, sigma=0.0, scheme=Scheme.DETERMINISTIC)
        init = Ensemble([[0.0, 0.0], [4.0, 0.0]])
        trajectory = run(init, p, rastrigin2, StopCriteria(max_steps=5000, diameter_tol=1e-6), None)
        assert trajectory.stop_reason == "diameter_tol"
        assert trajectory.steps == 1513
        assert trajectory.records[-1].diameter < 1e-6
        assert trajectory.records[-2].diameter >= 1e-6

    def test_record_stride_keeps_final_state(self, make_params, rastrigin2, np_rng):
        trajectory = run(_random_ensemble(np_rng), make_params(), rastrigin2,
                         StopCriteria(max_steps=25), RngStream(0, 0), record_stride=10)
        assert [r.step for r in trajectory.records] == [0, 10, 20, 25]

    def test_snapshots_at_requested_times(self, make_params, rastrigin2, np_rng):
        init = _random_ensemble(np_rng)
        trajectory = run(init, make_params(), rastrigin2, StopCriteria(max_steps=20),
                         RngStream(0, 0), snapshot_times=(0.0, 0.1))
        assert [t for t, _ in trajectory.snapshots] == [0.0, 0.1]
        np.testing.assert_array_equal(trajectory.snapshots[0][1], init.positions)

    def test_same_stream_same_trajectory(self, make_params, rastrigin2, np_rng):
        init = _random_ensemble(np_rng)
        a = run(init, make_params(), rastrigin2, StopCriteria(max_steps=100), RngStream(8, 3))
        b = run(init, make_params(), rastrigin2, StopCriteria(max_steps=100), RngStream(8, 3))
        np.testing.assert_array_equal(a.final.positions, b.final.positions)

    def test_shape_mismatch(self, make_params, rastrigin2):
        with pytest.raises(ValueError, match="params expect"):
            run(Ensemble(np.zeros((3, 2))), make_params(), rastrigin2,
                StopCriteria(max_steps=5), RngStream(0, 0))

    def test_stochastic_run_needs_stream(self, make_params, rastrigin2, np_rng):
        with pytest.raises(ValueError, match="random stream"):
            run(_random_ensemble(np_rng), make_params(), rastrigin2, StopCriteria(max_steps=5), None)

    def test_nan_objective_reports_step_and_particle(self, make_params, np_rng):
        def nan_after_origin(x):
            values = np.sum(x ** 2, axis=-1)
            return np.where(values > 1e6, np.nan, values)

        L = Objective(name="blowup", dim=2, fn=nan_after_origin)
        init = np.zeros((10, 2))
        init[4] = [2000.0, 0.0]
        with pytest.raises(StepError) as info:
            run(Ensemble(init), make_params(), L, StopCriteria(max_steps=5), RngStream(0, 0))
        assert info.value.step == 0
        assert "particle 4" in str(info.value)

    def test_invalid_stop_criteria(self):
        with pytest.raises(ValueError):
            StopCriteria(max_steps=0)
        with pytest.raises(ValueError):
            StopCriteria(max_steps=10, diameter_tol=-1.0)


class TestInitUniform:

    def test_coordinates_within_box(self, make_params):
        p = make_params(n_particles=1000, dim=3)
        e = init_uniform(p, [-1.0, 0.0, 5.0], [1.0, 0.5, 6.0], RngStream(1, 0))
        assert e.positions.shape == (1000, 3)
        assert np.all(e.positions >= [-1.0, 0.0, 5.0])
        assert np.all(e.positions <= [1.0, 0.5, 6.0])
        assert e.step == 0

    def test_sample_mean_near_center(self, make_params):
        p = make_params(n_particles=100_000, dim=2)
        e = init_uniform(p, -2.0, 2.0, RngStream(2, 0))
        se = (4.0 / sqrt(12.0)) / sqrt(100_000)
        assert np.all(np.abs(e.positions.mean(axis=0)) <= 4 * se)

    def test_degenerate_box(self, make_params):
        with pytest.raises(ValueError, match="degenerate"):
            init_uniform(make_params(), [0.0, 1.0], [1.0, 1.0], RngStream(0, 0))


class TestConsensusAcrossNoiseLevels:
    """Rastrigin d=2, N=100, beta=10, lambda=1, h=0.01, uniform start on [-2, 2]^2, 20 seeds."""

    @pytest.fixture(scope="class")
    def steps_to_consensus(self):
        L = registry_get("rastrigin", 2, {"B": 0.0, "C": 0.0})
        stop = StopCriteria(max_steps=1000, diameter_tol=1e-3)
        out = {}
        for sigma in (0.0, 1.0, 2.0):
            p = Params(lam=1.0, sigma=sigma, beta=10.0, h=0.01, n_particles=100, dim=2)
            results = []
            for k in range(20):
                rng = RngStream(0, k)
                trajectory = run(init_uniform(p, -2.0, 2.0, rng), p, L, stop, rng, record_stride=1001)
                results.append((trajectory.steps, trajectory.stop_reason))
            out[sigma] = results
        return out

    @pytest.mark.parametrize("sigma", [0.0, 2.0])
    def test_every_run_reaches_consensus(self, steps_to_consensus, sigma):
        assert all(reason == "diameter_tol" for _, reason in steps_to_consensus[sigma])

    def test_moderate_noise_mostly_reaches_consensus(self, steps_to_consensus):
        reached = [reason == "diameter_tol" for _, reason in steps_to_consensus[1.0]]
        assert np.mean(reached) >= 0.8

    def test_median_time_nonincreasing_in_sigma(self, steps_to_consensus):
        medians = [np.median([s for s, _ in steps_to_consensus[sigma]]) for sigma in (0.0, 1.0, 2.0)]
        assert medians[0] >= medians[1] >= medians[2]
