"""
Closed-form consensus oracles and the Monte Carlo machinery that tests the simulator against them
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from math import exp, sqrt
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core import (
    Ensemble,
    NoiseMode,
    Params,
    RngStream,
    Scheme,
    draw_path_noise,
    validate_params,
)
from src.diagnostics import decay_margin, diameter, energy_bound, initial_spread
from src.dynamics import StopCriteria, init_uniform, run, step_batch
from src.gibbs import consensus_point_batch, gibbs_weights, summarize
from src.objectives import Objective, registry_get

EXACT_RTOL = 1e-12
K_SE = 3.0
RATE_RTOL = 0.10
TREND_K_SE = 2.0

THEOREM_IDS = ("thm31", "thm32", "thm33", "thm34i", "thm34ii", "thm34iii", "moment", "lem42", "laplace")
STATISTICS = ("mean_diff", "second_moment", "log_diff_slope", "consensus_exponent", "log_rate")


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def oracle_deterministic_diameter(D0: float, lam: float, t: float) -> float:
    """e^{-lambda t} D0: bound on the diameter, exact for pairwise gaps of the continuous flow."""
    if D0 < 0:
        raise ValueError(f"D0 must be >= 0, got {D0}")
    return exp(-lam * t) * D0


def oracle_discrete_mean(diff0: float, lam: float, h: float, n: int) -> float:
    """(1 - lambda h)^n diff0, an equality for the expected pairwise gap."""
    if not 0 < lam * h < 1:
        raise ValueError(f"need 0 < lambda h < 1, got lambda h = {lam * h}")
    return (1.0 - lam * h) ** n * diff0


def oracle_moment_factor(lam: float, h: float, sigma: float) -> float:
    """E[(1 - lambda h + sigma sqrt(h) Z)^2] = 1 - h m."""
    return 1.0 - h * decay_margin(lam, h, sigma)


def oracle_discrete_second_moment(sq0: float, lam: float, h: float, sigma: float, n: int) -> float:
    """(1 - h m)^n sq0, an equality for the expected squared pairwise gap."""
    return oracle_moment_factor(lam, h, sigma) ** n * sq0


def oracle_continuous_exponent(lam: float, sigma: float) -> float:
    """Almost-sure exponential rate of log|x^i_t - x^j_t|: -(lambda + sigma^2 / 2)."""
    return -(lam + sigma ** 2 / 2.0)


def oracle_consensus_exponent(lam: float, h: float, sigma: float) -> float:
    """Limit h m / 2 of the per-step exponent in the strong consensus bound."""
    return h * decay_margin(lam, h, sigma) / 2.0


# ---------------------------------------------------------------------------
# Estimates and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int

    @classmethod
    def from_samples(cls, samples) -> "McEstimate":
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size < 2:
            raise ValueError(f"need at least 2 samples, got {samples.size}")
        if np.ptp(samples) == 0:
            return cls(float(samples[0]), 0.0, int(samples.size))
        return cls(
            float(samples.mean()),
            float(samples.std(ddof=1) / sqrt(samples.size)),
            int(samples.size),
        )


def _allowed_gap(rule: str, tolerance: float, oracle: float, estimate: McEstimate, scale: float) -> float:
    if rule == "exact":
        return tolerance * scale
    if rule == "k_se":
        return tolerance * estimate.std_error + EXACT_RTOL * abs(oracle)
    if rule == "relative":
        return tolerance * abs(oracle)
    raise ValueError(f"no symmetric tolerance for rule '{rule}'")


@dataclass
class VerificationReport:
    """
    Oracle versus estimate under a stated rule.

    Rules: exact (|est - oracle| <= tol * scale), k_se (|est - oracle| <= tol * SE,
    plus 1e-12 relative for noise-free runs), relative (|est - oracle| <= tol * |oracle|),
    upper_bound (est - tol * SE <= oracle), trend (consecutive values nonincreasing
    within tol * SE of their difference). Any false entry in details["checks"]
    fails the report regardless of the rule.
    """
    theorem: str
    rule: str
    tolerance: float
    verdict: str  # pass | fail | skip
    oracle: Optional[float] = None
    estimate: Optional[McEstimate] = None
    scale: float = 1.0
    reason: str = ""
    params: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    def expected_verdict(self) -> str:
        """Recompute the verdict from the numbers under the report's own rule."""
        if self.verdict == "skip":
            return "skip"
        if not all(self.details.get("checks", {}).values()):
            return "fail"
        if self.rule == "trend":
            values = self.details["values"]
            errors = self.details["std_errors"]
            ok = all(
                values[k + 1] <= values[k] + self.tolerance * sqrt(errors[k] ** 2 + errors[k + 1] ** 2)
                for k in range(len(values) - 1)
            )
            return "pass" if ok else "fail"
        if self.rule == "upper_bound":
            ok = self.estimate.mean - self.tolerance * self.estimate.std_error <= self.oracle
            return "pass" if ok else "fail"
        gap = abs(self.estimate.mean - self.oracle)
        allowed = _allowed_gap(self.rule, self.tolerance, self.oracle, self.estimate, self.scale)
        return "pass" if gap <= allowed else "fail"

    def consistent(self) -> bool:
        return self.verdict == self.expected_verdict()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = "verification"
        return data

    def line(self) -> str:
        label = {"pass": "PASS", "fail": "FAIL", "skip": "SKIP"}[self.verdict]
        parts = [f"{label:4}", f"{self.theorem:9}", f"rule={self.rule}", f"tol={self.tolerance:g}"]
        if self.oracle is not None:
            parts.append(f"oracle={self.oracle:.10g}")
        if self.estimate is not None:
            parts.append(f"estimate={self.estimate.mean:.10g}")
            parts.append(f"se={self.estimate.std_error:.3g}")
            parts.append(f"n={self.estimate.n_samples}")
        if self.reason:
            parts.append(f"reason={self.reason}")
        return " ".join(parts)


def _finish(report: VerificationReport) -> VerificationReport:
    report.verdict = report.expected_verdict()
    return report


# ---------------------------------------------------------------------------
# Configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    """Everything a verification or pairwise estimate needs; all fields are plain values."""
    lam: float = 1.0
    sigma: float = 1.0
    h: float = 0.01
    beta: float = 10.0
    scheme: str = "euler"
    noise_mode: str = "common"
    objective: str = "sphere"
    objective_params: Tuple[Tuple[str, float], ...] = ()
    n_particles: int = 2
    dim: int = 1
    # symmetric pair: equal objective values keep the consensus point at exactly 0
    initial: Optional[Tuple[Tuple[float, ...], ...]] = ((0.5,), (-0.5,))
    init_low: float = -2.0
    init_high: float = 2.0
    n_steps: int = 500
    runs: int = 10_000
    seed: int = 0
    init_seed: int = 2024
    window_start: float = 1.0
    window_end: float = 10.0
    draws: int = 1_000_000
    betas: Tuple[float, ...] = (1.0, 10.0, 100.0)
    max_steps: int = 1000
    diameter_tol: float = 1e-3
    success_radius: float = 0.25
    jobs: int = 1

    def params(self, **overrides) -> Params:
        values = dict(
            lam=self.lam, sigma=self.sigma, beta=self.beta, h=self.h,
            n_particles=self.n_particles, dim=self.dim,
            noise_mode=NoiseMode(self.noise_mode), scheme=Scheme(self.scheme),
        )
        values.update(overrides)
        return validate_params(Params(**values))

    def build_objective(self) -> Objective:
        return registry_get(self.objective, self.dim, dict(self.objective_params))

    def initial_positions(self) -> np.ndarray:
        if self.initial is not None:
            positions = np.array(self.initial, dtype=np.float64)
            if positions.shape != (self.n_particles, self.dim):
                raise ValueError(
                    f"initial positions have shape {positions.shape}, expected "
                    f"({self.n_particles}, {self.dim})"
                )
            return positions
        p = self.params()
        return np.array(init_uniform(p, self.init_low, self.init_high, RngStream(self.init_seed, 0)).positions)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_RASTRIGIN_PARAMS = (("B", 0.0), ("C", 0.0))

DEFAULT_CONFIGS: Dict[str, VerifyConfig] = {
    "thm31": VerifyConfig(scheme="semi_exact", sigma=0.0, objective="rastrigin",
                          objective_params=_RASTRIGIN_PARAMS, n_particles=100, dim=2,
                          initial=None, n_steps=1000),
    "thm32": VerifyConfig(scheme="semi_exact", sigma=1.0, runs=100, n_steps=1000),
    "thm33": VerifyConfig(scheme="deterministic", sigma=0.0, objective="rastrigin",
                          objective_params=_RASTRIGIN_PARAMS, n_particles=100, dim=2,
                          initial=None, n_steps=2000),
    "thm34i": VerifyConfig(scheme="euler", sigma=1.0, runs=10_000, n_steps=500),
    "thm34ii": VerifyConfig(scheme="euler", sigma=1.0, runs=10_000, n_steps=100),
    "thm34iii": VerifyConfig(scheme="euler", sigma=1.0, runs=100, n_steps=5000),
    "moment": VerifyConfig(draws=1_000_000),
    "lem42": VerifyConfig(scheme="semi_exact", sigma=1.0, objective="rastrigin",
                          objective_params=_RASTRIGIN_PARAMS, n_particles=10, dim=2,
                          initial=None, runs=2000, n_steps=100),
    "laplace": VerifyConfig(scheme="euler", sigma=1.0, objective="rastrigin",
                            objective_params=_RASTRIGIN_PARAMS, n_particles=100, dim=2,
                            initial=None, runs=20),
}


def default_config(theorem: str) -> VerifyConfig:
    if theorem not in DEFAULT_CONFIGS:
        raise ValueError(f"Unknown verification id '{theorem}'. Known: {', '.join(THEOREM_IDS)}")
    return DEFAULT_CONFIGS[theorem]


# ---------------------------------------------------------------------------
# Batched Monte Carlo simulation
# ---------------------------------------------------------------------------

def simulate_batch(config: VerifyConfig, runs: int, n_steps: int, observe) -> np.ndarray:
    """
    Run `runs` independent copies of the configured ensemble for n_steps steps.

    Every run starts from the same initial ensemble; run r draws its noise
    from RngStream(config.seed, r). observe(step, positions) is called at
    every step including step 0 and its results are stacked along axis 1.
    """
    p = config.params()
    L = config.build_objective()
    init = config.initial_positions()
    positions = np.broadcast_to(init, (runs,) + init.shape).copy()

    noise = None
    if p.scheme != Scheme.DETERMINISTIC:
        noise = np.stack([draw_path_noise(RngStream(config.seed, r), p, n_steps) for r in range(runs)])

    observed = [observe(0, positions)]
    for n in range(n_steps):
        block = None if noise is None else noise[:, n]
        positions = step_batch(positions, p, L, block, step_index=n)
        observed.append(observe(n + 1, positions))
    return np.stack(observed, axis=1)


def simulate_pair_gaps(config: VerifyConfig, runs: int, n_steps: int) -> np.ndarray:
    """Gap vectors X^1_n - X^2_n for every run and step: shape (runs, n_steps + 1, d)."""
    if config.n_particles < 2:
        raise ValueError("pairwise statistics need at least two particles")
    return simulate_batch(config, runs, n_steps, lambda n, x: x[:, 0, :] - x[:, 1, :])


def _window(config: VerifyConfig, n_steps: int) -> np.ndarray:
    steps = np.arange(n_steps + 1)
    times = steps * config.h
    inside = steps[(times >= config.window_start - 1e-12) & (times <= config.window_end + 1e-12)]
    if inside.size < 2:
        raise ValueError(
            f"window [{config.window_start}, {config.window_end}] holds fewer than 2 steps"
        )
    return inside


def pair_statistic_samples(gaps: np.ndarray, statistic: str, n: int, config: VerifyConfig) -> np.ndarray:
    """One sample per run of `statistic`, computed from simulated gap vectors."""
    first = gaps[:, :, 0]
    if statistic == "mean_diff":
        return first[:, n]
    if statistic == "second_moment":
        return np.sum(gaps[:, n, :] ** 2, axis=-1)
    if statistic == "log_diff_slope":
        window = _window(config, gaps.shape[1] - 1)
        logs = np.log(np.abs(first[:, window]))
        slopes, _ = np.polyfit(window * config.h, logs.T, 1)
        return slopes
    if statistic == "consensus_exponent":
        ratios = first[:, 1:n + 1] / first[:, :n]
        return np.mean(1.0 - ratios ** 2, axis=1) / 2.0
    if statistic == "log_rate":
        return -np.log(np.abs(first[:, n] / first[:, 0])) / n
    raise ValueError(f"Unknown statistic '{statistic}'. Known: {', '.join(STATISTICS)}")


def estimate_pairwise_statistic(
    config: VerifyConfig,
    statistic: str,
    runs: Optional[int] = None,
    step: Optional[int] = None
) -> McEstimate:
    """
    Monte Carlo estimate of a pairwise-gap statistic over independent seeded runs.

    mean_diff and second_moment are taken at `step` (default config.n_steps);
    log_diff_slope is the least-squares slope of log|x^{1,1} - x^{2,1}| against t
    over the configured window; consensus_exponent is (1 / 2n) sum (1 - r_l^2)
    with r_l the realized one-step gap ratio; log_rate is -(1/n) log|gap_n / gap_0|.
    """
    if statistic not in STATISTICS:
        raise ValueError(f"Unknown statistic '{statistic}'. Known: {', '.join(STATISTICS)}")
    runs = config.runs if runs is None else runs
    if runs < 2:
        raise ValueError(f"runs must be >= 2, got {runs}")
    n = config.n_steps if step is None else step
    if n < 1:
        raise ValueError(f"step must be >= 1, got {n}")

    if statistic == "log_diff_slope":
        n = int(round(config.window_end / config.h))
        _window(config, n)

    gaps = simulate_pair_gaps(config, runs, n)
    return McEstimate.from_samples(pair_statistic_samples(gaps, statistic, n, config))


def log_gap_curve(config: VerifyConfig, runs: Optional[int] = None) -> pd.DataFrame:
    """Mean over runs of log|x^{1,1}_n - x^{2,1}_n| at every step up to window_end."""
    runs = config.runs if runs is None else runs
    n_steps = int(round(config.window_end / config.h))
    logs = np.log(np.abs(simulate_pair_gaps(config, runs, n_steps)[:, :, 0]))
    steps = np.arange(n_steps + 1)
    se = logs.std(axis=0, ddof=1) / sqrt(runs) if runs > 1 else np.zeros(n_steps + 1)
    return pd.DataFrame({
        "sigma": config.sigma,
        "step": steps,
        "time": steps * config.h,
        "mean_log_gap": logs.mean(axis=0),
        "std_error": se,
    })


# ---------------------------------------------------------------------------
# Laplace-principle sweep
# ---------------------------------------------------------------------------

def _sweep_run(config: VerifyConfig, beta: float, seed_index: int) -> Dict[str, Any]:
    p = config.params(beta=beta)
    L = config.build_objective()
    rng = RngStream(config.seed, seed_index)
    init = init_uniform(p, config.init_low, config.init_high, rng)
    stop = StopCriteria(max_steps=config.max_steps, diameter_tol=config.diameter_tol)
    trajectory = run(init, p, L, stop, rng, record_stride=config.max_steps + 1)
    final = trajectory.final
    g = summarize(final, L.evaluate(final.positions), beta)
    distance = L.distance_to_minimizer(g.consensus_point)
    return {
        "beta": beta,
        "seed_index": seed_index,
        "final_value": L(g.consensus_point),
        "distance": distance,
        "steps": trajectory.steps,
        "stop_reason": trajectory.stop_reason,
    }


def _sweep_job(args):
    return _sweep_run(*args)


def beta_sweep(config: VerifyConfig, betas: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """
    For each beta, run config.runs seeds to consensus and summarize the final
    objective value at the consensus point.

    min_final_value is the smallest value over seeds, an estimate of the
    essential infimum that a finite seed ensemble can only under-sample.
    """
    betas = list(config.betas if betas is None else betas)
    if len(betas) < 2:
        raise ValueError(f"a beta sweep needs at least 2 values, got {len(betas)}")

    jobs = [(config, float(beta), k) for beta in betas for k in range(config.runs)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(job) for job in jobs]
    per_run = pd.DataFrame(rows)

    table = []
    for beta in betas:
        sub = per_run[per_run["beta"] == float(beta)]
        values = sub["final_value"].to_numpy()
        spread = values.std(ddof=1) if len(values) > 1 else 0.0
        success = None
        if sub["distance"].notna().all():
            success = float((sub["distance"] <= config.success_radius).mean())
        table.append({
            "beta": float(beta),
            "runs": int(len(sub)),
            "median_final_value": float(np.median(values)),
            "median_std_error": float(1.2533 * spread / sqrt(len(values))),
            "min_final_value": float(values.min()),
            "success_rate": success,
            "mean_steps": float(sub["steps"].mean()),
        })
    return pd.DataFrame(table)


# ---------------------------------------------------------------------------
# Theorem checks
# ---------------------------------------------------------------------------

def _skip(theorem: str, rule: str, tolerance: float, reason: str, config: VerifyConfig) -> VerificationReport:
    return VerificationReport(theorem=theorem, rule=rule, tolerance=tolerance, verdict="skip",
                              reason=f"hypotheses unmet: {reason}", params=config.to_dict())


def _common_noise(config: VerifyConfig) -> Optional[str]:
    # pairwise gap oracles assume both particles see the same noise draw
    if config.noise_mode != NoiseMode.COMMON.value:
        return f"noise_mode = {config.noise_mode}, pairwise oracles need common noise"
    return None


def _noise_hypotheses(config: VerifyConfig) -> Optional[str]:
    unmet = _common_noise(config)
    if unmet:
        return unmet
    margin = 2 * config.lam - config.sigma ** 2
    if margin <= 0:
        return f"2 lambda <= sigma^2 ({2 * config.lam:g} <= {config.sigma ** 2:g})"
    if config.h >= margin / config.lam:
        return f"h >= (2 lambda - sigma^2)/lambda ({config.h:g} >= {margin / config.lam:g})"
    return None


def _pairwise_contraction(theorem: str, config: VerifyConfig, factor: float,
                          check_exponential_bound: bool = False) -> VerificationReport:
    """Every pairwise gap at step n equals factor^n times its initial value."""
    p = config.params()
    L = config.build_objective()
    init_positions = config.initial_positions()
    init = Ensemble(init_positions, 0, p.h)
    trajectory = run(init, p, L, StopCriteria(max_steps=config.n_steps), RngStream(config.seed, 0),
                     record_stride=config.n_steps)
    final = trajectory.final.positions
    n = trajectory.steps

    D0 = diameter(init_positions)
    D_n = diameter(final)
    gaps0 = init_positions[:, None, :] - init_positions[None, :, :]
    gaps_n = final[:, None, :] - final[None, :, :]
    worst = float(np.max(np.abs(gaps_n - factor ** n * gaps0)))
    bound = exp(-p.lam * n * p.h) * D0
    pairs = p.n_particles * (p.n_particles - 1) // 2

    checks = {"pairwise_gaps_scaled": worst <= EXACT_RTOL * D0}
    if check_exponential_bound:
        checks["below_exponential_bound"] = D_n <= bound * (1 + EXACT_RTOL)

    return _finish(VerificationReport(
        theorem=theorem,
        rule="exact",
        tolerance=EXACT_RTOL,
        verdict="",
        oracle=factor ** n * D0,
        estimate=McEstimate(D_n, 0.0, max(pairs, 1)),
        scale=D0,
        params=config.to_dict(),
        details={
            "steps": n,
            "initial_diameter": D0,
            "max_pairwise_error": worst,
            "exponential_bound": bound,
            "checks": checks,
        },
    ))


def _verify_thm31(config: VerifyConfig) -> VerificationReport:
    if config.lam <= 0:
        return _skip("thm31", "exact", EXACT_RTOL, "lambda <= 0", config)
    config = replace(config, sigma=0.0, scheme="semi_exact")
    return _pairwise_contraction("thm31", config, exp(-config.lam * config.h))


def _verify_thm33(config: VerifyConfig) -> VerificationReport:
    if not 0 < config.lam * config.h < 1:
        return _skip("thm33", "exact", EXACT_RTOL, f"lambda h = {config.lam * config.h:g} not in (0, 1)", config)
    config = replace(config, sigma=0.0, scheme="deterministic")
    return _pairwise_contraction("thm33", config, 1.0 - config.lam * config.h,
                                 check_exponential_bound=True)


def _verify_thm32(config: VerifyConfig) -> VerificationReport:
    if config.lam <= 0:
        return _skip("thm32", "relative", RATE_RTOL, "lambda <= 0", config)
    unmet = _common_noise(config)
    if unmet:
        return _skip("thm32", "relative", RATE_RTOL, unmet, config)
    config = replace(config, scheme="semi_exact")
    estimate = estimate_pairwise_statistic(config, "log_diff_slope")
    return _finish(VerificationReport(
        theorem="thm32", rule="relative", tolerance=RATE_RTOL, verdict="",
        oracle=oracle_continuous_exponent(config.lam, config.sigma),
        estimate=estimate, params=config.to_dict(),
        details={"window": [config.window_start, config.window_end]},
    ))


def _initial_gap(config: VerifyConfig) -> np.ndarray:
    init = config.initial_positions()
    return init[0] - init[1]


def _verify_thm34i(config: VerifyConfig) -> VerificationReport:
    if not 0 < config.lam * config.h < 1:
        return _skip("thm34i", "k_se", K_SE, f"lambda h = {config.lam * config.h:g} not in (0, 1)", config)
    estimate = estimate_pairwise_statistic(config, "mean_diff")
    oracle = oracle_discrete_mean(float(_initial_gap(config)[0]), config.lam, config.h, config.n_steps)
    return _finish(VerificationReport(
        theorem="thm34i", rule="k_se", tolerance=K_SE, verdict="", oracle=oracle,
        estimate=estimate, params=config.to_dict(),
        details={"bound": exp(-config.lam * config.n_steps * config.h) * abs(float(_initial_gap(config)[0]))},
    ))


def _verify_thm34ii(config: VerifyConfig) -> VerificationReport:
    unmet = _noise_hypotheses(config)
    if unmet:
        return _skip("thm34ii", "k_se", K_SE, unmet, config)
    estimate = estimate_pairwise_statistic(config, "second_moment")
    sq0 = float(np.sum(_initial_gap(config) ** 2))
    oracle = oracle_discrete_second_moment(sq0, config.lam, config.h, config.sigma, config.n_steps)
    return _finish(VerificationReport(
        theorem="thm34ii", rule="k_se", tolerance=K_SE, verdict="", oracle=oracle,
        estimate=estimate, params=config.to_dict(),
        details={"decay_margin": decay_margin(config.lam, config.h, config.sigma)},
    ))


def _verify_thm34iii(config: VerifyConfig) -> VerificationReport:
    unmet = _noise_hypotheses(config)
    if unmet:
        return _skip("thm34iii", "relative", RATE_RTOL, unmet, config)
    n = config.n_steps
    gaps = simulate_pair_gaps(config, config.runs, n)
    exponent = pair_statistic_samples(gaps, "consensus_exponent", n, config)
    realized = pair_statistic_samples(gaps, "log_rate", n, config)
    # -log y >= 1 - y, so every path's realized rate dominates its exponent
    dominated = float(np.mean(realized >= exponent * (1 - EXACT_RTOL)))
    return _finish(VerificationReport(
        theorem="thm34iii", rule="relative", tolerance=RATE_RTOL, verdict="",
        oracle=oracle_consensus_exponent(config.lam, config.h, config.sigma),
        estimate=McEstimate.from_samples(exponent), params=config.to_dict(),
        details={
            "realized_log_rate": float(realized.mean()),
            "realized_log_rate_se": float(realized.std(ddof=1) / sqrt(realized.size)),
            "rate_dominates_fraction": dominated,
            "checks": {"realized_rate_dominates": dominated == 1.0},
        },
    ))


def _verify_moment(config: VerifyConfig) -> VerificationReport:
    z = RngStream(config.seed, 0).standard_normal(config.draws)
    samples = (1.0 - config.lam * config.h + config.sigma * sqrt(config.h) * z) ** 2
    return _finish(VerificationReport(
        theorem="moment", rule="k_se", tolerance=K_SE, verdict="",
        oracle=oracle_moment_factor(config.lam, config.h, config.sigma),
        estimate=McEstimate.from_samples(samples), params=config.to_dict(),
    ))


def _verify_lem42(config: VerifyConfig) -> VerificationReport:
    config = replace(config, scheme="semi_exact")
    p = config.params()
    L = config.build_objective()
    init = config.initial_positions()

    def energy(n, x):
        cons = consensus_point_batch(x, gibbs_weights(L.evaluate(x), p.beta))
        return np.mean(np.sum((x - cons[:, None, :]) ** 2, axis=-1), axis=-1)

    energies = simulate_batch(config, config.runs, config.n_steps, energy)
    t = config.n_steps * config.h
    return _finish(VerificationReport(
        theorem="lem42", rule="upper_bound", tolerance=K_SE, verdict="",
        oracle=energy_bound(initial_spread(init), config.lam, config.sigma, t),
        estimate=McEstimate.from_samples(energies[:, -1]), params=config.to_dict(),
        details={"time": t},
    ))


def _verify_laplace(config: VerifyConfig) -> VerificationReport:
    table = beta_sweep(config)
    return _finish(VerificationReport(
        theorem="laplace", rule="trend", tolerance=TREND_K_SE, verdict="",
        params=config.to_dict(),
        details={
            "betas": table["beta"].tolist(),
            "values": table["median_final_value"].tolist(),
            "std_errors": table["median_std_error"].tolist(),
            "min_final_values": table["min_final_value"].tolist(),
            "success_rates": table["success_rate"].tolist(),
        },
    ))


_VERIFIERS = {
    "thm31": _verify_thm31,
    "thm32": _verify_thm32,
    "thm33": _verify_thm33,
    "thm34i": _verify_thm34i,
    "thm34ii": _verify_thm34ii,
    "thm34iii": _verify_thm34iii,
    "moment": _verify_moment,
    "lem42": _verify_lem42,
    "laplace": _verify_laplace,
}


def verify_theorem(theorem: str, config: Optional[VerifyConfig] = None) -> VerificationReport:
    """Run the estimator matching `theorem` and compare it with its oracle."""
    if theorem not in _VERIFIERS:
        raise ValueError(f"Unknown verification id '{theorem}'. Known: {', '.join(THEOREM_IDS)}")
    return _VERIFIERS[theorem](config if config is not None else default_config(theorem))
