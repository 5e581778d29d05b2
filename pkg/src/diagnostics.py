"""
Per-step observables and parameter-regime checks
"""

from dataclasses import dataclass, field, asdict
from math import log
from typing import Any, Dict, List, Optional

import numpy as np

from src.core import Ensemble, GibbsSummary, Params, RngStream
from src.gibbs import gibbs_mass_log
from src.objectives import Objective

_DIAMETER_BLOCK = 512


def diameter(positions: np.ndarray) -> float:
    """Max pairwise Euclidean distance, exact, in row blocks to bound memory."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        return 0.0
    best = 0.0
    for start in range(0, n, _DIAMETER_BLOCK):
        block = positions[start:start + _DIAMETER_BLOCK]
        sq = np.sum((block[:, None, :] - positions[None, :, :]) ** 2, axis=-1)
        best = max(best, float(sq.max()))
    return float(np.sqrt(best))


@dataclass
class StepRecord:
    step: int
    time: float
    diameter: float
    component_diameters: np.ndarray
    component_min: np.ndarray
    component_max: np.ndarray
    mean: np.ndarray
    consensus_point: np.ndarray
    mean_to_consensus: float
    energy: float
    log_gibbs_mass: float
    objective_at_consensus: float

    @staticmethod
    def csv_columns(dim: int) -> List[str]:
        columns = ["step", "time", "diameter"]
        for prefix in ("diam", "min", "max", "mean", "cons"):
            columns += [f"{prefix}_{l}" for l in range(1, dim + 1)]
        columns += ["mean_to_cons", "energy", "log_gibbs_mass", "obj_at_cons"]
        return columns

    def csv_row(self) -> List[Any]:
        row: List[Any] = [self.step, self.time, self.diameter]
        for vector in (self.component_diameters, self.component_min, self.component_max,
                       self.mean, self.consensus_point):
            row += [float(v) for v in vector]
        row += [self.mean_to_consensus, self.energy, self.log_gibbs_mass,
                self.objective_at_consensus]
        return row

    def to_dict(self) -> Dict[str, Any]:
        data = {"kind": "step"}
        for key, value in asdict(self).items():
            data[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return data


def record(e: Ensemble, g: GibbsSummary, L: Objective) -> StepRecord:
    """Collect every monitored quantity for one ensemble state."""
    x = e.positions
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    mean = x.mean(axis=0)
    cons = np.asarray(g.consensus_point, dtype=np.float64)
    return StepRecord(
        step=e.step,
        time=e.time,
        diameter=diameter(x),
        component_diameters=hi - lo,
        component_min=lo,
        component_max=hi,
        mean=mean,
        consensus_point=cons.copy(),
        mean_to_consensus=float(np.linalg.norm(mean - cons)),
        energy=float(np.mean(np.sum((x - cons) ** 2, axis=1))),
        log_gibbs_mass=float(g.log_mass),
        objective_at_consensus=L(cons),
    )


def weighted_mean_gap_ok(e: Ensemble, g: GibbsSummary, rtol: float = 1e-12) -> bool:
    """|mean - X*| <= max_i |X^i - mean|."""
    mean = e.positions.mean(axis=0)
    gap = np.linalg.norm(mean - g.consensus_point)
    spread = np.max(np.linalg.norm(e.positions - mean, axis=1))
    return bool(gap <= spread * (1 + rtol) + 1e-300)


def decay_margin(lam: float, h: float, sigma: float) -> float:
    """m(lambda, h, sigma) = 2 lambda - lambda^2 h - sigma^2."""
    return 2.0 * lam - lam ** 2 * h - sigma ** 2


def energy_bound(spread0: float, lam: float, sigma: float, t: float) -> float:
    """Mean-square distance to the consensus point is at most 2 exp(-(2 lambda - sigma^2) t) S0."""
    return 2.0 * np.exp(-(2.0 * lam - sigma ** 2) * t) * spread0


def initial_spread(positions: np.ndarray) -> float:
    """sum_l max_i (x^{i,l} - mean^l)^2 for one ensemble."""
    dev = positions - positions.mean(axis=-2, keepdims=True)
    return float(np.sum(np.max(dev ** 2, axis=-2), axis=-1))


@dataclass
class InitStats:
    """Monte Carlo statistics of uniform initial data."""
    log_gibbs_expectation: float
    log_gibbs_std_error: float
    spread_expectation: float
    spread_std_error: float
    draws: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def initial_data_statistics(
    p: Params,
    L: Objective,
    low,
    high,
    rng: RngStream,
    draws: int = 10_000
) -> InitStats:
    """
    Estimate log E exp(-beta L(X_in)) and sum_l E max_i (x0^{i,l} - mean0^l)^2
    for X_in uniform on the box [low, high].
    """
    if draws < 2:
        raise ValueError(f"draws must be >= 2, got {draws}")
    low = np.broadcast_to(np.asarray(low, dtype=np.float64), (p.dim,))
    high = np.broadcast_to(np.asarray(high, dtype=np.float64), (p.dim,))

    points = rng.uniform(low, high, (draws, p.dim))
    values = L.evaluate(points)
    log_expectation = gibbs_mass_log(values, p.beta)
    shifted = np.exp(-p.beta * (values - values.min()))
    relative_se = shifted.std(ddof=1) / (shifted.mean() * np.sqrt(draws))

    spreads = np.empty(draws)
    chunk = max(1, 2_000_000 // (p.n_particles * p.dim))
    for start in range(0, draws, chunk):
        size = min(chunk, draws - start)
        ensembles = rng.uniform(low, high, (size, p.n_particles, p.dim))
        dev = ensembles - ensembles.mean(axis=1, keepdims=True)
        spreads[start:start + size] = np.sum(np.max(dev ** 2, axis=1), axis=-1)

    return InitStats(
        log_gibbs_expectation=float(log_expectation),
        log_gibbs_std_error=float(relative_se),
        spread_expectation=float(spreads.mean()),
        spread_std_error=float(spreads.std(ddof=1) / np.sqrt(draws)),
        draws=draws,
    )


@dataclass
class ConvergenceFeasibility:
    verdict: str  # feasible | infeasible | unknown
    epsilon_max: Optional[float] = None
    log_lhs: Optional[float] = None
    log_rhs: Optional[float] = None
    notes: List[str] = field(default_factory=list)


@dataclass
class ConditionReport:
    effective_sigma: float
    lambda_positive: bool
    h_below_inverse_lambda: bool
    inverse_lambda_margin: float
    noise_below_drift: bool
    noise_drift_margin: float
    h_below_noise_bound: bool
    h_noise_bound: Optional[float]
    decay_margin: float
    convergence: ConvergenceFeasibility
    init_stats: Optional[InitStats] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = "conditions"
        return data

    def lines(self) -> List[str]:
        def mark(flag: bool) -> str:
            return "✅" if flag else "❌"

        out = [
            f"effective sigma            {self.effective_sigma:g}",
            f"{mark(self.lambda_positive)} lambda > 0",
            f"{mark(self.h_below_inverse_lambda)} h < 1/lambda              "
            f"margin {self.inverse_lambda_margin:.6g}",
            f"{mark(self.noise_below_drift)} 2 lambda > sigma^2         "
            f"margin {self.noise_drift_margin:.6g}",
        ]
        if self.h_noise_bound is None:
            out.append(f"{mark(False)} h < (2 lambda - sigma^2)/lambda  not applicable")
        else:
            out.append(f"{mark(self.h_below_noise_bound)} h < (2 lambda - sigma^2)/lambda  "
                       f"bound {self.h_noise_bound:.6g}")
        out.append(f"{mark(self.decay_margin > 0)} decay margin m = {self.decay_margin:.6g}")

        feas = self.convergence
        verdict = {"feasible": "✅", "infeasible": "❌"}.get(feas.verdict, "⚠️")
        line = f"{verdict} convergence-to-minimum condition: {feas.verdict}"
        if feas.epsilon_max is not None:
            line += f" (largest epsilon {feas.epsilon_max:.6g})"
        out.append(line)
        if feas.log_lhs is not None and feas.log_rhs is not None:
            out.append(f"   log E exp(-beta L) = {feas.log_lhs:.6g}, log right-hand side = {feas.log_rhs:.6g}")
        if self.init_stats is not None:
            s = self.init_stats
            out.append(f"   initial spread estimate {s.spread_expectation:.6g} "
                       f"+/- {s.spread_std_error:.2g} ({s.draws} draws)")
        for note in feas.notes:
            out.append(f"   ⚠️ {note}")
        return out


def _convergence_feasibility(p: Params, L: Objective, init_stats: Optional[InitStats]) -> ConvergenceFeasibility:
    sigma = p.effective_sigma
    notes = []
    if L.curvature_bound is None or L.known_min_value is None:
        return ConvergenceFeasibility("unknown", notes=["objective lacks curvature bound or known minimum"])
    if init_stats is None:
        return ConvergenceFeasibility("unknown", notes=["no initial-data statistics supplied"])
    if L.known_min_value <= 0:
        notes.append(f"minimum value {L.known_min_value:g} is not > 0 as the condition assumes")
    if 2.0 * p.lam <= sigma ** 2:
        notes.append("2 lambda > sigma^2 fails")
        return ConvergenceFeasibility("infeasible", log_lhs=init_stats.log_gibbs_expectation, notes=notes)

    log_lhs = init_stats.log_gibbs_expectation
    if L.curvature_bound == 0 or init_stats.spread_expectation == 0:
        return ConvergenceFeasibility("feasible", epsilon_max=1.0, log_lhs=log_lhs,
                                    log_rhs=float("-inf"), notes=notes)

    log_rhs = (
        log((2.0 * p.lam + sigma ** 2) / (2.0 * p.lam - sigma ** 2))
        + log(L.curvature_bound)
        + log(p.beta)
        - p.beta * L.known_min_value
        + log(init_stats.spread_expectation)
    )
    # (1 - eps) A >= K  <=>  eps <= 1 - K / A
    epsilon_max = 1.0 - float(np.exp(log_rhs - log_lhs))
    if epsilon_max <= 0:
        return ConvergenceFeasibility("infeasible", log_lhs=log_lhs, log_rhs=log_rhs, notes=notes)
    return ConvergenceFeasibility("feasible", epsilon_max=epsilon_max, log_lhs=log_lhs,
                                log_rhs=log_rhs, notes=notes)


def check_conditions(
    p: Params,
    L: Objective,
    init_stats: Optional[InitStats] = None
) -> ConditionReport:
    """Evaluate the consensus and convergence hypotheses for a parameter set."""
    sigma = p.effective_sigma
    noise_margin = 2.0 * p.lam - sigma ** 2
    h_bound = noise_margin / p.lam if noise_margin > 0 else None
    return ConditionReport(
        effective_sigma=sigma,
        lambda_positive=p.lam > 0,
        h_below_inverse_lambda=p.h < 1.0 / p.lam,
        inverse_lambda_margin=1.0 / p.lam - p.h,
        noise_below_drift=noise_margin > 0,
        noise_drift_margin=noise_margin,
        h_below_noise_bound=h_bound is not None and p.h < h_bound,
        h_noise_bound=h_bound,
        decay_margin=decay_margin(p.lam, p.h, sigma),
        convergence=_convergence_feasibility(p, L, init_stats),
        init_stats=init_stats,
    )
