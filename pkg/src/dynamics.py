"""
Ensemble time stepping and full runs with stopping criteria
"""

import time
from dataclasses import dataclass, field
from math import exp, sqrt
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import (
    CboError,
    Ensemble,
    GibbsSummary,
    NoiseMode,
    ObjectiveEvaluationError,
    Params,
    RngStream,
    Scheme,
    StepError,
    draw_step_noise,
)
from src.diagnostics import StepRecord, diameter, record
from src.gibbs import consensus_point_batch, gibbs_weights, summarize
from src.objectives import Objective


@dataclass(frozen=True)
class StopCriteria:
    max_steps: int
    diameter_tol: float = 0.0
    wall_limit: Optional[float] = None  # seconds

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.diameter_tol < 0:
            raise ValueError(f"diameter_tol must be >= 0, got {self.diameter_tol}")
        if self.wall_limit is not None and self.wall_limit <= 0:
            raise ValueError(f"wall_limit must be > 0, got {self.wall_limit}")


@dataclass
class Trajectory:
    records: List[StepRecord]
    final: Ensemble
    stop_reason: str  # diameter_tol | max_steps | wall_limit
    snapshots: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return self.final.step


def _evaluate(L: Objective, positions: np.ndarray, step: int) -> np.ndarray:
    values = L.evaluate(positions)
    finite = np.isfinite(values)
    if not np.all(finite):
        particle = int(np.argwhere(~finite)[0][-1])
        raise ObjectiveEvaluationError(step, particle, float(values[~finite][0]))
    return values


def _require_scheme(p: Params, scheme: Scheme) -> None:
    if p.scheme != scheme:
        raise ValueError(f"params are configured for scheme '{p.scheme.value}', not '{scheme.value}'")


def _shape_noise(noise: np.ndarray, p: Params) -> np.ndarray:
    # common noise (..., d) is shared across the particle axis
    if p.noise_mode == NoiseMode.COMMON:
        return noise[..., None, :]
    return noise


def _euler_kernel(x, cons, noise, p: Params):
    dev = x - cons[..., None, :]
    sigma = p.effective_sigma
    if noise is None or sigma == 0.0:
        return x - p.lam * p.h * dev
    return x - p.lam * p.h * dev + sigma * sqrt(p.h) * dev * _shape_noise(noise, p)


def _semi_exact_kernel(x, cons, noise, p: Params):
    c = cons[..., None, :]
    x_hat = c + (x - c) * exp(-p.lam * p.h)
    if noise is None or p.sigma == 0.0:
        return x_hat
    # the noise kick uses the step-n consensus point, not one recomputed at x_hat
    return x_hat + p.sigma * sqrt(p.h) * (x_hat - c) * _shape_noise(noise, p)


def _advance(e: Ensemble, g: GibbsSummary, p: Params, rng: Optional[RngStream]) -> Ensemble:
    cons = np.asarray(g.consensus_point)
    if p.scheme == Scheme.DETERMINISTIC:
        new = _euler_kernel(e.positions, cons, None, p)
    else:
        noise = draw_step_noise(rng, p)
        if p.scheme == Scheme.EULER:
            new = _euler_kernel(e.positions, cons, noise, p)
        else:
            new = _semi_exact_kernel(e.positions, cons, noise, p)
    return Ensemble(new, e.step + 1, p.h)


def _gibbs(e: Ensemble, p: Params, L: Objective) -> GibbsSummary:
    return summarize(e, _evaluate(L, e.positions, e.step), p.beta)


def step_euler(e: Ensemble, p: Params, L: Objective, rng: RngStream) -> Ensemble:
    """X_{n+1} = X_n - lambda h (X_n - X*_n) + sigma sqrt(h) sum_l (x^l_n - x*^l_n) Z^l_n e_l."""
    _require_scheme(p, Scheme.EULER)
    return _advance(e, _gibbs(e, p, L), p, rng)


def step_semi_exact(e: Ensemble, p: Params, L: Objective, rng: RngStream) -> Ensemble:
    """Exact exponential relaxation toward X*_n, then a componentwise multiplicative noise kick."""
    _require_scheme(p, Scheme.SEMI_EXACT)
    return _advance(e, _gibbs(e, p, L), p, rng)


def step_deterministic(e: Ensemble, p: Params, L: Objective) -> Ensemble:
    """Euler step with sigma = 0; draws no randomness."""
    _require_scheme(p, Scheme.DETERMINISTIC)
    return _advance(e, _gibbs(e, p, L), p, None)


def step(e: Ensemble, p: Params, L: Objective, rng: Optional[RngStream]) -> Ensemble:
    """Advance one step with the scheme configured in p."""
    return _advance(e, _gibbs(e, p, L), p, rng)


def step_batch(
    positions: np.ndarray,
    p: Params,
    L: Objective,
    noise: Optional[np.ndarray] = None,
    step_index: int = 0
) -> np.ndarray:
    """
    Advance B independent ensembles one step.

    positions has shape (B, N, d); noise has shape (B, d) in common mode or
    (B, N, d) in independent mode and is ignored by the deterministic scheme.
    """
    values = _evaluate(L, positions, step_index)
    weights = gibbs_weights(values, p.beta)
    cons = consensus_point_batch(positions, weights)
    if p.scheme == Scheme.DETERMINISTIC:
        return _euler_kernel(positions, cons, None, p)
    if noise is None:
        raise ValueError(f"scheme '{p.scheme.value}' needs a noise block")
    if p.scheme == Scheme.EULER:
        return _euler_kernel(positions, cons, noise, p)
    return _semi_exact_kernel(positions, cons, noise, p)


def init_uniform(p: Params, low, high, rng: RngStream) -> Ensemble:
    """N x d i.i.d. uniform coordinates in the box [low, high]; scalars broadcast."""
    low = np.broadcast_to(np.asarray(low, dtype=np.float64), (p.dim,))
    high = np.broadcast_to(np.asarray(high, dtype=np.float64), (p.dim,))
    if not np.all(low < high):
        raise ValueError(f"degenerate initialization box: low={low.tolist()}, high={high.tolist()}")
    return Ensemble(rng.uniform(low, high, (p.n_particles, p.dim)), 0, p.h)


def _snapshot_steps(times: Optional[Sequence[float]], h: float) -> Dict[int, float]:
    if not times:
        return {}
    return {int(round(t / h)): float(t) for t in times}


def run(
    init: Ensemble,
    p: Params,
    L: Objective,
    stop: StopCriteria,
    rng: Optional[RngStream],
    record_stride: int = 1,
    snapshot_times: Optional[Sequence[float]] = None
) -> Trajectory:
    """
    Iterate the configured scheme until a stop criterion fires.

    Objective values are computed once per step and shared by the weights,
    the Gibbs mass and the step record. The diameter criterion applies only
    to ensembles of two or more particles.
    """
    if init.positions.shape != (p.n_particles, p.dim):
        raise ValueError(
            f"initial ensemble has shape {init.positions.shape}, params expect "
            f"({p.n_particles}, {p.dim})"
        )
    if record_stride < 1:
        raise ValueError(f"record_stride must be >= 1, got {record_stride}")
    if p.scheme != Scheme.DETERMINISTIC and rng is None:
        raise ValueError(f"scheme '{p.scheme.value}' needs a random stream")

    snapshot_steps = _snapshot_steps(snapshot_times, p.h)
    records: List[StepRecord] = []
    snapshots: List[Tuple[float, np.ndarray]] = []
    started = time.perf_counter()
    e = init if init.h == p.h else Ensemble(init.positions, init.step, p.h)

    while True:
        try:
            g = _gibbs(e, p, L)
            current = None
            if e.step % record_stride == 0:
                current = record(e, g, L)
                records.append(current)
            if e.step in snapshot_steps:
                snapshots.append((snapshot_steps[e.step], np.array(e.positions)))

            spread = current.diameter if current is not None else diameter(e.positions)
            reason = None
            if p.n_particles > 1 and spread < stop.diameter_tol:
                reason = "diameter_tol"
            elif e.step - init.step >= stop.max_steps:
                reason = "max_steps"
            elif stop.wall_limit is not None and time.perf_counter() - started > stop.wall_limit:
                reason = "wall_limit"

            if reason is not None:
                if current is None:
                    records.append(record(e, g, L))
                break

            e = _advance(e, g, p, rng)
        except StepError:
            raise
        except CboError as err:
            raise StepError(e.step, err) from err

    return Trajectory(
        records=records,
        final=e,
        stop_reason=reason,
        snapshots=snapshots,
        wall_time=time.perf_counter() - started,
    )
