"""
Gibbs weights and the weighted consensus point
All sums are stabilized by shifting objective values by their minimum before exponentiation
"""

import numpy as np

from src.core import Ensemble, GibbsSummary, NonFiniteValueError


def _check_finite(values: np.ndarray) -> None:
    finite = np.isfinite(values)
    if not np.all(finite):
        bad = np.argwhere(~finite)[0]
        index = int(bad[-1])
        raise NonFiniteValueError(index, float(values[tuple(bad)]))


def _shifted_exponentials(values: np.ndarray, beta: float):
    """Return (exp(-beta * (L - min L)), min L) along the last axis."""
    values = np.asarray(values, dtype=np.float64)
    _check_finite(values)
    floor = values.min(axis=-1, keepdims=True)
    return np.exp(-beta * (values - floor)), floor


def gibbs_weights(values, beta: float) -> np.ndarray:
    """
    Normalized Boltzmann weights psi_k = exp(-beta L_k) / sum_j exp(-beta L_j).

    Accepts leading batch axes; the particle axis is the last one.
    """
    unnormalized, _ = _shifted_exponentials(values, beta)
    return unnormalized / unnormalized.sum(axis=-1, keepdims=True)


def _weighted_point(positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    point = np.einsum("...k,...kl->...l", weights, positions)
    # convex combination: keep it inside the per-component range despite roundoff
    return np.clip(point, positions.min(axis=-2), positions.max(axis=-2))


def consensus_point(ensemble: Ensemble, weights) -> np.ndarray:
    """X* = sum_k psi_k X^k for a single ensemble."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (ensemble.n_particles,):
        raise ValueError(
            f"weights have shape {weights.shape}, ensemble has {ensemble.n_particles} particles"
        )
    return _weighted_point(ensemble.positions, weights)


def consensus_point_batch(positions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Batched consensus points: positions (..., N, d), weights (..., N) -> (..., d)."""
    if positions.shape[:-1] != weights.shape:
        raise ValueError(
            f"weights have shape {weights.shape}, positions have shape {positions.shape}"
        )
    return _weighted_point(positions, weights)


def gibbs_mass_log(values, beta: float):
    """log of (1/N) sum_i exp(-beta L_i), computed with the same shift."""
    unnormalized, floor = _shifted_exponentials(values, beta)
    n = unnormalized.shape[-1]
    log_mass = -beta * floor[..., 0] + np.log(unnormalized.sum(axis=-1)) - np.log(n)
    if np.ndim(log_mass) == 0:
        return float(log_mass)
    return log_mass


def summarize(ensemble: Ensemble, values, beta: float) -> GibbsSummary:
    """Weights, consensus point and log Gibbs mass from one set of objective values."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (ensemble.n_particles,):
        raise ValueError(
            f"got {values.shape[0] if values.ndim else 0} objective values for "
            f"{ensemble.n_particles} particles"
        )
    weights = gibbs_weights(values, beta)
    return GibbsSummary(
        weights=weights,
        consensus_point=consensus_point(ensemble, weights),
        log_mass=gibbs_mass_log(values, beta),
    )
