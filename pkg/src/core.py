"""
Core types for the consensus-based optimization engine
Parameters, particle ensembles, Gibbs summaries and the seeded random stream contract
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np


def tool_success(key: str, result: Any) -> Dict[str, Any]:
    """Convenience function to return a success result."""
    return {
        'status': 'success',
        key: result
    }


def tool_error(message: str) -> Dict[str, Any]:
    """Convenience function to return an error result."""
    return {
        'status': 'error',
        'error_message': message
    }


class CboError(Exception):
    """Base class for every error raised by the engine."""


class ParamsError(CboError, ValueError):
    """A model or scheme parameter is outside its domain."""


class NonFiniteValueError(CboError, ValueError):
    """An objective value handed to the Gibbs layer is NaN or infinite."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"Objective value at index {index} is not finite: {value}")


class ObjectiveEvaluationError(CboError):
    """The objective returned a non-finite value for a particle."""

    def __init__(self, step: int, particle: int, value: float):
        self.step = step
        self.particle = particle
        self.value = value
        super().__init__(
            f"Objective evaluation failed at step {step} for particle {particle}: got {value}"
        )


class ObjectiveRegistryError(CboError, KeyError):
    """Unknown objective name or missing objective parameters."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(CboError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        context = []
        if line is not None:
            context.append(f"line {line}")
        if key is not None:
            context.append(f"key '{key}'")
        prefix = f"[{', '.join(context)}] " if context else ""
        super().__init__(prefix + message)


class StepError(CboError):
    """A step of a run failed; carries the step index of the failure."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"Run failed at step {step}: {cause}")


class NoiseMode(str, Enum):
    COMMON = "common"
    INDEPENDENT = "independent"


class Scheme(str, Enum):
    EULER = "euler"
    SEMI_EXACT = "semi_exact"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class Params:
    """
    Model and scheme constants.

    lam is the drift rate lambda, sigma the noise intensity,
    beta the inverse temperature and h the time step.
    """
    lam: float
    sigma: float
    beta: float
    h: float
    n_particles: int
    dim: int
    noise_mode: NoiseMode = NoiseMode.COMMON
    scheme: Scheme = Scheme.EULER

    @property
    def effective_sigma(self) -> float:
        """Noise intensity actually applied; the deterministic scheme has none."""
        if self.scheme == Scheme.DETERMINISTIC:
            return 0.0
        return self.sigma


def validate_params(p: Params) -> Params:
    """Return p unchanged when every field-level invariant holds, else raise ParamsError."""
    if not np.isfinite(p.lam) or p.lam <= 0:
        raise ParamsError(f"lambda must be > 0, got {p.lam}")
    if not np.isfinite(p.beta) or p.beta <= 0:
        raise ParamsError(f"beta must be > 0, got {p.beta}")
    if not np.isfinite(p.h) or p.h <= 0:
        raise ParamsError(f"h must be > 0, got {p.h}")
    if not np.isfinite(p.sigma) or p.sigma < 0:
        raise ParamsError(f"sigma must be >= 0, got {p.sigma}")
    if p.n_particles < 1:
        raise ParamsError(f"n_particles must be >= 1, got {p.n_particles}")
    if p.dim < 1:
        raise ParamsError(f"dim must be >= 1, got {p.dim}")
    if not isinstance(p.noise_mode, NoiseMode):
        raise ParamsError(f"noise_mode must be one of {[m.value for m in NoiseMode]}")
    if not isinstance(p.scheme, Scheme):
        raise ParamsError(f"scheme must be one of {[s.value for s in Scheme]}")
    return p


@dataclass(frozen=True)
class Ensemble:
    """N x d particle positions at step n; time is always step * h."""
    positions: np.ndarray
    step: int = 0
    h: float = 1.0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64)
        if positions.ndim != 2:
            raise ValueError(f"positions must be an N x d array, got shape {positions.shape}")
        if not np.all(np.isfinite(positions)):
            bad = np.argwhere(~np.isfinite(positions))[0]
            raise ValueError(f"non-finite coordinate at particle {bad[0]}, component {bad[1]}")
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    @property
    def time(self) -> float:
        return self.step * self.h

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class GibbsSummary:
    weights: np.ndarray
    consensus_point: np.ndarray
    log_mass: float


_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, stream_index: int) -> int:
    """
    Derive a 64-bit stream seed from a master seed and a stream index.

    seed = splitmix64((master_seed + 0x9E3779B97F4A7C15 * (stream_index + 1)) mod 2^64)

    splitmix64 is a bijection on 64-bit words, so distinct indices under one
    master seed always give distinct stream seeds.
    """
    z = (int(master_seed) + _GOLDEN_GAMMA * (int(stream_index) + 1)) & _MASK64
    return _splitmix64(z)


@dataclass
class RngStream:
    """
    Seeded normal/uniform source for one run.

    Single owner: a stream is never shared between concurrent runs.
    """
    master_seed: int
    stream_index: int = 0
    algorithm: str = field(default="PCG64", init=False)
    seed: int = field(init=False)
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = mix_seed(self.master_seed, self.stream_index)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low, high, size) -> np.ndarray:
        return self.generator.uniform(low, high, size)


def draw_step_noise(rng: RngStream, p: Params) -> np.ndarray:
    """
    Draw one step's standard normals.

    Common mode: shape (d,), one value per dimension shared by all particles.
    Independent mode: shape (N, d), drawn particle-major then dimension.
    """
    if p.noise_mode == NoiseMode.COMMON:
        return rng.standard_normal(p.dim)
    return rng.standard_normal((p.n_particles, p.dim))


def draw_path_noise(rng: RngStream, p: Params, n_steps: int) -> np.ndarray:
    """n_steps consecutive step blocks; equals n_steps calls of draw_step_noise."""
    if p.noise_mode == NoiseMode.COMMON:
        return rng.standard_normal((n_steps, p.dim))
    return rng.standard_normal((n_steps, p.n_particles, p.dim))
