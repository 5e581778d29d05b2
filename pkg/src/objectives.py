"""
Test objectives with metadata and a registry for selection by name
"""

from dataclasses import dataclass
from math import pi
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.core import ObjectiveRegistryError


@dataclass(frozen=True)
class Objective:
    """
    An objective L on R^d with optional metadata.

    fn is vectorized over the last axis: (..., d) -> (...).
    curvature_bound is C_L, the sup over x of the Hessian spectral norm and of |d^2 L / dx_l^2|.
    """
    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    known_min_point: Optional[np.ndarray] = None
    known_min_value: Optional[float] = None
    curvature_bound: Optional[float] = None

    def __post_init__(self):
        if self.curvature_bound is not None and self.curvature_bound < 0:
            raise ValueError(f"curvature_bound must be >= 0, got {self.curvature_bound}")
        if self.known_min_point is not None:
            point = np.array(self.known_min_point, dtype=np.float64)
            point.setflags(write=False)
            object.__setattr__(self, "known_min_point", point)

    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != self.dim:
            raise ValueError(f"{self.name} expects dimension {self.dim}, got {points.shape[-1]}")
        return self.fn(points)

    def __call__(self, x) -> float:
        return float(self.evaluate(x))

    def distance_to_minimizer(self, x) -> Optional[float]:
        if self.known_min_point is None:
            return None
        return float(np.linalg.norm(np.asarray(x, dtype=np.float64) - self.known_min_point))


def rastrigin(x, B: float = 0.0, C: float = 0.0):
    """
    Shifted Rastrigin function sum_i [(x_i - B)^2 - 10 cos(2 pi (x_i - B)) + 10] + C.

    Unique global minimizer (B, ..., B) with value C, surrounded by a regular
    lattice of local minima.
    """
    shifted = np.asarray(x, dtype=np.float64) - B
    return np.sum(shifted ** 2 - 10.0 * np.cos(2.0 * pi * shifted) + 10.0, axis=-1) + C


def sphere(x):
    """Sum of squares; the convex baseline."""
    x = np.asarray(x, dtype=np.float64)
    return np.sum(x ** 2, axis=-1)


RASTRIGIN_CURVATURE = 2.0 + 40.0 * pi ** 2


def _build_rastrigin(dim: int, params: Mapping[str, float]) -> Objective:
    B = float(params["B"])
    C = float(params["C"])
    return Objective(
        name="rastrigin",
        dim=dim,
        fn=lambda x: rastrigin(x, B, C),
        known_min_point=np.full(dim, B),
        known_min_value=C,
        # Hessian is diagonal with entries 2 + 40 pi^2 cos(2 pi (x_l - B))
        curvature_bound=RASTRIGIN_CURVATURE,
    )


def _build_sphere(dim: int, params: Mapping[str, float]) -> Objective:
    return Objective(
        name="sphere",
        dim=dim,
        fn=sphere,
        known_min_point=np.zeros(dim),
        known_min_value=0.0,
        curvature_bound=2.0,
    )


@dataclass(frozen=True)
class RegistryEntry:
    builder: Callable[[int, Mapping[str, float]], Objective]
    required_params: Tuple[str, ...]
    description: str


OBJECTIVE_REGISTRY: Dict[str, RegistryEntry] = {
    "rastrigin": RegistryEntry(
        builder=_build_rastrigin,
        required_params=("B", "C"),
        description="multimodal benchmark, minimizer (B,...,B), minimum C",
    ),
    "sphere": RegistryEntry(
        builder=_build_sphere,
        required_params=(),
        description="convex baseline, minimizer at the origin",
    ),
}


def registry_get(name: str, dim: int, params: Optional[Mapping[str, Any]] = None) -> Objective:
    """Construct a registered objective with its metadata populated."""
    params = dict(params or {})
    if name not in OBJECTIVE_REGISTRY:
        known = ", ".join(sorted(OBJECTIVE_REGISTRY))
        raise ObjectiveRegistryError(f"Unknown objective '{name}'. Registered: {known}")
    if dim < 1:
        raise ObjectiveRegistryError(f"Objective dimension must be >= 1, got {dim}")

    entry = OBJECTIVE_REGISTRY[name]
    missing = [key for key in entry.required_params if key not in params]
    if missing:
        raise ObjectiveRegistryError(
            f"Objective '{name}' requires parameter(s): {', '.join(missing)}"
        )

    try:
        typed = {key: float(params[key]) for key in entry.required_params}
    except (TypeError, ValueError) as e:
        raise ObjectiveRegistryError(f"Objective '{name}' parameter is not numeric: {e}")

    return entry.builder(dim, typed)


def registry_list() -> List[Tuple[str, Tuple[str, ...], str]]:
    """(name, required params, description) for every objective, alphabetically."""
    return [
        (name, OBJECTIVE_REGISTRY[name].required_params, OBJECTIVE_REGISTRY[name].description)
        for name in sorted(OBJECTIVE_REGISTRY)
    ]
