"""
Grid estimates of the W^{1,inf} distance sup|f - g| + sup|grad f - grad g|.

Anything exposing ``dim`` and ``evaluate(points) -> (values, gradients)`` can
be compared: witness targets, theory networks, :class:`ZeroFunction`.
"""

from dataclasses import dataclass
from typing import Dict, Protocol, Tuple
import logging

import numpy as np

from ..base import ConfigError, DimensionError, NumericError
from .targets import ProfileTarget, WitnessTarget

logger = logging.getLogger(__name__)


class Evaluable(Protocol):
    dim: int

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...


@dataclass
class GridSpec:
    """Tensor grid on [-half_width, half_width]^dim."""

    dim: int = 2
    half_width: float = 1.0
    points_per_axis: int = 401
    kink_exclusion_factor: float = 1.5
    chunk_size: int = 32768

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ConfigError(f"grid dimension must be 1 or 2, got {self.dim}", key="grid.dim")
        if self.points_per_axis < 3:
            raise ConfigError("points_per_axis must be at least 3", key="grid.points_per_axis")
        if self.half_width <= 0:
            raise ConfigError("half_width must be positive", key="grid.half_width")
        if not 0.0 <= self.kink_exclusion_factor < self.points_per_axis:
            raise ConfigError(
                "kink exclusion must be narrower than the grid",
                key="grid.kink_exclusion_factor",
            )
        if self.chunk_size <= 0:
            raise ConfigError("chunk_size must be positive", key="grid.chunk_size")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def kink_exclusion_radius(self) -> float:
        return self.kink_exclusion_factor * self.spacing

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    def points(self) -> np.ndarray:
        axis = self.axis()
        if self.dim == 1:
            return axis[:, None]
        x1, x2 = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    def with_dim(self, dim: int) -> "GridSpec":
        return GridSpec(dim, self.half_width, self.points_per_axis, self.kink_exclusion_factor, self.chunk_size)

    def echo(self) -> Dict[str, str]:
        return {
            "grid.dim": str(self.dim),
            "grid.half_width": repr(self.half_width),
            "grid.points_per_axis": str(self.points_per_axis),
            "grid.kink_exclusion_factor": repr(self.kink_exclusion_factor),
        }


@dataclass
class SobolevEstimate:
    """Sup-norm gaps of values and gradients over the kept grid points."""

    sup_value_gap: float
    sup_gradient_gap: float
    grid: GridSpec
    points_used: int

    @property
    def total(self) -> float:
        return self.sup_value_gap + self.sup_gradient_gap


class ZeroFunction:
    """The constant zero function."""

    def __init__(self, dim: int):
        self.dim = dim
        self.label = "zero"

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        return np.zeros(len(points)), np.zeros_like(points)


def keep_mask(points: np.ndarray, radius: float, *functions: object) -> np.ndarray:
    """
    True where a point is at least ``radius`` away from the coordinate axes
    and from every singular set reported by the given functions.

    Only targets are asked for their singular sets; networks report them for
    jump probing, but their kinks stay inside the sup.
    """
    keep = np.all(np.abs(points) >= radius, axis=1)
    for fn in functions:
        if isinstance(fn, (WitnessTarget, ProfileTarget)):
            keep &= fn.singular_distance(points) >= radius
    return keep


def _check_finite(values: np.ndarray, grads: np.ndarray, points: np.ndarray, who: str) -> None:
    bad = ~np.isfinite(values) | ~np.all(np.isfinite(grads), axis=1)
    if np.any(bad):
        where = points[int(np.argmax(bad))]
        raise NumericError(f"{who} is not finite", where=f"grid point {where.tolist()}")


def sobolev_distance(f: Evaluable, g: Evaluable, grid: GridSpec) -> SobolevEstimate:
    """
    Estimate the W^{1,inf} distance between ``f`` and ``g`` on ``grid``.

    Points within the kink-exclusion radius of the axes (and of a target's
    own kink set) are skipped, so the estimate lower-bounds the true sup.

    Raises:
        DimensionError: ``f``, ``g`` and ``grid`` disagree on the dimension
        NumericError: An evaluation is NaN or Inf (names the grid point)
    """
    if not f.dim == g.dim == grid.dim:
        raise DimensionError("sobolev_distance: dimensions differ", [(f.dim,), (g.dim,), (grid.dim,)])
    points = grid.points()
    points = points[keep_mask(points, grid.kink_exclusion_radius, f, g)]
    value_gap, grad_gap = 0.0, 0.0
    for start in range(0, len(points), grid.chunk_size):
        chunk = points[start : start + grid.chunk_size]
        fv, fg = f.evaluate(chunk)
        gv, gg = g.evaluate(chunk)
        _check_finite(fv, fg, chunk, getattr(f, "label", "f"))
        _check_finite(gv, gg, chunk, getattr(g, "label", "g"))
        value_gap = max(value_gap, float(np.max(np.abs(fv - gv))))
        grad_gap = max(grad_gap, float(np.max(np.linalg.norm(fg - gg, axis=1))))
    return SobolevEstimate(value_gap, grad_gap, grid, len(points))
