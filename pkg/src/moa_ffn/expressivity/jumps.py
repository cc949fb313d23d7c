"""
Jumps of the x2-derivative across the hyperplane {x2 = 0} and the bounds
built on them.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple
import logging

import numpy as np

from ..base import ContractError, GeometryError, ProbeError
from .sobolev import Evaluable
from .targets import WitnessTag, WitnessTarget

logger = logging.getLogger(__name__)


@dataclass
class JumpProfile:
    """Estimated jump of the x2-derivative at each x1 sample."""

    x1_samples: np.ndarray
    jump_values: np.ndarray
    epsilon: float

    def __post_init__(self) -> None:
        self.x1_samples = np.asarray(self.x1_samples, dtype=np.float64)
        self.jump_values = np.asarray(self.jump_values, dtype=np.float64)
        if self.x1_samples.shape != self.jump_values.shape:
            raise ContractError("x1_samples and jump_values must have equal lengths")
        if not self.epsilon > 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def oscillation(self) -> float:
        return float(self.jump_values.max() - self.jump_values.min())

    def max_error(self, reference: np.ndarray) -> float:
        return float(np.max(np.abs(self.jump_values - np.asarray(reference))))


def jump_profile(f: Evaluable, x1_grid: Sequence[float], epsilon: float = 1e-3) -> JumpProfile:
    """
    Measure d/dx2 f(x1, +eps) - d/dx2 f(x1, -eps) at every x1 sample.

    Raises:
        ContractError: ``f`` is not two-dimensional
        ProbeError: A probe point sits on another kink of ``f``
    """
    if f.dim != 2:
        raise ContractError(f"jump profiles need a two-dimensional function, got dim={f.dim}")
    if not epsilon > 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    x1 = np.asarray(x1_grid, dtype=np.float64)
    upper = np.column_stack([x1, np.full_like(x1, epsilon)])
    lower = np.column_stack([x1, np.full_like(x1, -epsilon)])

    distance = getattr(f, "singular_distance", None)
    if distance is not None:
        clearance = np.minimum(distance(upper), distance(lower))
        close = clearance < 0.5 * epsilon
        if np.any(close):
            where = float(x1[int(np.argmax(close))])
            raise ProbeError(
                f"probe at x1={where:g} lies within {epsilon:g} of a kink; "
                f"use a smaller epsilon or move the sample"
            )
    _, grad_up = f.evaluate(upper)
    _, grad_down = f.evaluate(lower)
    return JumpProfile(x1, grad_up[:, 1] - grad_down[:, 1], epsilon)


@dataclass
class AdaptiveBound:
    """Gate oscillation along the ridge segment and the resulting quarter bound."""

    osc: float
    quarter_osc: float
    segment: Tuple[Tuple[float, float], Tuple[float, float]]


def ridge_segment(
    w: Sequence[float], b: float, half_width: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    End points of {x : w.x + b = 0} clipped to the square.

    Raises:
        ContractError: ``w`` is zero
        GeometryError: The line misses the square
    """
    w = np.asarray(w, dtype=np.float64)
    norm2 = float(w @ w)
    if norm2 == 0.0:
        raise ContractError("ridge direction w must be non-zero")
    base = -b * w / norm2
    direction = np.array([-w[1], w[0]])
    lo, hi = -np.inf, np.inf
    for i in range(2):
        if direction[i] == 0.0:
            if abs(base[i]) > half_width:
                raise GeometryError(f"ridge w={w.tolist()}, b={b} does not meet the domain")
            continue
        s1 = (-half_width - base[i]) / direction[i]
        s2 = (half_width - base[i]) / direction[i]
        lo, hi = max(lo, min(s1, s2)), min(hi, max(s1, s2))
    if lo > hi:
        raise GeometryError(f"ridge w={w.tolist()}, b={b} does not meet the domain")
    return base + lo * direction, base + hi * direction


def adaptive_ridge_bound(
    target: WitnessTarget, samples: int = 401, half_width: float = 1.0
) -> AdaptiveBound:
    """
    Oscillation of tanh(u.x + beta) along the ridge w.x + b = 0 inside the square.

    Any LA network has a constant jump amplitude along the ridge while the
    adaptive target's jump follows the gate, which gives the quarter bound.
    """
    if target.tag is not WitnessTag.ADAPTIVE_RIDGE:
        raise ContractError(f"expected an adaptive ridge target, got {target.label}")
    if target.dim != 2:
        raise ContractError("adaptive ridge bounds are computed in two dimensions")
    start, end = ridge_segment(target.w, target.b, half_width)
    s = np.linspace(0.0, 1.0, samples)[:, None]
    points = start + s * (end - start)
    gate = np.tanh(points @ np.asarray(target.u) + target.beta)
    osc = float(gate.max() - gate.min())
    return AdaptiveBound(osc, osc / 4.0, (tuple(start.tolist()), tuple(end.tolist())))


def step_function_floor(
    m: int, breakpoints: Optional[Sequence[float]] = None, points: int = 10001
) -> float:
    """
    Uniform error of the best step approximation of t -> 2t on [0, 1].

    With ``breakpoints`` omitted the m breakpoints are equally spaced, which
    attains the optimum 1/(m+1). On each piece the best constant is the
    midpoint of the range of 2t there.
    """
    if m < 0:
        raise ContractError(f"m must be non-negative, got {m}")
    if breakpoints is None:
        edges = np.linspace(0.0, 1.0, m + 2)
    else:
        inner = np.sort(np.clip(np.asarray(breakpoints, dtype=np.float64), 0.0, 1.0))
        if len(inner) > m:
            raise ContractError(f"at most {m} breakpoints allowed, got {len(inner)}")
        edges = np.concatenate([[0.0], inner, [1.0]])
    t = np.linspace(0.0, 1.0, points)
    piece = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(edges) - 2)
    level = edges[piece] + edges[piece + 1]
    return float(np.max(np.abs(2.0 * t - level)))


def quadratic_fit_residual(
    profile: JumpProfile, interval: Tuple[float, float] = (0.0, 1.0)
) -> float:
    """
    Max residual of the least-squares quadratic through the profile on (lo, hi].

    Profiles built from ReLU-type ridges are polynomial of degree at most two
    on the positive half-line; a clearly positive residual marks a
    non-polynomial jump.
    """
    lo, hi = interval
    sel = (profile.x1_samples > lo) & (profile.x1_samples <= hi)
    if int(sel.sum()) < 3:
        raise ContractError("need at least three samples in the fit interval")
    x, y = profile.x1_samples[sel], profile.jump_values[sel]
    coeffs = np.polyfit(x, y, 2)
    return float(np.max(np.abs(np.polyval(coeffs, x) - y)))
