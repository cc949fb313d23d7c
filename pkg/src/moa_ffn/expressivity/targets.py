"""
Closed-form witness functions on the square [-1, 1]^d.

Each target returns exact values and classical gradients; on its singular
set (a kink hyperplane) the gradient uses right-hand derivatives and the
point is flagged by :func:`eval_target`.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple
import logging
import math

import numpy as np

from ..activations import RELU, deriv_array, eval_array
from ..base import ConfigError, DimensionError

logger = logging.getLogger(__name__)


class WitnessTag(Enum):
    """Witness functions separating the fixed, LA and MoA classes."""

    TLA_I = "TLA_I"
    TMOA_I = "TMoA_I"
    TLA_II = "TLA_II"
    TMOA_II = "TMoA_II"
    ADAPTIVE_RIDGE = "AdaptiveRidge"


_LAMBDA_TAGS = (WitnessTag.TMOA_I, WitnessTag.TMOA_II)


def _relu(t: np.ndarray) -> np.ndarray:
    return eval_array(RELU, t)


def _step(t: np.ndarray) -> np.ndarray:
    return deriv_array(RELU, t)


def _sech2(t: np.ndarray) -> np.ndarray:
    return 1.0 - np.tanh(t) ** 2


def _as_points(points: np.ndarray, dim: int) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1 and dim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[1] != dim:
        raise DimensionError(f"expected points of shape (N, {dim})", [points.shape])
    return points


@dataclass(frozen=True)
class WitnessTarget:
    """
    One of the witness functions.

    Attributes:
        tag: Which witness
        lam: Gate sharpness (TMoA_I, TMoA_II)
        u, beta: Gate ridge of the adaptive target, tanh(u.x + beta)
        w, b: ReLU ridge of the adaptive target, (w.x + b)_+
    """

    tag: WitnessTag
    lam: float = 1.0
    u: Tuple[float, ...] = (1.0, 0.0)
    beta: float = 0.0
    w: Tuple[float, ...] = (0.0, 1.0)
    b: float = 0.0

    def __post_init__(self) -> None:
        if isinstance(self.tag, str):
            object.__setattr__(self, "tag", WitnessTag(self.tag))
        if self.tag in _LAMBDA_TAGS and not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}", key="lam")
        if self.tag is WitnessTag.ADAPTIVE_RIDGE:
            values = tuple(self.u) + tuple(self.w) + (self.beta, self.b)
            if not all(math.isfinite(v) for v in values):
                raise ConfigError("adaptive ridge parameters must be finite", key="u")
            if len(self.u) != len(self.w):
                raise ConfigError("u and w must have the same length", key="w")

    @property
    def dim(self) -> int:
        if self.tag is WitnessTag.TLA_I:
            return 1
        if self.tag is WitnessTag.ADAPTIVE_RIDGE:
            return len(self.w)
        return 2

    @property
    def label(self) -> str:
        if self.tag in _LAMBDA_TAGS:
            return f"{self.tag.value}(lam={self.lam:g})"
        if self.tag is WitnessTag.ADAPTIVE_RIDGE:
            return f"AdaptiveRidge(u={list(self.u)},beta={self.beta:g},w={list(self.w)},b={self.b:g})"
        return self.tag.value

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values (N,) and gradients (N, dim) at ``points`` of shape (N, dim)."""
        x = _as_points(points, self.dim)
        tag = self.tag
        if tag is WitnessTag.TLA_I:
            t = x[:, 0]
            value = _relu(t) + _relu(t) ** 2
            grad = (_step(t) * (1.0 + 2.0 * _relu(t)))[:, None]
            return value, grad
        if tag is WitnessTag.ADAPTIVE_RIDGE:
            u, w = np.asarray(self.u), np.asarray(self.w)
            gate_pre = x @ u + self.beta
            ridge = x @ w + self.b
            gate = np.tanh(gate_pre)
            value = gate * _relu(ridge)
            grad = (_sech2(gate_pre) * _relu(ridge))[:, None] * u + (gate * _step(ridge))[:, None] * w
            return value, grad

        x1, x2 = x[:, 0], x[:, 1]
        r1, r2 = _relu(x1), _relu(x2)
        h1, h2 = _step(x1), _step(x2)
        if tag is WitnessTag.TMOA_I:
            lam = self.lam
            gate = np.tanh(lam * x1)
            value = gate * r2
            grad = np.stack([lam * _sech2(lam * x1) * r2, gate * h2], axis=1)
        elif tag is WitnessTag.TLA_II:
            profile = r1 + np.tanh(x1)
            value = r2 * profile
            grad = np.stack([r2 * (h1 + _sech2(x1)), h2 * profile], axis=1)
        else:
            lam = self.lam
            gate = np.tanh(lam * x1)
            profile = r1 * gate
            value = r2 * profile
            dprofile = h1 * gate + r1 * lam * _sech2(lam * x1)
            grad = np.stack([r2 * dprofile, h2 * profile], axis=1)
        return value, grad

    def singular_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest kink hyperplane of the target."""
        x = _as_points(points, self.dim)
        if self.tag is WitnessTag.TLA_I:
            return np.abs(x[:, 0])
        if self.tag in _LAMBDA_TAGS:
            return np.abs(x[:, 1])
        if self.tag is WitnessTag.ADAPTIVE_RIDGE:
            w = np.asarray(self.w)
            norm = float(np.linalg.norm(w))
            if norm == 0.0:
                return np.full(len(x), np.inf)
            return np.abs(x @ w + self.b) / norm
        return np.minimum(np.abs(x[:, 0]), np.abs(x[:, 1]))


class ProfileTag(Enum):
    """One-dimensional jump profiles of the Type-II witnesses."""

    A = "A"
    B = "B"


@dataclass(frozen=True)
class ProfileTarget:
    """
    A(t) = t_+ + tanh(t), the jump profile of TLA_II across {x2 = 0}, or
    B(t) = t_+ tanh(lam t), the jump profile of TMoA_II.
    """

    tag: ProfileTag
    lam: float = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.tag, str):
            object.__setattr__(self, "tag", ProfileTag(self.tag))
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}", key="lam")

    @property
    def dim(self) -> int:
        return 1

    @property
    def label(self) -> str:
        return "A" if self.tag is ProfileTag.A else f"B(lam={self.lam:g})"

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        t = _as_points(points, 1)[:, 0]
        if self.tag is ProfileTag.A:
            return _relu(t) + np.tanh(t), (_step(t) + _sech2(t))[:, None]
        gate = np.tanh(self.lam * t)
        value = _relu(t) * gate
        return value, (_step(t) * gate + _relu(t) * self.lam * _sech2(self.lam * t))[:, None]

    def singular_distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(_as_points(points, 1)[:, 0])


@dataclass
class TargetEvaluation:
    value: float
    gradient: Optional[np.ndarray]
    on_kink: bool


def eval_target(target: WitnessTarget, x: np.ndarray) -> TargetEvaluation:
    """
    Exact value at a single point, with its gradient where it exists.

    Points on the target's kink set come back with ``gradient=None`` and
    ``on_kink=True``.
    """
    point = np.asarray(x, dtype=np.float64).reshape(1, -1)
    values, grads = target.evaluate(point)
    on_kink = bool(target.singular_distance(point)[0] == 0.0)
    return TargetEvaluation(
        value=float(values[0]),
        gradient=None if on_kink else grads[0],
        on_kink=on_kink,
    )


def theorem_targets(lams: Tuple[float, ...] = (1.0, 2.0, 3.0)) -> Tuple[WitnessTarget, ...]:
    """The four width-one witnesses, the gated ones at every ``lam``."""
    targets = [WitnessTarget(WitnessTag.TLA_I), WitnessTarget(WitnessTag.TLA_II)]
    for lam in lams:
        targets.append(WitnessTarget(WitnessTag.TMOA_I, lam=lam))
        targets.append(WitnessTarget(WitnessTag.TMOA_II, lam=lam))
    return tuple(targets)
