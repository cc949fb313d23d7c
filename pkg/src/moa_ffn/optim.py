"""
AdamW with decoupled weight decay and global-norm clipping, plus the two
learning-rate schedules (cosine and warmup-stable-decay).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from .base import ContractError, NumericError
from .tensor import Tensor

if TYPE_CHECKING:
    from .train import TrainConfig

logger = logging.getLogger(__name__)

COSINE_FLOOR_RATIO = 1.0 / 20.0
WSD_STABLE_FRACTION = 0.8

# Parameter names (last dotted component) that never receive weight decay.
NO_DECAY = frozenset({"alpha", "beta", "U_bias", "V_bias"})


class Schedule(Enum):
    """Learning-rate schedule families."""

    COS = "cos"
    WSD = "wsd"


def wsd_decay_start(total_steps: int) -> int:
    return math.floor(WSD_STABLE_FRACTION * total_steps)


def cosine_lr(step: int, total_steps: int, max_lr: float, warmup_steps: int = 0) -> float:
    """Linear warmup, then cosine decay from max_lr to max_lr/20 at total_steps."""
    if step < warmup_steps:
        return max_lr * step / warmup_steps
    min_lr = max_lr * COSINE_FLOOR_RATIO
    if step >= total_steps:
        return min_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return max_lr - (max_lr - min_lr) * 0.5 * (1.0 - math.cos(math.pi * progress))


def wsd_lr(step: int, total_steps: int, max_lr: float, warmup_steps: int = 0) -> float:
    """Linear warmup, flat until floor(0.8 * total), then linear to zero."""
    if step < warmup_steps:
        return max_lr * step / warmup_steps
    start = wsd_decay_start(total_steps)
    if step <= start:
        return max_lr
    return max_lr * (total_steps - step) / (total_steps - start)


def lr_at(config: "TrainConfig", step: int) -> float:
    """
    Learning rate at ``step`` for the configured schedule.

    Raises:
        ContractError: step outside [0, total_steps]
    """
    if not 0 <= step <= config.total_steps:
        raise ContractError(f"step {step} outside [0, {config.total_steps}]")
    if config.schedule is Schedule.COS:
        return cosine_lr(step, config.total_steps, config.max_lr, config.warmup_steps)
    return wsd_lr(step, config.total_steps, config.max_lr, config.warmup_steps)


def applies_weight_decay(name: str) -> bool:
    """Mixing coefficients, gate biases and RMSNorm scales are not decayed."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf not in NO_DECAY and not leaf.endswith("norm")


@dataclass
class AdamWState:
    """First/second moments per parameter name and the shared step counter."""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class AdamWSettings:
    """Hyper-parameters read by :func:`adamw_step`."""

    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    clip_norm: Optional[float] = 1.0
    eps: float = 1e-8


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def adamw_step(
    params: Sequence[Tuple[str, Tensor]],
    grads: Dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    config: Union[AdamWSettings, "TrainConfig"],
) -> float:
    """
    Apply one AdamW update in place.

    Args:
        params: Named parameters to update
        grads: Gradient per parameter name (missing entries count as zero)
        state: Moment buffers, updated in place
        lr: Learning rate for this step
        config: Anything exposing beta1, beta2, weight_decay, clip_norm, eps

    Returns:
        Global gradient L2 norm before clipping

    Raises:
        NumericError: A gradient contains NaN or Inf (names the parameter)
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient", where=name)
    norm = global_norm(grads)
    clip = config.clip_norm
    scale = clip / norm if clip is not None and norm > clip else None

    state.step += 1
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for name, param in params:
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        elif scale is not None:
            grad = grad * scale
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * grad if m is None else b1 * m + (1.0 - b1) * grad
        v = (1.0 - b2) * grad * grad if v is None else b2 * v + (1.0 - b2) * grad * grad
        state.m[name], state.v[name] = m, v

        data = param.data
        if config.weight_decay and applies_weight_decay(name):
            data = data * (1.0 - lr * config.weight_decay)
        param.data = data - lr * (m / bias1) / (np.sqrt(v / bias2) + config.eps)
    return norm
