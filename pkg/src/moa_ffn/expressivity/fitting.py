"""
Fitting theory networks to witness targets.

Each restart runs full-batch Adam on value MSE plus weighted gradient MSE
over a coarse grid, with parameters kept inside a box, then optionally
polishes with a bounded trust-region least-squares solve. The best restart
is re-measured on the fine evaluation grid.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy.optimize import least_squares

from ..activations import ActivationKind
from ..base import ConfigError, FitError
from ..optim import AdamWSettings, AdamWState, adamw_step, cosine_lr
from ..parallel import run_jobs
from ..tensor import Tensor, backward, hadamard, mul, sub, tensor_mean, tensor_sum, zero_grads
from .sobolev import GridSpec, SobolevEstimate, keep_mask, sobolev_distance
from .targets import ProfileTarget, WitnessTarget
from .theory import TheoryFamily, TheoryNetwork, param_shapes

logger = logging.getLogger(__name__)

Target = Union[WitnessTarget, ProfileTarget]


@dataclass
class FitBudget:
    """Optimisation protocol for one fit; echoed into report metadata."""

    restarts: int = 8
    steps: int = 5000
    lr: float = 1e-2
    grad_weight: float = 0.5
    points_1d: int = 201
    points_2d: int = 41
    param_bound: float = 20.0
    init_scale: float = 1.0
    polish: bool = True
    polish_evals: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        for key in ("restarts", "steps", "points_1d", "points_2d", "polish_evals"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"must be positive, got {getattr(self, key)}", key=f"fit.{key}")
        for key in ("lr", "param_bound", "init_scale"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, key)}", key=f"fit.{key}")
        if self.grad_weight < 0:
            raise ConfigError("grad_weight must be non-negative", key="fit.grad_weight")

    @classmethod
    def quick(cls, seed: int = 0) -> "FitBudget":
        return cls(restarts=2, steps=400, polish_evals=60, seed=seed)

    def echo(self) -> Dict[str, str]:
        return {f"fit.{k}": (repr(v) if isinstance(v, float) else str(v)) for k, v in asdict(self).items()}


@dataclass
class FitResult:
    """Best restart of a fit and its fine-grid residual."""

    network: TheoryNetwork
    residual: SobolevEstimate
    objective: float
    best_restart: int
    diverged: List[int] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)


@dataclass
class _FitData:
    points: np.ndarray
    values: np.ndarray
    grads: np.ndarray


def fit_points(target: Target, budget: FitBudget) -> _FitData:
    """Coarse training grid with kink neighbourhoods removed, plus target values."""
    n = budget.points_1d if target.dim == 1 else budget.points_2d
    grid = GridSpec(dim=target.dim, points_per_axis=n)
    points = grid.points()
    points = points[keep_mask(points, grid.kink_exclusion_radius, target)]
    values, grads = target.evaluate(points)
    return _FitData(points, values, grads)


def _init_params(
    family: TheoryFamily, dim: int, width: int, rng: np.random.Generator, scale: float
) -> Dict[str, np.ndarray]:
    return {
        name: rng.normal(0.0, scale, size=shape)
        for name, shape in param_shapes(family, dim, width).items()
    }


def _objective(
    network: TheoryNetwork, params: Dict[str, Tensor], data: _FitData, grad_weight: float
) -> Tensor:
    value, grad = network.forward_tensors(params, data.points)
    dv = sub(value, Tensor(data.values))
    dg = sub(grad, Tensor(data.grads))
    value_term = tensor_mean(hadamard(dv, dv))
    grad_term = tensor_mean(tensor_sum(hadamard(dg, dg), axis=1))
    return value_term + mul(grad_term, grad_weight)


def _residual_vector(
    network: TheoryNetwork, data: _FitData, grad_weight: float
) -> np.ndarray:
    value, grad = network.evaluate(data.points)
    n = len(data.points)
    return np.concatenate(
        [(value - data.values) / math.sqrt(n), math.sqrt(grad_weight / n) * (grad - data.grads).ravel()]
    )


def _flatten(params: Dict[str, np.ndarray], names: Sequence[str]) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name in names])


def _unflatten(
    flat: np.ndarray, names: Sequence[str], shapes: Dict[str, Tuple[int, ...]]
) -> Dict[str, np.ndarray]:
    out, offset = {}, 0
    for name in names:
        size = int(np.prod(shapes[name]))
        out[name] = flat[offset : offset + size].reshape(shapes[name])
        offset += size
    return out


@dataclass
class RestartJob:
    """Everything one worker needs to run a single restart."""

    target: Target
    family: TheoryFamily
    width: int
    kinds: Tuple[ActivationKind, ...]
    budget: FitBudget
    restart: int


def run_restart(job: RestartJob) -> Tuple[Optional[Dict[str, np.ndarray]], float]:
    """
    Adam descent plus optional least-squares polish for one seed.

    Returns:
        (parameters, objective); parameters are None when the restart diverged
    """
    budget, target = job.budget, job.target
    data = fit_points(target, budget)
    shapes = param_shapes(job.family, target.dim, job.width)
    names = list(shapes)
    rng = np.random.default_rng([budget.seed, job.restart])
    arrays = _init_params(job.family, target.dim, job.width, rng, budget.init_scale)
    network = TheoryNetwork(job.family, target.dim, arrays, job.kinds)

    tensors = [(name, Tensor(arrays[name], requires_grad=True, name=name)) for name in names]
    params = dict(tensors)
    settings = AdamWSettings(weight_decay=0.0, clip_norm=None)
    state = AdamWState()
    bound = budget.param_bound
    objective = math.inf
    for step in range(budget.steps):
        loss = _objective(network, params, data, budget.grad_weight)
        objective = loss.item()
        if not math.isfinite(objective):
            return None, math.inf
        zero_grads(params.values())
        backward(loss)
        grads = {name: t.grad for name, t in tensors if t.grad is not None}
        if any(not np.all(np.isfinite(g)) for g in grads.values()):
            return None, math.inf
        adamw_step(tensors, grads, state, cosine_lr(step, budget.steps, budget.lr), settings)
        for _, t in tensors:
            np.clip(t.data, -bound, bound, out=t.data)

    best = {name: t.data.copy() for name, t in tensors}
    network.params = best
    objective = float(np.sum(_residual_vector(network, data, budget.grad_weight) ** 2))
    if budget.polish:
        limit = bound * (1.0 - 1e-9)
        x0 = np.clip(_flatten(best, names), -limit, limit)

        def residuals(flat: np.ndarray) -> np.ndarray:
            network.params = _unflatten(flat, names, shapes)
            r = _residual_vector(network, data, budget.grad_weight)
            return np.where(np.isfinite(r), r, 1e6)

        solution = least_squares(
            residuals, x0, bounds=(-bound, bound), method="trf", max_nfev=budget.polish_evals
        )
        polished = float(np.sum(solution.fun**2))
        if math.isfinite(polished) and polished < objective:
            best, objective = _unflatten(solution.x.copy(), names, shapes), polished
    if not math.isfinite(objective):
        return None, math.inf
    return best, objective


class ClassFitter:
    """Fits one (target, family, width) cell over several restarts."""

    def __init__(
        self,
        budget: Optional[FitBudget] = None,
        grid: Optional[GridSpec] = None,
        jobs: int = 1,
    ):
        self.budget = budget or FitBudget()
        self.grid = grid or GridSpec()
        self.jobs = jobs
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def fit(
        self,
        target: Target,
        family: TheoryFamily,
        width: int,
        kinds: Tuple[ActivationKind, ...] = (),
    ) -> FitResult:
        """
        Best-of-restarts fit, measured with :func:`sobolev_distance`.

        Raises:
            FitError: Every restart diverged
        """
        restarts = [
            RestartJob(target, family, width, tuple(kinds), self.budget, r)
            for r in range(self.budget.restarts)
        ]
        outcomes = run_jobs(run_restart, restarts, workers=self.jobs)
        finite, diverged = [], []
        for r, outcome in enumerate(outcomes):
            if isinstance(outcome, BaseException) or outcome[0] is None:
                diverged.append(r)
            else:
                finite.append((outcome[1], r))
        if not finite:
            raise FitError(
                f"all {self.budget.restarts} restarts diverged fitting {family.value} "
                f"(width {width}) to {target.label}"
            )
        objective, best = min(finite)
        network = TheoryNetwork(family, target.dim, outcomes[best][0], tuple(kinds))
        residual = sobolev_distance(network, target, self.grid.with_dim(target.dim))
        if diverged:
            self.logger.warning(
                f"{len(diverged)} restart(s) diverged fitting {network.label} to {target.label}"
            )
        self.logger.info(
            f"Fitted {network.label} width {width} to {target.label}: "
            f"objective {objective:.3e}, residual {residual.total:.6f}"
        )
        metadata = {**self.budget.echo(), "fit.best_restart": str(best)}
        return FitResult(network, residual, objective, best, diverged, metadata)


def fit_class(
    target: Target,
    family: TheoryFamily,
    width: int,
    budget: Optional[FitBudget] = None,
    kinds: Tuple[ActivationKind, ...] = (),
    grid: Optional[GridSpec] = None,
    jobs: int = 1,
) -> FitResult:
    """Functional wrapper around :class:`ClassFitter`."""
    return ClassFitter(budget, grid, jobs).fit(target, family, width, kinds)
