"""
Feedforward layers: fixed-activation baselines, learnable activations (LA)
and token-adaptive mixtures of activations (MoA) for the two FFN families.

Type-I layers compute ``h(W1 x) W2``; Type-II layers gate a second branch,
``(h1(W1 x) * h2(W2 x)) W3``. All candidate activations share the single
projection of each branch. Gates always read the raw token ``x``.

Matrices are stored in row-vector convention: ``W1`` has shape (d, D) and a
batch of tokens of shape (N, d) is multiplied on the left.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple
import logging
import math

import numpy as np

from .activations import (
    IDENTITY,
    RELU2,
    SIGMOID,
    SILU,
    TANH,
    ActivationDictionary,
    ActivationKind,
    kink_points,
    parse_dictionary,
)
from .base import (
    ConfigError,
    ContractError,
    DimensionError,
    Flavor,
    FlavorError,
    NumericError,
    RangeError,
)
from .tensor import Tensor, activation, grad_check, hadamard, mix, softmax

logger = logging.getLogger(__name__)

GATE_INIT_STD = 0.02

# Stable parameter names, in the order they are drawn at init and saved.
PARAM_ORDER = ("W1", "W2", "W3", "alpha", "beta", "U", "U_bias", "V", "V_bias")


class GateKind(Enum):
    """Gate nonlinearity applied to the logits ``u_k . x``."""

    SOFTMAX = "Softmax"
    SIGMOID = "Sigmoid"
    TANH = "Tanh"


class FFNVariant(Enum):
    """The ten feedforward variants."""

    BASELINE_I = "BaselineI"
    LA_I = "LA_I"
    MOA_I = "MoA_I"
    BASELINE_II = "BaselineII"
    ONE_LA = "OneLA"
    BI_LA = "BiLA"
    QD_LA = "QdLA"
    ONE_MOA = "OneMoA"
    BI_MOA = "BiMoA"
    QD_MOA = "QdMoA"

    @property
    def flavor(self) -> Flavor:
        if self in (FFNVariant.BASELINE_I, FFNVariant.LA_I, FFNVariant.MOA_I):
            return Flavor.TYPE_I
        return Flavor.TYPE_II

    @property
    def is_baseline(self) -> bool:
        return self in (FFNVariant.BASELINE_I, FFNVariant.BASELINE_II)

    @property
    def is_la(self) -> bool:
        return self in _LA_TO_MOA

    @property
    def is_moa(self) -> bool:
        return self in _LA_TO_MOA.values()

    @property
    def is_pairwise(self) -> bool:
        return self in (FFNVariant.QD_LA, FFNVariant.QD_MOA)


_LA_TO_MOA = {
    FFNVariant.LA_I: FFNVariant.MOA_I,
    FFNVariant.ONE_LA: FFNVariant.ONE_MOA,
    FFNVariant.BI_LA: FFNVariant.BI_MOA,
    FFNVariant.QD_LA: FFNVariant.QD_MOA,
}

_DEFAULT_DICTIONARY = {
    Flavor.TYPE_I: "gsr2lr",
    Flavor.TYPE_II: "gsr2ltr",
}


def default_hidden(d_model: int, flavor: Flavor) -> int:
    """4d for Type-I, floor(8d/3) for Type-II."""
    if flavor is Flavor.TYPE_I:
        return 4 * d_model
    return (8 * d_model) // 3


@dataclass
class FFNConfig:
    """Shape, variant and initialisation settings of one FFN layer."""

    d_model: int
    variant: FFNVariant = FFNVariant.BASELINE_II
    dictionary: Optional[ActivationDictionary] = None
    gate: GateKind = GateKind.SIGMOID
    hidden: Optional[int] = None
    seed: int = 0
    gate_bias: bool = False  # augmented-input gates, used by the LA -> MoA embedding
    baseline_activation: Optional[ActivationKind] = None
    init_std: float = 0.02

    def __post_init__(self) -> None:
        if isinstance(self.variant, str):
            self.variant = FFNVariant(self.variant)
        if isinstance(self.gate, str):
            self.gate = GateKind(self.gate)
        if self.d_model <= 0:
            raise ConfigError(f"d_model must be positive, got {self.d_model}", key="d_model")
        flavor = self.variant.flavor
        if self.hidden is None:
            self.hidden = default_hidden(self.d_model, flavor)
        if self.hidden <= 0:
            raise ConfigError(f"hidden must be positive, got {self.hidden}", key="hidden")
        if self.init_std <= 0:
            raise ConfigError("init_std must be positive", key="init_std")
        if self.baseline_activation is None:
            self.baseline_activation = RELU2 if flavor is Flavor.TYPE_I else SILU
        if self.dictionary is None:
            self.dictionary = parse_dictionary(_DEFAULT_DICTIONARY[flavor], flavor)
        elif self.dictionary.flavor is not flavor:
            raise FlavorError(
                f"dictionary '{self.dictionary.code}' is {self.dictionary.flavor.value}, "
                f"variant {self.variant.value} is {flavor.value}"
            )

    @property
    def flavor(self) -> Flavor:
        return self.variant.flavor

    @property
    def n_activations(self) -> int:
        return len(self.dictionary)

    @property
    def n_pairs(self) -> int:
        k = self.n_activations
        return k * (k + 1) // 2


@dataclass
class ParamBreakdown:
    """Exact parameter count of one FFN layer."""

    projection_params: int
    mixing_params: int
    gate_params: int

    @property
    def total(self) -> int:
        return self.projection_params + self.mixing_params + self.gate_params

    def as_dict(self) -> Dict[str, int]:
        return {
            "projection_params": self.projection_params,
            "mixing_params": self.mixing_params,
            "gate_params": self.gate_params,
            "total": self.total,
        }


def param_shapes(config: FFNConfig) -> Dict[str, Tuple[int, ...]]:
    """Shapes of every parameter tensor the variant owns, in PARAM_ORDER."""
    d, hidden, v = config.d_model, config.hidden, config.variant
    k, p = config.n_activations, config.n_pairs
    shapes: Dict[str, Tuple[int, ...]] = {"W1": (d, hidden)}
    if config.flavor is Flavor.TYPE_I:
        shapes["W2"] = (hidden, d)
    else:
        shapes["W2"] = (d, hidden)
        shapes["W3"] = (hidden, d)

    if v in (FFNVariant.LA_I, FFNVariant.ONE_LA, FFNVariant.BI_LA):
        shapes["alpha"] = (k,)
    if v is FFNVariant.BI_LA:
        shapes["beta"] = (k,)
    if v is FFNVariant.QD_LA:
        shapes["alpha"] = (p,)

    if v in (FFNVariant.MOA_I, FFNVariant.ONE_MOA, FFNVariant.BI_MOA, FFNVariant.QD_MOA):
        rows = p if v is FFNVariant.QD_MOA else k
        shapes["U"] = (rows, d)
        if config.gate_bias:
            shapes["U_bias"] = (rows,)
    if v is FFNVariant.BI_MOA:
        shapes["V"] = (k, d)
        if config.gate_bias:
            shapes["V_bias"] = (k,)
    return {name: shapes[name] for name in PARAM_ORDER if name in shapes}


def param_count(config: FFNConfig) -> ParamBreakdown:
    """Projection, mixing-coefficient and gate parameter counts."""
    projection = mixing = gates = 0
    for name, shape in param_shapes(config).items():
        size = int(np.prod(shape))
        if name.startswith("W"):
            projection += size
        elif name in ("alpha", "beta"):
            mixing += size
        else:
            gates += size
    return ParamBreakdown(projection, mixing, gates)


def match_hidden_to_budget(config: FFNConfig, target_params: int) -> FFNConfig:
    """Smallest hidden width >= config.hidden whose layer reaches ``target_params``."""
    base = param_count(config)
    per_unit = len([n for n in param_shapes(config) if n.startswith("W")]) * config.d_model
    needed = target_params - base.mixing_params - base.gate_params
    hidden = max(config.hidden, math.ceil(needed / per_unit))
    return replace(config, hidden=hidden)


class FFNLayer:
    """Parameters of one FFN variant plus its forward pass."""

    def __init__(self, config: FFNConfig, params: Dict[str, Tensor]):
        self.config = config
        expected = param_shapes(config)
        if set(params) != set(expected):
            raise ConfigError(
                f"{config.variant.value} expects parameters {sorted(expected)}, "
                f"got {sorted(params)}"
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise DimensionError(f"parameter {name}", [shape, params[name].shape])
        self.params = {name: params[name] for name in expected}

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self.params.items())

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    @classmethod
    def from_arrays(cls, config: FFNConfig, arrays: Dict[str, np.ndarray]) -> "FFNLayer":
        return cls(
            config,
            {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()},
        )

    def with_params(self, **overrides: Tensor) -> "FFNLayer":
        params = dict(self.params)
        params.update(overrides)
        return FFNLayer(self.config, params)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        out, _ = self._forward(x)
        if not np.all(np.isfinite(out.data)):
            raise NumericError("non-finite FFN output", where=self.config.variant.value)
        return out

    def _gate(self, x: Tensor, name: str) -> Tensor:
        logits = x @ self.params[name].T
        bias = self.params.get(f"{name}_bias")
        if bias is not None:
            logits = logits + bias
        if self.config.gate is GateKind.SOFTMAX:
            return softmax(logits)
        if self.config.gate is GateKind.SIGMOID:
            return activation(SIGMOID, logits)
        return activation(TANH, logits)

    def _forward(self, x: Tensor) -> Tuple[Tensor, Dict[str, Tensor]]:
        cfg = self.config
        if x.ndim != 2 or x.shape[1] != cfg.d_model:
            raise DimensionError("FFN input must be (batch, d_model)", [x.shape, (None, cfg.d_model)])
        v, p = cfg.variant, self.params
        kinds = list(cfg.dictionary)
        sigma = cfg.baseline_activation
        mixing: Dict[str, Tensor] = {}

        y = x @ p["W1"]
        if cfg.flavor is Flavor.TYPE_I:
            if v is FFNVariant.BASELINE_I:
                h = activation(sigma, y)
            else:
                weights = p["alpha"] if v is FFNVariant.LA_I else self._gate(x, "U")
                mixing["alpha" if v is FFNVariant.LA_I else "pi"] = weights
                h = mix(weights, [activation(kind, y) for kind in kinds])
            return h @ p["W2"], mixing

        z = x @ p["W2"]
        if v is FFNVariant.BASELINE_II:
            h = hadamard(activation(sigma, y), z)
        elif v in (FFNVariant.ONE_LA, FFNVariant.ONE_MOA):
            weights = p["alpha"] if v is FFNVariant.ONE_LA else self._gate(x, "U")
            mixing["alpha" if v is FFNVariant.ONE_LA else "pi"] = weights
            h = hadamard(activation(sigma, y), mix(weights, [activation(k, z) for k in kinds]))
        elif v in (FFNVariant.BI_LA, FFNVariant.BI_MOA):
            if v is FFNVariant.BI_LA:
                first, second = p["beta"], p["alpha"]
                mixing.update(beta=first, alpha=second)
            else:
                first, second = self._gate(x, "V"), self._gate(x, "U")
                mixing.update(rho=first, pi=second)
            h = hadamard(
                mix(first, [activation(k, y) for k in kinds]),
                mix(second, [activation(k, z) for k in kinds]),
            )
        else:
            weights = p["alpha"] if v is FFNVariant.QD_LA else self._gate(x, "U")
            mixing["alpha" if v is FFNVariant.QD_LA else "pi"] = weights
            ys = [activation(k, y) for k in kinds]
            zs = [activation(k, z) for k in kinds]
            h = mix(weights, [hadamard(ys[a], zs[b]) for a, b in cfg.dictionary.pairs()])
        return h @ p["W3"], mixing


def init(config: FFNConfig, rng: Optional[np.random.Generator] = None) -> FFNLayer:
    """
    Draw a fresh layer.

    W matrices come from N(0, init_std^2), gate rows from N(0, 0.02^2), gate
    biases start at zero and every mixing coefficient starts at 1.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.startswith("W"):
            value = rng.normal(0.0, config.init_std, size=shape)
        elif name in ("alpha", "beta"):
            value = np.ones(shape)
        elif name.endswith("_bias"):
            value = np.zeros(shape)
        else:
            value = rng.normal(0.0, GATE_INIT_STD, size=shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return FFNLayer(config, params)


def forward(layer: FFNLayer, x: Tensor) -> Tensor:
    return layer.forward(x)


def named_parameters(layer: FFNLayer) -> List[Tuple[str, Tensor]]:
    return layer.named_parameters()


def mixing_weights(layer: FFNLayer, x: Tensor) -> Dict[str, np.ndarray]:
    """Mixing coefficients seen by each token: alpha/beta for LA, pi/rho for MoA."""
    _, mixing = layer._forward(x)
    return {name: t.data.copy() for name, t in mixing.items()}


def embed_la_as_moa(la: FFNLayer, rho: float) -> FFNLayer:
    """
    Rewrite an LA layer as a constant-gate MoA layer with the same outputs.

    Gate rows are zero and the gate biases hold ``arctanh(rho * coef)`` so a
    tanh gate reproduces ``rho * coef``; the output matrix absorbs ``1/rho``
    once per gated branch.

    Raises:
        ContractError: The layer is not an LA variant
        RangeError: rho <= 0 or some |rho * coef| >= 1
    """
    cfg = la.config
    if not cfg.variant.is_la:
        raise ContractError(f"{cfg.variant.value} is not an LA variant")
    if not rho > 0:
        raise RangeError(f"rho must be positive, got {rho}")
    coefs = {name: la.params[name].data for name in ("alpha", "beta") if name in la.params}
    for name, values in coefs.items():
        worst = float(np.max(np.abs(rho * values))) if values.size else 0.0
        if worst >= 1.0:
            raise RangeError(f"|rho * {name}| reaches {worst:.6g}; arctanh needs < 1")

    target = replace(cfg, variant=_LA_TO_MOA[cfg.variant], gate=GateKind.TANH, gate_bias=True)
    arrays = {name: la.params[name].data.copy() for name in ("W1", "W2", "W3") if name in la.params}
    out_name = "W2" if cfg.flavor is Flavor.TYPE_I else "W3"
    gated_branches = 2 if cfg.variant is FFNVariant.BI_LA else 1
    arrays[out_name] = arrays[out_name] / rho**gated_branches

    arrays["U"] = np.zeros((coefs["alpha"].size, cfg.d_model))
    arrays["U_bias"] = np.arctanh(rho * coefs["alpha"])
    if "beta" in coefs:
        arrays["V"] = np.zeros((coefs["beta"].size, cfg.d_model))
        arrays["V_bias"] = np.arctanh(rho * coefs["beta"])
    logger.debug(f"Embedded {cfg.variant.value} as {target.variant.value} with rho={rho}")
    return FFNLayer.from_arrays(target, arrays)


def fixed_as_la(baseline: FFNLayer, dictionary: ActivationDictionary) -> FFNLayer:
    """
    Express a fixed-activation layer as an LA layer with one-hot coefficients.

    Type-I maps to LA_I with alpha one-hot at the baseline activation. Type-II
    maps to BiLA with beta one-hot at the baseline activation and alpha one-hot
    at Identity, so ``dictionary`` must contain both.
    """
    cfg = baseline.config
    if not cfg.variant.is_baseline:
        raise ContractError(f"{cfg.variant.value} is not a baseline variant")
    arrays = baseline.state_arrays()
    if cfg.flavor is Flavor.TYPE_I:
        target = replace(cfg, variant=FFNVariant.LA_I, dictionary=dictionary)
        arrays["alpha"] = _one_hot(len(dictionary), dictionary.index(cfg.baseline_activation))
    else:
        target = replace(cfg, variant=FFNVariant.BI_LA, dictionary=dictionary)
        arrays["beta"] = _one_hot(len(dictionary), dictionary.index(cfg.baseline_activation))
        arrays["alpha"] = _one_hot(len(dictionary), dictionary.index(IDENTITY))
    return FFNLayer.from_arrays(target, arrays)


def _one_hot(size: int, index: int) -> np.ndarray:
    out = np.zeros(size)
    out[index] = 1.0
    return out


def preactivation_margin(layer: FFNLayer, x: np.ndarray) -> float:
    """Smallest |pre-activation| over both projections, or inf without kinks."""
    kinds = list(layer.config.dictionary) + [layer.config.baseline_activation]
    if not any(kink_points(kind) for kind in kinds):
        return math.inf
    margin = float(np.min(np.abs(x @ layer.params["W1"].data)))
    if layer.config.flavor is Flavor.TYPE_II:
        margin = min(margin, float(np.min(np.abs(x @ layer.params["W2"].data))))
    return margin


@dataclass
class GradCheckResult:
    """Worst relative error per parameter group for one variant."""

    variant: FFNVariant
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def gradient_check(
    config: FFNConfig,
    points: int = 20,
    batch: int = 3,
    step: float = 1e-5,
    margin: float = 1e-3,
) -> GradCheckResult:
    """
    Finite-difference check of ``sum(forward(x))`` w.r.t. the input and every
    parameter group, at ``points`` random layers and inputs.

    Mixing coefficients are drawn around 1 instead of exactly 1 and inputs are
    redrawn until every pre-activation clears ``margin``.
    """
    rng = np.random.default_rng(config.seed)
    result = GradCheckResult(config.variant)
    for point in range(points):
        layer = init(replace(config, seed=config.seed + point), rng)
        for name in ("alpha", "beta", "U_bias", "V_bias"):
            if name in layer.params:
                shape = layer.params[name].shape
                layer.params[name].data = 1.0 + 0.5 * rng.standard_normal(shape)
        for _ in range(100):
            x = rng.standard_normal((batch, config.d_model))
            if preactivation_margin(layer, x) >= margin:
                break
        else:
            raise ContractError("could not draw an input away from activation kinks")

        def through_input(t: Tensor) -> Tensor:
            return layer.forward(t).sum()

        errors = {"x": grad_check(through_input, x, step)}
        for name, tensor in layer.named_parameters():

            def through_param(t: Tensor, name: str = name) -> Tensor:
                return layer.with_params(**{name: t}).forward(Tensor(x)).sum()

            errors[name] = grad_check(through_param, tensor.data, step)
        for name, error in errors.items():
            result.errors[name] = max(result.errors.get(name, 0.0), error)
    logger.debug(f"{config.variant.value}: max relative error {result.max_error:.3e}")
    return result
