"""
Width-m two-layer networks on the augmented input (x, 1).

A :class:`TheoryNetwork` covers the fixed-activation, LA and MoA classes of
both flavours plus the one-dimensional ridge classes used for jump profiles.
Every forward pass returns the network value together with its analytic
input-gradient, built from tensor ops so that fitting can differentiate the
gradient term with respect to the weights.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from ..activations import (
    RELU,
    RELU2,
    TANH,
    THEORY_DICTIONARY_I,
    THEORY_DICTIONARY_II,
    ActivationKind,
    ActivationTag,
    has_derivative_jump,
)
from ..base import ConfigError, DimensionError, RangeError, UnsupportedError
from ..tensor import (
    Tensor,
    activation,
    getitem,
    hadamard,
    mix,
    mul,
    reshape,
    stack,
    transpose,
)
from .targets import ProfileTarget, WitnessTag, WitnessTarget

logger = logging.getLogger(__name__)


class TheoryFamily(Enum):
    """Function classes over which witnesses are fitted."""

    FIXED_I = "FixedI"
    LA_I = "LA_I"
    MOA_I = "MoA_I"
    FIXED_II = "FixedII"
    QDLA_II = "QdLA_II"
    QDMOA_II = "QdMoA_II"
    RIDGE_1D = "Ridge1D"
    DICT_RIDGE_1D = "DictRidge1D"

    @property
    def is_type_two(self) -> bool:
        return self in (TheoryFamily.FIXED_II, TheoryFamily.QDLA_II, TheoryFamily.QDMOA_II)

    @property
    def is_one_dimensional(self) -> bool:
        return self in (TheoryFamily.RIDGE_1D, TheoryFamily.DICT_RIDGE_1D)


_TYPE_II_PAIRS = THEORY_DICTIONARY_II.pairs()


def _pair_index(p: ActivationKind, q: ActivationKind) -> int:
    return _TYPE_II_PAIRS.index(
        (THEORY_DICTIONARY_II.index(p), THEORY_DICTIONARY_II.index(q))
    )


def param_shapes(
    family: TheoryFamily, dim: int, width: int
) -> Dict[str, Tuple[int, ...]]:
    """Parameter shapes of a family at input dimension ``dim`` and width ``width``."""
    aug = dim + 1
    k_one, n_pairs = len(THEORY_DICTIONARY_I), len(_TYPE_II_PAIRS)
    shapes: Dict[str, Tuple[int, ...]] = {"a": (width,), "W": (width, aug)}
    if family is TheoryFamily.LA_I:
        shapes["alpha"] = (k_one,)
    elif family is TheoryFamily.MOA_I:
        shapes["U"] = (k_one, aug)
    elif family is TheoryFamily.FIXED_II:
        shapes["U"] = (width, aug)
    elif family is TheoryFamily.QDLA_II:
        shapes["U"] = (width, aug)
        shapes["alpha"] = (n_pairs,)
    elif family is TheoryFamily.QDMOA_II:
        shapes["U"] = (width, aug)
        shapes["V"] = (n_pairs, aug)
    elif family is TheoryFamily.DICT_RIDGE_1D:
        shapes = {"B": (width, len(THEORY_DICTIONARY_II)), "W": (width, aug)}
    return shapes


@dataclass
class _Branch:
    value: Tensor
    slopes: Tuple[Tensor, ...]


@dataclass
class TheoryNetwork:
    """
    A network in one of the theory classes.

    Attributes:
        family: Function class
        dim: Input dimension (1 for the ridge classes)
        params: Weights by name; ridge rows act on the augmented input
        kinds: Fixed activation(s) for FixedI/Ridge1D (one) and FixedII (two);
            empty for dictionary families
        coded_as: Activation substitutions applied at evaluation, used to
            inject faults into otherwise exact constructions
    """

    family: TheoryFamily
    dim: int
    params: Dict[str, np.ndarray]
    kinds: Tuple[ActivationKind, ...] = ()
    coded_as: Dict[ActivationTag, ActivationKind] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if isinstance(self.family, str):
            self.family = TheoryFamily(self.family)
        if self.family.is_one_dimensional and self.dim != 1:
            raise ConfigError(f"{self.family.value} is one-dimensional, got dim={self.dim}")
        needed = {TheoryFamily.FIXED_I: 1, TheoryFamily.RIDGE_1D: 1, TheoryFamily.FIXED_II: 2}
        if len(self.kinds) != needed.get(self.family, 0):
            raise ConfigError(
                f"{self.family.value} needs {needed.get(self.family, 0)} fixed activation(s), "
                f"got {len(self.kinds)}"
            )
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in self.params.items()}
        lead = "B" if self.family is TheoryFamily.DICT_RIDGE_1D else "a"
        if lead not in self.params or self.params[lead].ndim < 1:
            raise ConfigError(f"{self.family.value} needs parameter '{lead}'")
        expected = param_shapes(self.family, self.dim, self.params[lead].shape[0])
        if set(expected) != set(self.params):
            raise ConfigError(
                f"{self.family.value} expects parameters {sorted(expected)}, got {sorted(self.params)}"
            )
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise DimensionError(
                    f"{self.family.value} parameter {name}", [self.params[name].shape, shape]
                )

    @property
    def width(self) -> int:
        lead = "B" if self.family is TheoryFamily.DICT_RIDGE_1D else "a"
        return self.params[lead].shape[0]

    @property
    def label(self) -> str:
        if self.kinds:
            return f"{self.family.value}({','.join(k.name for k in self.kinds)})"
        return self.family.value

    def _kinked_rows(self) -> List[np.ndarray]:
        W = self.params["W"]
        if self.family in (TheoryFamily.FIXED_I, TheoryFamily.RIDGE_1D):
            return list(W) if has_derivative_jump(self.kinds[0]) else []
        if self.family is TheoryFamily.FIXED_II:
            p, q = self.kinds
            return (list(W) if has_derivative_jump(p) else []) + (
                list(self.params["U"]) if has_derivative_jump(q) else []
            )
        rows = list(W)
        if self.family.is_type_two:
            rows.extend(self.params["U"])
        return rows

    def singular_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the nearest ridge hyperplane carrying a derivative jump."""
        x = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        dist = np.full(len(x), np.inf)
        for row in self._kinked_rows():
            norm = float(np.linalg.norm(row[:-1]))
            if norm > 0.0:
                dist = np.minimum(dist, np.abs(x @ row[:-1] + row[-1]) / norm)
        return dist

    def _act(self, kind: ActivationKind, z: Tensor, order: int = 0) -> Tensor:
        return activation(self.coded_as.get(kind.tag, kind), z, order)

    def evaluate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Values (N,) and input-gradients (N, dim) without recording a tape."""
        tensors = {name: Tensor(value) for name, value in self.params.items()}
        value, grad = self.forward_tensors(tensors, points)
        return value.data, grad.data

    def forward_tensors(
        self, params: Dict[str, Tensor], points: np.ndarray
    ) -> Tuple[Tensor, Tensor]:
        """
        Value and input-gradient as tensors, differentiable in ``params``.

        Args:
            params: One tensor per parameter name, same shapes as ``self.params``
            points: Inputs of shape (N, dim)

        Returns:
            (value of shape (N,), gradient of shape (N, dim))
        """
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 1 and self.dim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"expected points of shape (N, {self.dim})", [x.shape])
        n, d = x.shape
        xbar = Tensor(np.hstack([x, np.ones((n, 1))]))
        cols = (slice(None), slice(0, d))

        family = self.family
        W = params["W"]
        Z = xbar @ transpose(W)
        Wx = getitem(W, cols)

        if family is TheoryFamily.DICT_RIDGE_1D:
            return self._dictionary_ridge(params["B"], Z, Wx, n)

        if family in (TheoryFamily.FIXED_I, TheoryFamily.RIDGE_1D):
            sigma = self.kinds[0]
            branch = _Branch(self._act(sigma, Z), (self._act(sigma, Z, 1),))
            return _assemble(params["a"], [Wx], [branch], n)

        if family in (TheoryFamily.LA_I, TheoryFamily.MOA_I):
            branches = [
                _Branch(self._act(kind, Z), (self._act(kind, Z, 1),))
                for kind in THEORY_DICTIONARY_I
            ]
            if family is TheoryFamily.LA_I:
                return _assemble(params["a"], [Wx], branches, n, weights=params["alpha"])
            return _assemble(
                params["a"], [Wx], branches, n, gate=(xbar @ transpose(params["U"]), getitem(params["U"], cols))
            )

        U = params["U"]
        Y = xbar @ transpose(U)
        Ux = getitem(U, cols)
        if family is TheoryFamily.FIXED_II:
            branches = [self._pair_branch(self.kinds[0], self.kinds[1], Z, Y, {}, {})]
            return _assemble(params["a"], [Wx, Ux], branches, n)

        cache_z: Dict[ActivationTag, Tuple[Tensor, Tensor]] = {}
        cache_y: Dict[ActivationTag, Tuple[Tensor, Tensor]] = {}
        branches = [
            self._pair_branch(
                THEORY_DICTIONARY_II[p], THEORY_DICTIONARY_II[q], Z, Y, cache_z, cache_y
            )
            for p, q in _TYPE_II_PAIRS
        ]
        if family is TheoryFamily.QDLA_II:
            return _assemble(params["a"], [Wx, Ux], branches, n, weights=params["alpha"])
        V = params["V"]
        return _assemble(
            params["a"], [Wx, Ux], branches, n, gate=(xbar @ transpose(V), getitem(V, cols))
        )

    def _pair_branch(
        self,
        p: ActivationKind,
        q: ActivationKind,
        Z: Tensor,
        Y: Tensor,
        cache_z: Dict[ActivationTag, Tuple[Tensor, Tensor]],
        cache_y: Dict[ActivationTag, Tuple[Tensor, Tensor]],
    ) -> _Branch:
        def pieces(kind: ActivationKind, pre: Tensor, cache: Dict) -> Tuple[Tensor, Tensor]:
            key = kind.tag
            if key not in cache:
                cache[key] = (self._act(kind, pre), self._act(kind, pre, 1))
            return cache[key]

        sp, dsp = pieces(p, Z, cache_z)
        sq, dsq = pieces(q, Y, cache_y)
        return _Branch(hadamard(sp, sq), (hadamard(dsp, sq), hadamard(sp, dsq)))

    def _dictionary_ridge(
        self, B: Tensor, Z: Tensor, Wx: Tensor, n: int
    ) -> Tuple[Tensor, Tensor]:
        slope = reshape(Wx, (Wx.shape[0],))
        value, grad = None, None
        for c, kind in enumerate(THEORY_DICTIONARY_II):
            coeff = getitem(B, (slice(None), slice(c, c + 1)))
            v = self._act(kind, Z) @ coeff
            g = mul(self._act(kind, Z, 1), slope) @ coeff
            value = v if value is None else value + v
            grad = g if grad is None else grad + g
        return reshape(value, (n,)), grad


def _assemble(
    a: Tensor,
    ridge_cols: Sequence[Tensor],
    branches: Sequence[_Branch],
    n: int,
    weights: Optional[Tensor] = None,
    gate: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Combine activation branches into sum_k a_k sum_c g_c(x) branch_c(x; k).

    ``weights`` are constant coefficients, ``gate`` is (pre-activation (N, C),
    input columns (C, d)) of tanh gates; with neither there must be exactly one
    branch with unit weight.
    """
    a_col = reshape(a, (a.shape[0], 1))
    if gate is not None:
        pre, gate_cols = gate
        mixing = activation(TANH, pre)
    else:
        mixing = weights

    if mixing is None:
        inner = branches[0].value
        slopes = list(branches[0].slopes)
    else:
        inner = mix(mixing, [b.value for b in branches])
        slopes = [mix(mixing, [b.slopes[i] for b in branches]) for i in range(len(ridge_cols))]

    value = reshape(inner @ a_col, (n,))
    grad = None
    for slope, cols in zip(slopes, ridge_cols):
        term = mul(slope, a) @ cols
        grad = term if grad is None else grad + term
    if gate is not None:
        per_branch = stack([reshape(b.value @ a_col, (n,)) for b in branches], axis=-1)
        grad = grad + hadamard(activation(TANH, pre, 1), per_branch) @ gate_cols
    return value, grad


# --------------------------------------------------------------------------
# constructions
# --------------------------------------------------------------------------


def _one_hot(size: int, index: int) -> np.ndarray:
    vec = np.zeros(size)
    vec[index] = 1.0
    return vec


def exact_construct(
    target: Union[WitnessTarget, ProfileTarget],
    coded_as: Optional[Dict[ActivationTag, ActivationKind]] = None,
) -> TheoryNetwork:
    """
    Width-one network in the smallest class that represents ``target`` exactly.

    Raises:
        UnsupportedError: The target has no width-one construction here (jump
            profiles, adaptive ridges outside two dimensions)
    """
    coded_as = dict(coded_as or {})
    if not isinstance(target, WitnessTarget):
        raise UnsupportedError(f"no exact width-one construction for {target.label}")
    k_one = len(THEORY_DICTIONARY_I)
    relu_i = THEORY_DICTIONARY_I.index(RELU)
    tag = target.tag

    if tag is WitnessTag.TLA_I:
        alpha = _one_hot(k_one, relu_i) + _one_hot(k_one, THEORY_DICTIONARY_I.index(RELU2))
        params = {"a": np.ones(1), "W": np.array([[1.0, 0.0]]), "alpha": alpha}
        return TheoryNetwork(TheoryFamily.LA_I, 1, params, coded_as=coded_as)

    if tag is WitnessTag.TMOA_I:
        U = np.zeros((k_one, 3))
        U[relu_i] = (target.lam, 0.0, 0.0)
        params = {"a": np.ones(1), "W": np.array([[0.0, 1.0, 0.0]]), "U": U}
        return TheoryNetwork(TheoryFamily.MOA_I, 2, params, coded_as=coded_as)

    if tag is WitnessTag.ADAPTIVE_RIDGE:
        if len(target.w) != 2:
            raise UnsupportedError(
                f"adaptive ridge constructions are two-dimensional, got d={len(target.w)}"
            )
        U = np.zeros((k_one, 3))
        U[relu_i] = (*target.u, target.beta)
        params = {"a": np.ones(1), "W": np.array([[*target.w, target.b]]), "U": U}
        return TheoryNetwork(TheoryFamily.MOA_I, 2, params, coded_as=coded_as)

    ridge = {"a": np.ones(1), "W": np.array([[0.0, 1.0, 0.0]]), "U": np.array([[1.0, 0.0, 0.0]])}
    n_pairs = len(_TYPE_II_PAIRS)
    if tag is WitnessTag.TLA_II:
        alpha = _one_hot(n_pairs, _pair_index(RELU, RELU)) + _one_hot(n_pairs, _pair_index(RELU, TANH))
        return TheoryNetwork(TheoryFamily.QDLA_II, 2, {**ridge, "alpha": alpha}, coded_as=coded_as)

    V = np.zeros((n_pairs, 3))
    V[_pair_index(RELU, RELU)] = (target.lam, 0.0, 0.0)
    return TheoryNetwork(TheoryFamily.QDMOA_II, 2, {**ridge, "V": V}, coded_as=coded_as)


def fixed_as_la(network: TheoryNetwork) -> TheoryNetwork:
    """A FixedI network as an LA network with one-hot coefficients at its activation."""
    if network.family is not TheoryFamily.FIXED_I:
        raise ConfigError(f"expected a FixedI network, got {network.family.value}")
    alpha = _one_hot(len(THEORY_DICTIONARY_I), THEORY_DICTIONARY_I.index(network.kinds[0]))
    params = {"a": network.params["a"].copy(), "W": network.params["W"].copy(), "alpha": alpha}
    return TheoryNetwork(TheoryFamily.LA_I, network.dim, params, coded_as=dict(network.coded_as))


def fixed_pair_as_qd_la(network: TheoryNetwork) -> TheoryNetwork:
    """
    A FixedII network as a qd-LA network.

    Pairs are stored with p <= q in dictionary order, so the two ridge
    matrices swap places when the fixed pair is given the other way round.
    """
    if network.family is not TheoryFamily.FIXED_II:
        raise ConfigError(f"expected a FixedII network, got {network.family.value}")
    p, q = network.kinds
    W, U = network.params["W"].copy(), network.params["U"].copy()
    if THEORY_DICTIONARY_II.index(p) > THEORY_DICTIONARY_II.index(q):
        p, q, W, U = q, p, U, W
    alpha = _one_hot(len(_TYPE_II_PAIRS), _pair_index(p, q))
    params = {"a": network.params["a"].copy(), "W": W, "U": U, "alpha": alpha}
    return TheoryNetwork(TheoryFamily.QDLA_II, network.dim, params, coded_as=dict(network.coded_as))


def la_as_moa(network: TheoryNetwork, rho: float) -> TheoryNetwork:
    """
    Replace constant coefficients by bias-only tanh gates.

    Each coefficient alpha_c becomes the gate tanh(arctanh(rho * alpha_c)) and
    the output weights are divided by ``rho``.

    Raises:
        RangeError: Some |rho * alpha_c| >= 1
    """
    if network.family not in (TheoryFamily.LA_I, TheoryFamily.QDLA_II):
        raise ConfigError(f"expected an LA network, got {network.family.value}")
    if not rho > 0:
        raise RangeError(f"rho must be positive, got {rho}")
    alpha = network.params["alpha"]
    scaled = rho * alpha
    if np.any(np.abs(scaled) >= 1.0):
        raise RangeError(
            f"|rho * alpha| reaches {float(np.max(np.abs(scaled))):.6g}; choose rho below "
            f"{1.0 / float(np.max(np.abs(alpha))):.6g}"
        )
    gates = np.zeros((len(alpha), network.dim + 1))
    gates[:, -1] = np.arctanh(scaled)
    params = {k: v.copy() for k, v in network.params.items() if k != "alpha"}
    params["a"] = params["a"] / rho
    if network.family is TheoryFamily.LA_I:
        params["U"] = gates
        family = TheoryFamily.MOA_I
    else:
        params["V"] = gates
        family = TheoryFamily.QDMOA_II
    return TheoryNetwork(family, network.dim, params, coded_as=dict(network.coded_as))
