"""
Activation primitives and the activation dictionary.

Values, first and second derivatives are provided in vectorised form for the
tensor core; the scalar ``eval``/``deriv`` helpers delegate to them. A
dictionary is an ordered, duplicate-free list of kinds, written in configs
with one letter per activation (``"gsr2lr"``).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Tuple
import logging
import math

import numpy as np
from scipy.special import expit, ndtr

from .base import Flavor, FlavorError, NumericError, ParseError

logger = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ActivationTag(Enum):
    """The eight activation primitives."""

    RELU = "ReLU"
    RELU2 = "ReLU2"
    LEAKY_RELU = "LeakyReLU"
    GELU = "GELU"
    SILU = "SiLU"
    TANH = "Tanh"
    IDENTITY = "Identity"
    SIGMOID = "Sigmoid"


@dataclass(frozen=True)
class ActivationKind:
    """An activation primitive; ``leaky_slope`` only matters for LeakyReLU."""

    tag: ActivationTag
    leaky_slope: float = 0.01

    def __post_init__(self) -> None:
        if self.tag is ActivationTag.LEAKY_RELU and not 0.0 < self.leaky_slope < 1.0:
            raise FlavorError(
                f"LeakyReLU slope must lie in (0, 1), got {self.leaky_slope}"
            )

    @property
    def name(self) -> str:
        return self.tag.value

    def __str__(self) -> str:
        return self.tag.value


RELU = ActivationKind(ActivationTag.RELU)
RELU2 = ActivationKind(ActivationTag.RELU2)
LEAKY_RELU = ActivationKind(ActivationTag.LEAKY_RELU)
GELU = ActivationKind(ActivationTag.GELU)
SILU = ActivationKind(ActivationTag.SILU)
TANH = ActivationKind(ActivationTag.TANH)
IDENTITY = ActivationKind(ActivationTag.IDENTITY)
SIGMOID = ActivationKind(ActivationTag.SIGMOID)

# Letters used in dictionary codes; "r2" is matched before "r".
_LETTER_TO_KIND = {
    "g": GELU,
    "s": SILU,
    "r2": RELU2,
    "l": LEAKY_RELU,
    "t": TANH,
    "r": RELU,
    "i": IDENTITY,
}
_TAG_TO_LETTER = {kind.tag: letter for letter, kind in _LETTER_TO_KIND.items()}

_TYPE_I_ALLOWED = frozenset(
    {
        ActivationTag.RELU2,
        ActivationTag.GELU,
        ActivationTag.SILU,
        ActivationTag.LEAKY_RELU,
        ActivationTag.RELU,
        ActivationTag.TANH,
    }
)
_TYPE_II_ALLOWED = _TYPE_I_ALLOWED | {ActivationTag.IDENTITY}

_KINKED = frozenset(
    {ActivationTag.RELU, ActivationTag.RELU2, ActivationTag.LEAKY_RELU}
)


def kind_from_name(name: str) -> ActivationKind:
    """Look up a kind by its tag name (``"SiLU"``) or dictionary letter (``"s"``)."""
    if name in _LETTER_TO_KIND:
        return _LETTER_TO_KIND[name]
    for tag in ActivationTag:
        if tag.value.lower() == name.lower():
            return ActivationKind(tag)
    raise FlavorError(f"unknown activation '{name}'")


def eval_array(kind: ActivationKind, t: np.ndarray) -> np.ndarray:
    """Evaluate ``kind`` elementwise."""
    t = np.asarray(t, dtype=np.float64)
    tag = kind.tag
    if tag is ActivationTag.RELU:
        return np.maximum(t, 0.0)
    if tag is ActivationTag.RELU2:
        r = np.maximum(t, 0.0)
        return r * r
    if tag is ActivationTag.LEAKY_RELU:
        return np.where(t >= 0.0, t, kind.leaky_slope * t)
    if tag is ActivationTag.GELU:
        return t * ndtr(t)
    if tag is ActivationTag.SILU:
        return t * expit(t)
    if tag is ActivationTag.TANH:
        return np.tanh(t)
    if tag is ActivationTag.IDENTITY:
        return t.copy()
    return expit(t)


def deriv_array(kind: ActivationKind, t: np.ndarray) -> np.ndarray:
    """First derivative; right-hand value at the kink of the ReLU family."""
    t = np.asarray(t, dtype=np.float64)
    tag = kind.tag
    if tag is ActivationTag.RELU:
        return (t >= 0.0).astype(np.float64)
    if tag is ActivationTag.RELU2:
        return 2.0 * np.maximum(t, 0.0)
    if tag is ActivationTag.LEAKY_RELU:
        return np.where(t >= 0.0, 1.0, kind.leaky_slope)
    if tag is ActivationTag.GELU:
        return ndtr(t) + t * _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    if tag is ActivationTag.SILU:
        s = expit(t)
        return s + t * s * (1.0 - s)
    if tag is ActivationTag.TANH:
        th = np.tanh(t)
        return 1.0 - th * th
    if tag is ActivationTag.IDENTITY:
        return np.ones_like(t)
    s = expit(t)
    return s * (1.0 - s)


def second_deriv_array(kind: ActivationKind, t: np.ndarray) -> np.ndarray:
    """Second derivative, used when an input-gradient is itself differentiated."""
    t = np.asarray(t, dtype=np.float64)
    tag = kind.tag
    if tag in (ActivationTag.RELU, ActivationTag.LEAKY_RELU, ActivationTag.IDENTITY):
        return np.zeros_like(t)
    if tag is ActivationTag.RELU2:
        return np.where(t >= 0.0, 2.0, 0.0)
    if tag is ActivationTag.GELU:
        return _INV_SQRT_2PI * np.exp(-0.5 * t * t) * (2.0 - t * t)
    if tag is ActivationTag.SILU:
        s = expit(t)
        return s * (1.0 - s) * (2.0 + t * (1.0 - 2.0 * s))
    if tag is ActivationTag.TANH:
        th = np.tanh(t)
        return -2.0 * th * (1.0 - th * th)
    s = expit(t)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _check_finite(t: float) -> float:
    if not math.isfinite(t):
        raise NumericError(f"activation input must be finite, got {t}")
    return float(t)


def eval(kind: ActivationKind, t: float) -> float:  # noqa: A001
    """Scalar activation value."""
    return float(eval_array(kind, np.float64(_check_finite(t))))


def deriv(kind: ActivationKind, t: float) -> float:
    """Scalar first derivative."""
    return float(deriv_array(kind, np.float64(_check_finite(t))))


def kink_points(kind: ActivationKind) -> Tuple[float, ...]:
    """Points where the derivative of ``kind`` is not continuous (or not smooth)."""
    return (0.0,) if kind.tag in _KINKED else ()


def has_derivative_jump(kind: ActivationKind) -> bool:
    """True for the kinds whose first derivative jumps (ReLU and LeakyReLU)."""
    return kind.tag in (ActivationTag.RELU, ActivationTag.LEAKY_RELU)


@dataclass(frozen=True)
class ActivationDictionary:
    """Ordered candidate activations for LA/MoA mixing."""

    entries: Tuple[ActivationKind, ...]
    flavor: Flavor

    def __post_init__(self) -> None:
        allowed = _TYPE_I_ALLOWED if self.flavor is Flavor.TYPE_I else _TYPE_II_ALLOWED
        seen = set()
        for kind in self.entries:
            if kind.tag is ActivationTag.IDENTITY and self.flavor is Flavor.TYPE_I:
                raise FlavorError("Identity is only allowed in Type-II dictionaries")
            if kind.tag not in allowed:
                raise FlavorError(f"{kind.name} cannot appear in a dictionary")
            if kind.tag in seen:
                raise FlavorError(f"duplicate activation {kind.name} in dictionary")
            seen.add(kind.tag)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ActivationKind]:
        return iter(self.entries)

    def __getitem__(self, index: int) -> ActivationKind:
        return self.entries[index]

    def index(self, kind: ActivationKind) -> int:
        for i, entry in enumerate(self.entries):
            if entry.tag is kind.tag:
                return i
        raise FlavorError(f"{kind.name} is not in dictionary '{self.code}'")

    def pairs(self) -> List[Tuple[int, int]]:
        """Index pairs (k, l) with k <= l in lexicographic order."""
        n = len(self.entries)
        return [(k, l) for k in range(n) for l in range(k, n)]

    @property
    def code(self) -> str:
        return render_dictionary(self)


def parse_dictionary(code: str, flavor: Flavor) -> ActivationDictionary:
    """
    Parse a compact dictionary code such as ``"gsr2lr"``.

    Args:
        code: Letter tokens g, s, r2, l, t, r, i (``"r²"`` is accepted for r2)
        flavor: Flavor the dictionary is used with

    Returns:
        The dictionary in left-to-right order

    Raises:
        ParseError: Unknown or duplicate token (position is 1-based)
        FlavorError: Identity requested for a Type-I dictionary
    """
    if not code:
        raise ParseError("empty dictionary code", position=1)
    entries: List[ActivationKind] = []
    seen = set()
    pos = 0
    while pos < len(code):
        if code[pos] == "r" and pos + 1 < len(code) and code[pos + 1] in ("2", "²"):
            token, width = "r2", 2
        else:
            token, width = code[pos], 1
        if token not in _LETTER_TO_KIND:
            raise ParseError(f"unknown activation token '{token}'", position=pos + 1)
        if token in seen:
            raise ParseError(f"duplicate activation token '{token}'", position=pos + 1)
        if token == "i" and flavor is Flavor.TYPE_I:
            raise FlavorError("Identity ('i') is only allowed in Type-II dictionaries")
        seen.add(token)
        entries.append(_LETTER_TO_KIND[token])
        pos += width
    return ActivationDictionary(tuple(entries), flavor)


def render_dictionary(dictionary: ActivationDictionary) -> str:
    """Inverse of :func:`parse_dictionary`."""
    return "".join(_TAG_TO_LETTER[kind.tag] for kind in dictionary.entries)


# Orderings used by the width-1 constructions in the expressivity package.
THEORY_KINDS_I: Tuple[ActivationKind, ...] = (RELU, RELU2, LEAKY_RELU, GELU, SILU, TANH)
THEORY_KINDS_II: Tuple[ActivationKind, ...] = (IDENTITY,) + THEORY_KINDS_I

THEORY_DICTIONARY_I = ActivationDictionary(THEORY_KINDS_I, Flavor.TYPE_I)
THEORY_DICTIONARY_II = ActivationDictionary(THEORY_KINDS_II, Flavor.TYPE_II)
