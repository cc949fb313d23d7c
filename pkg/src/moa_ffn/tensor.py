"""
Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation whose inputs require gradients records a :class:`Node`
carrying a global sequence number. ``backward`` collects the nodes reachable
from a scalar root into a :class:`Tape` and runs each backward rule once, in
reverse recording order. Gradients accumulate on leaves until
:func:`zero_grads` is called.

Broadcasting is deliberately narrow: equal shapes, a scalar operand, or a
trailing row vector (bias/scale). Mixing of activation branches goes through
the dedicated :func:`mix` op.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union
import itertools
import logging
import math

import numpy as np

from .activations import ActivationKind, deriv_array, eval_array, second_deriv_array
from .base import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
Operand = Union["Tensor", float, int]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_sequence = itertools.count()


@dataclass(eq=False)
class Node:
    """One recorded operation: inputs, the id of its output and a backward rule."""

    seq: int
    op: str
    inputs: Tuple["Tensor", ...]
    output_id: int
    backward_rule: BackwardRule


class Tensor:
    """A float64 array that may participate in gradient recording."""

    def __init__(
        self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node: Optional[Node] = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = False
        out.grad = None
        out.name = None
        out.node = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return add(neg(self), other)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __truediv__(self, other: float) -> "Tensor":
        if isinstance(other, Tensor):
            raise ContractError("division is only defined by a Python scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __getitem__(self, index: object) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tensor_sum(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return tensor_mean(self, axis)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)


class Tape:
    """Operations reachable from a root, kept in recording order."""

    def __init__(self, nodes: List[Node]):
        self.nodes = sorted(nodes, key=lambda node: node.seq)

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        found = {}
        stack = [root]
        while stack:
            tensor = stack.pop()
            node = tensor.node
            if node is None or id(node) in found:
                continue
            found[id(node)] = node
            stack.extend(node.inputs)
        return cls(list(found.values()))

    def __len__(self) -> int:
        return len(self.nodes)

    def reverse(self) -> Iterable[Node]:
        return reversed(self.nodes)


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64))


def _record(
    op: str, data: np.ndarray, inputs: Sequence[Tensor], rule: BackwardRule
) -> Tensor:
    out = Tensor._wrap(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(next(_sequence), op, tuple(inputs), id(out), rule)
    return out


def _accumulate_leaf(leaf: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=np.float64).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = grad.copy()
    else:
        leaf.grad = leaf.grad + grad


def backward(root: Tensor) -> None:
    """
    Populate ``grad`` on every requires_grad leaf reachable from ``root``.

    Raises:
        ContractError: If root is not a scalar or does not require gradients
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractError("backward root was not produced on the tape")
    seed = np.ones_like(root.data)
    if root.node is None:
        _accumulate_leaf(root, seed)
        return

    pending = {id(root): seed}
    for node in Tape.from_root(root).reverse():
        grad_out = pending.pop(node.output_id, None)
        if grad_out is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward_rule(grad_out)):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.node is None:
                _accumulate_leaf(tensor, grad)
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + grad
            else:
                pending[id(tensor)] = grad


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for tensor in tensors:
        tensor.grad = None


# --------------------------------------------------------------------------
# elementwise arithmetic
# --------------------------------------------------------------------------


def _broadcast_ok(big: Tuple[int, ...], small: Tuple[int, ...]) -> bool:
    if small == big:
        return True
    if int(np.prod(small)) == 1 and len(small) <= 1:
        return True
    return len(small) == 1 and len(big) >= 1 and small == big[-1:]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1 and len(shape) <= 1:
        return np.asarray(grad.sum()).reshape(shape)
    return grad.reshape(-1, shape[0]).sum(axis=0)


def _check_binary(op: str, a: Tensor, b: Tensor) -> None:
    if not (_broadcast_ok(a.shape, b.shape) or _broadcast_ok(b.shape, a.shape)):
        raise DimensionError(f"{op}: incompatible shapes", [a.shape, b.shape])


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("add", a, b)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", a.data + b.data, (a, b), rule)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("sub", a, b)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", a.data - b.data, (a, b), rule)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("mul", a, b)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", a.data * b.data, (a, b), rule)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors of identical shape."""
    if a.shape != b.shape:
        raise DimensionError("hadamard: shapes differ", [a.shape, b.shape])

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return g * b.data, g * a.data

    return _record("hadamard", a.data * b.data, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


# --------------------------------------------------------------------------
# linear algebra and shape manipulation
# --------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product.

    ``a`` may carry leading batch axes when ``b`` is a matrix; otherwise both
    operands must share the same batch axes.

    Raises:
        DimensionError: Inner dimensions or batch axes disagree
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands of rank >= 2", [a.shape, b.shape])
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul inner dimensions differ", [a.shape, b.shape])

    if b.ndim == 2:
        k, n = b.shape

        def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            grad_a = g @ b.data.T
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            return grad_a, grad_b

    elif a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2]:

        def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    else:
        raise DimensionError("matmul batch axes differ", [a.shape, b.shape])

    return _record("matmul", a.data @ b.data, (a, b), rule)


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record(
        "transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),)
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape to {tuple(shape)}", [a.shape]) from exc
    return _record("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, index: object) -> Tensor:
    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record("getitem", np.array(a.data[index]), (a,), rule)


def stack(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError("stack: shapes differ", [t.shape for t in tensors])
    data = np.stack([t.data for t in tensors], axis=axis)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _record("stack", data, tuple(tensors), rule)


def tensor_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    if axis is None:

        def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
            return (np.broadcast_to(g, a.shape),)

        return _record("sum", np.asarray(a.data.sum()), (a,), rule)

    def rule_axis(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape),)

    return _record("sum", a.data.sum(axis=axis), (a,), rule_axis)


def tensor_mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return mul(tensor_sum(a, axis), 1.0 / count)


# --------------------------------------------------------------------------
# nonlinearities
# --------------------------------------------------------------------------


def activation(kind: ActivationKind, x: Tensor, order: int = 0) -> Tensor:
    """
    Apply an activation (``order=0``) or its first derivative (``order=1``).

    The derivative form is itself differentiable, which lets input-gradients
    of a network enter a training objective.
    """
    if order == 0:
        return _record(
            f"act:{kind.name}",
            eval_array(kind, x.data),
            (x,),
            lambda g: (g * deriv_array(kind, x.data),),
        )
    if order == 1:
        return _record(
            f"dact:{kind.name}",
            deriv_array(kind, x.data),
            (x,),
            lambda g: (g * second_deriv_array(kind, x.data),),
        )
    raise ContractError(f"activation order must be 0 or 1, got {order}")


def softmax(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; ``mask`` entries that are False get weight 0."""
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _record("softmax", probs, (x,), rule)


def mix(weights: Tensor, branches: Sequence[Tensor]) -> Tensor:
    """
    Weighted sum of same-shaped 2-D branches.

    ``weights`` is either a shared vector of shape (K,) or per-row weights of
    shape (N, K) for branches of shape (N, D).
    """
    if not branches:
        raise ContractError("mix needs at least one branch")
    shape = branches[0].shape
    if len(shape) != 2 or any(b.shape != shape for b in branches):
        raise DimensionError("mix branches must share a 2-D shape", [b.shape for b in branches])
    count = len(branches)
    per_row = weights.ndim == 2
    if weights.shape not in ((count,), (shape[0], count)):
        raise DimensionError("mix weights do not match branches", [weights.shape, shape])

    w = weights.data
    if per_row:
        terms = [w[:, k : k + 1] * b.data for k, b in enumerate(branches)]
    else:
        terms = [w[k] * b.data for k, b in enumerate(branches)]
    out = terms[0]
    for term in terms[1:]:
        out = out + term

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        if per_row:
            grad_w = np.stack([(g * b.data).sum(axis=1) for b in branches], axis=1)
            grads_b = [w[:, k : k + 1] * g for k in range(count)]
        else:
            grad_w = np.array([(g * b.data).sum() for b in branches])
            grads_b = [w[k] * g for k in range(count)]
        return [grad_w] + grads_b

    return _record("mix", out, (weights,) + tuple(branches), rule)


# --------------------------------------------------------------------------
# fused transformer ops
# --------------------------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _record("embedding", table.data[ids], (table,), rule)


def rms_norm(x: Tensor, scale: Tensor, eps: float = 1e-6) -> Tensor:
    """RMSNorm over the last axis with a learned per-channel scale."""
    if scale.shape != x.shape[-1:]:
        raise DimensionError("rms_norm scale must match the last axis", [x.shape, scale.shape])
    r = 1.0 / np.sqrt((x.data * x.data).mean(axis=-1, keepdims=True) + eps)
    xhat = x.data * r

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        gs = g * scale.data
        grad_x = r * (gs - xhat * (gs * xhat).mean(axis=-1, keepdims=True))
        grad_scale = (g * xhat).reshape(-1, scale.shape[0]).sum(axis=0)
        return grad_x, grad_scale

    return _record("rms_norm", xhat * scale.data, (x, scale), rule)


def _rotate_half(v: np.ndarray) -> np.ndarray:
    half = v.shape[-1] // 2
    return np.concatenate([-v[..., half:], v[..., :half]], axis=-1)


def _rotate_half_adjoint(v: np.ndarray) -> np.ndarray:
    half = v.shape[-1] // 2
    return np.concatenate([v[..., half:], -v[..., :half]], axis=-1)


def rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotary position embedding over the last axis (rotate-half pairing)."""
    if x.shape[-2:] != cos.shape or cos.shape != sin.shape:
        raise DimensionError("rope tables must match (seq, head_dim)", [x.shape, cos.shape])
    out = x.data * cos + _rotate_half(x.data) * sin

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * cos + _rotate_half_adjoint(g * sin),)

    return _record("rope", out, (x,), rule)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean next-token cross-entropy (nats) of (N, V) logits against (N,) ids."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError("cross_entropy expects (N, V) logits and (N,) targets", [logits.shape, targets.shape])
    n = logits.shape[0]
    logp = log_softmax_rows(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, targets].mean()

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return _record("cross_entropy", np.asarray(loss), (logits,), rule)


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------


def grad_check(
    f: Callable[[Tensor], Tensor], point: ArrayLike, step: float = 1e-5
) -> float:
    """
    Compare autodiff against central differences at ``point``.

    Args:
        f: Scalar-valued map built from tensor ops
        point: Where to evaluate; must keep activation pre-activations away
            from kinks by more than the step
        step: Central-difference step

    Returns:
        max over coordinates of |autodiff - fd| / max(1, |fd|)

    Raises:
        NumericError: A perturbed evaluation is not finite (names the coordinate)
    """
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True)
    value = f(leaf)
    if not math.isfinite(value.item()):
        raise NumericError("grad_check: function value is not finite", where="base point")
    backward(value)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)

    worst = 0.0
    for i in range(base.size):
        coordinate = np.unravel_index(i, base.shape) if base.ndim else ()
        shifted = []
        for sign in (1.0, -1.0):
            probe = base.copy()
            probe[coordinate] += sign * step
            fx = f(Tensor(probe)).item()
            if not math.isfinite(fx):
                raise NumericError("grad_check: non-finite evaluation", where=f"coordinate {coordinate}")
            shifted.append(fx)
        numeric = (shifted[0] - shifted[1]) / (2.0 * step)
        error = abs(float(analytic[coordinate]) - numeric) / max(1.0, abs(numeric))
        worst = max(worst, error)
    return worst
