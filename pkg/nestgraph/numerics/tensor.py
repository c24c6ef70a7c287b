"""Dense tensors with reverse-mode gradients.

Values are float64 numpy arrays. Operations executed while a ``Tape`` is
active, and that touch at least one tensor requiring gradients, are recorded
together with their vector-Jacobian product. ``Tape.backward`` walks the
recording in reverse, visiting every recorded op exactly once.

    with Tape() as tape:
        loss = sum(mul(x, x))
    (grad_x,) = tape.backward(loss, [x])
"""

import re
import threading
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import DimensionError, NumericError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array, optionally tracked for gradients"""

    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError(
                f"non-finite value in tensor{' ' + name if name else ''} of shape {value.shape}",
                diagnostics={"name": name, "shape": list(value.shape),
                             "nan": int(np.isnan(value).sum()), "inf": int(np.isinf(value).sum())},
            )
        self.value = value
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def parameter(cls, value, name: str) -> "Tensor":
        """Create a trainable leaf that owns a copy of ``value``"""
        return cls(np.array(value, dtype=np.float64, copy=True), requires_grad=True, name=name)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only defined by constants")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class _Node:
    __slots__ = ("out", "parents", "vjp")

    def __init__(self, out: Tensor, parents: Tuple[Tensor, ...], vjp: Callable):
        self.out = out
        self.parents = parents
        self.vjp = vjp


class Tape:
    """Records operations for one backward pass.

    Tapes are single-threaded; nested tapes record into the innermost one.
    """

    def __init__(self):
        self._nodes: List[_Node] = []
        self.gradients: dict = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def record(self, out: Tensor, parents: Tuple[Tensor, ...], vjp: Callable):
        self._nodes.append(_Node(out, parents, vjp))

    def backward(self, loss: Tensor, params: Sequence[Tensor]) -> List[np.ndarray]:
        """Return d(loss)/d(param) for every param, zeros where unused"""
        if loss.size != 1:
            raise DimensionError("backward needs a scalar loss", loss.shape, ())
        adjoint = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self._nodes):
            upstream = adjoint.pop(id(node.out), None)
            if upstream is None:
                continue
            for parent, grad in zip(node.parents, node.vjp(upstream)):
                if grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoint[key] = adjoint[key] + grad if key in adjoint else grad

        self.gradients = {}
        grads = []
        for param in params:
            grad = adjoint.get(id(param))
            grad = np.zeros_like(param.value) if grad is None else np.array(grad, dtype=np.float64).reshape(param.shape)
            if not np.all(np.isfinite(grad)):
                raise NumericError(f"non-finite gradient for {param.name or 'parameter'}",
                                   diagnostics={"name": param.name, "shape": list(param.shape)})
            param.grad = grad
            self.gradients[param.name or id(param)] = grad
            grads.append(grad)
        return grads


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(value: np.ndarray, parents: Tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot {op} tensors", a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# core ops
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    return _result(a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(-a.value, (a,), lambda g: (-g,))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix-matrix or matrix-vector product"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise DimensionError("cannot matmul", a.shape, b.shape)
    if b.ndim == 1:
        return _result(a.value @ b.value, (a, b),
                       lambda g: (np.outer(g, b.value), a.value.T @ g))
    return _result(a.value @ b.value, (a, b),
                   lambda g: (g @ b.value.T, a.value.T @ g))


_EINSUM = re.compile(r"^([a-z]+),([a-z]+)->([a-z]*)$")


def einsum(subscripts: str, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Two-operand einsum without repeated or operand-private indices"""
    a, b = as_tensor(a), as_tensor(b)
    match = _EINSUM.match(subscripts.replace(" ", ""))
    if not match:
        raise ValueError(f"unsupported einsum subscripts {subscripts!r}")
    sa, sb, so = match.groups()
    for own, other in ((sa, sb), (sb, sa)):
        if len(set(own)) != len(own) or any(c not in so and c not in other for c in own):
            raise ValueError(f"unsupported einsum subscripts {subscripts!r}")
    if len(sa) != a.ndim or len(sb) != b.ndim:
        raise DimensionError(f"einsum {subscripts} rank mismatch", a.shape, b.shape)
    try:
        value = np.einsum(f"{sa},{sb}->{so}", a.value, b.value, optimize=True)
    except ValueError:
        raise DimensionError(f"einsum {subscripts} shape mismatch", a.shape, b.shape) from None
    return _result(value, (a, b), lambda g: (
        np.einsum(f"{so},{sb}->{sa}", g, b.value, optimize=True) if a.requires_grad else None,
        np.einsum(f"{so},{sa}->{sb}", g, a.value, optimize=True) if b.requires_grad else None,
    ))


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("cannot concat", *(t.shape for t in tensors[:2])) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(value, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError("cannot stack", *(sorted(shapes)[:2]))
    value = np.stack([t.value for t in tensors], axis=axis)
    return _result(value, tensors,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))))


def sum_(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _result(value, (a,), vjp)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    if count == 0:
        raise DimensionError("mean over an empty axis", a.shape, ())
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: ArrayLike, shape) -> Tensor:
    a = as_tensor(a)
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise DimensionError("cannot reshape", a.shape, shape) from None
    return _result(value, (a,), lambda g: (g.reshape(a.shape),))


def index(a: ArrayLike, key) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate"""
    a = as_tensor(a)
    try:
        value = a.value[key]
    except IndexError as exc:
        raise DimensionError(f"bad index ({exc})", a.shape, ()) from None

    def vjp(g):
        grad = np.zeros_like(a.value)
        np.add.at(grad, key, g)
        return (grad,)

    return _result(np.array(value, dtype=np.float64), (a,), vjp)


def gather_rows(a: ArrayLike, rows) -> Tensor:
    """a[rows] for an integer array of any shape"""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= a.shape[0]):
        raise DimensionError("row index out of range", a.shape, rows.shape)
    value = a.value[rows]

    def vjp(g):
        grad = np.zeros_like(a.value)
        np.add.at(grad, rows.reshape(-1), g.reshape((-1,) + a.shape[1:]))
        return (grad,)

    return _result(value, (a,), vjp)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    value = np.exp(a.value)
    return _result(value, (a,), lambda g: (g * value,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.value)
    return _result(value, (a,), lambda g: (g / a.value,))


def clamp(a: ArrayLike, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.value >= low) & (a.value <= high)
    return _result(np.clip(a.value, low, high), (a,), lambda g: (g * inside,))


def leaky_relu(a: ArrayLike, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    positive = a.value > 0
    return _result(np.where(positive, a.value, slope * a.value), (a,),
                   lambda g: (np.where(positive, g, slope * g),))


def elu(a: ArrayLike, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    positive = a.value > 0
    negative_part = alpha * np.expm1(np.minimum(a.value, 0.0))
    value = np.where(positive, a.value, negative_part)
    return _result(value, (a,), lambda g: (np.where(positive, g, g * (negative_part + alpha)),))


def identity(a: ArrayLike) -> Tensor:
    return as_tensor(a)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    value = _sigmoid(a.value)
    return _result(value, (a,), lambda g: (g * value * (1.0 - value),))


def log_sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    value = -np.logaddexp(0.0, -a.value)
    return _result(value, (a,), lambda g: (g * _sigmoid(-a.value),))


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)
    return _result(value, (a,),
                   lambda g: (value * (g - (g * value).sum(axis=axis, keepdims=True)),))


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    value = shifted - logsum
    probs = np.exp(value)
    return _result(value, (a,), lambda g: (g - probs * g.sum(axis=axis, keepdims=True),))


ACTIVATIONS = {"elu": elu, "identity": identity}
