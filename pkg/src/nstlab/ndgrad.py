"""Dense float64 tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a read-only ``numpy`` array.  Every operation applied
to tensors that require gradients records its parents and a closure mapping
the output gradient to input gradients.  :func:`backward` walks that graph in
reverse topological order and returns a :class:`GradientMap`.

The graph lives exactly as long as one forward pass: :func:`backward` detaches
interior nodes once it has consumed them.

    >>> x = Tensor(3.0, requires_grad=True)
    >>> backward(x * x, [x])[x]
    array(6.)
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, MissingLeafError

__all__ = [
    "Tensor",
    "GradientMap",
    "apply",
    "backward",
    "finite_diff_grad",
    "as_tensor",
    "OPS",
]

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "id", "op", "_parents", "_backward", "_logits")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        # set by softmax so cross-entropy can take log-probabilities exactly
        self._logits: Tensor | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{grad})"

    def __len__(self):
        return len(self.data)

    def __add__(self, other):
        return apply("add", [self, as_tensor(other)])

    __radd__ = __add__

    def __sub__(self, other):
        return apply("sub", [self, as_tensor(other)])

    def __rsub__(self, other):
        return apply("sub", [as_tensor(other), self])

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return apply("mul", [self, other])
        if np.ndim(other) == 0:
            return apply("scalar_mul", [self], scalar=float(other))
        return apply("mul", [self, as_tensor(other)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.ndim(other) != 0 or isinstance(other, Tensor):
            raise ContractError("only division by a Python scalar is supported")
        return apply("scalar_mul", [self], scalar=1.0 / float(other))

    def __neg__(self):
        return apply("scalar_mul", [self], scalar=-1.0)

    def __matmul__(self, other):
        return apply("matmul", [self, as_tensor(other)])

    def __rmatmul__(self, other):
        return apply("matmul", [as_tensor(other), self])

    def sum(self, axis=None, keepdims=False):
        return apply("sum", [self], axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return apply("mean", [self], axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientMap(dict):
    """Gradients keyed by parameter node id; also indexable by the parameter itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.id
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.id
        return super().__contains__(key)


# ---------------------------------------------------------------------------
# forward/backward rules
#
# Each rule takes input arrays (plus keyword options) and returns
# ``(out, vjp)`` where ``vjp(g)`` yields one gradient per input.


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


def _add(a, b):
    _broadcast_shape("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _sub(a, b):
    _broadcast_shape("sub", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


def _mul(a, b):
    _broadcast_shape("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


def _scalar_mul(a, scalar):
    return a * scalar, lambda g: (g * scalar,)


def _matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b, lambda g: (g @ b.T, a.T @ g)


def _relu(a):
    mask = a > 0
    return np.where(mask, a, 0.0), lambda g: (g * mask,)


def _exp(a):
    out = np.exp(a)
    return out, lambda g: (g * out,)


def _log(a):
    if np.any(a <= 0):
        raise DomainError(f"log: input has {int(np.sum(a <= 0))} non-positive entries")
    return np.log(a), lambda g: (g / a,)


def _clamp_min(a, lo):
    mask = a >= lo
    return np.where(mask, a, lo), lambda g: (g * mask,)


def _expand(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def _sum(a, axis=None, keepdims=False):
    out = a.sum(axis=axis, keepdims=keepdims)
    return out, lambda g: (np.array(_expand(g, a.shape, axis, keepdims)),)


def _mean(a, axis=None, keepdims=False):
    out = a.mean(axis=axis, keepdims=keepdims)
    n = a.size // max(out.size, 1)
    return out, lambda g: (np.array(_expand(g, a.shape, axis, keepdims)) / n,)


def _sqnorm(a, axis=None, keepdims=False):
    out = np.sum(a * a, axis=axis, keepdims=keepdims)
    return out, lambda g: (2.0 * a * _expand(g, a.shape, axis, keepdims),)


def _softmax_arr(a):
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax(a):
    if a.ndim == 0:
        raise DimensionError("softmax: needs at least one axis")
    y = _softmax_arr(a)
    return y, lambda g: (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)


def _logsumexp(a, keepdims=False):
    if a.ndim == 0:
        raise DimensionError("logsumexp: needs at least one axis")
    m = a.max(axis=-1, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True))
    y = np.exp(a - out)
    if not keepdims:
        out = out[..., 0]

    def vjp(g):
        if not keepdims:
            g = g[..., None]
        return (g * y,)

    return out, vjp


def _take(a, index):
    index = np.asarray(index, dtype=np.intp)
    if a.ndim == 0:
        raise DimensionError("take: cannot index a scalar")

    def vjp(g):
        out = np.zeros_like(a)
        np.add.at(out, index, g)
        return (out,)

    return a[index], vjp


def _concat(*arrays):
    tails = {x.shape[1:] for x in arrays}
    if len(tails) != 1 or any(x.ndim == 0 for x in arrays):
        raise DimensionError(f"concat: incompatible shapes {[x.shape for x in arrays]}")
    bounds = np.cumsum([0] + [len(x) for x in arrays])
    return np.concatenate(arrays, axis=0), lambda g: tuple(
        g[bounds[i] : bounds[i + 1]] for i in range(len(arrays))
    )


def _reshape(a, shape):
    try:
        out = a.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return out, lambda g: (g.reshape(a.shape),)


OPS: dict[str, Callable] = {
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "scalar_mul": _scalar_mul,
    "matmul": _matmul,
    "relu": _relu,
    "exp": _exp,
    "log": _log,
    "sum": _sum,
    "mean": _mean,
    "sqnorm": _sqnorm,
    "softmax": _softmax,
    "logsumexp": _logsumexp,
    # helpers the loss code needs on top of the core set
    "clamp_min": _clamp_min,
    "take": _take,
    "concat": _concat,
    "reshape": _reshape,
}

_ALIASES = {
    "elementwise-mul": "mul",
    "scalar-mul": "scalar_mul",
    "squared-l2-norm": "sqnorm",
    "softmax-over-last-axis": "softmax",
    "logsumexp-over-last-axis": "logsumexp",
}


def apply(kind: str, inputs: Sequence[Tensor], **options) -> Tensor:
    """Apply operation ``kind`` to ``inputs`` and record the graph edge when needed."""
    kind = _ALIASES.get(kind, kind)
    try:
        rule = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown operation kind {kind!r}") from None
    inputs = [as_tensor(x) for x in inputs]
    out_data, vjp = rule(*(x.data for x in inputs), **options)
    out = Tensor(out_data)
    out.op = kind
    if any(x.requires_grad for x in inputs):
        out.requires_grad = True
        out._parents = tuple(inputs)
        out._backward = vjp
    if kind == "softmax":
        out._logits = inputs[0]
    return out


def _toposort(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.id not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, parameters: Iterable[Tensor], retain_graph: bool = False) -> GradientMap:
    """Gradients of scalar ``loss`` with respect to each leaf in ``parameters``."""
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    parameters = list(parameters)
    for p in parameters:
        if not p.is_leaf or not p.requires_grad:
            raise ContractError(f"backward: parameter {p.id} is not a leaf with requires_grad set")
    order = _toposort(loss) if loss.requires_grad else []
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(node.id)
        if g is None or node.is_leaf:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
    if not retain_graph:
        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
    out = GradientMap()
    for p in parameters:
        if p.id not in grads:
            raise MissingLeafError(f"backward: parameter {p.id} with shape {p.shape} is not in the graph")
        out[p.id] = np.array(grads[p.id], dtype=np.float64).reshape(p.shape)
    return out


def finite_diff_grad(f: Callable[[list[Tensor]], object], parameters: Sequence[Tensor], h: float = 1e-5) -> GradientMap:
    """Central-difference gradient of ``f`` at ``parameters``.

    ``f`` receives a list of tensors in the order of ``parameters`` and must return
    a scalar (Tensor or float).
    """
    if h <= 0:
        raise ContractError("finite_diff_grad: step must be positive")
    base = [p.data.copy() for p in parameters]

    def evaluate(arrays):
        val = f([Tensor(a) for a in arrays])
        return float(val.data) if isinstance(val, Tensor) else float(val)

    out = GradientMap()
    for i, p in enumerate(parameters):
        g = np.zeros(p.shape)
        for idx in np.ndindex(*p.shape):
            arrays = [a.copy() for a in base]
            arrays[i][idx] += h
            up = evaluate(arrays)
            arrays[i][idx] -= 2 * h
            down = evaluate(arrays)
            g[idx] = (up - down) / (2 * h)
        out[p.id] = g
    return out


# functional spellings
def relu(x):
    return apply("relu", [x])


def exp(x):
    return apply("exp", [x])


def log(x):
    return apply("log", [x])


def softmax(x):
    return apply("softmax", [x])


def logsumexp(x, keepdims=False):
    return apply("logsumexp", [x], keepdims=keepdims)


def sqnorm(x, axis=None, keepdims=False):
    return apply("sqnorm", [x], axis=axis, keepdims=keepdims)


def clamp_min(x, lo):
    return apply("clamp_min", [x], lo=float(lo))


def take(x, index):
    return apply("take", [x], index=index)


def concat(xs):
    return apply("concat", list(xs))


def reshape(x, shape):
    return apply("reshape", [x], shape=tuple(shape))
