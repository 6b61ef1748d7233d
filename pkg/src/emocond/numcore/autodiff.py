"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` whose payload is a read-only
numpy array. Tensors produced by an operation remember their parents and a
closure mapping the upstream gradient to one gradient per parent; calling
:func:`backward` on a scalar walks that graph once in reverse topological
order.

Broadcasting is deliberately narrow: a Python number or a size-1 tensor may
combine with any tensor. Everything else (adding a bias row to every row of a
matrix, repeating a vector) goes through an explicit helper so the backward
rule is visible.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, InvalidMaskError

_EMPTY: tuple = ()


class Tensor:
    """A node in the computation graph.

    Parameters
    ----------
    data : array_like
        Values; copied and stored as a read-only float64 array.
    requires_grad : bool
        Mark as a trainable leaf. :func:`backward` fills ``.grad`` for it.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, *, _parents=_EMPTY, _backward=None, op="leaf"):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def __repr__(self):
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

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
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _not_scalar(t):
    raise ContractError(f"expected a scalar tensor, got shape {t.shape}")


def tensor(data, requires_grad=False) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data, requires_grad)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _make(value, parents, backward, op):
    needs = any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1


def _unbroadcast(grad, like: Tensor):
    if grad.shape == like.shape:
        return grad
    return np.full(like.shape, grad.sum())


def _check_elementwise(a: Tensor, b: Tensor, name: str):
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not match")


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_elementwise(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_elementwise(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_elementwise(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)), "mul")


def div(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _check_elementwise(a, b, "div")
    out = a.data / b.data

    def back(g):
        return _unbroadcast(g / b.data, a), _unbroadcast(-g * out / b.data, b)

    return _make(out, (a, b), back, "div")


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def absolute(x: Tensor) -> Tensor:
    # subgradient 0 at 0
    return _make(np.abs(x.data), (x,), lambda g: (np.sign(x.data) * g,), "abs")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: ((1.0 - out * out) * g,), "tanh")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (out * g,), "exp")


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """Elementwise max(x, floor); the gradient is blocked where the floor wins."""
    keep = x.data > floor
    return _make(np.where(keep, x.data, floor), (x,), lambda g: (g * keep,), "clamp_min")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (0.5 * g / out,), "sqrt")


# --------------------------------------------------------------------------
# reductions and shape


def sum(x: Tensor) -> Tensor:  # noqa: A001
    return _make(x.data.sum(), (x,), lambda g: (np.full(x.shape, float(g)),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return _make(x.data.mean(), (x,), lambda g: (np.full(x.shape, float(g) / n),), "mean")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two same-shape tensors (flattened)."""
    if a.shape != b.shape:
        raise DimensionError(f"dot: shapes {a.shape} and {b.shape} do not match")
    return sum(mul(a, b))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")
    return _make(x.data.T, (x,), lambda g: (g.T,), "transpose")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Horizontally stack matrices that share a row count."""
    parts = [constant(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1 or any(p.data.ndim != 2 for p in parts):
        raise DimensionError(f"concat_cols: incompatible shapes {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.data for p in parts], axis=1), parts, back, "concat_cols")


def take_rows(x: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        full = np.zeros(x.shape)
        np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), back, "take_rows")


def add_row(x: Tensor, row: Tensor) -> Tensor:
    """Add a length-N vector to every row of an M×N matrix."""
    if x.data.ndim != 2 or row.shape != (x.shape[1],):
        raise DimensionError(f"add_row: cannot add shape {row.shape} to rows of {x.shape}")
    return _make(x.data + row.data, (x, row), lambda g: (g, g.sum(axis=0)), "add_row")


def repeat_rows(v: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of a length-D vector into an n×D matrix."""
    if v.data.ndim != 1:
        raise DimensionError(f"repeat_rows needs a vector, got shape {v.shape}")
    return _make(np.tile(v.data, (n, 1)), (v,), lambda g: (g.sum(axis=0),), "repeat_rows")


# --------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def outer(u: Tensor, v: Tensor) -> Tensor:
    if u.data.ndim != 1 or v.data.ndim != 1:
        raise DimensionError(f"outer needs vectors, got {u.shape} and {v.shape}")
    return matmul(reshape(u, (-1, 1)), reshape(v, (1, -1)))


def row_l2_norms(x: Tensor) -> Tensor:
    """Euclidean norm of each row. Zero rows give 0 with a zero subgradient."""
    if x.data.ndim != 2:
        raise DimensionError(f"row_l2_norms needs a matrix, got shape {x.shape}")
    n = np.sqrt(np.einsum("ij,ij->i", x.data, x.data))

    def back(g):
        safe = np.where(n > 0, n, 1.0)
        return ((g / safe)[:, None] * x.data * (n > 0)[:, None],)

    return _make(n, (x,), back, "row_l2_norms")


def softmax_rows(x: Tensor, mask=None) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max.

    ``mask`` is a boolean array of the same shape with True marking entries
    that take part; masked entries come out exactly 0. A row with no True
    entry raises :class:`InvalidMaskError`.
    """
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows needs a matrix, got shape {x.shape}")
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match {x.shape}")
        empty = ~mask.any(axis=1)
        if empty.any():
            raise InvalidMaskError(f"rows {np.flatnonzero(empty).tolist()} are fully masked")
        logits = np.where(mask, logits, -np.inf)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    out = z / z.sum(axis=1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _make(out, (x,), back, "softmax_rows")


# --------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict:
    """Accumulate d(loss)/d(leaf) for every trainable leaf reachable from ``loss``.

    Leaves get their ``.grad`` overwritten. Returns a dict keyed by leaf
    tensor. Any tensor in ``params`` that the loss does not reach receives a
    zero gradient.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones(loss.shape)
        for node in reversed(_topo_order(loss)):
            g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
            if node._backward is None:
                leaves[id(node)] = node
                continue
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
    out = {}
    for key, leaf in leaves.items():
        leaf.grad = np.asarray(grads.get(key, np.zeros(leaf.shape)), dtype=np.float64).reshape(leaf.shape)
        out[leaf] = leaf.grad
    for p in params or ():
        if p not in out:
            p.grad = np.zeros(p.shape)
            out[p] = p.grad
    return out


def value_and_grad(fn: Callable[..., Tensor], *arrays):
    """Evaluate ``fn`` on fresh leaves built from ``arrays`` and return (value, grads)."""
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(*leaves)
    g = backward(loss, leaves)
    return loss.item(), [g[p] for p in leaves]
