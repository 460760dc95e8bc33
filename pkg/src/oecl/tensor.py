"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value is a :class:`Tensor` wrapping a numpy array.  Operations build a
graph of parent links plus a closure mapping the output gradient to parent
gradients; :func:`backward` walks that graph in reverse topological order.

Graph tensors are never mutated in place.  Inputs are copied on construction,
so mutating an output array can never reach back into an input.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "scale",
    "exp",
    "log",
    "relu",
    "matmul",
    "transpose",
    "reduce",
    "sum",
    "mean",
    "max",
    "logsumexp",
    "take_rows",
    "row_l2_norm",
    "row_normalize",
    "elementwise",
    "backward",
    "grad_check",
]


class Tensor:
    """A node in the autodiff graph.

    Parameters
    ----------
    data : array_like
        Values; always copied and stored as float64.
    requires_grad : bool
        Mark a leaf whose gradient :func:`backward` should populate.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        arr = np.array(data, dtype=np.float64, copy=True)
        if any(n == 0 for n in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def max(self, axis=None):
        return max(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = tuple(parents)
    out.requires_grad = any(p.requires_grad for p in parents)
    out._backward = backward_fn if out.requires_grad else None
    out.op = op
    return out


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise DimensionError(f"shapes {a} and {b} are not broadcastable") from None


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _node(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    if np.any(b.data == 0.0):
        raise DomainError("division by zero")
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _node(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a, c: float) -> Tensor:
    """Multiply by a constant; ``c`` carries no gradient."""
    a = as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,), "scale")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log requires strictly positive input")
    ad = a.data
    return _node(np.log(ad), (a,), lambda g: (g / ad,), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "exp": exp,
    "log": log,
    "relu": relu,
    "scale": scale,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch by name: ``elementwise("mul", a, b)``, ``elementwise("scale", a, 2.0)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# linear algebra and indexing
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _node(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs rank 2, got {a.shape}")
    return _node(a.data.T.copy(), (a,), lambda g: (g.T,), "transpose")


def take_rows(a, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate in the backward pass."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.intp)
    if idx.ndim != 1 or idx.size == 0:
        raise DimensionError("row index must be a non-empty 1-d integer array")
    if idx.min() < -a.shape[0] or idx.max() >= a.shape[0]:
        raise DimensionError(f"row index out of range for {a.shape[0]} rows")
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), bw, "take_rows")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _check_axis(t: Tensor, axis):
    if axis is None:
        return None
    axis = int(axis)
    if not 0 <= axis < t.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {t.ndim}")
    return axis


def sum(a, axis=None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape
    if axis is None:
        return _node(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")
    return _node(
        a.data.sum(axis=axis),
        (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),),
        "sum",
    )


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def max(a, axis=None) -> Tensor:  # noqa: A001
    """Maximum; the gradient goes to one element, the first index among ties."""
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    shape = a.shape
    if axis is None:
        k = int(np.argmax(a.data))

        def bw(g):
            out = np.zeros(shape)
            out.flat[k] = g
            return (out,)

        return _node(np.asarray(a.data.flat[k]), (a,), bw, "max")

    k = np.expand_dims(np.argmax(a.data, axis=axis), axis)

    def bw_axis(g):
        out = np.zeros(shape)
        np.put_along_axis(out, k, np.expand_dims(g, axis), axis=axis)
        return (out,)

    return _node(np.take_along_axis(a.data, k, axis=axis).squeeze(axis), (a,), bw_axis, "max")


def reduce(op: str, t, axis=None) -> Tensor:
    fns = {"sum": sum, "mean": mean, "max": max}
    if op not in fns:
        raise ContractError(f"unknown reduction {op!r}")
    return fns[op](t, axis)


def logsumexp(a, axis=None) -> Tensor:
    """``log(sum(exp(a)))`` evaluated with the max shifted out."""
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s
    if axis is None:
        return _node(np.asarray(out.reshape(())), (a,), lambda g: (soft * g,), "logsumexp")
    return _node(out.squeeze(axis), (a,), lambda g: (soft * np.expand_dims(g, axis),), "logsumexp")


# ---------------------------------------------------------------------------
# row norms
# ---------------------------------------------------------------------------


def row_l2_norm(a) -> Tensor:
    """Euclidean norm of each row.  The gradient at a zero row is zero."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"row_l2_norm needs rank 2, got {a.shape}")
    ad = a.data
    n = np.sqrt(np.einsum("ij,ij->i", ad, ad))
    safe = np.where(n > 0.0, n, 1.0)
    unit = np.where((n > 0.0)[:, None], ad / safe[:, None], 0.0)
    return _node(n, (a,), lambda g: (g[:, None] * unit,), "row_l2_norm")


def row_normalize(a, eps: float = 1e-12) -> Tensor:
    """Divide each row by ``max(norm, eps)``."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"row_normalize needs rank 2, got {a.shape}")
    ad = a.data
    n = np.sqrt(np.einsum("ij,ij->i", ad, ad))
    live = n > eps
    d = np.where(live, n, eps)
    out = ad / d[:, None]

    def bw(g):
        # live rows: (g - z (z.g)) / |v|; clamped rows are a plain scale by 1/eps
        proj = np.einsum("ij,ij->i", out, g)
        gi = (g - np.where(live[:, None], out * proj[:, None], 0.0)) / d[:, None]
        return (gi,)

    return _node(out, (a,), bw, "row_normalize")


# ---------------------------------------------------------------------------
# reverse mode
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
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


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf gradients are overwritten, not accumulated across calls, so repeating
    an identical forward and backward pass reproduces the same gradients.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            node.grad = g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if not node._parents and node.grad is None:
            node.grad = np.zeros_like(node.data)


def grad_check(fn: Callable[..., Tensor], point: Sequence, step: float = 1e-5) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``fn`` receives one Tensor per array in ``point`` and returns a scalar
    Tensor.  Relative error is ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    arrays = [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(p, requires_grad=True) for p in arrays]
    out = fn(*leaves)
    # clear stale grads so unreachable leaves read as zero
    for leaf in leaves:
        leaf.grad = None
    backward(out)
    worst = 0.0
    for i, base in enumerate(arrays):
        analytic = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(base)
        flat = base.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            fp = fn(*[Tensor(a) for a in arrays]).item()
            flat[j] = orig - step
            fm = fn(*[Tensor(a) for a in arrays]).item()
            flat[j] = orig
            numeric = (fp - fm) / (2.0 * step)
            a = float(analytic.reshape(-1)[j])
            err = abs(a - numeric) / np.max([abs(a), abs(numeric), 1e-8])
            worst = err if err > worst else worst
    return float(worst)
