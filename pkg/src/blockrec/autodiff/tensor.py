"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every primitive records its parents and a closure mapping the upstream
gradient to per-parent gradients. ``Tensor.backward`` topologically sorts the
recorded graph and accumulates adjoints into leaf tensors.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from blockrec.errors import ContractError, DimensionError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (evaluation / greedy inference)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim and 0 in arr.shape:
            raise DimensionError(f"tensor dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # operator sugar; all dispatch to the module-level primitives
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _lift(other))

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(_lift(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __getitem__(self, index):
        return take(self, index)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Only scalar outputs are accepted unless an explicit seed gradient is
        supplied.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    f"backward() needs a scalar loss, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise DimensionError(f"seed gradient {grad.shape} != output {self.shape}")
        if not self.requires_grad:
            return

        order = _topological_order(self)
        adjoints = {id(self): grad}
        for node in order:
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=np.float64)
                else:
                    node.grad = node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + pg
                else:
                    adjoints[key] = pg


def _topological_order(root: Tensor) -> list:
    # iterative DFS post-order, reversed: every node precedes its inputs
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    order.reverse()
    return order


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = _stable_sigmoid(a.data)
    return _node(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _node(y, (a,), lambda g: (g * y,))


def elementwise(op: str, *inputs: Tensor) -> Tensor:
    """Dispatch by name: ``tanh``, ``sigmoid``, ``add`` or ``mul``."""
    unary = {"tanh": tanh, "sigmoid": sigmoid}
    binary = {"add": add, "mul": mul}
    if op in unary:
        if len(inputs) != 1:
            raise ContractError(f"{op} takes one input, got {len(inputs)}")
        return unary[op](inputs[0])
    if op in binary:
        if len(inputs) != 2:
            raise ContractError(f"{op} takes two inputs, got {len(inputs)}")
        return binary[op](*inputs)
    raise ContractError(f"unknown elementwise op {op!r}")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` where ``b`` broadcasts over the leading axes of ``x``.

    ``b`` may also carry explicit singleton axes (e.g. ``[K, 1, d]`` against
    ``[K, n, d]``); that is the only broadcasting the package supports.
    """
    try:
        out = x.data + b.data
    except ValueError:
        raise DimensionError(f"add_bias: cannot broadcast {b.shape} onto {x.shape}") from None
    if out.shape != x.shape:
        raise DimensionError(f"add_bias: bias {b.shape} would enlarge {x.shape}")
    bshape = b.shape
    lead = x.ndim - b.ndim
    singleton = tuple(i + lead for i, s in enumerate(bshape) if s == 1 and x.shape[i + lead] != 1)

    def backward(g):
        gb = g.sum(axis=tuple(range(lead))) if lead else g
        if singleton:
            gb = gb.sum(axis=tuple(i - lead for i in singleton), keepdims=True)
        return g, gb.reshape(bshape)

    return _node(out, (x, b), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands (numpy ``@`` semantics)."""
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul expects 1-D or 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        a2 = ad if ad.ndim == 2 else ad[None, :]
        b2 = bd if bd.ndim == 2 else bd[:, None]
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = (g2 @ b2.T).reshape(ad.shape)
        gb = (a2.T @ g2).reshape(bd.shape)
        return ga, gb

    return _node(ad @ bd, (a, b), backward)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product ``[B, m, k] @ [B, k, n] -> [B, m, n]``."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm: incompatible shapes {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g

    return _node(ad @ bd, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {a.shape}")
    return _node(a.data.T, (a,), lambda g: (g.T,))


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape: tuple) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {src} as {shape}") from None
    return _node(out, (a,), lambda g: (g.reshape(src),))


def take(a: Tensor, index) -> Tensor:
    """Numpy indexing with a scattering adjoint (repeated indices accumulate)."""
    out = a.data[index]
    out = np.array(out, dtype=np.float64)
    src = a.shape

    def backward(g):
        full = np.zeros(src)
        np.add.at(full, index, g)
        return (full,)

    return _node(out, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, tensors, backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(out, tensors, backward)


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a vector ``n`` times as the rows of a matrix."""
    if v.ndim != 1:
        raise DimensionError(f"tile_rows expects a vector, got {v.shape}")
    out = np.broadcast_to(v.data, (n, v.shape[0])).copy()
    return _node(out, (v,), lambda g: (g.sum(axis=0),))


# ---------------------------------------------------------------------------
# reductions and nonlinear pooling
# ---------------------------------------------------------------------------


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    src = a.shape
    return _node(np.array(a.data.sum()), (a,), lambda g: (np.full(src, float(g)),))


def mean(a: Tensor) -> Tensor:
    return scale(sum(a), 1.0 / a.size)


def maxout(x: Tensor, pool: int) -> Tensor:
    """Max over contiguous groups of ``pool`` entries along the last axis.

    Entry ``j`` of the output is ``max(x[..., j*pool:(j+1)*pool])``. The
    adjoint routes to the first maximal element of each group only.
    """
    if pool < 1:
        raise DimensionError(f"maxout pool must be >= 1, got {pool}")
    width = x.shape[-1]
    if width % pool:
        raise DimensionError(f"maxout: last axis {width} not divisible by pool {pool}")
    grouped = x.data.reshape(x.shape[:-1] + (width // pool, pool))
    out = grouped.max(axis=-1)
    src = x.shape

    def backward(g):
        route = np.arange(pool) == grouped.argmax(axis=-1)[..., None]
        return ((route * g[..., None]).reshape(src),)

    return _node(out, (x,), backward)


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, target, return_probs: bool = False):
    """``-log softmax(logits)[target]``.

    ``logits`` is either ``[n]`` with an integer target, or ``[K, n]`` with
    ``K`` targets, in which case the K row losses are summed.
    """
    z = logits.data
    if z.ndim == 1:
        targets = np.array([target], dtype=np.int64)
        rows = z[None, :]
    elif z.ndim == 2:
        targets = np.asarray(target, dtype=np.int64).reshape(-1)
        if targets.shape[0] != z.shape[0]:
            raise DimensionError(f"{z.shape[0]} logit rows but {targets.shape[0]} targets")
        rows = z
    else:
        raise DimensionError(f"softmax_cross_entropy expects 1-D/2-D logits, got {z.shape}")
    n = rows.shape[1]
    if np.any(targets < 0) or np.any(targets >= n):
        raise IndexError(f"target {targets.tolist()} out of range for {n} classes")
    logp = log_softmax(rows)
    probs = np.exp(logp)
    picked = np.arange(rows.shape[0])
    loss = np.array(-logp[picked, targets].sum())

    def backward(g):
        d = probs.copy()
        d[picked, targets] -= 1.0
        return (float(g) * d.reshape(z.shape),)

    out = _node(loss, (logits,), backward)
    if return_probs:
        return out, probs.reshape(z.shape)
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets."""
    z = logits.data
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise DimensionError(f"bce: targets {t.shape} vs logits {z.shape}")
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    p = _stable_sigmoid(z)
    count = z.size

    def backward(g):
        return (float(g) * (p - t) / count,)

    return _node(np.array(per.mean()), (logits,), backward)


def parameters_of(tensors: Iterable[Tensor]) -> list:
    return [t for t in tensors if t.requires_grad]
