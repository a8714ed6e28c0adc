"""Minimal reverse-mode automatic differentiation over float64 arrays.

Every primitive accepts Nodes or plain ndarrays; plain arrays are constants
and a call with only constants stays in numpy (no graph is built).  Each
primitive's vector-Jacobian products are themselves written with these
primitives, so one rule set serves two backward modes: the fast mode
resolves saved operands to their values and propagates ndarrays, while the
graph mode keeps them as Nodes and builds the gradient as a new graph —
which makes gradients differentiable in turn (double backward, used for
exact meta-gradients).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Node", "value_of", "backward", "grad",
    "add", "sub", "neg", "mul", "div", "recip", "matmul", "transpose",
    "reshape", "exp", "log", "sigmoid", "tanh",
    "rowsum", "colsum", "sum_all", "dot_all",
    "gather_rows", "gather_elems", "slice_cols", "concat_cols", "split_cols",
    "softmax_cross_entropy", "hvp", "fd_hvp",
    "ParameterVector",
]


class Node:
    """One value in a computation graph.

    parents pairs each upstream Node with the vjp that maps this node's
    output gradient to that parent's contribution; vjps take (g, rv) where
    rv resolves a saved operand to its value (fast mode) or leaves it a
    Node (graph mode).
    """

    __slots__ = ("value", "parents")

    def __init__(self, value: np.ndarray, parents: tuple = ()):
        self.value = value
        self.parents = parents

    def __repr__(self) -> str:
        return f"Node(shape={self.value.shape})"


def value_of(x) -> np.ndarray:
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _wrap(args, value, *parent_vjps) -> Node | np.ndarray:
    """A Node when any argument is a Node, else the plain value."""
    live = tuple((p, v) for p, v in parent_vjps if isinstance(p, Node))
    if not any(isinstance(a, Node) for a in args):
        return value
    return Node(value, live)


def _shape(x) -> tuple:
    return value_of(x).shape


def _same_or_scalar(a_shape, b_shape, op: str) -> None:
    if a_shape != b_shape and a_shape != () and b_shape != ():
        raise ValueError(f"{op}: incompatible shapes {a_shape} and {b_shape}")


# ---------------------------------------------------------------------------
# Primitives.  Each vjp is written with these same primitives so it works in
# both backward modes.

def add(a, b):
    av, bv = value_of(a), value_of(b)
    bias = av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]
    bias_rev = bv.ndim == 2 and av.ndim == 1 and bv.shape[1] == av.shape[0]
    if not (bias or bias_rev):
        _same_or_scalar(av.shape, bv.shape, "add")

    def grad_for(x_shape, is_bias):
        if is_bias:
            return lambda g, rv: colsum(g)
        if x_shape == () and (av.shape != () or bv.shape != ()):
            return lambda g, rv: sum_all(g)
        return lambda g, rv: g

    return _wrap(
        (a, b), av + bv,
        (a, grad_for(av.shape, bias_rev)),
        (b, grad_for(bv.shape, bias)),
    )


def neg(x):
    return _wrap((x,), -value_of(x), (x, lambda g, rv: neg(g)))


def sub(a, b):
    return add(a, neg(b))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    _same_or_scalar(av.shape, bv.shape, "mul")

    def grad_for(own_shape, other):
        if own_shape == () and (av.shape != () or bv.shape != ()):
            return lambda g, rv: sum_all(mul(g, rv(other)))
        return lambda g, rv: mul(g, rv(other))

    return _wrap(
        (a, b), av * bv,
        (a, grad_for(av.shape, b)),
        (b, grad_for(bv.shape, a)),
    )


def recip(x):
    out_val = 1.0 / value_of(x)
    out = _wrap((x,), out_val)
    if not isinstance(out, Node):
        return out_val
    out.parents = ((x, lambda g, rv: neg(mul(g, mul(rv(out), rv(out))))),)
    return out


def div(a, b):
    return mul(a, recip(b))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    return _wrap(
        (a, b), av @ bv,
        (a, lambda g, rv: matmul(g, transpose(rv(b)))),
        (b, lambda g, rv: matmul(transpose(rv(a)), g)),
    )


def transpose(x):
    xv = value_of(x)
    if xv.ndim != 2:
        raise ValueError(f"transpose: need a matrix, got shape {xv.shape}")
    return _wrap((x,), xv.T.copy(), (x, lambda g, rv: transpose(g)))


def reshape(x, shape):
    xv = value_of(x)
    orig = xv.shape
    return _wrap((x,), xv.reshape(shape), (x, lambda g, rv: reshape(g, orig)))


def exp(x):
    out_val = np.exp(value_of(x))
    out = _wrap((x,), out_val)
    if not isinstance(out, Node):
        return out_val
    out.parents = ((x, lambda g, rv: mul(g, rv(out))),)
    return out


def log(x):
    return _wrap((x,), np.log(value_of(x)), (x, lambda g, rv: div(g, rv(x))))


def sigmoid(x):
    out_val = 0.5 * (np.tanh(0.5 * value_of(x)) + 1.0)  # overflow-free
    out = _wrap((x,), out_val)
    if not isinstance(out, Node):
        return out_val
    out.parents = ((x, lambda g, rv: mul(g, mul(rv(out), sub(1.0, rv(out))))),)
    return out


def tanh(x):
    out_val = np.tanh(value_of(x))
    out = _wrap((x,), out_val)
    if not isinstance(out, Node):
        return out_val
    out.parents = ((x, lambda g, rv: mul(g, sub(1.0, mul(rv(out), rv(out))))),)
    return out


def rowsum(x):
    xv = value_of(x)
    if xv.ndim != 2:
        raise ValueError(f"rowsum: need a matrix, got shape {xv.shape}")
    n_rows, n_cols = xv.shape
    return _wrap(
        (x,), xv.sum(axis=1),
        (x, lambda g, rv: matmul(reshape(g, (n_rows, 1)), np.ones((1, n_cols)))),
    )


def colsum(x):
    xv = value_of(x)
    if xv.ndim != 2:
        raise ValueError(f"colsum: need a matrix, got shape {xv.shape}")
    n_rows, n_cols = xv.shape
    return _wrap(
        (x,), xv.sum(axis=0),
        (x, lambda g, rv: matmul(np.ones((n_rows, 1)), reshape(g, (1, n_cols)))),
    )


def sum_all(x):
    xv = value_of(x)
    shape = xv.shape
    return _wrap(
        (x,), np.asarray(xv.sum()),
        (x, lambda g, rv: mul(g, np.ones(shape))),
    )


def dot_all(a, b):
    """Sum of the elementwise product (Frobenius inner product)."""
    return sum_all(mul(a, b))


def gather_rows(table, ids):
    """Rows of a (V, E) table selected by integer ids (a constant)."""
    tv = value_of(table)
    ids = np.asarray(ids, dtype=np.intp)
    if tv.ndim != 2 or ids.ndim != 1:
        raise ValueError(f"gather_rows: got table {tv.shape}, ids {ids.shape}")
    scatter = np.zeros((tv.shape[0], ids.shape[0]))
    scatter[ids, np.arange(ids.shape[0])] = 1.0
    return _wrap(
        (table,), tv[ids],
        (table, lambda g, rv: matmul(scatter, g)),
    )


def gather_elems(x, ids):
    """One element per row of a (B, V) matrix, at a constant column index."""
    xv = value_of(x)
    ids = np.asarray(ids, dtype=np.intp)
    if xv.ndim != 2 or ids.shape != (xv.shape[0],):
        raise ValueError(f"gather_elems: got matrix {xv.shape}, ids {ids.shape}")
    n_rows, n_cols = xv.shape
    onehot = np.zeros_like(xv)
    onehot[np.arange(n_rows), ids] = 1.0
    return _wrap(
        (x,), xv[np.arange(n_rows), ids],
        (x, lambda g, rv: mul(onehot, matmul(reshape(g, (n_rows, 1)), np.ones((1, n_cols))))),
    )


def slice_cols(x, lo, hi):
    xv = value_of(x)
    if xv.ndim != 2 or not 0 <= lo <= hi <= xv.shape[1]:
        raise ValueError(f"slice_cols: bad range [{lo}, {hi}) for shape {xv.shape}")
    n_rows, n_cols = xv.shape

    def vjp(g, rv):
        parts = []
        if lo > 0:
            parts.append(np.zeros((n_rows, lo)))
        parts.append(g)
        if hi < n_cols:
            parts.append(np.zeros((n_rows, n_cols - hi)))
        return concat_cols(parts)

    return _wrap((x,), xv[:, lo:hi].copy(), (x, vjp))


def concat_cols(parts):
    vals = [value_of(p) for p in parts]
    if any(v.ndim != 2 for v in vals) or len({v.shape[0] for v in vals}) != 1:
        raise ValueError(f"concat_cols: incompatible shapes {[v.shape for v in vals]}")
    offsets = np.cumsum([0] + [v.shape[1] for v in vals])

    def vjp_for(i):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        return lambda g, rv: slice_cols(g, lo, hi)

    return _wrap(
        tuple(parts), np.concatenate(vals, axis=1),
        *((p, vjp_for(i)) for i, p in enumerate(parts)),
    )


def split_cols(x, n_parts):
    n_cols = _shape(x)[1]
    if n_cols % n_parts:
        raise ValueError(f"split_cols: {n_cols} columns not divisible by {n_parts}")
    width = n_cols // n_parts
    return tuple(slice_cols(x, i * width, (i + 1) * width) for i in range(n_parts))


def softmax_cross_entropy(logits, targets):
    """Per-row cross-entropy of row-softmax(logits) against integer targets.

    The row max is subtracted as a constant shift: the value and all
    derivatives of log-sum-exp are unchanged, and the exponentials stay
    bounded.
    """
    lv = value_of(logits)
    targets = np.asarray(targets, dtype=np.intp)
    if lv.ndim != 2 or targets.shape != (lv.shape[0],):
        raise ValueError(f"softmax_cross_entropy: logits {lv.shape}, targets {targets.shape}")
    shift = lv.max(axis=1, keepdims=True)
    shifted = sub(logits, np.broadcast_to(shift, lv.shape).copy())
    return sub(log(rowsum(exp(shifted))), gather_elems(shifted, targets))


# ---------------------------------------------------------------------------
# Backward passes.

def _topo(loss: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node, wrt: list[Node], graph: bool = False) -> list:
    """Gradients of a scalar loss for each node in wrt.

    graph=False resolves saved operands to values and returns ndarrays;
    graph=True keeps them as Nodes and returns differentiable gradient
    Nodes (plain arrays for genuinely constant gradients).
    """
    if not isinstance(loss, Node):
        raise ValueError("backward: loss is not part of a graph")
    if loss.value.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.value.shape}")
    rv = (lambda x: x) if graph else (lambda x: x.value if isinstance(x, Node) else x)

    grads: dict[int, object] = {id(loss): np.ones(loss.value.shape)}
    for node in reversed(_topo(loss)):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in node.parents:
            contribution = vjp(g, rv)
            acc = grads.get(id(parent))
            grads[id(parent)] = contribution if acc is None else add(acc, contribution)
    return [grads.get(id(w), np.zeros(w.value.shape)) for w in wrt]


def grad(loss: Node, wrt: list[Node]) -> list[np.ndarray]:
    return backward(loss, wrt, graph=False)


def hvp(loss: Node, wrt: list[Node], direction: list[np.ndarray]) -> list[np.ndarray]:
    """Hessian-vector product via double backward: d/dw (grad(loss) . v)."""
    grad_nodes = backward(loss, wrt, graph=True)
    pieces = [
        dot_all(gn, v) for gn, v in zip(grad_nodes, direction) if isinstance(gn, Node)
    ]
    if not pieces:
        return [np.zeros(w.value.shape) for w in wrt]
    total = pieces[0]
    for piece in pieces[1:]:
        total = add(total, piece)
    if not isinstance(total, Node):  # gradient did not depend on wrt
        return [np.zeros(w.value.shape) for w in wrt]
    return backward(total, wrt, graph=False)


def fd_hvp(loss_fn, values: list[np.ndarray], direction: list[np.ndarray],
           eps: float = 1e-5) -> list[np.ndarray]:
    """Central-difference-of-gradients fallback for Hessian-vector products.

    loss_fn maps a list of leaf Nodes to a scalar loss Node.
    """
    def grad_at(vals):
        leaves = [Node(v.copy()) for v in vals]
        return backward(loss_fn(leaves), leaves, graph=False)

    plus = grad_at([v + eps * d for v, d in zip(values, direction)])
    minus = grad_at([v - eps * d for v, d in zip(values, direction)])
    return [(p - m) / (2 * eps) for p, m in zip(plus, minus)]


# ---------------------------------------------------------------------------
# Named parameter collections.

class ParameterVector:
    """Immutable named blocks of float64 arrays with vector arithmetic."""

    __slots__ = ("_blocks",)

    def __init__(self, blocks: dict[str, np.ndarray]):
        seen = {}
        for name, arr in blocks.items():
            seen[name] = np.array(arr, dtype=np.float64)
            seen[name].flags.writeable = False
        self._blocks = seen

    def names(self) -> list[str]:
        return list(self._blocks)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._blocks[name]

    def __iter__(self):
        return iter(self._blocks.items())

    @property
    def size(self) -> int:
        return sum(a.size for a in self._blocks.values())

    def map(self, fn) -> "ParameterVector":
        return ParameterVector({k: fn(v) for k, v in self._blocks.items()})

    def zip_with(self, other: "ParameterVector", fn) -> "ParameterVector":
        if self.names() != other.names():
            raise ValueError("parameter vectors have different blocks")
        return ParameterVector({k: fn(v, other[k]) for k, v in self._blocks.items()})

    def add(self, other: "ParameterVector") -> "ParameterVector":
        return self.zip_with(other, np.add)

    def sub(self, other: "ParameterVector") -> "ParameterVector":
        return self.zip_with(other, np.subtract)

    def scale(self, k: float) -> "ParameterVector":
        return self.map(lambda v: v * k)

    def zeros_like(self) -> "ParameterVector":
        return self.map(np.zeros_like)

    def flatten(self) -> np.ndarray:
        if not self._blocks:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._blocks.values()])

    def unflatten(self, flat: np.ndarray) -> "ParameterVector":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ValueError(f"unflatten: need shape ({self.size},), got {flat.shape}")
        out, offset = {}, 0
        for name, arr in self._blocks.items():
            out[name] = flat[offset:offset + arr.size].reshape(arr.shape)
            offset += arr.size
        return ParameterVector(out)

    def equal(self, other: "ParameterVector") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(v, other[k]) for k, v in self._blocks.items()
        )

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}:{v.shape}" for k, v in self._blocks.items())
        return f"ParameterVector({inner})"
