"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every primitive operation is recorded on an append-only :class:`Tape`; a
node's operands always precede it, so one reverse walk over the node list
is a valid backpropagation order. Cotangents are recorded as ordinary
nodes, so a gradient is itself differentiable: running :func:`grad` on a
quantity built from another gradient (backward-of-backward) is how the
input-gradient norm penalty obtains its parameter gradient.

Scope is deliberately small: scalars, vectors, and matrices; elementwise
arithmetic with scalar-only broadcasting; 2-D matmul; row/column
reductions and their adjoint tilings. No general broadcasting, no GPU,
no graph rewriting.

Subgradient conventions (kept deterministic so runs are reproducible):
``clip`` passes gradient through on the closed interval [lo, hi];
``minimum`` routes gradient to the first argument at ties;
``leaky_relu`` uses the negative slope at exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tape",
    "Node",
    "Grad",
    "TapeError",
    "ShapeMismatchError",
    "NonFiniteError",
    "NonScalarOutputError",
    "DetachedParameterError",
    "DegenerateGradientError",
    "grad",
    "finite_diff_check",
    "input_gradient",
    "gradient_norm_penalty",
    "leaky_relu",
    "clip",
    "minimum",
    "matmul",
    "transpose",
    "reshape",
    "sum_rows",
    "sum_cols",
    "tile_rows",
    "tile_cols",
]


class TapeError(Exception):
    """Base class for recording/differentiation errors."""


class ShapeMismatchError(TapeError):
    pass


class NonFiniteError(TapeError):
    pass


class NonScalarOutputError(TapeError):
    pass


class DetachedParameterError(TapeError):
    """Requested gradient target is not an ancestor of the output."""


class DegenerateGradientError(TapeError):
    """Input gradient has an exactly-zero norm; the norm is not
    differentiable there. Callers add a smoothing epsilon."""


# ---------------------------------------------------------------------------
# forward evaluation of primitives


def _fwd_add(v, a):
    return v[0] + v[1]


def _fwd_sub(v, a):
    return v[0] - v[1]


def _fwd_mul(v, a):
    return v[0] * v[1]


def _fwd_div(v, a):
    return v[0] / v[1]


def _fwd_neg(v, a):
    return -v[0]


def _fwd_exp(v, a):
    return np.exp(v[0])


def _fwd_log(v, a):
    return np.log(v[0])


def _fwd_sqrt(v, a):
    return np.sqrt(v[0])


def _fwd_square(v, a):
    return np.square(v[0])


def _fwd_tanh(v, a):
    return np.tanh(v[0])


def _fwd_sigmoid(v, a):
    x = v[0]
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fwd_sigmoid_scalar_safe(x):
    # scalar () arrays cannot be boolean-indexed; route through 1-d
    return _fwd_sigmoid([np.atleast_1d(x)], ()).reshape(x.shape)


def _fwd_leaky_relu(v, a):
    slope = a[0]
    x = v[0]
    if 0.0 <= slope < 1.0:
        # bit-identical to the where() form for these slopes, one less pass
        return np.maximum(x, slope * x)
    return np.where(x > 0.0, x, slope * x)


def _fwd_clip(v, a):
    return np.clip(v[0], a[0], a[1])


def _fwd_minimum(v, a):
    return np.minimum(v[0], v[1])


def _fwd_sum(v, a):
    return np.asarray(v[0].sum(), dtype=np.float64)


def _fwd_mean(v, a):
    return np.asarray(v[0].mean(), dtype=np.float64)


def _fwd_sum_rows(v, a):
    return v[0].sum(axis=1)


def _fwd_sum_cols(v, a):
    return v[0].sum(axis=0)


def _fwd_tile_rows(v, a):
    return np.broadcast_to(v[0], (a[0], v[0].shape[0]))


def _fwd_tile_cols(v, a):
    return np.broadcast_to(v[0][:, None], (v[0].shape[0], a[0]))


def _fwd_matmul(v, a):
    return v[0] @ v[1]


def _fwd_transpose(v, a):
    return v[0].T


def _fwd_reshape(v, a):
    return np.reshape(v[0], a[0])


_FORWARD = {
    "add": _fwd_add,
    "sub": _fwd_sub,
    "mul": _fwd_mul,
    "div": _fwd_div,
    "neg": _fwd_neg,
    "exp": _fwd_exp,
    "log": _fwd_log,
    "sqrt": _fwd_sqrt,
    "square": _fwd_square,
    "tanh": _fwd_tanh,
    "sigmoid": lambda v, a: _fwd_sigmoid_scalar_safe(v[0]),
    "leaky_relu": _fwd_leaky_relu,
    "clip": _fwd_clip,
    "minimum": _fwd_minimum,
    "sum": _fwd_sum,
    "mean": _fwd_mean,
    "sum_rows": _fwd_sum_rows,
    "sum_cols": _fwd_sum_cols,
    "tile_rows": _fwd_tile_rows,
    "tile_cols": _fwd_tile_cols,
    "matmul": _fwd_matmul,
    "transpose": _fwd_transpose,
    "reshape": _fwd_reshape,
}

_ELEMENTWISE_BINARY = {"add", "sub", "mul", "div", "minimum"}


class Node:
    """One recorded value. Immutable once created."""

    __slots__ = ("tape", "index", "op", "parents", "attrs", "value")

    # keep numpy from absorbing Nodes into object arrays; reflected
    # operators lift the array onto the tape instead
    __array_ufunc__ = None

    def __init__(self, tape, index, op, parents, attrs, value):
        self.tape = tape
        self.index = index
        self.op = op
        self.parents = parents
        self.attrs = attrs
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node({self.op}, shape={self.value.shape}, index={self.index})"

    # -- operator sugar ----------------------------------------------------

    def _lift(self, other):
        if isinstance(other, Node):
            if other.tape is not self.tape:
                raise TapeError("nodes belong to different tapes")
            return other
        return self.tape.const(other)

    def __add__(self, other):
        return self.tape._push("add", (self, self._lift(other)))

    def __radd__(self, other):
        return self._lift(other) + self

    def __sub__(self, other):
        return self.tape._push("sub", (self, self._lift(other)))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        return self.tape._push("mul", (self, self._lift(other)))

    def __rmul__(self, other):
        return self._lift(other) * self

    def __truediv__(self, other):
        return self.tape._push("div", (self, self._lift(other)))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return self.tape._push("neg", (self,))

    # -- numpy-flavoured methods -------------------------------------------

    def sum(self):
        return self.tape._push("sum", (self,))

    def mean(self):
        return self.tape._push("mean", (self,))

    def exp(self):
        return self.tape._push("exp", (self,))

    def log(self):
        return self.tape._push("log", (self,))

    def sqrt(self):
        return self.tape._push("sqrt", (self,))

    def square(self):
        return self.tape._push("square", (self,))

    def tanh(self):
        return self.tape._push("tanh", (self,))

    def sigmoid(self):
        return self.tape._push("sigmoid", (self,))

    def reshape(self, shape):
        return reshape(self, shape)


class Tape:
    """Append-only record of primitive operations.

    ``strict=True`` checks every intermediate for NaN/Inf at record time;
    the training hot path leaves it off and checks losses and gradients
    once per step instead.
    """

    __slots__ = ("nodes", "strict")

    def __init__(self, strict: bool = False):
        self.nodes = []
        self.strict = strict

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> Node:
        """Record an input/parameter leaf. Leaves must be finite."""
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeMismatchError(f"rank {arr.ndim} > 2 unsupported")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite leaf value")
        node = Node(self, len(self.nodes), "leaf", (), (), arr)
        self.nodes.append(node)
        return node

    # constants and data inputs are mechanically identical
    const = leaf

    def _push(self, op: str, parents: tuple, attrs: tuple = ()) -> Node:
        if op in _ELEMENTWISE_BINARY:
            sa, sb = parents[0].value.shape, parents[1].value.shape
            if sa != sb and sa != () and sb != ():
                raise ShapeMismatchError(f"{op}: {sa} vs {sb}")
        value = _FORWARD[op]([p.value for p in parents], attrs)
        value = np.asarray(value, dtype=np.float64)
        if self.strict and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite intermediate from {op}")
        node = Node(self, len(self.nodes), op, parents, attrs, value)
        self.nodes.append(node)
        return node

    def replay(self) -> None:
        """Recompute every node from its parents and verify the cached
        forward values bit-exactly."""
        for node in self.nodes:
            if node.op == "leaf":
                continue
            redo = np.asarray(
                _FORWARD[node.op]([p.value for p in node.parents], node.attrs),
                dtype=np.float64,
            )
            if redo.shape != node.value.shape or redo.tobytes() != node.value.tobytes():
                raise TapeError(f"replay mismatch at node {node.index} ({node.op})")


@dataclass(frozen=True)
class Grad:
    """A gradient vector aligned one-to-one with a flat parameter vector."""

    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("non-finite gradient")

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.values))))


# ---------------------------------------------------------------------------
# free functions for the non-operator primitives


def leaky_relu(x: Node, slope: float = 0.2) -> Node:
    return x.tape._push("leaky_relu", (x,), (float(slope),))


def clip(x: Node, lo: float, hi: float) -> Node:
    return x.tape._push("clip", (x,), (float(lo), float(hi)))


def minimum(a: Node, b: Node) -> Node:
    return a.tape._push("minimum", (a, a._lift(b)))


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.value.shape} @ {b.value.shape}")
    return a.tape._push("matmul", (a, b))


def transpose(a: Node) -> Node:
    return a.tape._push("transpose", (a,))


def reshape(x: Node, shape) -> Node:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.value.size:
        raise ShapeMismatchError(f"reshape: {x.value.shape} -> {shape}")
    return x.tape._push("reshape", (x,), (shape,))


def sum_rows(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeMismatchError("sum_rows expects a matrix")
    return x.tape._push("sum_rows", (x,))


def sum_cols(x: Node) -> Node:
    if x.value.ndim != 2:
        raise ShapeMismatchError("sum_cols expects a matrix")
    return x.tape._push("sum_cols", (x,))


def tile_rows(v: Node, n: int) -> Node:
    if v.value.ndim != 1:
        raise ShapeMismatchError("tile_rows expects a vector")
    return v.tape._push("tile_rows", (v,), (int(n),))


def tile_cols(v: Node, m: int) -> Node:
    if v.value.ndim != 1:
        raise ShapeMismatchError("tile_cols expects a vector")
    return v.tape._push("tile_cols", (v,), (int(m),))


def affine(x: Node, w: Node, b: Node) -> Node:
    """x @ w + b with b broadcast across rows."""
    return matmul(x, w) + tile_rows(b, x.value.shape[0])


# ---------------------------------------------------------------------------
# vector-Jacobian products; each returns cotangent Nodes so that gradients
# are themselves differentiable

_VJP = {}


def _vjp_rule(op):
    def deco(fn):
        _VJP[op] = fn
        return fn

    return deco


def _reduce_to(bar: Node, shape) -> Node:
    # undo scalar broadcasting on the scalar side of an elementwise op
    if bar.value.shape == shape:
        return bar
    if shape == ():
        return bar.sum()
    raise ShapeMismatchError(f"cannot reduce {bar.value.shape} to {shape}")


@_vjp_rule("add")
def _vjp_add(node, bar):
    a, b = node.parents
    return (_reduce_to(bar, a.shape), _reduce_to(bar, b.shape))


@_vjp_rule("sub")
def _vjp_sub(node, bar):
    a, b = node.parents
    return (_reduce_to(bar, a.shape), _reduce_to(-bar, b.shape))


@_vjp_rule("mul")
def _vjp_mul(node, bar):
    a, b = node.parents
    return (_reduce_to(bar * b, a.shape), _reduce_to(bar * a, b.shape))


@_vjp_rule("div")
def _vjp_div(node, bar):
    a, b = node.parents
    return (
        _reduce_to(bar / b, a.shape),
        _reduce_to(-(bar * a) / b.square(), b.shape),
    )


@_vjp_rule("neg")
def _vjp_neg(node, bar):
    return (-bar,)


@_vjp_rule("exp")
def _vjp_exp(node, bar):
    return (bar * node,)


@_vjp_rule("log")
def _vjp_log(node, bar):
    return (bar / node.parents[0],)


@_vjp_rule("sqrt")
def _vjp_sqrt(node, bar):
    return ((bar * 0.5) / node,)


@_vjp_rule("square")
def _vjp_square(node, bar):
    return (bar * (node.parents[0] * 2.0),)


@_vjp_rule("tanh")
def _vjp_tanh(node, bar):
    return (bar * (1.0 - node.square()),)


@_vjp_rule("sigmoid")
def _vjp_sigmoid(node, bar):
    return (bar * (node * (1.0 - node)),)


@_vjp_rule("leaky_relu")
def _vjp_leaky_relu(node, bar):
    slope = node.attrs[0]
    x = node.parents[0]
    mask = np.where(x.value > 0.0, 1.0, slope)
    return (bar * node.tape.const(mask),)


@_vjp_rule("clip")
def _vjp_clip(node, bar):
    lo, hi = node.attrs
    x = node.parents[0]
    mask = ((x.value >= lo) & (x.value <= hi)).astype(np.float64)
    return (bar * node.tape.const(mask),)


@_vjp_rule("minimum")
def _vjp_minimum(node, bar):
    a, b = node.parents
    take_a = (np.broadcast_to(a.value, node.value.shape)
              <= np.broadcast_to(b.value, node.value.shape)).astype(np.float64)
    ga = _reduce_to(bar * node.tape.const(take_a), a.shape)
    gb = _reduce_to(bar * node.tape.const(1.0 - take_a), b.shape)
    return (ga, gb)


@_vjp_rule("sum")
def _vjp_sum(node, bar):
    x = node.parents[0]
    return (bar * node.tape.const(np.ones_like(x.value)),)


@_vjp_rule("mean")
def _vjp_mean(node, bar):
    x = node.parents[0]
    return (bar * node.tape.const(np.full_like(x.value, 1.0 / x.value.size)),)


@_vjp_rule("sum_rows")
def _vjp_sum_rows(node, bar):
    return (tile_cols(bar, node.parents[0].value.shape[1]),)


@_vjp_rule("sum_cols")
def _vjp_sum_cols(node, bar):
    return (tile_rows(bar, node.parents[0].value.shape[0]),)


@_vjp_rule("tile_rows")
def _vjp_tile_rows(node, bar):
    return (sum_cols(bar),)


@_vjp_rule("tile_cols")
def _vjp_tile_cols(node, bar):
    return (sum_rows(bar),)


@_vjp_rule("matmul")
def _vjp_matmul(node, bar):
    a, b = node.parents
    return (matmul(bar, transpose(b)), matmul(transpose(a), bar))


@_vjp_rule("transpose")
def _vjp_transpose(node, bar):
    return (transpose(bar),)


@_vjp_rule("reshape")
def _vjp_reshape(node, bar):
    return (reshape(bar, node.parents[0].value.shape),)


# ---------------------------------------------------------------------------
# reverse accumulation


def grad(output: Node, wrt, create_graph: bool = False, allow_unused: bool = False):
    """Gradients of a scalar node with respect to ``wrt`` nodes.

    Returns numpy arrays, or the cotangent Nodes themselves when
    ``create_graph`` is set (making them differentiable in turn).
    """
    if output.value.shape != ():
        raise NonScalarOutputError(f"output has shape {output.value.shape}")
    tape = output.tape
    for w in wrt:
        if w.tape is not tape:
            raise TapeError("wrt node on a different tape")

    nodes = tape.nodes
    wanted = {w.index for w in wrt}
    captured = {}
    bars = {output.index: tape.const(1.0)}
    for i in range(output.index, -1, -1):
        bar = bars.pop(i, None)
        if bar is None:
            continue
        node = nodes[i]
        if i in wanted:
            captured[i] = bar
        if node.op == "leaf":
            continue
        for parent, pbar in zip(node.parents, _VJP[node.op](node, bar)):
            if pbar is None:
                continue
            j = parent.index
            prev = bars.get(j)
            bars[j] = pbar if prev is None else prev + pbar

    out = []
    for w in wrt:
        bar = captured.get(w.index)
        if bar is None:
            if not allow_unused:
                raise DetachedParameterError(
                    f"node {w.index} does not feed the output")
            bar = tape.const(np.zeros_like(w.value))
        out.append(bar if create_graph else bar.value)
    return out


def input_gradient(scores: Node, x: Node) -> Node:
    """Per-sample gradient of summed per-sample scores wrt the batch input.

    ``scores`` must hold one score per row of ``x``; since row i only
    affects score i, differentiating the sum recovers each row's own
    gradient. The result is recorded on the tape and differentiable.
    """
    return grad(scores.sum(), [x], create_graph=True)[0]


def gradient_norm_penalty(scores: Node, x: Node, smooth_eps: float = 0.0) -> Node:
    """Mean squared deviation of per-sample input-gradient norms from 1.

    With ``smooth_eps=0`` an exactly-zero gradient norm raises
    :class:`DegenerateGradientError`; callers pass a small epsilon that is
    added under the square root.
    """
    g = input_gradient(scores, x)
    if g.value.ndim != 2:
        raise ShapeMismatchError("expected a batch input of shape (n, d)")
    sq = sum_rows(g.square())
    if smooth_eps == 0.0:
        if np.any(sq.value == 0.0):
            raise DegenerateGradientError("zero input-gradient norm")
        norms = sq.sqrt()
    else:
        norms = (sq + float(smooth_eps)).sqrt()
    return (norms - 1.0).square().mean()


def finite_diff_check(loss_fn, params: np.ndarray, h: float = 1e-5,
                      flat_atol: float = 0.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` maps a flat parameter vector to ``(value, gradient)``;
    probe evaluations use only the value. The per-coordinate error is
    |analytic - central| / (|analytic| + 1e-12).

    ``flat_atol`` handles structurally flat directions (a loss invariant
    to shifting all scores makes every such derivative an exact zero):
    when both the analytic and the central value fall below it, the two
    roundoff-level zeros count as matched instead of being divided by
    each other.
    """
    params = np.asarray(params, dtype=np.float64)
    _, g = loss_fn(params)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != params.shape:
        raise ShapeMismatchError("gradient/parameter length mismatch")
    worst = 0.0
    for i in range(params.size):
        probe = params.copy()
        probe[i] = params[i] + h
        up = float(loss_fn(probe)[0])
        probe[i] = params[i] - h
        dn = float(loss_fn(probe)[0])
        if not (np.isfinite(up) and np.isfinite(dn)):
            raise NonFiniteError(f"non-finite loss at probe coordinate {i}")
        fd = (up - dn) / (2.0 * h)
        if flat_atol > 0.0 and abs(float(g[i])) < flat_atol and abs(fd) < flat_atol:
            continue
        err = abs(float(g[i]) - fd) / (abs(float(g[i])) + 1e-12)
        worst = max(worst, err)
    return worst
