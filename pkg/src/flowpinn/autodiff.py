"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records primitive array operations in execution order; the
backward pass walks the records in reverse and accumulates adjoints.
Everything is float64.

Trainable parameters enter a tape as `param` leaves that remember their
slice of an external flat parameter vector, so gradients from many
tensor-shaped leaves land in a single vector with stable addressing and
a deterministic accumulation order.

Elementwise ops broadcast like numpy; the backward kernels sum adjoints
over broadcast axes so every gradient matches its primal shape exactly.

The module-level math functions (tanh, exp, log, ...) dispatch on their
argument type: numpy input gives a plain numpy result, a Var records a
tape node, a DualScalar propagates a first-order tangent. Formula code
written against these functions runs unchanged in all three modes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation

Array = np.ndarray

_LEAF_OPS = ("const", "param")


def _f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g: Array, shape: tuple) -> Array:
    """Sum gradient g down to `shape` (the primal operand's shape)."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive op kernels
#
# forward kernel: (input values, ctx) -> output value
# backward kernel: (input values, output value, ctx, out adjoint)
#                  -> one adjoint per input (None = no gradient)

_FWD: dict[str, Callable] = {}
_BWD: dict[str, Callable] = {}


def _register(name, fwd, bwd):
    _FWD[name] = fwd
    _BWD[name] = bwd


_register(
    "add",
    lambda v, ctx: v[0] + v[1],
    lambda v, out, ctx, g: (_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)),
)
_register(
    "sub",
    lambda v, ctx: v[0] - v[1],
    lambda v, out, ctx, g: (_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)),
)
_register(
    "mul",
    lambda v, ctx: v[0] * v[1],
    lambda v, out, ctx, g: (
        _unbroadcast(g * v[1], v[0].shape),
        _unbroadcast(g * v[0], v[1].shape),
    ),
)
_register(
    "div",
    lambda v, ctx: v[0] / v[1],
    lambda v, out, ctx, g: (
        _unbroadcast(g / v[1], v[0].shape),
        _unbroadcast(-g * v[0] / (v[1] * v[1]), v[1].shape),
    ),
)
_register("neg", lambda v, ctx: -v[0], lambda v, out, ctx, g: (-g,))
_register(
    "matmul",
    lambda v, ctx: v[0] @ v[1],
    lambda v, out, ctx, g: (g @ v[1].T, v[0].T @ g),
)
_register(
    "tanh",
    lambda v, ctx: np.tanh(v[0]),
    lambda v, out, ctx, g: (g * (1.0 - out * out),),
)
_register("exp", lambda v, ctx: np.exp(v[0]), lambda v, out, ctx, g: (g * out,))
_register("log", lambda v, ctx: np.log(v[0]), lambda v, out, ctx, g: (g / v[0],))
_register(
    "maximum",
    lambda v, ctx: np.maximum(v[0], v[1]),
    lambda v, out, ctx, g: (
        _unbroadcast(g * (v[0] >= v[1]), v[0].shape),
        _unbroadcast(g * (v[0] < v[1]), v[1].shape),
    ),
)
_register(
    "minimum",
    lambda v, ctx: np.minimum(v[0], v[1]),
    lambda v, out, ctx, g: (
        _unbroadcast(g * (v[0] <= v[1]), v[0].shape),
        _unbroadcast(g * (v[0] > v[1]), v[1].shape),
    ),
)


def _sum_bwd(v, out, ctx, g):
    axis = ctx
    if axis is None:
        return (np.broadcast_to(g, v[0].shape),)
    return (np.broadcast_to(np.expand_dims(g, axis), v[0].shape),)


def _mean_bwd(v, out, ctx, g):
    axis = ctx
    n = v[0].size if axis is None else v[0].shape[axis]
    (gs,) = _sum_bwd(v, out, ctx, g)
    return (gs / n,)


_register("sum", lambda v, ctx: np.sum(v[0], axis=ctx), _sum_bwd)
_register("mean", lambda v, ctx: np.mean(v[0], axis=ctx), _mean_bwd)
_register(
    "reshape",
    lambda v, ctx: np.reshape(v[0], ctx),
    lambda v, out, ctx, g: (np.reshape(g, v[0].shape),),
)


def _gather_cols_bwd(v, out, ctx, g):
    z = np.zeros_like(v[0])
    z[:, ctx] = g
    return (z,)


_register("gather_cols", lambda v, ctx: v[0][:, ctx], _gather_cols_bwd)


def _assemble_cols_fwd(v, ctx):
    width, groups = ctx
    out = np.empty((v[0].shape[0], width), dtype=np.float64)
    for part, cols in zip(v, groups):
        out[:, cols] = part
    return out


def _assemble_cols_bwd(v, out, ctx, g):
    _, groups = ctx
    return tuple(g[:, cols] for cols in groups)


_register("assemble_cols", _assemble_cols_fwd, _assemble_cols_bwd)


# ---------------------------------------------------------------------------
# tape and variables


class Tape:
    """Append-only record of array ops; topologically ordered by construction."""

    def __init__(self) -> None:
        self.ops: list[str] = []
        self.inputs: list[tuple[int, ...]] = []
        self.values: list[Array] = []
        self.ctxs: list = []
        self.param_slices: list = []

    def __len__(self) -> int:
        return len(self.ops)

    def _append(self, op: str, ins: tuple, value: Array, ctx=None, pslice=None) -> "Var":
        self.ops.append(op)
        self.inputs.append(ins)
        self.values.append(value)
        self.ctxs.append(ctx)
        self.param_slices.append(pslice)
        return Var(self, len(self.ops) - 1)

    def constant(self, value) -> "Var":
        return self._append("const", (), _f64(value))

    def parameter(self, value, start: int, stop: int) -> "Var":
        """Leaf addressing [start:stop] of the external flat parameter vector."""
        v = _f64(value)
        if v.size != stop - start:
            raise ContractViolation(
                f"parameter slice [{start}:{stop}] does not match value size {v.size}"
            )
        return self._append("param", (), v, pslice=(start, stop))

    def _apply(self, op: str, ins: Sequence["Var"], ctx=None) -> "Var":
        vals = tuple(self.values[v.idx] for v in ins)
        return self._append(op, tuple(v.idx for v in ins), _FWD[op](vals, ctx), ctx)

    def backward(self, node: "Var") -> list:
        """Adjoints of `node` with respect to every tape node (None if unreachable)."""
        if node.tape is not self:
            raise ContractViolation("node belongs to a different tape")
        if np.ndim(self.values[node.idx]) != 0:
            raise ContractViolation(
                f"backward target must be scalar, got shape {np.shape(self.values[node.idx])}"
            )
        adj: list = [None] * (node.idx + 1)
        adj[node.idx] = _f64(1.0)
        for i in range(node.idx, -1, -1):
            g = adj[i]
            op = self.ops[i]
            if g is None or op in _LEAF_OPS:
                continue
            ins = self.inputs[i]
            vals = tuple(self.values[j] for j in ins)
            grads = _BWD[op](vals, self.values[i], self.ctxs[i], g)
            for j, gj in zip(ins, grads):
                if gj is None:
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
        return adj

    def replay(self) -> list[Array]:
        """Recompute every node value from the leaves with the same kernels."""
        values: list[Array] = []
        for i, op in enumerate(self.ops):
            if op in _LEAF_OPS:
                values.append(self.values[i])
            else:
                vals = tuple(values[j] for j in self.inputs[i])
                values.append(_FWD[op](vals, self.ctxs[i]))
        return values


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")
    __array_ufunc__ = None  # keep numpy from hijacking ndarray <op> Var

    def __init__(self, tape: Tape, idx: int) -> None:
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> Array:
        return self.tape.values[self.idx]

    @property
    def shape(self) -> tuple:
        return self.tape.values[self.idx].shape

    def _coerce(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ContractViolation("operands live on different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape._apply("add", (self, self._coerce(other)))

    def __radd__(self, other):
        return self.tape._apply("add", (self._coerce(other), self))

    def __sub__(self, other):
        return self.tape._apply("sub", (self, self._coerce(other)))

    def __rsub__(self, other):
        return self.tape._apply("sub", (self._coerce(other), self))

    def __mul__(self, other):
        return self.tape._apply("mul", (self, self._coerce(other)))

    def __rmul__(self, other):
        return self.tape._apply("mul", (self._coerce(other), self))

    def __truediv__(self, other):
        return self.tape._apply("div", (self, self._coerce(other)))

    def __rtruediv__(self, other):
        return self.tape._apply("div", (self._coerce(other), self))

    def __matmul__(self, other):
        return self.tape._apply("matmul", (self, self._coerce(other)))

    def __rmatmul__(self, other):
        return self.tape._apply("matmul", (self._coerce(other), self))

    def __neg__(self):
        return self.tape._apply("neg", (self,))

    def sum(self, axis=None):
        return self.tape._apply("sum", (self,), ctx=axis)

    def mean(self, axis=None):
        return self.tape._apply("mean", (self,), ctx=axis)

    def reshape(self, shape):
        return self.tape._apply("reshape", (self,), ctx=tuple(shape))


# ---------------------------------------------------------------------------
# type-dispatched math (numpy | Var | DualScalar)


class DualScalar:
    """First-order jet: a value and a directional-derivative tangent.

    Components are generic: floats, numpy arrays, or Vars all work, and
    duals nest (a DualScalar of DualScalars carries second derivatives).
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent) -> None:
        self.value = value
        self.tangent = tangent

    def _parts(self, other):
        if isinstance(other, DualScalar):
            return other.value, other.tangent
        return other, None

    def __add__(self, other):
        v, t = self._parts(other)
        return DualScalar(self.value + v, self.tangent if t is None else self.tangent + t)

    __radd__ = __add__

    def __sub__(self, other):
        v, t = self._parts(other)
        return DualScalar(self.value - v, self.tangent if t is None else self.tangent - t)

    def __rsub__(self, other):
        v, t = self._parts(other)
        neg = -self.tangent
        return DualScalar(v - self.value, neg if t is None else t - self.tangent)

    def __mul__(self, other):
        v, t = self._parts(other)
        tan = self.tangent * v
        if t is not None:
            tan = tan + self.value * t
        return DualScalar(self.value * v, tan)

    __rmul__ = __mul__

    def __truediv__(self, other):
        v, t = self._parts(other)
        if t is None:
            return DualScalar(self.value / v, self.tangent / v)
        val = self.value / v
        return DualScalar(val, (self.tangent - val * t) / v)

    def __rtruediv__(self, other):
        v, t = self._parts(other)
        val = v / self.value
        tan = -val / self.value * self.tangent
        if t is not None:
            tan = tan + t / self.value
        return DualScalar(val, tan)

    def __neg__(self):
        return DualScalar(-self.value, -self.tangent)

    def __matmul__(self, other):
        if isinstance(other, DualScalar):
            raise ContractViolation("matmul with a dual right operand is not supported")
        return DualScalar(self.value @ other, self.tangent @ other)


def tanh(x):
    if isinstance(x, Var):
        return x.tape._apply("tanh", (x,))
    if isinstance(x, DualScalar):
        t = tanh(x.value)
        return DualScalar(t, (1.0 - t * t) * x.tangent)
    return np.tanh(x)


def exp(x):
    if isinstance(x, Var):
        return x.tape._apply("exp", (x,))
    if isinstance(x, DualScalar):
        e = exp(x.value)
        return DualScalar(e, e * x.tangent)
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return x.tape._apply("log", (x,))
    if isinstance(x, DualScalar):
        return DualScalar(log(x.value), x.tangent / x.value)
    return np.log(x)


def maximum(a, b):
    if isinstance(a, Var):
        return a.tape._apply("maximum", (a, a._coerce(b)))
    if isinstance(b, Var):
        return b.tape._apply("maximum", (b._coerce(a), b))
    return np.maximum(a, b)


def minimum(a, b):
    if isinstance(a, Var):
        return a.tape._apply("minimum", (a, a._coerce(b)))
    if isinstance(b, Var):
        return b.tape._apply("minimum", (b._coerce(a), b))
    return np.minimum(a, b)


def relu(x):
    return maximum(x, 0.0)


def atanh(x):
    if isinstance(x, (Var, DualScalar)):
        return 0.5 * (log(1.0 + x) - log(1.0 - x))
    return np.arctanh(x)


def asum(x, axis=None):
    if isinstance(x, Var):
        return x.sum(axis)
    return np.sum(x, axis=axis)


def amean(x, axis=None):
    if isinstance(x, Var):
        return x.mean(axis)
    return np.mean(x, axis=axis)


def reshape(x, shape):
    if isinstance(x, Var):
        return x.reshape(shape)
    if isinstance(x, DualScalar):
        return DualScalar(reshape(x.value, shape), reshape(x.tangent, shape))
    return np.reshape(x, shape)


def matmul(a, b):
    if isinstance(a, Var) or isinstance(b, Var):
        return (a @ b) if isinstance(a, Var) else b.__rmatmul__(a)
    return a @ b


def gather_cols(x, cols):
    cols = np.asarray(cols, dtype=np.intp)
    if isinstance(x, Var):
        return x.tape._apply("gather_cols", (x,), ctx=cols)
    return x[:, cols]


def assemble_cols(parts, groups, width: int):
    """Build an (n, width) array placing parts[i] at column groups[i]."""
    groups = tuple(np.asarray(g, dtype=np.intp) for g in groups)
    if any(isinstance(p, Var) for p in parts):
        tape = next(p.tape for p in parts if isinstance(p, Var))
        vars_ = tuple(p if isinstance(p, Var) else tape.constant(p) for p in parts)
        return tape._apply("assemble_cols", vars_, ctx=(width, groups))
    return _assemble_cols_fwd(tuple(_f64(p) for p in parts), (width, groups))


def value_of(x) -> Array:
    while isinstance(x, (Var, DualScalar)):
        x = x.value
    return _f64(x)


# ---------------------------------------------------------------------------
# gradient extraction


def grad_params(tape: Tape, loss: Var, n_params: int) -> Array:
    """d loss / d theta for the full flat parameter vector.

    Parameters not reachable from the loss get exactly 0.
    """
    adj = tape.backward(loss)
    out = np.zeros(n_params, dtype=np.float64)
    for i, sl in enumerate(tape.param_slices):
        if sl is not None and i < len(adj) and adj[i] is not None:
            out[sl[0] : sl[1]] += np.asarray(adj[i]).ravel()
    return out


def input_grad(tape: Tape, loss: Var, x: Var) -> Array:
    """Adjoint of one tape node (zeros if the loss does not depend on it)."""
    adj = tape.backward(loss)
    if x.idx < len(adj) and adj[x.idx] is not None:
        return np.asarray(adj[x.idx])
    return np.zeros(x.shape, dtype=np.float64)


# ---------------------------------------------------------------------------
# per-point network derivatives
#
# These accept either a sequence of (W, b) layer pairs or any object with
# a layer_arrays() method. Hidden activations are tanh, output is linear.


def _net_layers(net):
    if hasattr(net, "layer_arrays"):
        return net.layer_arrays()
    return list(net)


def _check_point(x) -> Array:
    x = _f64(x).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ContractViolation("input point has non-finite coordinates")
    return x


def grad_input(net, x) -> Array:
    """Gradient of the scalar network output with respect to the input point."""
    layers = _net_layers(net)
    x = _check_point(x)
    tape = Tape()
    xv = tape.constant(x.reshape(1, -1))
    h = xv
    for i, (W, b) in enumerate(layers):
        h = h @ tape.constant(W) + tape.constant(b)
        if i < len(layers) - 1:
            h = tanh(h)
    return input_grad(tape, h.reshape(()), xv).reshape(-1)


def laplacian(net, x) -> float:
    """Sum of second derivatives of the network output, one jet pass per axis."""
    layers = _net_layers(net)
    x = _check_point(x)
    d = x.size
    h = x.reshape(1, -1)
    D = np.eye(d)
    S = np.zeros((d, d))
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        Dz = D @ W
        Sz = S @ W
        if i < len(layers) - 1:
            t = np.tanh(z)
            f1 = 1.0 - t * t
            h = t
            D = f1 * Dz
            S = f1 * Sz - 2.0 * t * f1 * (Dz * Dz)
        else:
            h, D, S = z, Dz, Sz
    return float(S.sum())
