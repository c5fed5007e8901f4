"""Reverse-mode automatic differentiation on numpy arrays.

A `Tape` records primitive operations in execution order; every value
produced under the tape is a `Tensor` carrying a node id. `backward_pass`
sweeps the tape once in reverse and returns gradients for the leaves.

The op functions at module level (`add`, `matmul`, `sin`, `conv2d`, ...)
are polymorphic: called on plain ndarrays they just compute with numpy and
return an ndarray; called with at least one `Tensor` they record a node on
that tensor's tape. Model code is therefore written once and runs both
with and without gradient tracking.

Dtype follows the inputs (float32 graphs stay float32); gradient checking
should be done on float64 inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ShapeError

TWO_PI = 2.0 * np.pi

__all__ = [
    "Tape", "Tensor", "backward_pass", "grad_check", "GradCheckReport",
    "add", "sub", "mul", "neg", "matmul", "transpose", "reshape", "concat",
    "broadcast_to", "reduce_sum", "reduce_mean", "sin", "cos", "tanh",
    "atan2", "softmax", "log_softmax", "conv2d", "wrap_angle", "value_of",
]


class Node(NamedTuple):
    op: str
    out_id: int
    in_ids: tuple
    bwd: Callable | None  # grad_out -> tuple of grads aligned with in_ids


@dataclass
class Tape:
    """Ordered record of primitive ops; inputs always precede their node."""

    nodes: list = field(default_factory=list)
    _next_id: int = 0

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def leaf(self, value, name: str | None = None) -> "Tensor":
        """Register an input tensor whose gradient will be tracked."""
        data = np.asarray(value)
        nid = self._new_id()
        self.nodes.append(Node("leaf", nid, (), None))
        return Tensor(data, self, nid, name)

    def record(self, op: str, data: np.ndarray, in_ids: tuple, bwd) -> "Tensor":
        nid = self._new_id()
        self.nodes.append(Node(op, nid, in_ids, bwd))
        return Tensor(data, self, nid)


class Tensor:
    """Array value bound to a tape node."""

    __slots__ = ("data", "tape", "nid", "name")

    def __init__(self, data, tape, nid, name=None):
        self.data = data
        self.tape = tape
        self.nid = nid
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, node={self.nid})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a primitive here")
        return mul(self, 1.0 / other)


def value_of(x) -> np.ndarray:
    """Underlying ndarray of a Tensor, or the array itself."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Tensor):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ShapeError("operands come from different tapes")
    return tape


def _nid(x):
    return x.nid if isinstance(x, Tensor) else None


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ash, bsh = av.shape, bv.shape
    return tape.record(
        "add", out, (_nid(a), _nid(b)),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)),
    )


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ash, bsh = av.shape, bv.shape
    return tape.record(
        "sub", out, (_nid(a), _nid(b)),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)),
    )


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    tape = _tape_of(a, b)
    if tape is None:
        return out
    ash = av.shape if isinstance(av, np.ndarray) else ()
    bsh = bv.shape if isinstance(bv, np.ndarray) else ()
    return tape.record(
        "mul", out, (_nid(a), _nid(b)),
        lambda g: (_unbroadcast(g * bv, ash), _unbroadcast(g * av, bsh)),
    )


def neg(a):
    av = value_of(a)
    tape = _tape_of(a)
    if tape is None:
        return -av
    return tape.record("neg", -av, (_nid(a),), lambda g: (-g,))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError("matmul operands must have ndim >= 2")
    out = np.matmul(av, bv)
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def bwd(g):
        da = _unbroadcast(np.matmul(g, bv.swapaxes(-1, -2)), av.shape)
        db = _unbroadcast(np.matmul(av.swapaxes(-1, -2), g), bv.shape)
        return da, db

    return tape.record("matmul", out, (_nid(a), _nid(b)), bwd)


def transpose(a, axes: Sequence[int]):
    av = value_of(a)
    out = np.transpose(av, axes)
    tape = _tape_of(a)
    if tape is None:
        return out
    inv = np.argsort(axes)
    return tape.record(
        "transpose", out, (_nid(a),), lambda g: (np.transpose(g, inv),)
    )


def reshape(a, shape):
    av = value_of(a)
    out = av.reshape(shape)
    tape = _tape_of(a)
    if tape is None:
        return out
    orig = av.shape
    return tape.record("reshape", out, (_nid(a),), lambda g: (g.reshape(orig),))


def concat(parts: Sequence, axis: int = -1):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*parts)
    if tape is None:
        return out
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape.record("concat", out, tuple(_nid(p) for p in parts), bwd)


def broadcast_to(a, shape):
    av = value_of(a)
    out = np.broadcast_to(av, shape).copy()
    tape = _tape_of(a)
    if tape is None:
        return out
    orig = av.shape
    return tape.record(
        "broadcast", out, (_nid(a),), lambda g: (_unbroadcast(g, orig),)
    )


def reduce_sum(a, axis=None, keepdims: bool = False):
    av = value_of(a)
    out = av.sum(axis=axis, keepdims=keepdims)
    tape = _tape_of(a)
    if tape is None:
        return out
    orig = av.shape

    def bwd(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, orig).copy(),)

    return tape.record("sum", out, (_nid(a),), bwd)


def reduce_mean(a, axis=None, keepdims: bool = False):
    av = value_of(a)
    count = av.size if axis is None else np.prod(
        [av.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    out = av.mean(axis=axis, keepdims=keepdims)
    tape = _tape_of(a)
    if tape is None:
        return out
    orig = av.shape
    inv = 1.0 / float(count)

    def bwd(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, orig) * inv,)

    return tape.record("mean", out, (_nid(a),), bwd)


def sin(a):
    av = value_of(a)
    out = np.sin(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record("sin", out, (_nid(a),), lambda g: (g * np.cos(av),))


def cos(a):
    av = value_of(a)
    out = np.cos(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record("cos", out, (_nid(a),), lambda g: (-g * np.sin(av),))


def tanh(a):
    av = value_of(a)
    out = np.tanh(av)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record("tanh", out, (_nid(a),), lambda g: (g * (1.0 - out * out),))


def atan2(y, x):
    yv, xv = value_of(y), value_of(x)
    denom = yv * yv + xv * xv
    if np.any(denom == 0.0):
        raise DomainError("atan2: zero vector has undefined direction")
    out = np.arctan2(yv, xv)
    tape = _tape_of(y, x)
    if tape is None:
        return out

    def bwd(g):
        return (
            _unbroadcast(g * xv / denom, yv.shape),
            _unbroadcast(-g * yv / denom, xv.shape),
        )

    return tape.record("atan2", out, (_nid(y), _nid(x)), bwd)


def softmax(a, axis: int = -1):
    av = value_of(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    tape = _tape_of(a)
    if tape is None:
        return out

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return tape.record("softmax", out, (_nid(a),), bwd)


def log_softmax(a, axis: int = -1):
    av = value_of(a)
    shifted = av - av.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    tape = _tape_of(a)
    if tape is None:
        return out

    def bwd(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return tape.record("log_softmax", out, (_nid(a),), bwd)


def wrap_angle(a):
    """Wrap into [-pi, pi); the gradient passes through unchanged.

    Wrapping is an isometry of the circle almost everywhere, so treating
    it as the identity for differentiation is exact off the seam.
    """
    av = value_of(a)
    out = np.mod(av + np.pi, TWO_PI) - np.pi
    out = np.where(out >= np.pi, out - TWO_PI, out)
    # in-range values pass through bit for bit, matching geometry.wrap
    out = np.where((av >= -np.pi) & (av < np.pi), av, out)
    out = out.astype(av.dtype, copy=False)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record("wrap", out, (_nid(a),), lambda g: (g,))


def conv2d(x, k):
    """2-D cross-correlation with zero 'same' padding, stride 1.

    x: (B, H, W, C_in); k: (kh, kw, C_in, C_out) with odd kh, kw.
    """
    xv, kv = value_of(x), value_of(k)
    if xv.ndim != 4 or kv.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and kernel, got {xv.shape} and {kv.shape}")
    kh, kw, cin, cout = kv.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel sides must be odd, got {kh}x{kw}")
    if xv.shape[3] != cin:
        raise ShapeError(f"conv2d: input has {xv.shape[3]} channels, kernel expects {cin}")
    b, h, w, _ = xv.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(xv, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    out = np.zeros((b, h, w, cout), dtype=np.result_type(xv, kv))
    for u in range(kh):
        for v in range(kw):
            out += np.matmul(xp[:, u:u + h, v:v + w, :], kv[u, v])
    tape = _tape_of(x, k)
    if tape is None:
        return out

    def bwd(g):
        dxp = np.zeros_like(xp)
        dk = np.zeros_like(kv)
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, u:u + h, v:v + w, :]
                dk[u, v] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, u:u + h, v:v + w, :] += np.matmul(g, kv[u, v].T)
        return dxp[:, ph:ph + h, pw:pw + w, :], dk

    return tape.record("conv2d", out, (_nid(x), _nid(k)), bwd)


# ---------------------------------------------------------------------------
# backward sweep and gradient checking
# ---------------------------------------------------------------------------


def backward_pass(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep over the tape; returns {leaf node id: gradient}.

    Each node is visited exactly once. The loss must be a scalar recorded
    on this tape.
    """
    if not isinstance(loss, Tensor) or loss.tape is not tape:
        raise ShapeError("loss is not a tensor recorded on this tape")
    if np.size(loss.data) != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict = {loss.nid: np.ones_like(loss.data)}
    leaf_grads: dict = {}
    for node in reversed(tape.nodes):
        g = grads.pop(node.out_id, None)
        if g is None:
            continue
        if node.op == "leaf":
            leaf_grads[node.out_id] = g
            continue
        for nid, piece in zip(node.in_ids, node.bwd(g)):
            if nid is None or piece is None:
                continue
            if nid in grads:
                grads[nid] = grads[nid] + piece
            else:
                grads[nid] = piece
    return leaf_grads


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients with central differences."""

    max_rel_err: float
    mean_rel_err: float
    n_coords: int
    worst: tuple  # (tensor name, flat index, analytic, numeric)

    def passed(self, tol: float) -> bool:
        return self.max_rel_err < tol

    def to_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "n_coords": self.n_coords,
            "worst": {
                "tensor": self.worst[0],
                "index": int(self.worst[1]),
                "analytic": self.worst[2],
                "numeric": self.worst[3],
            },
        }


def grad_check(f, params: dict, eps: float = 1e-5, n_coords: int = 200,
               seed: int = 0) -> GradCheckReport:
    """Check d f / d params against central finite differences.

    Args:
        f: callable mapping a dict of arrays (or Tensors) to a scalar.
            Must be pure; it is evaluated once under a tape and then
            repeatedly on perturbed plain arrays.
        params: dict of float arrays; checked in float64.
        eps: central difference step.
        n_coords: number of coordinates sampled across all tensors.
        seed: sampling seed.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6); the
    floor keeps genuinely zero gradient coordinates from dividing by zero.
    """
    base = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    tape = Tape()
    leaves = {k: tape.leaf(v, name=k) for k, v in base.items()}
    loss = f(leaves)
    grads = backward_pass(tape, loss)
    analytic = {
        k: grads.get(leaves[k].nid, np.zeros_like(base[k])) for k in base
    }

    names = sorted(base)
    sizes = np.array([base[k].size for k in names], dtype=np.float64)
    rng = np.random.default_rng(seed)
    errs = []
    worst = (names[0], 0, 0.0, 0.0)
    for _ in range(n_coords):
        name = names[rng.choice(len(names), p=sizes / sizes.sum())]
        idx = int(rng.integers(base[name].size))
        bumped = dict(base)
        plus = base[name].copy()
        plus.flat[idx] += eps
        bumped[name] = plus
        f_plus = float(value_of(f(bumped)))
        minus = base[name].copy()
        minus.flat[idx] -= eps
        bumped[name] = minus
        f_minus = float(value_of(f(bumped)))
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[name].flat[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        if not errs or rel > max(errs):
            worst = (name, idx, a, numeric)
        errs.append(rel)
    return GradCheckReport(
        max_rel_err=float(np.max(errs)),
        mean_rel_err=float(np.mean(errs)),
        n_coords=len(errs),
        worst=worst,
    )
