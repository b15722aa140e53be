"""Minimal reverse-mode differentiable tensor core.

Tensors wrap numpy arrays in float32 (single) or float64 (double).  Every
operation executed while a :class:`Tape` is active registers a backward
closure on that tape; ``Tape.backward(loss)`` replays the closures in
reverse registration order, accumulating ``.grad`` on every tensor that
participates in the graph.  There is no graph pruning, no broadcasting
beyond python scalars, and no batch axis: images are ``(C, H, W)``.

Replaying a tape is deterministic: identical runs produce bitwise-identical
gradients.
"""

from __future__ import annotations

import enum
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .backend import kernels
from .errors import DomainError, NumericError, ShapeError


class Precision(enum.Enum):
    """Compute precision of a graph: single for training, double for checks."""

    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.SINGLE else np.float64)


_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """N-d float array with optional participation in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


_TAPE_STACK: list["Tape"] = []


def active_tape() -> Optional["Tape"]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of executed ops for one forward pass."""

    def __init__(self):
        self._entries: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, output: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._entries.append((output, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and replay entries in reverse order."""
        if loss.ndim != 0:
            raise DomainError("backward is defined only for a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._entries):
            if out.grad is None:
                continue  # not on a path to the loss
            fn(out.grad)


def _wrap(data: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Build the output tensor and register backward_fn if recording."""
    req = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = req
    out.grad = None
    tape = active_tape()
    if req and tape is not None:
        tape.record(out, backward_fn)
    return out


def _check_same_dtype(*tensors: Tensor) -> None:
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(
                f"all tensors in one graph must share one precision, got {dt} and {t.dtype}"
            )


def _coerce_pair(a, b):
    """Allow (Tensor, Tensor) or one python scalar on either side."""
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        _check_same_dtype(a, b)
        if a.shape != b.shape:
            raise ShapeError(f"operand shapes differ: {a.shape} vs {b.shape}")
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    raise TypeError("at least one operand must be a Tensor")


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, target: Tensor) -> np.ndarray:
    """Reduce an output gradient onto an operand's shape (scalar gets summed)."""
    if g.shape == target.shape:
        return g
    return np.asarray(g.sum(), dtype=target.dtype)


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b))

    return _wrap(data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b))

    return _wrap(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b))

    return _wrap(data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    if np.any(b.data == 0):
        raise NumericError("division by zero")
    data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b))

    return _wrap(data, (a, b), bwd)


def abs_(x: Tensor) -> Tensor:
    """|x| with subgradient 0 at the kink."""
    data = np.abs(x.data)

    def bwd(g):
        x.accumulate_grad(g * np.sign(x.data))

    return _wrap(data, (x,), bwd)


def square(x: Tensor) -> Tensor:
    data = x.data * x.data

    def bwd(g):
        x.accumulate_grad(g * (2.0 * x.data))

    return _wrap(data, (x,), bwd)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    """max(x, 0); subgradient 0 at x = 0."""
    data = np.maximum(x.data, 0)

    def bwd(g):
        x.accumulate_grad(g * (x.data > 0))

    return _wrap(data, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    data = np.empty_like(xd)
    pos = xd >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    data[~pos] = ex / (1.0 + ex)

    def bwd(g):
        x.accumulate_grad(g * data * (1.0 - data))

    return _wrap(data, (x,), bwd)


def softmax_channels(x: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis; requires exactly 2 channels."""
    if x.ndim != 3 or x.shape[0] != 2:
        raise ShapeError(f"softmax_channels expects shape (2, H, W), got {x.shape}")
    m = x.data.max(axis=0, keepdims=True)
    e = np.exp(x.data - m)
    data = e / e.sum(axis=0, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=0, keepdims=True)
        x.accumulate_grad(data * (g - dot))

    return _wrap(data, (x,), bwd)


def clip_max(x: Tensor, limit: float) -> Tensor:
    """min(x, limit); gradient passes through below the limit, 0 at or above."""
    data = np.minimum(x.data, x.dtype.type(limit))

    def bwd(g):
        x.accumulate_grad(g * (x.data < limit))

    return _wrap(data, (x,), bwd)


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError("concat_channels expects (C, H, W) tensors")
    if a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"spatial sizes differ: {a.shape[1:]} vs {b.shape[1:]}")
    _check_same_dtype(a, b)
    data = np.concatenate([a.data, b.data], axis=0)
    c1 = a.shape[0]

    def bwd(g):
        a.accumulate_grad(g[:c1])
        b.accumulate_grad(g[c1:])

    return _wrap(data, (a, b), bwd)


def take_channel(x: Tensor, index: int) -> Tensor:
    """Select one channel of a (C, H, W) tensor as an (H, W) tensor."""
    if x.ndim != 3:
        raise ShapeError("take_channel expects a (C, H, W) tensor")
    data = x.data[index].copy()

    def bwd(g):
        full = np.zeros_like(x.data)
        full[index] = g
        x.accumulate_grad(full)

    return _wrap(data, (x,), bwd)


def mul_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant binary (H, W) mask, broadcast over channels."""
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise DomainError("mask values must be 0 or 1")
    if x.ndim == 3:
        if mask.shape != x.shape[1:]:
            raise ShapeError(f"mask shape {mask.shape} does not match {x.shape}")
        m = mask.astype(x.dtype)[None]
    elif x.ndim == 2:
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match {x.shape}")
        m = mask.astype(x.dtype)
    else:
        raise ShapeError("mul_mask expects an (H, W) or (C, H, W) tensor")
    data = x.data * m

    def bwd(g):
        x.accumulate_grad(g * m)

    return _wrap(data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def reduce_sum(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.dtype)

    def bwd(g):
        x.accumulate_grad(g * np.ones_like(x.data))

    return _wrap(data, (x,), bwd)


def reduce_mean(x: Tensor) -> Tensor:
    n = x.data.size
    data = np.asarray(x.data.sum() / n, dtype=x.dtype)

    def bwd(g):
        x.accumulate_grad((g / n) * np.ones_like(x.data))

    return _wrap(data, (x,), bwd)


def mean_spatial(x: Tensor) -> Tensor:
    """(C, H, W) -> (C,): per-channel spatial mean (global average pool)."""
    if x.ndim != 3:
        raise ShapeError("mean_spatial expects a (C, H, W) tensor")
    n = x.shape[1] * x.shape[2]
    data = x.data.mean(axis=(1, 2))

    def bwd(g):
        x.accumulate_grad(np.broadcast_to(g[:, None, None] / n, x.shape).astype(x.dtype, copy=False))

    return _wrap(data, (x,), bwd)


def affine_scalar(v: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Dot product head: w . v + b -> scalar."""
    if v.shape != w.shape or v.ndim != 1:
        raise ShapeError("affine_scalar expects two equal-length vectors")
    if b.ndim != 0:
        raise ShapeError("affine_scalar bias must be a scalar tensor")
    _check_same_dtype(v, w, b)
    data = np.asarray(v.data @ w.data + b.data, dtype=v.dtype)

    def bwd(g):
        v.accumulate_grad(g * w.data)
        w.accumulate_grad(g * v.data)
        b.accumulate_grad(np.asarray(g, dtype=b.dtype).reshape(()))

    return _wrap(data, (v, w, b), bwd)


# ---------------------------------------------------------------------------
# spatial ops (hot kernels live in the selected backend)
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 cross-correlation, padding 1, stride 1: (C_in,H,W) -> (C_out,H,W)."""
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (C_in, H, W), got {x.shape}")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be (C_out, C_in, 3, 3), got {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(
            f"kernel expects {w.shape[1]} input channels, input has {x.shape[0]}"
        )
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias must be ({w.shape[0]},), got {b.shape}")
    _check_same_dtype(x, w, b)

    pad = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
    data = kernels.conv2d_fwd(pad, w.data, b.data)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            # adjoint of a same-padded 3x3 correlation is another one with
            # the kernel flipped spatially and transposed in its channels
            w_t = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
            gpad = np.pad(g, ((0, 0), (1, 1), (1, 1)))
            zero_bias = np.zeros(x.shape[0], dtype=x.dtype)
            x.accumulate_grad(kernels.conv2d_fwd(gpad, w_t, zero_bias))
        if w.requires_grad or b.requires_grad:
            gw, gb = kernels.conv2d_param_grad(pad, g)
            w.accumulate_grad(gw)
            b.accumulate_grad(gb)

    return _wrap(data, (x, w, b), bwd)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max; gradient routes to the first argmax (row-major)."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool2 input must be (C, H, W), got {x.shape}")
    c, h, wd = x.shape
    if h % 2 or wd % 2:
        raise ShapeError(f"maxpool2 needs even H and W, got {h}x{wd}")
    data, arg = kernels.maxpool2_fwd(np.ascontiguousarray(x.data))

    def bwd(g):
        x.accumulate_grad(kernels.maxpool2_bwd(np.ascontiguousarray(g), arg, h, wd))

    return _wrap(data, (x,), bwd)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbor x2; backward sums each parent's 4 child gradients."""
    if x.ndim != 3:
        raise ShapeError(f"upsample2 input must be (C, H, W), got {x.shape}")
    data = x.data.repeat(2, axis=1).repeat(2, axis=2)

    def bwd(g):
        acc = g[:, 0::2, 0::2] + g[:, 0::2, 1::2]
        acc = acc + g[:, 1::2, 0::2]
        acc = acc + g[:, 1::2, 1::2]
        x.accumulate_grad(acc)

    return _wrap(data, (x,), bwd)


Scalar = Union[int, float]
