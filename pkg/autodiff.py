"""
Minimal tensor engine with reverse-mode automatic differentiation
Tensors wrap numpy arrays; operations record themselves on the active tape
so that backward() can replay them in reverse.
"""

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from errors import NonFiniteError, TensorError

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

_dtype: ContextVar = ContextVar("hybridnet_dtype", default=np.float32)
_active_tape: ContextVar = ContextVar("hybridnet_tape", default=None)

ArrayLike = Union[np.ndarray, Sequence, float, int]
Grads = Tuple[Optional[np.ndarray], ...]


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Set the floating point type for tensors created inside the block."""
    token = _dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype.reset(token)


def default_dtype():
    return _dtype.get()


def _check_finite(data: np.ndarray, op: str):
    if data.dtype.kind == "f" and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by {op}")


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype or default_dtype())
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = True
        self._tape: Optional["Tape"] = None

    @classmethod
    def _from_op(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.is_leaf = True
        out._tape = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.size != 1:
            raise TensorError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class TapeEntry(NamedTuple):
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Grads]


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: Callable[[np.ndarray], Grads]):
        self.entries.append(TapeEntry(output, inputs, backward))

    def __len__(self) -> int:
        return len(self.entries)


@contextmanager
def tape() -> Iterator[Tape]:
    """Record operations on a fresh tape for the duration of the block."""
    t = Tape()
    token = _active_tape.set(t)
    try:
        yield t
    finally:
        _active_tape.reset(token)


def _result(data: np.ndarray, inputs: Tuple[Tensor, ...], backward: Callable[[np.ndarray], Grads], op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor._from_op(data)
    t = _active_tape.get()
    if t is not None and any(x.requires_grad for x in inputs):
        out.requires_grad = True
        out.is_leaf = False
        out._tape = t
        t.record(out, inputs, backward)
    return out


def _bias_broadcast(a: Tensor, b: Tensor, op: str) -> bool:
    """True when b is a 1-D vector broadcast over a's leading axes."""
    if a.shape == b.shape:
        return False
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return True
    raise TensorError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_bias(g: np.ndarray, size: int) -> np.ndarray:
    return g.reshape(-1, size).sum(axis=0)


# ============= ELEMENTWISE / LINEAR ALGEBRA =============


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise TensorError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    bcast = _bias_broadcast(a, b, "add")

    def backward(g):
        return g, _reduce_bias(g, b.size) if bcast else g

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    bcast = _bias_broadcast(a, b, "sub")

    def backward(g):
        return g, -(_reduce_bias(g, b.size) if bcast else g)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    bcast = _bias_broadcast(a, b, "mul")

    def backward(g):
        gb = g * a.data
        return g * b.data, _reduce_bias(gb, b.size) if bcast else gb

    return _result(a.data * b.data, (a, b), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)

    def backward(g):
        return (g * c,)

    return _result(x.data * c, (x,), backward, "scale")


def scale_rows(x: Tensor, w: Tensor) -> Tensor:
    """Multiply row r of a 2-D tensor by w[r]."""
    if x.ndim != 2 or w.shape != (x.shape[0],):
        raise TensorError(f"scale_rows: incompatible shapes {x.shape} and {w.shape}")

    def backward(g):
        return g * w.data[:, None], np.sum(g * x.data, axis=1)

    return _result(x.data * w.data[:, None], (x, w), backward, "scale_rows")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    positive = x.data > 0
    factor = np.where(positive, 1.0, slope).astype(x.data.dtype)

    def backward(g):
        return (g * factor,)

    return _result(x.data * factor, (x,), backward, "leaky_relu")


def shifted_softplus(x: Tensor) -> Tensor:
    """ssp(x) = ln(0.5 e^x + 0.5), zero at the origin."""
    out = (np.logaddexp(0.0, x.data) - LN2).astype(x.data.dtype)

    def backward(g):
        return (g * expit(x.data),)

    return _result(out, (x,), backward, "shifted_softplus")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, (x,), backward, "sigmoid")


# ============= SHAPE OPERATIONS =============


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise TensorError("concat: no tensors given")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise TensorError(f"concat: {e}") from e
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(out, tensors, backward, "concat")


def gather_rows(x: Tensor, index: ArrayLike) -> Tensor:
    """Rows (or elements, for 1-D x) selected by an integer index array."""
    index = np.asarray(index, dtype=np.int64)
    if x.ndim not in (1, 2):
        raise TensorError(f"gather_rows: expected 1-D or 2-D tensor, got {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise TensorError(f"gather_rows: index out of range for {x.shape[0]} rows")

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _result(x.data[index], (x,), backward, "gather_rows")


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise TensorError(f"slice_cols: bad range [{start}, {stop}) for shape {x.shape}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _result(x.data[:, start:stop], (x,), backward, "slice_cols")


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise TensorError(f"reshape: {e}") from e

    def backward(g):
        return (g.reshape(x.shape),)

    return _result(out, (x,), backward, "reshape")


# ============= REDUCTIONS =============


def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out, dtype=x.data.dtype), (x,), backward, "sum")


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    if count == 0:
        raise TensorError("mean of an empty tensor")
    return scale(sum(x, axis=axis), 1.0 / count)


def segment_sum(values: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    """Sum rows of values into num_segments buckets, in ascending row order."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape != (values.shape[0],):
        raise TensorError(f"segment_sum: {len(segment_ids)} ids for {values.shape[0]} rows")
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise TensorError("segment_sum: segment id out of range")
    out = np.zeros((num_segments,) + values.shape[1:], dtype=values.data.dtype)
    np.add.at(out, segment_ids, values.data)

    def backward(g):
        return (g[segment_ids],)

    return _result(out, (values,), backward, "segment_sum")


def segment_softmax(scores: Tensor, segment_ids: ArrayLike, num_segments: int) -> Tensor:
    """Softmax of a 1-D score vector within each segment (max-shifted)."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if scores.ndim != 1 or segment_ids.shape != scores.shape:
        raise TensorError(f"segment_softmax: scores {scores.shape} vs ids {segment_ids.shape}")
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise TensorError("segment_softmax: segment id out of range")
    s = scores.data
    peak = np.full(num_segments, -np.inf, dtype=s.dtype)
    np.maximum.at(peak, segment_ids, s)
    e = np.exp(s - peak[segment_ids])
    denom = np.zeros(num_segments, dtype=s.dtype)
    np.add.at(denom, segment_ids, e)
    y = e / denom[segment_ids]

    def backward(g):
        dot = np.zeros(num_segments, dtype=g.dtype)
        np.add.at(dot, segment_ids, g * y)
        return (y * (g - dot[segment_ids]),)

    return _result(y, (scores,), backward, "segment_softmax")


# ============= BACKWARD PASS =============


def backward(loss: Tensor):
    """
    Accumulate d(loss)/d(leaf) into .grad of every leaf that requires grad.
    The loss must be a scalar recorded on a tape.
    """
    if loss.size != 1:
        raise TensorError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TensorError("backward: loss does not depend on any tensor requiring grad")
    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return

    grads = {id(loss): seed}
    for entry in reversed(loss._tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        for x, gx in zip(entry.inputs, entry.backward(g)):
            if gx is None or not x.requires_grad:
                continue
            gx = np.asarray(gx, dtype=x.data.dtype).reshape(x.shape)
            if x.is_leaf:
                x.grad = gx.copy() if x.grad is None else x.grad + gx
            elif id(x) in grads:
                grads[id(x)] = grads[id(x)] + gx
            else:
                grads[id(x)] = gx


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """
    Largest relative error between analytic and central-difference gradients
    of the scalar function f at x. Needs float64 tensors.

    Returns:
        max |a - n| / max(1, |a|, |n|) over all elements of x
    """
    if x.data.dtype != np.float64:
        raise TensorError("grad_check requires float64 tensors")
    x.requires_grad = True
    x.grad = None
    with tape():
        loss = f(x)
    backward(loss)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        f_plus = float(f(x).data)
        flat[i] = original - eps
        f_minus = float(f(x).data)
        flat[i] = original
        numeric.flat[i] = (f_plus - f_minus) / (2.0 * eps)

    scale_ = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale_)) if x.size else 0.0
