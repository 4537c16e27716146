"""Array primitives: matmul, strided conv pair, activations, stats, init.

Everything is float64. Public ops validate shapes and finiteness and raise
typed errors naming the offending argument; the hot paths inside the model
call the kernels directly and skip re-validation.
"""
import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

__all__ = [
    "as_f64",
    "check_finite",
    "matmul",
    "conv2d",
    "conv2d_transpose",
    "sigmoid",
    "relu",
    "softmax",
    "axis_stats",
    "SeededRng",
    "xavier_init",
]


def as_f64(x, name="array"):
    """Coerce to a C-contiguous float64 ndarray."""
    try:
        out = np.ascontiguousarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ShapeError(f"{name} is not numeric: {exc}") from None
    return out


def check_finite(x, name="array"):
    if not np.isfinite(x).all():
        raise NumericError(f"{name} contains NaN or Inf")
    return x


def matmul(a, b):
    a = as_f64(a, "a")
    b = as_f64(b, "b")
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError("matmul needs at least 1-d operands")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else -1]:
        raise ShapeError(
            f"matmul inner dimensions disagree: a has {a.shape}, b has {b.shape}")
    check_finite(a, "a")
    check_finite(b, "b")
    return a @ b


def _frame_mask(frame_mask, tdim):
    if frame_mask is None:
        return np.ones(tdim, dtype=np.uint8)
    fm = np.ascontiguousarray(frame_mask, dtype=np.uint8)
    if fm.shape != (tdim,):
        raise ShapeError(
            f"frame_mask has shape {fm.shape}, expected ({tdim},)")
    return fm


def conv2d(x, kern, bias=None, frame_mask=None, history=None):
    """Strided causal convolution over (time, frequency, channels).

    x is (T, F, Ci); kern is (2, 3, Ci, Co); time kernel taps cover the
    previous and the current frame, frequency is padded by one bin on each
    side and strided by 2, giving (T, (F-1)//2 + 1, Co). history, when
    given, is the (F, Ci) frame preceding x (used by streaming); otherwise
    the history frame is zero. Frames where frame_mask is 0 are skipped and
    stay exactly zero in the output.
    """
    x = as_f64(x, "x")
    kern = as_f64(kern, "kern")
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (T, F, Ci), got {x.shape}")
    if kern.ndim != 4 or kern.shape[0] != 2 or kern.shape[1] != 3:
        raise ShapeError(f"conv2d kernel must be (2, 3, Ci, Co), got {kern.shape}")
    tdim, fdim, cin = x.shape
    if kern.shape[2] != cin:
        raise ShapeError(
            f"conv2d kernel expects {kern.shape[2]} input channels, input has {cin}")
    cout = kern.shape[3]
    if bias is None:
        bias = np.zeros(cout)
    bias = as_f64(bias, "bias")
    if bias.shape != (cout,):
        raise ShapeError(f"bias has shape {bias.shape}, expected ({cout},)")
    xpad = np.zeros((tdim + 1, fdim + 2, cin))
    xpad[1:, 1:fdim + 1, :] = x
    if history is not None:
        history = as_f64(history, "history")
        if history.shape != (fdim, cin):
            raise ShapeError(
                f"history has shape {history.shape}, expected ({fdim}, {cin})")
        xpad[0, 1:fdim + 1, :] = history
    fm = _frame_mask(frame_mask, tdim)
    return kernels.conv2d_core(xpad, kern, bias, fm)


def conv2d_transpose(y, kern, bias=None, frame_mask=None, causal=False,
                     history=None):
    """Transposed counterpart of conv2d, mapping (T, Fo, Cq) to (T, F, Cp).

    With causal=False this is the exact adjoint of conv2d with the same
    kernel array (kern is (2, 3, Cp, Cq), the array conv2d would use for
    Ci = Cp, Co = Cq); the adjoint is anti-causal, reading frames t and
    t+1. With causal=True the input is delayed by one frame first, so
    output frame t reads y[t] and y[t-1]; that variant is what the decoder
    uses, and history supplies y[-1] for streaming.
    """
    y = as_f64(y, "y")
    kern = as_f64(kern, "kern")
    if y.ndim != 3:
        raise ShapeError(f"conv2d_transpose input must be (T, Fo, Cq), got {y.shape}")
    if kern.ndim != 4 or kern.shape[0] != 2 or kern.shape[1] != 3:
        raise ShapeError(
            f"conv2d_transpose kernel must be (2, 3, Cp, Cq), got {kern.shape}")
    tdim, fin, cq = y.shape
    if kern.shape[3] != cq:
        raise ShapeError(
            f"conv2d_transpose kernel expects {kern.shape[3]} input channels, "
            f"input has {cq}")
    cp = kern.shape[2]
    if bias is None:
        bias = np.zeros(cp)
    bias = as_f64(bias, "bias")
    if bias.shape != (cp,):
        raise ShapeError(f"bias has shape {bias.shape}, expected ({cp},)")
    ypad = np.zeros((tdim + 1, fin, cq))
    if causal:
        ypad[1:] = y
        if history is not None:
            history = as_f64(history, "history")
            if history.shape != (fin, cq):
                raise ShapeError(
                    f"history has shape {history.shape}, expected ({fin}, {cq})")
            ypad[0] = history
    else:
        if history is not None:
            raise ShapeError("history only applies to the causal variant")
        ypad[:tdim] = y
    fm = _frame_mask(frame_mask, tdim)
    return kernels.convt_core(ypad, kern, bias, fm)


def sigmoid(x):
    """Numerically stable logistic function.

    Uses the split form so large arguments saturate to exactly 1.0 or 0.0
    instead of overflowing exp.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def softmax(x, axis=-1):
    """Softmax with max subtraction. A singleton axis gives exactly 1.0."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def axis_stats(x, axis):
    """Population mean and standard deviation along the given axes."""
    x = np.asarray(x, dtype=np.float64)
    return x.mean(axis=axis), x.std(axis=axis)


class SeededRng:
    """Thin wrapper around numpy's PCG64 generator.

    Every stream of draws in the package goes through one of these, so a
    seed pins weight init, gate noise and synthetic test signals.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def gumbel(self, size=None):
        return self._gen.gumbel(0.0, 1.0, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)


def xavier_init(shape, rng, fan_in=None, fan_out=None):
    """Uniform Glorot initialisation on [-b, b], b = sqrt(6/(fan_in+fan_out)).

    By default the last two dimensions are taken as (fan_in, fan_out);
    convolution kernels pass their receptive-field fans explicitly.
    """
    shape = tuple(int(s) for s in shape)
    if fan_in is None or fan_out is None:
        if len(shape) < 2:
            raise ShapeError(
                "xavier_init needs explicit fans for arrays with fewer than "
                "two dimensions")
        fan_in = shape[-2] if fan_in is None else fan_in
        fan_out = shape[-1] if fan_out is None else fan_out
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)
