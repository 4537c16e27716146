"""Hot-kernel dispatch.

Two interchangeable implementations of the inner-loop kernels exist:

* ``numba``: hand-written sequential loops compiled with ``@njit``
  (_numba_impl). Deterministic bit-for-bit across runs.
* ``numpy``: vectorised twins (_numpy_impl). Always available.

Selection: the ``DSN_BACKEND`` environment variable ("numba" or "numpy")
wins if set; otherwise numba is used when it imports, numpy otherwise.
``set_backend`` switches at runtime (used by tests and the benchmark).

Kernel contracts (shared by both implementations; float64 arrays, uint8
masks, C-contiguous):

conv2d_core(xpad, kern, bias, fmask) -> (T, Fo, Co)
    xpad is (T+1, F+2, Ci): row 0 is the one-frame causal history, columns
    0 and F+1 are the symmetric frequency pads. kern is (2, 3, Ci, Co).
    Frequency stride 2, so Fo = (F - 1)//2 + 1. Frames with fmask[t] == 0
    are skipped and left exactly zero.

convt_core(ypad, kern, bias, fmask) -> (T, F, Cp)
    Transposed counterpart. ypad is (T+1, Fo, Cq); out frame t reads ypad
    rows t+1 (tap 0) and t (tap 1). Prepending the zero row to y gives the
    causal decoder (current plus previous frame); appending it gives the
    true adjoint of conv2d_core. kern is (2, 3, Cp, Cq): the same array a
    forward convolution with Ci = Cp, Co = Cq would use. Accumulation runs
    over a full landing pad of width F + 2 which is then cropped by one
    column on each side, so every output frame performs exactly
    2*3*Fo*Cp*Cq multiply-accumulates.

bigru_core(x, wf, uf, bxf, bhf, wb, ub, bxb, bhb, fmask) -> (T, F, 2h)
    Bidirectional GRU over the F axis, restarted from zero state every
    frame. Weight layout: w* is (3h, in), u* is (3h, h), gate rows ordered
    update, reset, candidate. Output is forward state then backward state.
    Skipped frames are exactly zero.

gru_seq_core(x, wmat, umat, bx, bh, g, h0, gated, slim) -> (out, h_last)
    Unidirectional GRU over the T axis, run independently per frequency
    bin. When gated, the input projection including its bias is scaled by
    g[t]; when additionally slim and g[t] == 0 the projection is skipped
    and contributes exact zeros. The recurrence itself always runs and the
    state always updates. h0 is (F, h).

attn_bins_core(q, k, v, fmask) -> (T, F, H, dh)
    Scaled dot-product attention across all F bins within each frame,
    per head. Softmax subtracts the row maximum. Skipped frames are zero.

attn_time_core(q, k, v, qmask, kmask, ctx) -> (T, F, H, dh)
    Causal attention over the time axis, per bin and head. Query t attends
    to keys t' with t - ctx < t' <= t and kmask[t'] set, in ascending
    order. A query with no available keys yields zeros.
"""
import os

from .. import errors
from . import _numpy_impl

_IMPLS = {"numpy": _numpy_impl}

try:
    from . import _numba_impl
    _IMPLS["numba"] = _numba_impl
    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_KERNELS = (
    "conv2d_core",
    "convt_core",
    "bigru_core",
    "gru_seq_core",
    "attn_bins_core",
    "attn_time_core",
)


def _default_backend():
    name = os.environ.get("DSN_BACKEND", "").strip().lower()
    if name:
        if name not in ("numpy", "numba"):
            raise errors.ConfigError(
                f"DSN_BACKEND must be 'numpy' or 'numba', got {name!r}")
        if name == "numba" and not HAS_NUMBA:
            raise errors.ConfigError(
                "DSN_BACKEND=numba but numba is not importable")
        return name
    return "numba" if HAS_NUMBA else "numpy"


_active_name = _default_backend()
_active = _IMPLS[_active_name]


def active_backend():
    """Name of the implementation currently answering kernel calls."""
    return _active_name


def available_backends():
    return tuple(sorted(_IMPLS))


def set_backend(name):
    """Switch kernel implementations at runtime. Returns the previous name."""
    global _active, _active_name
    if name not in _IMPLS:
        raise errors.ConfigError(
            f"unknown backend {name!r}; available: {available_backends()}")
    previous = _active_name
    _active_name = name
    _active = _IMPLS[name]
    return previous


def conv2d_core(xpad, kern, bias, fmask):
    return _active.conv2d_core(xpad, kern, bias, fmask)


def convt_core(ypad, kern, bias, fmask):
    return _active.convt_core(ypad, kern, bias, fmask)


def bigru_core(x, wf, uf, bxf, bhf, wb, ub, bxb, bhb, fmask):
    return _active.bigru_core(x, wf, uf, bxf, bhf, wb, ub, bxb, bhb, fmask)


def gru_seq_core(x, wmat, umat, bx, bh, g, h0, gated, slim):
    return _active.gru_seq_core(x, wmat, umat, bx, bh, g, h0, gated, slim)


def attn_bins_core(q, k, v, fmask):
    return _active.attn_bins_core(q, k, v, fmask)


def attn_time_core(q, k, v, qmask, kmask, ctx):
    return _active.attn_time_core(q, k, v, qmask, kmask, ctx)
