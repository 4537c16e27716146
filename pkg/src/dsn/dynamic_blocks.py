"""Gated building blocks: conv pairs, grouped GRUs, multi-head attention.

Every block splits into an always-on static part and a per-frame gated
dynamic part, and supports two execution modes that must agree on binary
gates:

* ``slim``: the dynamic part is structurally skipped on inactive frames
  (the work never happens; its outputs are exact zeros).
* ``masked``: the dynamic part runs densely on every frame and its outputs
  are scaled by the gate value. This is the oracle the slim path is
  verified against, and the only mode defined for soft gates.

The gate enters each block twice: once scaling the dynamic branch outputs
before they join the dynamic-path input, and once (applied by the model)
scaling the block's dynamic-path output before it is added to the streams.
Both scalings multiply by exactly 1.0 on active frames, so slim and masked
agree bit for bit when the gate is hard.

Blocks operate on two running streams of equal width: S carries everything
the static paths can see, D accumulates dynamic-path contributions only
and is exactly zero wherever the gate is closed.

Each forward reports its multiply-accumulate count to an optional counter
via ``counter.add(name, n)``, split into ``<name>.static`` and
``<name>.dynamic`` entries. Counts are closed-form products of the loop
bounds the kernels actually execute; biases and element-wise work are not
counted.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, NumericError, ShapeError
from .policy_gate import GateVector
from .tensor_core import conv2d, conv2d_transpose, xavier_init

SLIM = "slim"
MASKED = "masked"
MODES = (SLIM, MASKED)


def check_mode(mode):
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


def _check_gates(gates, mode, tdim):
    if not isinstance(gates, GateVector):
        raise ShapeError("gates must be a GateVector")
    if len(gates) != tdim:
        raise ShapeError(
            f"gate vector has {len(gates)} frames, input has {tdim}")
    if mode == SLIM and not gates.hard:
        raise NumericError("slim execution requires hard gates")


def _count(counter, name, n):
    if counter is not None and n:
        counter.add(name, int(n))


def window_counts(mask, ctx):
    """Per-frame count of set mask entries in the trailing ctx-frame window.

    Entry t is |{t' : t - ctx < t' <= t, mask[t'] != 0}|, the number of
    keys a causal attention query at frame t can see.
    """
    mask = np.asarray(mask, dtype=np.int64)
    cs = np.concatenate([[0], np.cumsum(mask)])
    t = np.arange(mask.size)
    lo = np.maximum(t - ctx + 1, 0)
    return cs[t + 1] - cs[lo]


# ---------------------------------------------------------------------------
# parameter containers and builders


@dataclass
class LinearParams:
    w: np.ndarray   # (n_in, n_out)
    b: np.ndarray   # (n_out,)


@dataclass
class ConvParams:
    kern: np.ndarray   # (2, 3, ci, co) forward; (2, 3, cp, cq) transposed
    bias: np.ndarray


@dataclass
class DynConvPair:
    static: ConvParams
    dynamic: ConvParams
    transpose: bool = False


@dataclass
class GruDirParams:
    w: np.ndarray    # (3h, n_in), gate rows: update, reset, candidate
    u: np.ndarray    # (3h, h)
    bx: np.ndarray   # (3h,)
    bh: np.ndarray   # (3h,)

    @property
    def in_width(self):
        return self.w.shape[1]


@dataclass
class BiGruParams:
    fwd: GruDirParams
    bwd: GruDirParams


@dataclass
class DynLinear:
    """Grouped projection: sublayers concatenated along the output axis.

    The static sublayers see static-path features; the dynamic sublayers
    see static-path and gated dynamic-path features concatenated, so their
    input is wider.
    """
    static: list
    dynamic: list

    @property
    def out_width(self):
        return sum(p.w.shape[1] for p in self.static)


@dataclass
class FreqGruBlock:
    static_groups: list   # BiGruParams
    dynamic_groups: list
    lin: DynLinear


@dataclass
class TimeGruBlock:
    static_groups: list   # GruDirParams
    dynamic_groups: list
    lin: DynLinear


@dataclass
class DynMhaBlock:
    axis: str            # "freq" or "time"
    q: DynLinear
    k: DynLinear
    v: DynLinear
    out: DynLinear
    n_heads_static: int
    n_heads_dynamic: int
    head_dim: int
    ctx: int = 0         # time axis only

    @property
    def out_width(self):
        return self.out.out_width


def build_linear(n_in, n_out, rng):
    return LinearParams(w=xavier_init((n_in, n_out), rng), b=np.zeros(n_out))


def build_dyn_linear(in_static, in_dynamic, out_total, n_sub, rng):
    if out_total % n_sub:
        raise ConfigError(
            f"output width {out_total} not divisible by {n_sub} sublayers")
    sub = out_total // n_sub
    static = [build_linear(in_static, sub, rng) for _ in range(n_sub)]
    dynamic = ([build_linear(in_dynamic, sub, rng) for _ in range(n_sub)]
               if in_dynamic else [])
    return DynLinear(static=static, dynamic=dynamic)


def build_conv(ci, co, rng, transpose=False):
    shape = (2, 3, co, ci) if transpose else (2, 3, ci, co)
    kern = xavier_init(shape, rng, fan_in=6 * ci, fan_out=6 * co)
    return ConvParams(kern=kern, bias=np.zeros(co))


def build_conv_pair(ci, co, rng, transpose=False):
    return DynConvPair(
        static=build_conv(ci, co, rng, transpose),
        dynamic=build_conv(ci, co, rng, transpose),
        transpose=transpose,
    )


def build_gru_dir(n_in, h, rng):
    return GruDirParams(
        w=xavier_init((3 * h, n_in), rng, fan_in=n_in, fan_out=h),
        u=xavier_init((3 * h, h), rng, fan_in=h, fan_out=h),
        bx=np.zeros(3 * h),
        bh=np.zeros(3 * h),
    )


def build_bigru(n_in, h, rng):
    return BiGruParams(fwd=build_gru_dir(n_in, h, rng),
                       bwd=build_gru_dir(n_in, h, rng))


def build_freq_gru(stream, n_static, n_dynamic, rng):
    """Bidirectional GRU groups over frequency.

    The static groups tile the S stream, the dynamic groups tile the D
    stream; group width equals the hidden size. Each group emits both
    directions, so the linear stage sees 2x the stream per side.
    """
    width = _group_width(stream, n_static)
    static = [build_bigru(width, width, rng) for _ in range(n_static)]
    dynamic = [build_bigru(width, width, rng) for _ in range(n_dynamic)]
    in_s = n_static * 2 * width
    in_d = in_s + n_dynamic * 2 * width if n_dynamic else 0
    return FreqGruBlock(static_groups=static, dynamic_groups=dynamic,
                        lin=build_dyn_linear(in_s, in_d, stream, 2, rng))


def build_time_gru(stream, n_static, n_dynamic, rng):
    width = _group_width(stream, n_static)
    static = [build_gru_dir(width, width, rng) for _ in range(n_static)]
    dynamic = [build_gru_dir(width, width, rng) for _ in range(n_dynamic)]
    in_s = n_static * width
    in_d = in_s + n_dynamic * width if n_dynamic else 0
    return TimeGruBlock(static_groups=static, dynamic_groups=dynamic,
                        lin=build_dyn_linear(in_s, in_d, stream, 2, rng))


def _group_width(stream, n_static):
    if n_static < 1 or stream % n_static:
        raise ConfigError(
            f"{n_static} static groups do not tile a {stream}-wide stream")
    return stream // n_static


def build_mha(axis, stream, n_heads_static, n_heads_dynamic, head_dim, rng,
              ctx=0):
    if n_heads_static * head_dim != stream:
        raise ConfigError(
            f"{n_heads_static} static heads x {head_dim} do not tile the "
            f"{stream}-wide stream")
    if n_heads_dynamic and n_heads_dynamic * head_dim != stream:
        raise ConfigError(
            f"{n_heads_dynamic} dynamic heads x {head_dim} do not tile the "
            f"{stream}-wide stream")
    if axis not in ("freq", "time"):
        raise ConfigError(f"attention axis must be 'freq' or 'time', got {axis!r}")
    in_d = 2 * stream if n_heads_dynamic else 0

    def proj():
        return build_dyn_linear(stream, in_d, stream, 2, rng)

    return DynMhaBlock(
        axis=axis, q=proj(), k=proj(), v=proj(), out=proj(),
        n_heads_static=n_heads_static, n_heads_dynamic=n_heads_dynamic,
        head_dim=head_dim, ctx=ctx,
    )


# ---------------------------------------------------------------------------
# projection helpers


def linear_static(lin, x):
    return np.concatenate([x @ p.w + p.b for p in lin.static], axis=-1)


def linear_dynamic(lin, x):
    return np.concatenate([x @ p.w + p.b for p in lin.dynamic], axis=-1)


def _linear_macs(lin, branch, rows):
    params = lin.static if branch == "static" else lin.dynamic
    return rows * sum(p.w.shape[0] * p.w.shape[1] for p in params)


def _dyn_frames(mode, gates):
    return int(gates.active_mask().sum()) if mode == SLIM else len(gates)


def _scatter_dynamic(lin, x, amask, mode, out_shape):
    """Run the dynamic sublayers, on active frames only in slim mode.

    x has frames on its first axis; the result is dense with exact zeros
    on skipped frames.
    """
    if mode == MASKED:
        return linear_dynamic(lin, x)
    act = np.flatnonzero(amask)
    out = np.zeros(out_shape)
    if act.size:
        out[act] = linear_dynamic(lin, x[act])
    return out


# ---------------------------------------------------------------------------
# convolution pair


def conv_pair_streams(pair, x, gates, mode, counter=None, name="conv",
                      history=None):
    """Encoder pair: returns (static stream, gated dynamic stream).

    Both branches read the same input. The dynamic branch is computed on
    active frames only in slim mode and scaled by the gate, so the dynamic
    stream is exactly zero wherever the gate is closed.
    """
    check_mode(mode)
    _check_gates(gates, mode, x.shape[0])
    if pair.transpose:
        raise ConfigError("conv_pair_streams expects a forward pair")
    g = gates.values
    amask = gates.active_mask()
    s = conv2d(x, pair.static.kern, pair.static.bias, history=history)
    fm = amask if mode == SLIM else None
    d = conv2d(x, pair.dynamic.kern, pair.dynamic.bias, frame_mask=fm,
               history=history)
    d *= g[:, None, None]
    per_frame = s.shape[1] * s.shape[2] * 6 * x.shape[2]
    _count(counter, name + ".static", x.shape[0] * per_frame)
    _count(counter, name + ".dynamic", _dyn_frames(mode, gates) * per_frame)
    return s, d


def conv_pair_merged(pair, y, gates, mode, counter=None, name="deconv",
                     history=None):
    """Decoder pair: static output plus gate-scaled dynamic output."""
    check_mode(mode)
    _check_gates(gates, mode, y.shape[0])
    if not pair.transpose:
        raise ConfigError("conv_pair_merged expects a transposed pair")
    g = gates.values
    amask = gates.active_mask()
    s = conv2d_transpose(y, pair.static.kern, pair.static.bias, causal=True,
                         history=history)
    fm = amask if mode == SLIM else None
    d = conv2d_transpose(y, pair.dynamic.kern, pair.dynamic.bias,
                         frame_mask=fm, causal=True, history=history)
    per_frame = 6 * y.shape[1] * pair.static.kern.shape[2] * y.shape[2]
    _count(counter, name + ".static", y.shape[0] * per_frame)
    _count(counter, name + ".dynamic", _dyn_frames(mode, gates) * per_frame)
    return s + g[:, None, None] * d


# ---------------------------------------------------------------------------
# grouped GRU blocks


def _gru_dir_macs(grp, frames, fdim, recurrent_only=False):
    h3, n_in = grp.w.shape
    h = grp.u.shape[1]
    per_bin = h3 * h if recurrent_only else h3 * (n_in + h)
    return frames * fdim * per_bin


def freq_gru_forward(blk, s_stream, d_stream, gates, mode, counter=None,
                     name="fgru"):
    """Bidirectional GRU over frequency, restarted each frame.

    Static groups read slices of S; dynamic groups read slices of D and
    are whole-frame skippable. Returns (static_path, dynamic_path), each
    the stream width; dynamic_path is None when the block has no dynamic
    groups, and is not yet scaled by the gate (the caller does that when
    adding it to the streams).
    """
    check_mode(mode)
    tdim, fdim, _ = s_stream.shape
    _check_gates(gates, mode, tdim)
    g = gates.values
    amask = gates.active_mask()
    ones = np.ones(tdim, dtype=np.uint8)

    def run_groups(groups, x, fm):
        parts = []
        width = groups[0].fwd.in_width
        for i, grp in enumerate(groups):
            xg = np.ascontiguousarray(x[:, :, i * width:(i + 1) * width])
            parts.append(kernels.bigru_core(
                xg, grp.fwd.w, grp.fwd.u, grp.fwd.bx, grp.fwd.bh,
                grp.bwd.w, grp.bwd.u, grp.bwd.bx, grp.bwd.bh, fm))
        return np.concatenate(parts, axis=2)

    s_out = run_groups(blk.static_groups, s_stream, ones)
    s_macs = sum(2 * _gru_dir_macs(grp.fwd, tdim, fdim)
                 for grp in blk.static_groups)
    s_macs += _linear_macs(blk.lin, "static", tdim * fdim)
    static_path = linear_static(blk.lin, s_out)
    if not blk.dynamic_groups:
        _count(counter, name + ".static", s_macs)
        return static_path, None

    fm = amask if mode == SLIM else ones
    d_out = run_groups(blk.dynamic_groups, d_stream, fm) * g[:, None, None]
    dyn_in = np.concatenate([s_out, d_out], axis=2)
    dynamic_path = _scatter_dynamic(blk.lin, dyn_in, amask, mode,
                                    (tdim, fdim, blk.lin.out_width))
    d_frames = _dyn_frames(mode, gates)
    d_macs = sum(2 * _gru_dir_macs(grp.fwd, d_frames, fdim)
                 for grp in blk.dynamic_groups)
    d_macs += _linear_macs(blk.lin, "dynamic", d_frames * fdim)
    _count(counter, name + ".static", s_macs)
    _count(counter, name + ".dynamic", d_macs)
    return static_path, dynamic_path


def time_gru_forward(blk, s_stream, d_stream, gates, mode, counter=None,
                     name="tgru", h0=None):
    """Unidirectional GRU over time, run per frequency bin.

    Static groups run unconditionally. Dynamic groups are partially
    dynamic: the input projection (bias included) is scaled by the gate
    and skipped entirely on inactive frames in slim mode, while the
    recurrence always runs and the hidden state always advances; the
    recurrent work is therefore booked as static cost. h0, when given, is
    the (n_groups, F, h) initial state; the final state is returned for
    streaming.
    """
    check_mode(mode)
    tdim, fdim, _ = s_stream.shape
    _check_gates(gates, mode, tdim)
    g = gates.values
    amask = gates.active_mask()
    width = blk.static_groups[0].in_width
    n_static = len(blk.static_groups)
    n_groups = n_static + len(blk.dynamic_groups)
    if h0 is None:
        h0 = np.zeros((n_groups, fdim, width))
    h_last = np.empty_like(h0)

    s_parts = []
    for i, grp in enumerate(blk.static_groups):
        xg = np.ascontiguousarray(s_stream[:, :, i * width:(i + 1) * width])
        out, h_last[i] = kernels.gru_seq_core(
            xg, grp.w, grp.u, grp.bx, grp.bh, g, h0[i], False, False)
        s_parts.append(out)
    s_out = np.concatenate(s_parts, axis=2)
    s_macs = sum(_gru_dir_macs(grp, tdim, fdim) for grp in blk.static_groups)
    # the dynamic groups' recurrence is always-on cost
    s_macs += sum(_gru_dir_macs(grp, tdim, fdim, recurrent_only=True)
                  for grp in blk.dynamic_groups)
    s_macs += _linear_macs(blk.lin, "static", tdim * fdim)
    static_path = linear_static(blk.lin, s_out)
    if not blk.dynamic_groups:
        _count(counter, name + ".static", s_macs)
        return static_path, None, h_last

    d_parts = []
    for i, grp in enumerate(blk.dynamic_groups):
        xg = np.ascontiguousarray(d_stream[:, :, i * width:(i + 1) * width])
        out, h_last[n_static + i] = kernels.gru_seq_core(
            xg, grp.w, grp.u, grp.bx, grp.bh, g, h0[n_static + i],
            True, mode == SLIM)
        d_parts.append(out)
    d_out = np.concatenate(d_parts, axis=2) * g[:, None, None]
    dyn_in = np.concatenate([s_out, d_out], axis=2)
    dynamic_path = _scatter_dynamic(blk.lin, dyn_in, amask, mode,
                                    (tdim, fdim, blk.lin.out_width))
    d_frames = _dyn_frames(mode, gates)
    d_macs = sum(d_frames * fdim * grp.w.shape[0] * grp.w.shape[1]
                 for grp in blk.dynamic_groups)
    d_macs += _linear_macs(blk.lin, "dynamic", d_frames * fdim)
    _count(counter, name + ".static", s_macs)
    _count(counter, name + ".dynamic", d_macs)
    return static_path, dynamic_path, h_last


# ---------------------------------------------------------------------------
# multi-head attention block


def _attn_macs(n_heads, head_dim, fdim, axis, key_counts=None, frames=0):
    """Score plus value-mix MACs. key_counts is the per-query key
    availability on the time axis; the frequency axis attends across all
    bins of `frames` frames."""
    if axis == "freq":
        return frames * n_heads * fdim * fdim * head_dim * 2
    return int(key_counts.sum()) * n_heads * fdim * head_dim * 2


def mha_forward(blk, s_stream, d_stream, gates, mode, counter=None,
                name="mha"):
    """Attention over frequency bins (within a frame) or over past frames.

    Static heads project from S; dynamic heads project from S and D
    concatenated and are whole-frame skippable. On the time axis the
    dynamic heads' keys and values exist only for active frames, so a
    dynamic query attends over the active frames within its context
    window; masked mode reproduces exactly that key set while computing
    every query densely. Returns (static_path, dynamic_path or None),
    dynamic_path not yet gate-scaled.
    """
    check_mode(mode)
    tdim, fdim, _ = s_stream.shape
    _check_gates(gates, mode, tdim)
    g = gates.values
    amask = gates.active_mask()
    ones = np.ones(tdim, dtype=np.uint8)
    hs, hd, dh = blk.n_heads_static, blk.n_heads_dynamic, blk.head_dim

    qs = linear_static(blk.q, s_stream).reshape(tdim, fdim, hs, dh)
    ks = linear_static(blk.k, s_stream).reshape(tdim, fdim, hs, dh)
    vs = linear_static(blk.v, s_stream).reshape(tdim, fdim, hs, dh)
    if blk.axis == "freq":
        a_s = kernels.attn_bins_core(qs, ks, vs, ones)
        s_attn = _attn_macs(hs, dh, fdim, "freq", frames=tdim)
    else:
        a_s = kernels.attn_time_core(qs, ks, vs, ones, ones, blk.ctx)
        s_attn = _attn_macs(hs, dh, fdim, "time",
                            key_counts=window_counts(ones, blk.ctx))
    a_s = a_s.reshape(tdim, fdim, hs * dh)
    s_macs = sum(_linear_macs(p, "static", tdim * fdim)
                 for p in (blk.q, blk.k, blk.v, blk.out)) + s_attn
    static_path = linear_static(blk.out, a_s)
    if not blk.q.dynamic:
        _count(counter, name + ".static", s_macs)
        return static_path, None

    xd = np.concatenate([s_stream, d_stream], axis=2)
    shape3 = (tdim, fdim, hd * dh)
    qd = _scatter_dynamic(blk.q, xd, amask, mode, shape3).reshape(
        tdim, fdim, hd, dh)
    kd = _scatter_dynamic(blk.k, xd, amask, mode, shape3).reshape(
        tdim, fdim, hd, dh)
    vd = _scatter_dynamic(blk.v, xd, amask, mode, shape3).reshape(
        tdim, fdim, hd, dh)
    if blk.axis == "freq":
        fm = amask if mode == SLIM else ones
        a_d = kernels.attn_bins_core(qd, kd, vd, fm)
        d_attn = _attn_macs(hd, dh, fdim, "freq",
                            frames=_dyn_frames(mode, gates))
    else:
        qm = amask if mode == SLIM else ones
        a_d = kernels.attn_time_core(qd, kd, vd, qm, amask, blk.ctx)
        counts = window_counts(amask, blk.ctx)
        if mode == SLIM:
            counts = counts * (amask != 0)
        d_attn = _attn_macs(hd, dh, fdim, "time", key_counts=counts)
    a_d = a_d.reshape(tdim, fdim, hd * dh) * g[:, None, None]

    dyn_in = np.concatenate([a_s, a_d], axis=2)
    dynamic_path = _scatter_dynamic(blk.out, dyn_in, amask, mode,
                                    (tdim, fdim, blk.out_width))
    rows_d = _dyn_frames(mode, gates) * fdim
    d_macs = sum(_linear_macs(p, "dynamic", rows_d)
                 for p in (blk.q, blk.k, blk.v, blk.out)) + d_attn
    _count(counter, name + ".static", s_macs)
    _count(counter, name + ".dynamic", d_macs)
    return static_path, dynamic_path


# ---------------------------------------------------------------------------
# streaming step for the time-attention block


@dataclass
class TimeAttnCache:
    """Ring buffers of per-frame keys and values for streaming attention.

    Slots hold the last ctx frames; a validity flag marks slots that have
    been written (static ring) or were written by an active frame (dynamic
    ring). The slot index is the absolute frame number modulo ctx, and
    `frame` is the index of the frame about to be processed.
    """
    ctx: int
    fdim: int
    n_heads_static: int
    n_heads_dynamic: int
    head_dim: int
    frame: int = 0
    ks: np.ndarray = None
    vs: np.ndarray = None
    kd: np.ndarray = None
    vd: np.ndarray = None
    valid_s: np.ndarray = None
    valid_d: np.ndarray = None

    def __post_init__(self):
        shape_s = (self.ctx, self.fdim, self.n_heads_static, self.head_dim)
        self.ks = np.zeros(shape_s)
        self.vs = np.zeros(shape_s)
        self.valid_s = np.zeros(self.ctx, dtype=np.uint8)
        if self.n_heads_dynamic:
            shape_d = (self.ctx, self.fdim, self.n_heads_dynamic,
                       self.head_dim)
            self.kd = np.zeros(shape_d)
            self.vd = np.zeros(shape_d)
            self.valid_d = np.zeros(self.ctx, dtype=np.uint8)

    def nbytes(self):
        total = self.ks.nbytes + self.vs.nbytes + self.valid_s.nbytes
        if self.kd is not None:
            total += self.kd.nbytes + self.vd.nbytes + self.valid_d.nbytes
        return total


def _ring_window(cache, ring, valid):
    """Materialise the ring in ascending frame order, oldest first.

    Covers the min(frame+1, ctx) most recent frames including the current
    one, which must already be written.
    """
    n = min(cache.frame + 1, cache.ctx)
    frames = np.arange(cache.frame - n + 1, cache.frame + 1)
    slots = frames % cache.ctx
    return np.ascontiguousarray(ring[slots]), np.ascontiguousarray(valid[slots])


def mha_time_step(blk, s_t, d_t, g_t, mode, cache, counter=None, name="mha"):
    """One streaming frame of the time-attention block.

    s_t and d_t are (1, F, stream); g_t is the scalar gate for the frame
    cache.frame. The rings are advanced in place. Keys are visited oldest
    first, matching the offline kernel's accumulation order, so on the
    numba backend streaming is bit-identical to the offline forward.
    """
    check_mode(mode)
    fdim = s_t.shape[1]
    hs, hd, dh = blk.n_heads_static, blk.n_heads_dynamic, blk.head_dim
    active = g_t != 0.0
    slot = cache.frame % cache.ctx

    qs = linear_static(blk.q, s_t).reshape(1, fdim, hs, dh)
    cache.ks[slot] = linear_static(blk.k, s_t).reshape(fdim, hs, dh)
    cache.vs[slot] = linear_static(blk.v, s_t).reshape(fdim, hs, dh)
    cache.valid_s[slot] = 1

    kwin, kmask = _ring_window(cache, cache.ks, cache.valid_s)
    vwin, _ = _ring_window(cache, cache.vs, cache.valid_s)
    n = kwin.shape[0]
    qwin = np.zeros((n, fdim, hs, dh))
    qwin[n - 1] = qs[0]
    qmask = np.zeros(n, dtype=np.uint8)
    qmask[n - 1] = 1
    a_s = kernels.attn_time_core(qwin, kwin, vwin, qmask, kmask,
                                 cache.ctx)[n - 1].reshape(1, fdim, hs * dh)
    s_macs = sum(_linear_macs(p, "static", fdim)
                 for p in (blk.q, blk.k, blk.v, blk.out))
    s_macs += int(kmask.sum()) * hs * fdim * dh * 2

    static_path = linear_static(blk.out, a_s)
    if not blk.q.dynamic:
        _count(counter, name + ".static", s_macs)
        cache.frame += 1
        return static_path, None

    run_dyn = active or mode == MASKED
    d_macs = 0
    if run_dyn:
        xd = np.concatenate([s_t, d_t], axis=2)
        qd = linear_dynamic(blk.q, xd).reshape(1, fdim, hd, dh)
        cache.kd[slot] = linear_dynamic(blk.k, xd).reshape(fdim, hd, dh)
        cache.vd[slot] = linear_dynamic(blk.v, xd).reshape(fdim, hd, dh)
        d_macs += sum(_linear_macs(p, "dynamic", fdim)
                      for p in (blk.q, blk.k, blk.v))
    else:
        qd = np.zeros((1, fdim, hd, dh))
        cache.kd[slot] = 0.0
        cache.vd[slot] = 0.0
    cache.valid_d[slot] = 1 if active else 0

    a_d = np.zeros((1, fdim, hd * dh))
    if run_dyn:
        kwin, kmask = _ring_window(cache, cache.kd, cache.valid_d)
        vwin, _ = _ring_window(cache, cache.vd, cache.valid_d)
        qwin = np.zeros((n, fdim, hd, dh))
        qwin[n - 1] = qd[0]
        a_d = kernels.attn_time_core(
            qwin, kwin, vwin, qmask, kmask,
            cache.ctx)[n - 1].reshape(1, fdim, hd * dh)
        d_macs += int(kmask.sum()) * hd * fdim * dh * 2
    a_d = a_d * g_t

    if run_dyn:
        dyn_in = np.concatenate([a_s, a_d], axis=2)
        dynamic_path = linear_dynamic(blk.out, dyn_in)
        d_macs += _linear_macs(blk.out, "dynamic", fdim)
    else:
        dynamic_path = np.zeros((1, fdim, blk.out_width))
    _count(counter, name + ".static", s_macs)
    _count(counter, name + ".dynamic", d_macs)
    cache.frame += 1
    return static_path, dynamic_path
