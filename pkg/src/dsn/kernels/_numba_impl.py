"""Loop kernels compiled with numba.

Every kernel is a single-threaded sequential loop: no prange, no fastmath.
Summation order is therefore fixed, and results are bit-identical from run
to run regardless of thread count or array layout upstream. The pure-numpy
twins live in _numpy_impl; the shared contracts are documented in
kernels/__init__.py.

All float arrays are C-contiguous float64, frame masks are uint8.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(a):
    # Split form: never evaluates exp of a large positive argument, so
    # sigmoid(500.0) is exactly 1.0 instead of overflowing.
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def conv2d_core(xpad, kern, bias, fmask):
    tdim = xpad.shape[0] - 1
    fpad = xpad.shape[1]
    cin = xpad.shape[2]
    cout = kern.shape[3]
    fout = (fpad - 3) // 2 + 1
    out = np.zeros((tdim, fout, cout))
    acc = np.empty(cout)
    for t in range(tdim):
        if fmask[t] == 0:
            continue
        for fo in range(fout):
            fbase = 2 * fo
            for co in range(cout):
                acc[co] = bias[co]
            for dt in range(2):
                for df in range(3):
                    for ci in range(cin):
                        xv = xpad[t + dt, fbase + df, ci]
                        for co in range(cout):
                            acc[co] += xv * kern[dt, df, ci, co]
            for co in range(cout):
                out[t, fo, co] = acc[co]
    return out


@njit(cache=True)
def convt_core(ypad, kern, bias, fmask):
    # out[t] = kern[0] applied to ypad[t + 1] plus kern[1] applied to ypad[t].
    # The caller chooses which side of y carries the zero row, which selects
    # between the true adjoint and the one-frame-delayed causal decoder.
    tdim = ypad.shape[0] - 1
    fin = ypad.shape[1]
    cq = ypad.shape[2]
    cp = kern.shape[2]
    fland = 2 * (fin - 1) + 3
    fout = fland - 2
    out = np.zeros((tdim, fout, cp))
    land = np.empty((fland, cp))
    for t in range(tdim):
        if fmask[t] == 0:
            continue
        for fi in range(fland):
            for p in range(cp):
                land[fi, p] = 0.0
        for dt in range(2):
            yrow = t + 1 - dt
            for fo in range(fin):
                fbase = 2 * fo
                for q in range(cq):
                    yv = ypad[yrow, fo, q]
                    for df in range(3):
                        for p in range(cp):
                            land[fbase + df, p] += yv * kern[dt, df, p, q]
        for fi in range(fout):
            for p in range(cp):
                out[t, fi, p] = land[fi + 1, p] + bias[p]
    return out


@njit(cache=True)
def _gru_cell(xrow, hprev, wmat, umat, bx, bh, gate, gated, pre, rec, hnew):
    h3 = wmat.shape[0]
    h = h3 // 3
    w = wmat.shape[1]
    for j in range(h3):
        a = bx[j]
        for i in range(w):
            a += wmat[j, i] * xrow[i]
        if gated:
            a *= gate
        pre[j] = a
        b = bh[j]
        for i in range(h):
            b += umat[j, i] * hprev[i]
        rec[j] = b
    for j in range(h):
        z = _sigmoid(pre[j] + rec[j])
        r = _sigmoid(pre[h + j] + rec[h + j])
        n = math.tanh(pre[2 * h + j] + r * rec[2 * h + j])
        hnew[j] = (1.0 - z) * n + z * hprev[j]


@njit(cache=True)
def bigru_core(x, wf, uf, bxf, bhf, wb, ub, bxb, bhb, fmask):
    tdim, fdim, _ = x.shape
    h = uf.shape[1]
    out = np.zeros((tdim, fdim, 2 * h))
    pre = np.empty(3 * h)
    rec = np.empty(3 * h)
    hbuf = np.empty(h)
    hnew = np.empty(h)
    for t in range(tdim):
        if fmask[t] == 0:
            continue
        for j in range(h):
            hbuf[j] = 0.0
        for f in range(fdim):
            _gru_cell(x[t, f], hbuf, wf, uf, bxf, bhf, 1.0, False, pre, rec, hnew)
            for j in range(h):
                hbuf[j] = hnew[j]
                out[t, f, j] = hnew[j]
        for j in range(h):
            hbuf[j] = 0.0
        for f in range(fdim - 1, -1, -1):
            _gru_cell(x[t, f], hbuf, wb, ub, bxb, bhb, 1.0, False, pre, rec, hnew)
            for j in range(h):
                hbuf[j] = hnew[j]
                out[t, f, h + j] = hnew[j]
    return out


@njit(cache=True)
def gru_seq_core(x, wmat, umat, bx, bh, g, h0, gated, slim):
    tdim, fdim, w = x.shape
    h3 = wmat.shape[0]
    h = h3 // 3
    out = np.zeros((tdim, fdim, h))
    hstate = h0.copy()
    pre = np.empty(h3)
    rec = np.empty(h3)
    for t in range(tdim):
        gt = g[t]
        skip = gated and slim and gt == 0.0
        for f in range(fdim):
            if skip:
                for j in range(h3):
                    pre[j] = 0.0
            else:
                for j in range(h3):
                    a = bx[j]
                    for i in range(w):
                        a += wmat[j, i] * x[t, f, i]
                    if gated:
                        a *= gt
                    pre[j] = a
            for j in range(h3):
                b = bh[j]
                for i in range(h):
                    b += umat[j, i] * hstate[f, i]
                rec[j] = b
            for j in range(h):
                z = _sigmoid(pre[j] + rec[j])
                r = _sigmoid(pre[h + j] + rec[h + j])
                n = math.tanh(pre[2 * h + j] + r * rec[2 * h + j])
                hv = (1.0 - z) * n + z * hstate[f, j]
                out[t, f, j] = hv
                hstate[f, j] = hv
    return out, hstate


@njit(cache=True)
def attn_bins_core(q, k, v, fmask):
    tdim, fdim, heads, dh = q.shape
    scale = 1.0 / math.sqrt(dh)
    out = np.zeros((tdim, fdim, heads, dh))
    sc = np.empty(fdim)
    for t in range(tdim):
        if fmask[t] == 0:
            continue
        for hh in range(heads):
            for fq in range(fdim):
                m = -1.0e300
                for fk in range(fdim):
                    s = 0.0
                    for d in range(dh):
                        s += q[t, fq, hh, d] * k[t, fk, hh, d]
                    s *= scale
                    sc[fk] = s
                    if s > m:
                        m = s
                zsum = 0.0
                for fk in range(fdim):
                    e = math.exp(sc[fk] - m)
                    sc[fk] = e
                    zsum += e
                for fk in range(fdim):
                    wgt = sc[fk] / zsum
                    for d in range(dh):
                        out[t, fq, hh, d] += wgt * v[t, fk, hh, d]
    return out


@njit(cache=True)
def attn_time_core(q, k, v, qmask, kmask, ctx):
    tdim, fdim, heads, dh = q.shape
    scale = 1.0 / math.sqrt(dh)
    out = np.zeros((tdim, fdim, heads, dh))
    sc = np.empty(ctx)
    idx = np.empty(ctx, np.int64)
    for t in range(tdim):
        if qmask[t] == 0:
            continue
        lo = t - ctx + 1
        if lo < 0:
            lo = 0
        n = 0
        for tp in range(lo, t + 1):
            if kmask[tp] != 0:
                idx[n] = tp
                n += 1
        if n == 0:
            continue
        for f in range(fdim):
            for hh in range(heads):
                m = -1.0e300
                for a in range(n):
                    tp = idx[a]
                    s = 0.0
                    for d in range(dh):
                        s += q[t, f, hh, d] * k[tp, f, hh, d]
                    s *= scale
                    sc[a] = s
                    if s > m:
                        m = s
                zsum = 0.0
                for a in range(n):
                    e = math.exp(sc[a] - m)
                    sc[a] = e
                    zsum += e
                for a in range(n):
                    wgt = sc[a] / zsum
                    tp = idx[a]
                    for d in range(dh):
                        out[t, f, hh, d] += wgt * v[tp, f, hh, d]
    return out
