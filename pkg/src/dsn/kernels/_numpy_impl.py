"""Vectorised numpy twins of the numba kernels.

Same signatures and the same mathematical contracts as _numba_impl, written
with slicing, matmul and einsum instead of explicit loops. This is the
fallback path when numba is unavailable and the reference used by the
benchmark comparison. Results may differ from the numba path in the last
few bits (different summation orders); structural zeros are identical.
"""
import numpy as np


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def conv2d_core(xpad, kern, bias, fmask):
    tdim = xpad.shape[0] - 1
    fpad = xpad.shape[1]
    cout = kern.shape[3]
    fout = (fpad - 3) // 2 + 1
    out = np.zeros((tdim, fout, cout))
    act = np.flatnonzero(fmask)
    if act.size == 0:
        return out
    acc = np.broadcast_to(bias, (act.size, fout, cout)).copy()
    span = 2 * (fout - 1) + 1
    for dt in range(2):
        rows = xpad[act + dt]
        for df in range(3):
            sl = rows[:, df:df + span:2, :]
            acc += sl @ kern[dt, df]
    out[act] = acc
    return out


def convt_core(ypad, kern, bias, fmask):
    tdim = ypad.shape[0] - 1
    fin = ypad.shape[1]
    cp = kern.shape[2]
    fland = 2 * (fin - 1) + 3
    fout = fland - 2
    out = np.zeros((tdim, fout, cp))
    act = np.flatnonzero(fmask)
    if act.size == 0:
        return out
    land = np.zeros((act.size, fland, cp))
    span = 2 * (fin - 1) + 1
    for dt in range(2):
        rows = ypad[act + 1 - dt]
        for df in range(3):
            land[:, df:df + span:2, :] += rows @ kern[dt, df].T
    out[act] = land[:, 1:fland - 1, :] + bias
    return out


def _gru_cell(xrows, hprev, wmat, umat, bx, bh, gate=None):
    h = umat.shape[1]
    pre = xrows @ wmat.T + bx
    if gate is not None:
        pre = gate * pre
    rec = hprev @ umat.T + bh
    z = _sigmoid(pre[..., :h] + rec[..., :h])
    r = _sigmoid(pre[..., h:2 * h] + rec[..., h:2 * h])
    n = np.tanh(pre[..., 2 * h:] + r * rec[..., 2 * h:])
    return (1.0 - z) * n + z * hprev


def bigru_core(x, wf, uf, bxf, bhf, wb, ub, bxb, bhb, fmask):
    tdim, fdim, _ = x.shape
    h = uf.shape[1]
    out = np.zeros((tdim, fdim, 2 * h))
    act = np.flatnonzero(fmask)
    if act.size == 0:
        return out
    xa = x[act]
    fwd = np.empty((act.size, fdim, h))
    bwd = np.empty((act.size, fdim, h))
    hcur = np.zeros((act.size, h))
    for f in range(fdim):
        hcur = _gru_cell(xa[:, f], hcur, wf, uf, bxf, bhf)
        fwd[:, f] = hcur
    hcur = np.zeros((act.size, h))
    for f in range(fdim - 1, -1, -1):
        hcur = _gru_cell(xa[:, f], hcur, wb, ub, bxb, bhb)
        bwd[:, f] = hcur
    out[act] = np.concatenate([fwd, bwd], axis=2)
    return out


def gru_seq_core(x, wmat, umat, bx, bh, g, h0, gated, slim):
    tdim, fdim, _ = x.shape
    h3 = wmat.shape[0]
    h = h3 // 3
    out = np.empty((tdim, fdim, h))
    hstate = h0.copy()
    for t in range(tdim):
        gt = g[t]
        if gated and slim and gt == 0.0:
            pre = np.zeros((fdim, h3))
        else:
            pre = x[t] @ wmat.T + bx
            if gated:
                pre = gt * pre
        rec = hstate @ umat.T + bh
        z = _sigmoid(pre[:, :h] + rec[:, :h])
        r = _sigmoid(pre[:, h:2 * h] + rec[:, h:2 * h])
        n = np.tanh(pre[:, 2 * h:] + r * rec[:, 2 * h:])
        hstate = (1.0 - z) * n + z * hstate
        out[t] = hstate
    return out, hstate


def attn_bins_core(q, k, v, fmask):
    dh = q.shape[3]
    out = np.zeros_like(q)
    act = np.flatnonzero(fmask)
    if act.size == 0:
        return out
    sc = np.einsum('nqhd,nkhd->nhqk', q[act], k[act]) / np.sqrt(dh)
    sc -= sc.max(axis=3, keepdims=True)
    e = np.exp(sc)
    p = e / e.sum(axis=3, keepdims=True)
    out[act] = np.einsum('nhqk,nkhd->nqhd', p, v[act])
    return out


def attn_time_core(q, k, v, qmask, kmask, ctx):
    dh = q.shape[3]
    scale = 1.0 / np.sqrt(dh)
    out = np.zeros_like(q)
    km = kmask.astype(bool)
    for t in np.flatnonzero(qmask):
        lo = max(0, t - ctx + 1)
        sel = np.flatnonzero(km[lo:t + 1]) + lo
        if sel.size == 0:
            continue
        sc = np.einsum('fhd,nfhd->fhn', q[t], k[sel]) * scale
        sc -= sc.max(axis=2, keepdims=True)
        e = np.exp(sc)
        p = e / e.sum(axis=2, keepdims=True)
        out[t] = np.einsum('fhn,nfhd->fhd', p, v[sel])
    return out
