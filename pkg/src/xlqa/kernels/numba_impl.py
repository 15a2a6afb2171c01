"""Numba-compiled twins of the numpy kernels.

All loops are explicit and sequential (single-threaded box, so no prange),
compiled with cache=True so later processes reuse the on-disk artifacts.
Signatures and semantics match numpy_impl exactly.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def depthwise_conv1d_fwd(x, w):
    b, length, c = x.shape
    k = w.shape[0]
    pad = k // 2
    y = np.zeros_like(x)
    for bi in range(b):
        for t in range(length):
            for j in range(k):
                s = t + j - pad
                if 0 <= s < length:
                    for ci in range(c):
                        y[bi, t, ci] += x[bi, s, ci] * w[j, ci]
    return y


@njit(cache=True)
def depthwise_conv1d_bwd(x, w, gy):
    b, length, c = x.shape
    k = w.shape[0]
    pad = k // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for bi in range(b):
        for t in range(length):
            for j in range(k):
                s = t + j - pad
                if 0 <= s < length:
                    for ci in range(c):
                        g = gy[bi, t, ci]
                        gx[bi, s, ci] += g * w[j, ci]
                        gw[j, ci] += g * x[bi, s, ci]
    return gx, gw


@njit(cache=True)
def conv1d_fwd(x, w):
    # channel mixing dominates, so route it through dot (BLAS) per tap
    b, length, cin = x.shape
    k = w.shape[0]
    cout = w.shape[2]
    pad = k // 2
    y = np.zeros((b, length, cout), dtype=x.dtype)
    for j in range(k):
        off = j - pad
        lo = -off if off < 0 else 0
        hi = length - off if off > 0 else length
        if lo >= hi:
            continue
        n = hi - lo
        xs = np.ascontiguousarray(x[:, lo + off : hi + off, :]).reshape(b * n, cin)
        ys = np.dot(xs, np.ascontiguousarray(w[j]))
        y[:, lo:hi, :] += ys.reshape(b, n, cout)
    return y


@njit(cache=True)
def conv1d_bwd(x, w, gy):
    b, length, cin = x.shape
    k = w.shape[0]
    cout = w.shape[2]
    pad = k // 2
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for j in range(k):
        off = j - pad
        lo = -off if off < 0 else 0
        hi = length - off if off > 0 else length
        if lo >= hi:
            continue
        n = hi - lo
        gys = np.ascontiguousarray(gy[:, lo:hi, :]).reshape(b * n, cout)
        wt = np.ascontiguousarray(w[j].T)
        gx[:, lo + off : hi + off, :] += np.dot(gys, wt).reshape(b, n, cin)
        xs = np.ascontiguousarray(x[:, lo + off : hi + off, :]).reshape(b * n, cin)
        xst = np.ascontiguousarray(xs.T)
        gw[j] += np.dot(xst, gys)
    return gx, gw


@njit(cache=True)
def band_argmax(p1, p2, max_len):
    n = p1.shape[0]
    best = -np.inf
    bi = 0
    bj = 0
    for i in range(n):
        hi = i + max_len - 1
        if hi >= n:
            hi = n - 1
        for j in range(i, hi + 1):
            sc = p1[i] * p2[j]
            if sc > best:
                best = sc
                bi = i
                bj = j
    return bi, bj
