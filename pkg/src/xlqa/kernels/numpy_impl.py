"""Pure-numpy implementations of the hot inner-loop kernels.

This is the fallback backend; `xlqa.kernels` picks between this module and
the numba-compiled twin at import time.  Both backends must agree bitwise
on dtype and to ~1e-12 on values (they are cross-checked in the tests).
"""

import numpy as np


def depthwise_conv1d_fwd(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-channel 1-D convolution with same-size zero padding.

    x: (B, L, C), w: (K, C) with K odd.  Returns (B, L, C).
    """
    b, length, c = x.shape
    k = w.shape[0]
    pad = k // 2
    xp = np.zeros((b, length + k - 1, c), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    y = np.zeros_like(x)
    for j in range(k):
        y += xp[:, j : j + length, :] * w[j]
    return y


def depthwise_conv1d_bwd(x, w, gy):
    """Gradients of depthwise_conv1d_fwd w.r.t. x and w."""
    b, length, c = x.shape
    k = w.shape[0]
    pad = k // 2
    gyp = np.zeros((b, length + k - 1, c), dtype=gy.dtype)
    gyp[:, pad : pad + length, :] = gy
    gx = np.zeros_like(x)
    for j in range(k):
        # y[t] consumed x[t + j - pad], so x[s] feeds y[s - j + pad].
        gx += gyp[:, k - 1 - j : k - 1 - j + length, :] * w[j]
    xp = np.zeros((b, length + k - 1, c), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    gw = np.empty_like(w)
    for j in range(k):
        gw[j] = np.einsum("blc,blc->c", gy, xp[:, j : j + length, :])
    return gx, gw


def conv1d_fwd(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Full 1-D convolution mixing channels, same-size zero padding.

    x: (B, L, Cin), w: (K, Cin, Cout) with K odd.  Returns (B, L, Cout).
    """
    b, length, cin = x.shape
    k, _, cout = w.shape
    pad = k // 2
    xp = np.zeros((b, length + k - 1, cin), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    y = np.zeros((b, length, cout), dtype=x.dtype)
    for j in range(k):
        y += xp[:, j : j + length, :] @ w[j]
    return y


def conv1d_bwd(x, w, gy):
    """Gradients of conv1d_fwd w.r.t. x and w."""
    b, length, cin = x.shape
    k, _, cout = w.shape
    pad = k // 2
    gyp = np.zeros((b, length + k - 1, cout), dtype=gy.dtype)
    gyp[:, pad : pad + length, :] = gy
    gx = np.zeros_like(x)
    for j in range(k):
        gx += gyp[:, k - 1 - j : k - 1 - j + length, :] @ w[j].T
    xp = np.zeros((b, length + k - 1, cin), dtype=x.dtype)
    xp[:, pad : pad + length, :] = x
    gw = np.empty_like(w)
    for j in range(k):
        gw[j] = np.einsum("blc,bld->cd", xp[:, j : j + length, :], gy)
    return gx, gw


def band_argmax(p1: np.ndarray, p2: np.ndarray, max_len: int):
    """Best (start, end) maximizing p1[i]*p2[j] over i <= j <= i+max_len-1.

    Ties resolve to the smaller start, then the smaller end.  Both inputs
    are 1-D and the same length.
    """
    n = p1.shape[0]
    scores = np.outer(p1, p2)
    ii, jj = np.indices((n, n))
    scores[(jj < ii) | (jj > ii + max_len - 1)] = -np.inf
    flat = int(np.argmax(scores))
    return flat // n, flat % n
