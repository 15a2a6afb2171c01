"""Fused differentiable operations built on Tensor.

Each op computes its forward with plain numpy (or a compiled kernel) and
registers a closed-form backward, which keeps graphs small and fast.  The
GRADCHECK_CASES registry at the bottom enumerates one finite-difference
scenario per op; the test suite sweeps each over many seeds.
"""

import numpy as np

from ..errors import InputError
from .. import kernels
from .tensor import Tensor, _unbroadcast

_NEG_INF = -1e30


def _masked_logits(x, mask, axis):
    """Replace positions where mask == 0 by a huge negative constant."""
    if mask is None:
        return x
    m = np.asarray(mask)
    while m.ndim < x.ndim:
        m = np.expand_dims(m, 1)
    m = np.moveaxis(m, -1, axis) if m.shape[axis] != x.shape[axis] else m
    return np.where(m.astype(bool), x, np.asarray(_NEG_INF, dtype=x.dtype))


def softmax(x: Tensor, axis=-1, mask=None) -> Tensor:
    """Numerically stabilized softmax; masked positions get probability 0."""
    z = _masked_logits(x.data, mask, axis)
    if not np.all(np.isfinite(x.data)):
        raise InputError("softmax received non-finite input")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return Tensor._from_op(s, (x,), bwd)


def log_softmax(x: Tensor, axis=-1, mask=None) -> Tensor:
    z = _masked_logits(x.data, mask, axis)
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bwd(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps=1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def bwd(g):
        gxh = g * gain.data
        gmean = gxh.mean(axis=-1, keepdims=True)
        gxhm = (gxh * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxh - gmean - xhat * gxhm)
        axes = tuple(range(g.ndim - 1))
        ggain = _unbroadcast(g * xhat, gain.data.shape) if axes else g * xhat
        gbias = _unbroadcast(g, bias.data.shape) if axes else g
        return gx, ggain, gbias

    return Tensor._from_op(out, (x, gain, bias), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity in eval mode. Deterministic given rng."""
    if not train or rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    scale = keep / np.asarray(1.0 - rate, dtype=x.data.dtype)
    out = x.data * scale

    def bwd(g):
        return (g * scale,)

    return Tensor._from_op(out, (x,), bwd)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows; backward scatter-adds into the looked-up rows only."""
    ids = np.asarray(ids)
    v = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise InputError(f"embedding id out of range [0, {v})")
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return Tensor._from_op(out, (table,), bwd)


def depthwise_separable_conv1d(x: Tensor, depth_kernel: Tensor, point_kernel: Tensor) -> Tensor:
    """Per-channel conv (width k, "same" zero padding) then 1x1 channel mixing.

    x: (B, L, C), depth_kernel: (k, C), point_kernel: (C, Cout).
    """
    k = depth_kernel.data.shape[0]
    if k % 2 == 0:
        raise InputError("depthwise conv kernel width must be odd")
    mid = kernels.depthwise_conv1d_fwd(x.data, depth_kernel.data)
    out = mid @ point_kernel.data

    def bwd(g):
        gmid = g @ point_kernel.data.swapaxes(-1, -2)
        gpoint = np.einsum("blc,bld->cd", mid, g)
        gx, gdepth = kernels.depthwise_conv1d_bwd(x.data, depth_kernel.data, gmid)
        return gx, gdepth, gpoint

    return Tensor._from_op(out, (x, depth_kernel, point_kernel), bwd)


def conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Full 1-D convolution, "same" zero padding. x: (B,L,Cin), w: (K,Cin,Cout)."""
    if w.data.shape[0] % 2 == 0:
        raise InputError("conv kernel width must be odd")
    out = kernels.conv1d_fwd(x.data, w.data)

    def bwd(g):
        gx, gw = kernels.conv1d_bwd(x.data, w.data, g)
        return gx, gw

    return Tensor._from_op(out, (x, w), bwd)


def multi_head_self_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                              wo: Tensor, heads: int, mask=None) -> Tensor:
    """Scaled dot-product self-attention, h heads, masked keys excluded.

    x: (B, L, D); each projection is (D, D); mask: (B, L) with 1 = valid.
    """
    b, length, d = x.data.shape
    if d % heads != 0:
        raise InputError(f"model width {d} not divisible by {heads} heads")
    dh = d // heads

    def split(t):
        return t.reshape(b, length, heads, dh).transpose(0, 2, 1, 3)

    q = split(x @ wq)
    k = split(x @ wk)
    v = split(x @ wv)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    if mask is not None:
        key_mask = np.asarray(mask).reshape(b, 1, 1, length)
        attn = softmax(scores, axis=-1, mask=np.broadcast_to(key_mask, scores.shape))
    else:
        attn = softmax(scores, axis=-1)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(b, length, d)
    return ctx @ wo


def highway(x: Tensor, wt: Tensor, bt: Tensor, wh: Tensor, bh: Tensor) -> Tensor:
    """One highway layer: sigmoid gate mixing a transform with the input."""
    gate = (x @ wt + bt).sigmoid()
    transformed = (x @ wh + bh).relu()
    return gate * transformed + (1.0 - gate) * x


# --------------------------------------------------------------------------
# Finite-difference scenarios, one per op family.  Each entry maps a name to
# a builder(rng) returning (fn, inputs); fn(*inputs) must be a deterministic
# scalar-valued Tensor program.
# --------------------------------------------------------------------------


def _t(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _case_arithmetic(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4)
    return lambda a, b: ((a * b + a - 0.5) / (b * b + 2.0)).sum(), [a, b]


def _case_matmul(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 4, 5)
    return lambda a, b: (a @ b).sum(), [a, b]


def _case_elementwise(rng):
    x = Tensor(rng.standard_normal((3, 3)) + 3.0, requires_grad=True)
    return lambda x: (x.log().exp().tanh().sigmoid()).sum(), [x]


def _case_relu(rng):
    x = Tensor(rng.standard_normal((4, 4)) + np.sign(rng.standard_normal((4, 4))) * 0.5,
               requires_grad=True)
    return lambda x: (x.relu() + x.leaky_relu(0.2)).sum(), [x]


def _case_shapes(rng):
    x = _t(rng, 2, 6)
    return lambda x: cat_shapes(x), [x]


def cat_shapes(x):
    from .tensor import cat

    y = x.reshape(3, 4).transpose(1, 0)
    z = cat([y, y * 2.0], axis=1)
    return (z[1:3, :] ** 2.0).sum() + z.mean()


def _case_softmax(rng):
    x = _t(rng, 3, 5)
    w = Tensor(rng.standard_normal(5))
    return lambda x: (softmax(x, axis=-1) * w).sum(), [x]


def _case_masked_softmax(rng):
    x = _t(rng, 2, 6)
    mask = np.array([[1, 1, 1, 0, 0, 0], [1, 1, 1, 1, 1, 0]])
    w = Tensor(rng.standard_normal(6))
    return lambda x: (softmax(x, axis=-1, mask=mask) * w).sum(), [x]


def _case_log_softmax(rng):
    x = _t(rng, 2, 7)
    w = Tensor(np.abs(rng.standard_normal((2, 7))))
    return lambda x: (log_softmax(x, axis=-1) * w).sum(), [x]


def _case_layer_norm(rng):
    x, g, b = _t(rng, 2, 3, 8), _t(rng, 8), _t(rng, 8)
    w = Tensor(rng.standard_normal((2, 3, 8)))
    return lambda x, g, b: (layer_norm(x, g, b) * w).sum(), [x, g, b]


def _case_dropout(rng):
    x = _t(rng, 4, 5)
    seed = int(rng.integers(1 << 31))

    def fn(x):
        local = np.random.default_rng(seed)
        return dropout(x, 0.3, local, train=True).sum()

    return fn, [x]


def _case_embedding(rng):
    table = _t(rng, 6, 4)
    ids = rng.integers(0, 6, size=(2, 5))
    w = Tensor(rng.standard_normal((2, 5, 4)))
    return lambda t: (embedding_lookup(t, ids) * w).sum(), [table]


def _case_depthwise_conv(rng):
    x, dk, pk = _t(rng, 2, 7, 4), _t(rng, 3, 4), _t(rng, 4, 5)
    w = Tensor(rng.standard_normal((2, 7, 5)))
    return lambda x, dk, pk: (depthwise_separable_conv1d(x, dk, pk) * w).sum(), [x, dk, pk]


def _case_conv1d(rng):
    x, w = _t(rng, 2, 6, 3), _t(rng, 5, 3, 4)
    probe = Tensor(rng.standard_normal((2, 6, 4)))
    return lambda x, w: (conv1d(x, w) * probe).sum(), [x, w]


def _case_attention(rng):
    d, h = 8, 2
    x = _t(rng, 2, 4, d)
    wq, wk, wv, wo = (_t(rng, d, d) for _ in range(4))
    mask = np.array([[1, 1, 1, 0], [1, 1, 1, 1]])
    probe = Tensor(rng.standard_normal((2, 4, d)))

    def fn(x, wq, wk, wv, wo):
        return (multi_head_self_attention(x, wq, wk, wv, wo, h, mask) * probe).sum()

    return fn, [x, wq, wk, wv, wo]


def _case_max_clip(rng):
    x = _t(rng, 3, 5, 4)
    w = Tensor(rng.standard_normal((3, 4)))
    return lambda x: (x.clip(-1.2, 1.2).max(axis=1) * w).sum(), [x]


def _case_highway(rng):
    d = 6
    x = _t(rng, 3, d)
    wt, wh = _t(rng, d, d), _t(rng, d, d)
    bt, bh = _t(rng, d), _t(rng, d)
    return lambda x, wt, bt, wh, bh: highway(x, wt, bt, wh, bh).sum(), [x, wt, bt, wh, bh]


GRADCHECK_CASES = {
    "arithmetic": _case_arithmetic,
    "matmul": _case_matmul,
    "elementwise": _case_elementwise,
    "relu_family": _case_relu,
    "shape_ops": _case_shapes,
    "softmax": _case_softmax,
    "masked_softmax": _case_masked_softmax,
    "log_softmax": _case_log_softmax,
    "layer_norm": _case_layer_norm,
    "dropout": _case_dropout,
    "embedding_lookup": _case_embedding,
    "depthwise_separable_conv1d": _case_depthwise_conv,
    "conv1d": _case_conv1d,
    "multi_head_self_attention": _case_attention,
    "max_clip": _case_max_clip,
    "highway": _case_highway,
}
