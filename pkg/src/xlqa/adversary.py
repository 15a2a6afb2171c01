"""Language discriminator and the adversarial losses.

The discriminator reads a dependent-stack feature sequence and outputs a
scalar in (0,1).  Its training objective, written exactly as the loss it
minimizes, is

    L_dis = sum_target [log D(psi_tgt(q)) + log D(psi_tgt(d))]
          + sum_source [log(1 - D(psi_src(q))) + log(1 - D(psi_src(d)))]

so the minimizing direction drives target scores toward 0 and source
scores toward 1: D ends up assigning the lower score to target-language
features.  Dependent stacks oppose it by maximizing L_dis inside their own
loss L_pri = L_qa - lambda_G * L_dis; which stack receives that term is a
training-variant choice, the other stack and all independent layers see
L_qa alone.
"""

import numpy as np

from .autodiff import Tensor, cat
from .autodiff import conv1d as _conv1d
from .errors import InputError
from .model import HyperParams, ParameterGroup, _glorot

SCORE_EPS = 1e-7


class Discriminator:
    """Residual 1-D conv stack, masked mean pooling, linear, sigmoid."""

    def __init__(self, hp: HyperParams, seed=0, dtype=np.float32):
        self.hp = hp
        f = hp.dis_filters
        w = hp.dis_width
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1))))
        g = ParameterGroup(name="discriminator")
        if hp.hidden != f:
            g.add("in_proj_w", _glorot(rng, hp.hidden, f, (hp.hidden, f), dtype))
            g.add("in_proj_b", np.zeros(f, dtype))
        for i in range(hp.dis_blocks):
            g.add(f"block{i}_w1", _glorot(rng, w * f, w * f, (w, f, f), dtype))
            g.add(f"block{i}_b1", np.zeros(f, dtype))
            g.add(f"block{i}_w2", _glorot(rng, w * f, w * f, (w, f, f), dtype))
            g.add(f"block{i}_b2", np.zeros(f, dtype))
        g.add("out_w", np.zeros(f, dtype))
        g.add("out_b", np.zeros(1, dtype))
        self.group = g

    def forward(self, x: Tensor, mask) -> Tensor:
        """Scores for a batch of feature sequences.  x: (B, L, H), mask:
        (B, L) with 1 on real positions; returns (B,) in (0,1)."""
        if x.data.ndim != 3 or x.data.shape[1] == 0:
            raise InputError("discriminator requires a nonempty (B, L, H) input")
        p = self.group.entries
        m = np.asarray(mask, dtype=x.data.dtype)
        mask_col = Tensor(m[:, :, None])
        x = x * mask_col
        if "in_proj_w" in p:
            x = (x @ p["in_proj_w"] + p["in_proj_b"]) * mask_col
        for i in range(self.hp.dis_blocks):
            y = (_conv1d(x, p[f"block{i}_w1"]) + p[f"block{i}_b1"]).leaky_relu(0.2)
            y = _conv1d(y, p[f"block{i}_w2"]) + p[f"block{i}_b2"]
            x = (x + y).leaky_relu(0.2) * mask_col
        counts = m.sum(axis=1, keepdims=True)
        if (counts == 0).any():
            raise InputError("discriminator mask has an all-pad row")
        pooled = x.sum(axis=1) * Tensor(1.0 / counts)
        f = pooled.data.shape[1]
        logit = (pooled @ p["out_w"].reshape(f, 1)).reshape(pooled.data.shape[0]) \
            + p["out_b"]
        return logit.sigmoid()


def discriminate(disc: Discriminator, seq: Tensor, mask=None) -> Tensor:
    """Score one (L, H) sequence; returns a scalar Tensor in (0,1)."""
    length = seq.data.shape[0]
    if mask is None:
        mask = np.ones((1, length), dtype=seq.data.dtype)
    else:
        mask = np.asarray(mask, dtype=seq.data.dtype).reshape(1, length)
    return disc.forward(seq.reshape(1, length, seq.data.shape[1]), mask)[0]


def discriminator_loss(tgt_scores, src_scores, eps=SCORE_EPS) -> Tensor:
    """Batch-summed loss over target and source score groups.

    Each argument is a sequence of (B,) score Tensors (canonically the
    question scores and the document scores); all batches must agree in
    size.  Scores are clamped to [eps, 1-eps] before the logs.
    """
    sizes = {t.data.shape[0] for t in tuple(tgt_scores) + tuple(src_scores)}
    if len(sizes) != 1:
        raise InputError(f"mismatched score batch sizes {sorted(sizes)}")
    total = None
    for s in tgt_scores:
        term = s.clip(eps, 1.0 - eps).log().sum()
        total = term if total is None else total + term
    for s in src_scores:
        term = (1.0 - s).clip(eps, 1.0 - eps).log().sum()
        total = total + term
    return total


def adversarial_generator_loss(l_qa: Tensor, l_dis: Tensor, lambda_g: float) -> Tensor:
    """L_pri = L_qa - lambda_G * L_dis; with lambda_G = 0 this IS l_qa."""
    if lambda_g < 0:
        raise InputError("lambda_g must be >= 0")
    if lambda_g == 0:
        return l_qa
    return l_qa + l_dis * (-lambda_g)


def score_accuracy(tgt_scores: np.ndarray, src_scores: np.ndarray) -> float:
    """Fraction classified correctly under the trained decision rule:
    target features score low, source features score high."""
    tgt = np.asarray(tgt_scores).reshape(-1)
    src = np.asarray(src_scores).reshape(-1)
    correct = int((tgt < 0.5).sum()) + int((src >= 0.5).sum())
    total = tgt.size + src.size
    return correct / total if total else 0.0
