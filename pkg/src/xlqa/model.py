"""The reading-comprehension network.

Per-language dependent stacks (frozen word embedding plus char-conv
embedding, a two-layer highway, a projection to the hidden width, and one
embedding-encoder block) feed shared independent layers: context-query
attention, a weight-shared model-encoder stack applied three times, and
the start/end output layer.  The dependent stack's output function is the
feature map the language discriminator sees.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    cat,
    conv1d,
    depthwise_separable_conv1d,
    dropout,
    embedding_lookup,
    highway,
    layer_norm,
    log_softmax,
    multi_head_self_attention,
    softmax,
)
from .errors import InputError

LANGS = ("src", "tgt")


@dataclass
class HyperParams:
    hidden: int = 96
    heads: int = 2
    emb_blocks: int = 1
    model_blocks: int = 7
    model_passes: int = 3
    convs_per_block: int = 4
    conv_width: int = 7
    char_dim: int = 64
    char_conv_width: int = 5
    max_answer_len: int = 30
    dropout: float = 0.1
    dependent_cq: bool = False
    dis_blocks: int = 5
    dis_filters: int = 96
    dis_width: int = 5

    def __post_init__(self):
        if self.hidden % self.heads:
            raise InputError(f"hidden {self.hidden} not divisible by heads {self.heads}")


def desk_preset(**overrides) -> HyperParams:
    """Small CPU-friendly configuration used by the acceptance runs."""
    base = dict(hidden=32, heads=2, emb_blocks=1, model_blocks=2, conv_width=5,
                char_dim=16, char_conv_width=3, dis_blocks=2, dis_filters=32,
                max_answer_len=4)
    base.update(overrides)
    return HyperParams(**base)


@dataclass
class ParameterGroup:
    name: str
    entries: dict = field(default_factory=dict)
    trainable: bool = True

    def add(self, name, array):
        if name in self.entries:
            raise InputError(f"duplicate parameter {self.name}/{name}")
        t = Tensor(array, requires_grad=self.trainable)
        self.entries[name] = t
        return t

    def named(self, prefix=""):
        for k, v in self.entries.items():
            yield f"{prefix}{k}", v

    def zero_grads(self):
        for t in self.entries.values():
            t.grad = None


# --------------------------------------------------------------------------
# Initialization helpers
# --------------------------------------------------------------------------


def _glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


_POS_CACHE = {}


def positional_encoding(length, width, dtype):
    key = (length, width, np.dtype(dtype).str)
    pe = _POS_CACHE.get(key)
    if pe is None:
        pos = np.arange(length, dtype=np.float64)[:, None]
        idx = np.arange(width, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, 2.0 * (idx // 2) / width)
        pe = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)
        _POS_CACHE[key] = pe
    return pe


# --------------------------------------------------------------------------
# Forward pieces
# --------------------------------------------------------------------------


def _sublayer_params(group, prefix, hp, rng, dtype, width):
    h = width
    for i in range(hp.convs_per_block):
        group.add(f"{prefix}ln{i}_g", np.ones(h, dtype=dtype))
        group.add(f"{prefix}ln{i}_b", np.zeros(h, dtype=dtype))
        group.add(f"{prefix}conv{i}_dk",
                  _glorot(rng, hp.conv_width, 1, (hp.conv_width, h), dtype))
        group.add(f"{prefix}conv{i}_pk", _glorot(rng, h, h, (h, h), dtype))
        group.add(f"{prefix}conv{i}_b", np.zeros(h, dtype=dtype))
    group.add(f"{prefix}attn_ln_g", np.ones(h, dtype=dtype))
    group.add(f"{prefix}attn_ln_b", np.zeros(h, dtype=dtype))
    for nm in ("wq", "wk", "wv", "wo"):
        group.add(f"{prefix}attn_{nm}", _glorot(rng, h, h, (h, h), dtype))
    group.add(f"{prefix}ffn_ln_g", np.ones(h, dtype=dtype))
    group.add(f"{prefix}ffn_ln_b", np.zeros(h, dtype=dtype))
    group.add(f"{prefix}ffn_w1", _glorot(rng, h, h, (h, h), dtype))
    group.add(f"{prefix}ffn_b1", np.zeros(h, dtype=dtype))
    group.add(f"{prefix}ffn_w2", _glorot(rng, h, h, (h, h), dtype))
    group.add(f"{prefix}ffn_b2", np.zeros(h, dtype=dtype))


def encoder_block(x: Tensor, params: dict, prefix: str, hp: HyperParams, mask,
                  train=False, rng=None):
    """Positional encoding, then conv sublayers, self-attention, and a
    feed-forward layer, each wrapped as x + dropout(f(layer_norm(x)))."""
    b, length, h = x.data.shape
    mask_col = Tensor(np.asarray(mask, dtype=x.data.dtype)[:, :, None])
    x = x + Tensor(positional_encoding(length, h, x.data.dtype))
    for i in range(hp.convs_per_block):
        y = layer_norm(x, params[f"{prefix}ln{i}_g"], params[f"{prefix}ln{i}_b"])
        y = depthwise_separable_conv1d(y, params[f"{prefix}conv{i}_dk"],
                                       params[f"{prefix}conv{i}_pk"])
        y = (y + params[f"{prefix}conv{i}_b"]).relu() * mask_col
        x = x + dropout(y, hp.dropout, rng, train)
    y = layer_norm(x, params[f"{prefix}attn_ln_g"], params[f"{prefix}attn_ln_b"])
    y = multi_head_self_attention(y, params[f"{prefix}attn_wq"],
                                  params[f"{prefix}attn_wk"],
                                  params[f"{prefix}attn_wv"],
                                  params[f"{prefix}attn_wo"], hp.heads, mask)
    x = x + dropout(y, hp.dropout, rng, train)
    y = layer_norm(x, params[f"{prefix}ffn_ln_g"], params[f"{prefix}ffn_ln_b"])
    y = ((y @ params[f"{prefix}ffn_w1"] + params[f"{prefix}ffn_b1"]).relu()
         @ params[f"{prefix}ffn_w2"] + params[f"{prefix}ffn_b2"])
    return x + dropout(y, hp.dropout, rng, train)


def context_query_attention(c: Tensor, q: Tensor, c_mask, q_mask, wc: Tensor,
                            wq_: Tensor, wcq: Tensor):
    """Trilinear similarity S[i,j] = w . [c_i; q_j; c_i*q_j], then the
    standard context-to-query / query-to-context attended outputs
    [c; A; c*A; c*B]."""
    b, lc, h = c.data.shape
    lq = q.data.shape[1]
    s_c = (c @ wc.reshape(h, 1))
    s_q = (q @ wq_.reshape(h, 1)).swapaxes(1, 2)
    s_cq = (c * wcq) @ q.swapaxes(1, 2)
    s = s_c + s_q + s_cq
    qm = np.broadcast_to(np.asarray(q_mask)[:, None, :], (b, lc, lq))
    cm = np.broadcast_to(np.asarray(c_mask)[:, :, None], (b, lc, lq))
    row = softmax(s, axis=2, mask=qm)
    col = softmax(s, axis=1, mask=cm)
    a = row @ q
    bb = (row @ col.swapaxes(1, 2)) @ c
    return cat([c, a, c * a, c * bb], axis=2)


@dataclass
class SpanDistribution:
    p1: Tensor
    p2: Tensor
    log_p1: Tensor
    log_p2: Tensor


def output_layer(m0: Tensor, m1: Tensor, m2: Tensor, mask, w1: Tensor,
                 w2: Tensor) -> SpanDistribution:
    b, length, h = m0.data.shape
    logits1 = (cat([m0, m1], axis=2) @ w1.reshape(2 * h, 1)).reshape(b, length)
    logits2 = (cat([m0, m2], axis=2) @ w2.reshape(2 * h, 1)).reshape(b, length)
    return SpanDistribution(
        p1=softmax(logits1, axis=1, mask=mask),
        p2=softmax(logits2, axis=1, mask=mask),
        log_p1=log_softmax(logits1, axis=1, mask=mask),
        log_p2=log_softmax(logits2, axis=1, mask=mask),
    )


def qa_loss(dist: SpanDistribution, y1, y2, mask=None) -> Tensor:
    """Batch-averaged negative log-likelihood of the gold start/end."""
    y1 = np.asarray(y1)
    y2 = np.asarray(y2)
    b = dist.log_p1.data.shape[0]
    rows = np.arange(b)
    if mask is not None:
        m = np.asarray(mask)
        if not (m[rows, y1].all() and m[rows, y2].all()):
            raise InputError("answer label on a masked position")
    picked = dist.log_p1[rows, y1] + dist.log_p2[rows, y2]
    return picked.sum() * (-1.0 / b)


def predict_span(dist: SpanDistribution, max_len: int):
    """Per example, the (start, end) maximizing p1[i]*p2[j] subject to
    i <= j <= i + max_len - 1; ties go to the smaller i, then smaller j."""
    if max_len < 1:
        raise InputError("max_len must be >= 1")
    p1 = np.ascontiguousarray(dist.p1.data, dtype=np.float64)
    p2 = np.ascontiguousarray(dist.p2.data, dtype=np.float64)
    return [kernels.band_argmax(p1[i], p2[i], max_len) for i in range(p1.shape[0])]


# --------------------------------------------------------------------------
# The full model
# --------------------------------------------------------------------------


class QaModel:
    """Parameter store plus forward passes.

    resources must provide frozen word-embedding tables per language
    (`src_table`, `tgt_table`) and a shared char vocabulary size.
    """

    def __init__(self, hp: HyperParams, src_table, tgt_table, char_vocab_size,
                 seed=0, dtype=np.float32):
        self.hp = hp
        self.dtype = np.dtype(dtype)
        self.word_tables = {
            "src": Tensor(np.asarray(src_table.vectors, dtype=dtype)),
            "tgt": Tensor(np.asarray(tgt_table.vectors, dtype=dtype)),
        }
        self.word_dims = {k: t.data.shape[1] for k, t in self.word_tables.items()}
        self.groups = {}
        # Both language stacks draw from the same stream, so they start from
        # identical weights whenever their shapes agree.  Shared geometry at
        # step 0 is what lets knowledge picked up on one language's features
        # carry over to the other; training is free to drift them apart.
        for lang in LANGS:
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1))))
            g = ParameterGroup(name=f"dep_{lang}")
            self._init_dependent(g, lang, char_vocab_size, rng)
            self.groups[f"dep_{lang}"] = g
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 2))))
        g = ParameterGroup(name="independent")
        self._init_independent(g, rng)
        self.groups["independent"] = g

    # -- parameter construction ------------------------------------------

    def _init_dependent(self, g, lang, char_vocab_size, rng):
        hp, dt = self.hp, self.dtype
        wd = self.word_dims[lang]
        g.add("char_emb", (0.1 * rng.standard_normal((char_vocab_size, hp.char_dim))
                           ).astype(dt))
        g.add("char_conv_w", _glorot(rng, hp.char_conv_width * hp.char_dim,
                                     hp.char_conv_width * hp.char_dim,
                                     (hp.char_conv_width, hp.char_dim, hp.char_dim), dt))
        g.add("char_conv_b", np.zeros(hp.char_dim, dt))
        cdim = wd + hp.char_dim
        for i in (1, 2):
            g.add(f"hw{i}_wt", _glorot(rng, cdim, cdim, (cdim, cdim), dt))
            g.add(f"hw{i}_bt", np.zeros(cdim, dt))
            g.add(f"hw{i}_wh", _glorot(rng, cdim, cdim, (cdim, cdim), dt))
            g.add(f"hw{i}_bh", np.zeros(cdim, dt))
        g.add("proj_w", _glorot(rng, cdim, hp.hidden, (cdim, hp.hidden), dt))
        g.add("proj_b", np.zeros(hp.hidden, dt))
        for b in range(hp.emb_blocks):
            _sublayer_params(g, f"emb{b}/", hp, rng, dt, hp.hidden)
        if hp.dependent_cq:
            for nm in ("wc", "wq", "wcq"):
                g.add(f"cq_{nm}", _glorot(rng, hp.hidden, 1, (hp.hidden,), dt))

    def _init_independent(self, g, rng):
        hp, dt = self.hp, self.dtype
        h = hp.hidden
        if not hp.dependent_cq:
            for nm in ("wc", "wq", "wcq"):
                g.add(f"cq_{nm}", _glorot(rng, h, 1, (h,), dt))
        g.add("cq_proj_w", _glorot(rng, 4 * h, h, (4 * h, h), dt))
        g.add("cq_proj_b", np.zeros(h, dt))
        for b in range(hp.model_blocks):
            _sublayer_params(g, f"model{b}/", hp, rng, dt, h)
        g.add("out_w1", _glorot(rng, 2 * h, 1, (2 * h,), dt))
        g.add("out_w2", _glorot(rng, 2 * h, 1, (2 * h,), dt))

    # -- forwards -----------------------------------------------------------

    def _input_embedding(self, group, lang, ids, chars, mask, train, rng):
        hp = self.hp
        p = group.entries
        word = embedding_lookup(self.word_tables[lang], ids)
        word = dropout(word, hp.dropout, rng, train)
        b, length, w = chars.shape
        ch = embedding_lookup(p["char_emb"], chars.reshape(b * length, w))
        ch = (conv1d(ch, p["char_conv_w"]) + p["char_conv_b"]).relu().max(axis=1)
        ch = ch.reshape(b, length, hp.char_dim)
        ch = dropout(ch, hp.dropout, rng, train)
        x = cat([word, ch], axis=2)
        x = highway(x, p["hw1_wt"], p["hw1_bt"], p["hw1_wh"], p["hw1_bh"])
        x = highway(x, p["hw2_wt"], p["hw2_bt"], p["hw2_wh"], p["hw2_bh"])
        x = x @ p["proj_w"] + p["proj_b"]
        return x * Tensor(np.asarray(mask, dtype=x.data.dtype)[:, :, None])

    def dependent_forward(self, language, q_ids, q_chars, d_ids, d_chars,
                          q_mask, d_mask, train=False, rng=None):
        """Language-dependent feature map applied to question and document."""
        if language not in LANGS:
            raise InputError(f"unknown language {language!r}")
        group = self.groups[f"dep_{language}"]
        outs = []
        for ids, chars, mask in ((q_ids, q_chars, q_mask), (d_ids, d_chars, d_mask)):
            x = self._input_embedding(group, language, ids, chars, mask, train, rng)
            for b in range(self.hp.emb_blocks):
                x = encoder_block(x, group.entries, f"emb{b}/", self.hp, mask,
                                  train, rng)
            outs.append(x)
        return outs[0], outs[1]

    def independent_forward(self, language, psi_q, psi_d, q_mask, d_mask,
                            train=False, rng=None):
        hp = self.hp
        ind = self.groups["independent"].entries
        cq_src = (self.groups[f"dep_{language}"].entries if hp.dependent_cq else ind)
        x = context_query_attention(psi_d, psi_q, d_mask, q_mask,
                                    cq_src["cq_wc"], cq_src["cq_wq"], cq_src["cq_wcq"])
        x = x @ ind["cq_proj_w"] + ind["cq_proj_b"]
        passes = []
        for _ in range(hp.model_passes):
            for b in range(hp.model_blocks):
                x = encoder_block(x, ind, f"model{b}/", hp, d_mask, train, rng)
            passes.append(x)
        m0, m1, m2 = passes[0], passes[1], passes[2]
        return output_layer(m0, m1, m2, d_mask, ind["out_w1"], ind["out_w2"])

    def qa_forward(self, batch, train=False, rng=None):
        """Full pass for one language-homogeneous batch.  Returns the span
        distribution plus the dependent features (the discriminator's view)."""
        psi_q, psi_d = self.dependent_forward(
            batch.language, batch.q_ids, batch.q_chars, batch.d_ids, batch.d_chars,
            batch.q_mask, batch.d_mask, train=train, rng=rng)
        dist = self.independent_forward(batch.language, psi_q, psi_d,
                                        batch.q_mask, batch.d_mask, train, rng)
        return dist, psi_q, psi_d

    # -- parameter access ---------------------------------------------------

    def named_parameters(self):
        out = {}
        for gname, group in self.groups.items():
            for k, v in group.entries.items():
                out[f"{gname}/{k}"] = v
        return out

    def qa_parameters(self):
        return {k: v for k, v in self.named_parameters().items()
                if not k.startswith("discriminator/")}
