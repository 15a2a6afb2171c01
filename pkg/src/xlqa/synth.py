"""Deterministic paired-language toy corpus and the transfer experiment.

The base ("source") language is a whitespace language of random ASCII
words.  Every question pairs a template with a key word, and each
(key, template) combination names exactly one value word; the full
association is a fixed global table, sampled once per corpus.  A document
plants all of one key's value words at independent random positions among
filler (plus a few value words of unrelated keys); the question names the
key and a template, and the answer is the single value token the table
assigns to that combination.  Word vectors are built so that a value
word's vector is its key's vector plus one of a handful of fixed offset
directions, with the table deciding which template gets which offset for
each key.  Identifying candidate values of the queried key is therefore
pure embedding geometry, but choosing among them requires the table
itself, which no document reveals and only answer supervision teaches.
Since the table is a property of the vocabulary rather than of any
document, whatever has been learned from one language's corpus applies to
the other.  The "target" language is a bijective remapping of the
vocabulary onto two-character ideograph strings (paired words share one
word vector), optionally composed with a word-order rule that reverses
tokens inside fixed windows, mimicking syntactic divergence.  The lexicon
is exactly the bijection, and translation records (a perfect sentence-by-
sentence "MT engine") come from the same mapping, so the whole
cross-lingual pipeline can run end to end with known ground truth.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .adversary import Discriminator, discriminator_loss, score_accuracy
from .autodiff import no_grad
from .data import (
    Dataset,
    EmbeddingTable,
    Example,
    Vocabulary,
    make_batches,
    merge_datasets,
)
from .errors import InputError
from .trainer import (
    Adam,
    Resources,
    TrainerConfig,
    derive_seed,
    train,
)
from .xling import BilingualLexicon, TranslationRecord, build_train_on_target

_LANE_VOCAB = 100
_LANE_EXAMPLES = 101
_LANE_DEV = 102
_LANE_TABLE = 103
_LANE_PROBE = 104

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_BANNED = {"a", "an", "the"}


@dataclass
class SynthSpec:
    seed: int = 0
    vocab_size: int = 120
    n_source: int = 5000
    n_target: int = 500
    doc_len_min: int = 30
    doc_len_max: int = 40
    question_templates: int = 4
    cipher_seed: int = 1
    word_order: str = "reverse-clauses"
    window: int = 5
    pairs_per_doc: int = 4
    dev_count: int = 300
    word_dim: int = 32
    sentence_len: int = 10

    def validate(self):
        if self.vocab_size < 20:
            raise InputError("vocab_size must be >= 20")
        if self.n_target > self.n_source:
            raise InputError("n_target must be <= n_source")
        if self.word_order not in ("identity", "reverse-clauses"):
            raise InputError(f"unknown word_order {self.word_order!r}")
        if self.sentence_len % self.window:
            raise InputError("sentence_len must be a multiple of window")
        if self.doc_len_min < 2 * self.question_templates + 2:
            raise InputError("doc_len_min too small for the template count")
        return self


# --------------------------------------------------------------------------
# Vocabulary, lexicon, word-order rule
# --------------------------------------------------------------------------


def _make_src_words(rng, n):
    words = []
    seen = set(_BANNED)
    while len(words) < n:
        syll = rng.integers(2, 4)
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))]
                    + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syll))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _make_cipher_words(rng, n):
    pool = [chr(0x4E00 + i) for i in range(200)]
    combos = set()
    words = []
    while len(words) < n:
        w = pool[rng.integers(len(pool))] + pool[rng.integers(len(pool))]
        if w not in combos:
            combos.add(w)
            words.append(w)
    return words


def reorder_tokens(tokens, rule, window):
    """Apply the word-order rule; returns (new_tokens, position_map) where
    position_map[i] is the new index of the token originally at i."""
    n = len(tokens)
    if rule == "identity":
        return list(tokens), list(range(n))
    out = [None] * n
    pos_map = [0] * n
    for w0 in range(0, n, window):
        wlen = min(window, n - w0)
        for off in range(wlen):
            new = w0 + (wlen - 1 - off)
            out[new] = tokens[w0 + off]
            pos_map[w0 + off] = new
    return out, pos_map


@dataclass
class _Blueprint:
    """Language-neutral content of one example (source-language tokens)."""
    index: int
    question: list
    document: list
    answer_pos: int


class _Language:
    """Everything needed to realize blueprints in one language."""

    def __init__(self, tag, mapping, rule, window):
        self.tag = tag
        self.mapping = mapping
        self.rule = rule if tag == "tgt" else "identity"
        self.window = window

    def render(self, bp: _Blueprint, id_prefix) -> Example:
        doc = [self.mapping[t] for t in bp.document]
        doc, pos_map = reorder_tokens(doc, self.rule, self.window)
        q = [self.mapping[t] for t in bp.question]
        q, _ = reorder_tokens(q, self.rule, self.window)
        pos = pos_map[bp.answer_pos]
        sep = 1 if self.tag == "src" else 0
        offsets = []
        cursor = 0
        for t in doc:
            offsets.append((cursor, cursor + len(t)))
            cursor += len(t) + sep
        ex = Example(id=f"{id_prefix}{bp.index:05d}", question_tokens=q,
                     document_tokens=doc, document_offsets=offsets,
                     answer_texts=[doc[pos]], answer_spans=[(pos, pos)],
                     language=self.tag)
        ex.validate()
        return ex

    def record(self, bp: _Blueprint, src_id, sentence_len) -> TranslationRecord:
        doc = [self.mapping[t] for t in bp.document]
        sentences = []
        joiner = " " if self.tag == "src" else ""
        for s0 in range(0, len(doc), sentence_len):
            chunk = doc[s0 : s0 + sentence_len]
            chunk, _ = reorder_tokens(chunk, self.rule, self.window)
            sentences.append(joiner.join(chunk))
        q = [self.mapping[t] for t in bp.question]
        q, _ = reorder_tokens(q, self.rule, self.window)
        pos = bp.answer_pos
        return TranslationRecord(id=src_id, question=joiner.join(q),
                                 sentences=sentences,
                                 answer=self.mapping[bp.document[pos]])


# --------------------------------------------------------------------------
# Corpus generation
# --------------------------------------------------------------------------


@dataclass
class SynthCorpora:
    spec: SynthSpec
    lexicon: BilingualLexicon
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    char_vocab: Vocabulary
    resources: Resources
    src_train: Dataset
    tgt_train: Dataset
    src_dev: Dataset
    tgt_dev: Dataset
    records_s2t: dict
    records_t2s: dict


def _blueprints(spec: SynthSpec, rng, count, start_index, keys, values, filler,
                qwords):
    """values[k][t] is the value word the global table assigns to (k, t)."""
    out = []
    tcount = spec.question_templates
    n_keys = len(keys)
    for i in range(count):
        length = int(rng.integers(spec.doc_len_min, spec.doc_len_max + 1))
        k = int(rng.integers(n_keys))
        # All of the key's candidate values appear, at independent random
        # positions, so neither position nor mere key similarity picks the
        # answer; only the (key, template) -> value table does.  A few
        # value words of other keys are thrown in as additional noise.
        extra = min(spec.pairs_per_doc, length - tcount - 1)
        doc = [filler[rng.integers(len(filler))] for _ in range(length)]
        slots = rng.choice(length, size=tcount + extra, replace=False)
        for t in range(tcount):
            doc[slots[t]] = values[k][t]
        for j in range(extra):
            other = (k + 1 + int(rng.integers(n_keys - 1))) % n_keys
            doc[slots[tcount + j]] = values[other][int(rng.integers(tcount))]
        t = int(rng.integers(tcount))
        question = [qwords[2 * t], qwords[2 * t + 1], keys[k]]
        out.append(_Blueprint(index=start_index + i, question=question,
                              document=doc, answer_pos=int(slots[t])))
    return out


def generate(spec: SynthSpec):
    """The (source Dataset, target Dataset, BilingualLexicon) triple."""
    corpora = make_corpora(spec)
    return corpora.src_train, corpora.tgt_train, corpora.lexicon


def make_corpora(spec: SynthSpec) -> SynthCorpora:
    """Generate everything the experiments need, deterministically."""
    spec.validate()
    vrng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((spec.seed, _LANE_VOCAB))))
    src_words = _make_src_words(vrng, spec.vocab_size)
    crng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((spec.cipher_seed, _LANE_VOCAB))))
    cipher_words = _make_cipher_words(crng, spec.vocab_size)
    lexicon = BilingualLexicon(dict(zip(src_words, cipher_words)))

    tcount = spec.question_templates
    filler_min = max(8, spec.vocab_size // 16)
    n_keys = (spec.vocab_size - 2 * tcount - filler_min) // (1 + tcount)
    if n_keys < 2:
        raise InputError("vocab_size too small for the requested template count")
    keys = src_words[:n_keys]
    flat = src_words[n_keys : n_keys + n_keys * tcount]
    values = [flat[k * tcount : (k + 1) * tcount] for k in range(n_keys)]
    qstart = n_keys + n_keys * tcount
    qwords = src_words[qstart : qstart + 2 * tcount]
    filler = src_words[qstart + 2 * tcount :]

    src_lang = _Language("src", {w: w for w in src_words}, spec.word_order,
                         spec.window)
    tgt_lang = _Language("tgt", lexicon.forward, spec.word_order, spec.window)

    erng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((spec.seed, _LANE_EXAMPLES))))
    train_bps = _blueprints(spec, erng, spec.n_source, 0, keys, values, filler,
                            qwords)
    drng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((spec.seed, _LANE_DEV))))
    dev_bps = _blueprints(spec, drng, spec.dev_count, spec.n_source, keys,
                          values, filler, qwords)

    src_train = Dataset([src_lang.render(bp, "s") for bp in train_bps], "src")
    tgt_train = Dataset([tgt_lang.render(bp, "t")
                         for bp in train_bps[: spec.n_target]], "tgt")
    src_dev = Dataset([src_lang.render(bp, "s") for bp in dev_bps], "src")
    tgt_dev = Dataset([tgt_lang.render(bp, "t") for bp in dev_bps], "tgt")

    records_s2t = {}
    for bp in train_bps + dev_bps:
        records_s2t[f"s{bp.index:05d}"] = tgt_lang.record(bp, f"s{bp.index:05d}",
                                                          spec.sentence_len)
    records_t2s = {}
    for bp in dev_bps:
        records_t2s[f"t{bp.index:05d}"] = src_lang.record(bp, f"t{bp.index:05d}",
                                                          spec.sentence_len)

    src_vocab = Vocabulary(src_words)
    tgt_vocab = Vocabulary(cipher_words)
    chars = []
    seen = set()
    for w in src_words + cipher_words:
        for ch in w:
            if ch not in seen:
                seen.add(ch)
                chars.append(ch)
    char_vocab = Vocabulary(chars)

    trng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((spec.seed, _LANE_TABLE))))
    vectors = 0.5 * trng.standard_normal((len(tgt_vocab), spec.word_dim))
    # Value-word vectors are structured: vec(value) = vec(key) + one of
    # `question_templates` fixed offset directions, plus a little noise.
    # Which template gets which offset is a per-key permutation, i.e. the
    # global association table.  Spotting "a value of this key" is then
    # plain embedding geometry (shared across languages, cheap to learn),
    # while choosing the right candidate requires the table, which only
    # answer supervision teaches and data volume pins down.
    offs, _ = np.linalg.qr(trng.standard_normal((spec.word_dim, tcount)))
    offs = offs.T * (0.5 * np.sqrt(spec.word_dim))
    for k, k_word in enumerate(keys):
        k_id = tgt_vocab.lookup(lexicon.forward[k_word])
        perm = trng.permutation(tcount)
        for t in range(tcount):
            v_id = tgt_vocab.lookup(lexicon.forward[values[k][t]])
            vectors[v_id] = (vectors[k_id] + offs[perm[t]]
                             + 0.1 * trng.standard_normal(spec.word_dim))
    tgt_table = EmbeddingTable(vectors.astype(np.float32))
    from .xling import remap_shared_embeddings

    src_table, _ = remap_shared_embeddings(src_vocab, lexicon, tgt_vocab,
                                           tgt_table)
    res = Resources(src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                    char_vocab=char_vocab, src_table=src_table,
                    tgt_table=tgt_table)
    return SynthCorpora(spec=spec, lexicon=lexicon, src_vocab=src_vocab,
                        tgt_vocab=tgt_vocab, char_vocab=char_vocab,
                        resources=res, src_train=src_train, tgt_train=tgt_train,
                        src_dev=src_dev, tgt_dev=tgt_dev,
                        records_s2t=records_s2t, records_t2s=records_t2s)


def subset_dataset(dataset: Dataset, fraction: float) -> Dataset:
    n = max(1, int(round(fraction * len(dataset))))
    return Dataset(dataset.examples[:n], dataset.language, dataset.dropped)


# --------------------------------------------------------------------------
# Discriminator held-out accuracy
# --------------------------------------------------------------------------


def _dev_features(model, dataset, res, batch_size, dtype):
    vocab = res.vocab_for(dataset.language)
    batches = make_batches(dataset, batch_size, derive_seed(0, _LANE_PROBE, 0),
                           vocab, res.char_vocab, dtype=dtype)
    feats = []
    for b in batches:
        with no_grad():
            pq, pd = model.dependent_forward(
                b.language, b.q_ids, b.q_chars, b.d_ids, b.d_chars,
                b.q_mask, b.d_mask, train=False, rng=None)
        feats.append((pq, b.q_mask, pd, b.d_mask))
    return feats


def _scores(disc, feats):
    out = []
    for pq, qm, pd, dm in feats:
        with no_grad():
            out.append(disc.forward(pq, qm).data)
            out.append(disc.forward(pd, dm).data)
    return np.concatenate(out)


def held_out_discriminator_accuracy(model, disc, res, tgt_dev, src_dev,
                                    batch_size=16, dtype=np.float32):
    """Accuracy of an existing discriminator on dev-set features."""
    tgt_feats = _dev_features(model, tgt_dev, res, batch_size, dtype)
    src_feats = _dev_features(model, src_dev, res, batch_size, dtype)
    return score_accuracy(_scores(disc, tgt_feats), _scores(disc, src_feats))


def probe_discriminator_accuracy(model, hp, res, tgt_dev, src_dev, seed=0,
                                 steps=150, lr=1e-3, batch_size=16,
                                 dtype=np.float32):
    """Train a fresh discriminator on half the dev features, report held-out
    accuracy on the other half.  Measures how separable the two languages'
    feature distributions are under the given (frozen) model."""
    tgt_feats = _dev_features(model, tgt_dev, res, batch_size, dtype)
    src_feats = _dev_features(model, src_dev, res, batch_size, dtype)
    t_half = max(1, len(tgt_feats) // 2)
    s_half = max(1, len(src_feats) // 2)
    t_train, t_eval = tgt_feats[:t_half], tgt_feats[t_half:] or tgt_feats[:1]
    s_train, s_eval = src_feats[:s_half], src_feats[s_half:] or src_feats[:1]
    disc = Discriminator(hp, seed=derive_seed(seed, _LANE_PROBE), dtype=dtype)
    params = {k: v for k, v in disc.group.entries.items()}
    opt = Adam(lr)
    for t in range(steps):
        tq, tm, td, tdm = t_train[t % len(t_train)]
        sq, sm, sd, sdm = s_train[t % len(s_train)]
        scores_t = [disc.forward(tq, tm), disc.forward(td, tdm)]
        scores_s = [disc.forward(sq, sm), disc.forward(sd, sdm)]
        sizes = {s.data.shape[0] for s in scores_t + scores_s}
        if len(sizes) > 1:
            continue
        loss = discriminator_loss(scores_t, scores_s)
        for p in params.values():
            p.grad = None
        loss.backward()
        opt.step(params)
    return score_accuracy(_scores(disc, t_eval), _scores(disc, s_eval))


# --------------------------------------------------------------------------
# The transfer experiment
# --------------------------------------------------------------------------

SUITE_ROWS = ("target-only", "dependent", "gan-ch", "gan-en")


def _parse_row(row):
    if ":" in row:
        name, frac = row.split(":", 1)
        return name, float(frac)
    return row, 1.0


def run_transfer_suite(spec: SynthSpec, cfg: TrainerConfig, hp,
                       rows=SUITE_ROWS, corpora: SynthCorpora = None,
                       dtype=np.float32):
    """Train one model per row and tabulate dev EM/F1 plus discriminator
    held-out accuracy (the co-trained D for adversarial rows, a freshly
    trained probe otherwise)."""
    if corpora is None:
        corpora = make_corpora(spec)
    res = corpora.resources
    translated = None
    table = []
    for row in rows:
        name, frac = _parse_row(row)
        tgt_train = subset_dataset(corpora.tgt_train, frac)
        if name in ("mt", "mt+gan-ch") and translated is None:
            translated = build_train_on_target(
                corpora.src_train, corpora.records_s2t, "records",
                vocab=corpora.tgt_vocab)
        if name == "target-only":
            mode, variant = "target-only", "none"
            datasets = {"tgt": tgt_train, "dev": corpora.tgt_dev}
        elif name == "dependent":
            mode, variant = "joint-shuffled", "none"
            datasets = {"tgt": tgt_train, "src": corpora.src_train,
                        "dev": corpora.tgt_dev}
        elif name in ("gan-ch", "gan-en"):
            mode, variant = "adversarial", name
            datasets = {"tgt": tgt_train, "src": corpora.src_train,
                        "dev": corpora.tgt_dev}
        elif name == "mt":
            mode, variant = "joint-shuffled", "none"
            datasets = {"tgt": tgt_train, "src": translated,
                        "dev": corpora.tgt_dev}
        elif name == "mt+gan-ch":
            mode, variant = "adversarial", "gan-ch"
            datasets = {"tgt": merge_datasets([tgt_train, translated]),
                        "src": corpora.src_train, "dev": corpora.tgt_dev}
        else:
            raise InputError(f"unknown suite row {row!r}")
        row_cfg = replace(cfg, mode=mode, variant=variant)
        started = time.time()
        result = train(mode, datasets, row_cfg, hp, res, dtype=dtype)
        em, f1 = result.final_dev
        tr = result.trainer
        if mode == "adversarial":
            d_acc = held_out_discriminator_accuracy(
                tr.model, tr.disc, res, corpora.tgt_dev, corpora.src_dev,
                batch_size=cfg.batch_size, dtype=dtype)
        else:
            d_acc = probe_discriminator_accuracy(
                tr.model, hp, res, corpora.tgt_dev, corpora.src_dev,
                seed=cfg.seed, batch_size=cfg.batch_size, dtype=dtype)
        table.append({"row": row, "em": em, "f1": f1, "d_acc": d_acc,
                      "steps": tr.step, "seconds": time.time() - started,
                      "log": result.log})
    return table


def write_table_csv(path, table):
    # wall-clock timings stay out of the file so reruns are byte-identical
    with open(path, "w", encoding="utf-8") as f:
        f.write("row,em,f1,d_acc,steps\n")
        for r in table:
            f.write(f"{r['row']},{r['em']:.4f},{r['f1']:.4f},{r['d_acc']:.4f},"
                    f"{r['steps']}\n")


def desk_suite_config(seed=7, steps=400, n_source=5000, n_target=500,
                      dev_count=300):
    """The pinned CPU-scale configuration for the transfer experiment.

    One source of truth shared by the repro command and the acceptance
    checks.  The schedule constants differ from the full-scale defaults
    because a few hundred steps need a faster ramp and a faster-moving
    weight average to show anything at all.
    """
    from .model import desk_preset

    spec = SynthSpec(seed=seed, vocab_size=120, n_source=n_source,
                     n_target=n_target, dev_count=dev_count,
                     doc_len_min=30, doc_len_max=40,
                     word_order="reverse-clauses")
    cfg = TrainerConfig(batch_size=16, steps=steps, eval_every=max(1, steps // 8),
                        patience=1000, lr=1e-3, k=5, lambda_peak=0.003,
                        ramp_steps=max(1, steps // 2), ramp_shape="linear",
                        ema_decay=0.98, seed=seed)
    return spec, cfg, desk_preset()


def write_series_csv(path, table):
    """Dev-F1-over-steps series per row (performance-curve data)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("row,step,dev_em,dev_f1\n")
        for r in table:
            for entry in r["log"]:
                if entry.get("dev_f1") is not None:
                    f.write(f"{r['row']},{entry['step']},"
                            f"{entry['dev_em']:.4f},{entry['dev_f1']:.4f}\n")
