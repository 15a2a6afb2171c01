import numpy as np
import pytest

from xlqa.data import Dataset, EmbeddingTable, Example, Vocabulary
from xlqa.trainer import Resources


def make_rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def rng():
    return make_rng(0)


SRC_WORDS = ["kora", "bel", "tam", "rup", "soda", "min", "gal", "vat",
             "peno", "dur", "lis", "fek"]
TGT_WORDS = ["一丁", "丂七", "丄丅", "丆万",
             "丈三", "上下", "丌不", "与丏",
             "丐丑", "丒专", "且丕", "世丗"]


def tiny_example(idx, language, words, doc_len=9, answer_at=4):
    rng = make_rng(1000 + idx)
    doc = [words[int(rng.integers(len(words)))] for _ in range(doc_len)]
    q = [words[int(rng.integers(len(words)))] for _ in range(3)]
    sep = 1 if language == "src" else 0
    offsets = []
    cur = 0
    for t in doc:
        offsets.append((cur, cur + len(t)))
        cur += len(t) + sep
    return Example(id=f"{language}{idx:03d}", question_tokens=q,
                   document_tokens=doc, document_offsets=offsets,
                   answer_texts=[doc[answer_at]],
                   answer_spans=[(answer_at, answer_at)], language=language)


def tiny_dataset(language, n=8, doc_len=9):
    words = SRC_WORDS if language == "src" else TGT_WORDS
    return Dataset([tiny_example(i, language, words, doc_len) for i in range(n)],
                   language)


def tiny_resources(dim=8, seed=0):
    src_vocab = Vocabulary(SRC_WORDS)
    tgt_vocab = Vocabulary(TGT_WORDS)
    chars = []
    seen = set()
    for w in SRC_WORDS + TGT_WORDS:
        for ch in w:
            if ch not in seen:
                seen.add(ch)
                chars.append(ch)
    char_vocab = Vocabulary(chars)
    rng = make_rng(seed)
    src_table = EmbeddingTable(
        (0.5 * rng.standard_normal((len(src_vocab), dim))).astype(np.float32))
    tgt_table = EmbeddingTable(
        (0.5 * rng.standard_normal((len(tgt_vocab), dim))).astype(np.float32))
    src_table.vectors[0] = 0.0
    tgt_table.vectors[0] = 0.0
    return Resources(src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                     char_vocab=char_vocab, src_table=src_table,
                     tgt_table=tgt_table)


@pytest.fixture
def resources():
    return tiny_resources()


def tiny_hp(**overrides):
    from xlqa.model import HyperParams
    base = dict(hidden=16, heads=2, emb_blocks=1, model_blocks=1, conv_width=3,
                char_dim=8, char_conv_width=3, max_answer_len=3, dropout=0.0,
                dis_blocks=1, dis_filters=16, dis_width=3)
    base.update(overrides)
    return HyperParams(**base)
