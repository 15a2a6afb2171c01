"""Corpus ingestion, tokenization, vocabularies, embeddings, batching.

Two language conventions run through everything here.  The source language
("src") is whitespace-delimited: tokens join with single spaces and the
tokenizer peels leading/trailing ASCII punctuation into separate tokens.
The target language ("tgt") is unsegmented: tokens join with the empty
string and the default tokenizer greedily matches the longest vocabulary
word at each position, falling back to single characters.
"""

import json
import re
import string
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

PAD = "<pad>"
UNK = "<unk>"

_PUNCT = set(string.punctuation)
_WS_CHUNK = re.compile(r"\S+")


def join_tokens(tokens, language: str) -> str:
    return " ".join(tokens) if language == "src" else "".join(tokens)


# --------------------------------------------------------------------------
# Tokenization
# --------------------------------------------------------------------------


def _tokenize_src(text):
    out = []
    for m in _WS_CHUNK.finditer(text):
        chunk, base = m.group(), m.start()
        lo, hi = 0, len(chunk)
        lead = []
        while lo < hi and chunk[lo] in _PUNCT:
            lead.append((chunk[lo], base + lo, base + lo + 1))
            lo += 1
        trail = []
        while hi > lo and chunk[hi - 1] in _PUNCT:
            trail.append((chunk[hi - 1], base + hi - 1, base + hi))
            hi -= 1
        out.extend(lead)
        if hi > lo:
            out.append((chunk[lo:hi], base + lo, base + hi))
        out.extend(reversed(trail))
    return out


def _tokenize_tgt_greedy(text, words):
    if not words:
        return [(ch, i, i + 1) for i, ch in enumerate(text)]
    max_len = max(len(w) for w in words)
    out = []
    i, n = 0, len(text)
    while i < n:
        take = 1
        for length in range(min(max_len, n - i), 1, -1):
            if text[i : i + length] in words:
                take = length
                break
        out.append((text[i : i + take], i, i + take))
        i += take
    return out


def tokenize(text: str, language: str, vocab=None, segmenter=None):
    """Split text into (token, char_start, char_end) triples.

    src splits on whitespace and peels surrounding punctuation; offsets are
    exact.  tgt uses `segmenter` when given (a callable returning a list of
    strings that partition the text), else greedy longest-match against the
    vocabulary with per-character fallback.
    """
    if language == "src":
        return _tokenize_src(text)
    if language != "tgt":
        raise InputError(f"unknown language tag {language!r}")
    if segmenter is not None:
        pieces = segmenter(text)
        if "".join(pieces) != text:
            raise InputError("segmenter output does not partition the input text")
        out = []
        pos = 0
        for p in pieces:
            out.append((p, pos, pos + len(p)))
            pos += len(p)
        return out
    if vocab is None:
        words = frozenset()
    elif isinstance(vocab, Vocabulary):
        words = frozenset(vocab.words())
    else:
        words = frozenset(vocab)
    return _tokenize_tgt_greedy(text, words)


# --------------------------------------------------------------------------
# Vocabulary and embeddings
# --------------------------------------------------------------------------


class Vocabulary:
    """Token <-> id bijection with pad at 0 and unk at 1."""

    def __init__(self, tokens=()):
        self.id_to_word = [PAD, UNK]
        self.word_to_id = {PAD: 0, UNK: 1}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self.word_to_id.get(token)
        if idx is None:
            idx = len(self.id_to_word)
            self.word_to_id[token] = idx
            self.id_to_word.append(token)
        return idx

    def lookup(self, token: str) -> int:
        return self.word_to_id.get(token, 1)

    def words(self):
        return self.id_to_word[2:]

    def __contains__(self, token):
        return token in self.word_to_id

    def __len__(self):
        return len(self.id_to_word)

    @property
    def pad_id(self):
        return 0

    @property
    def unk_id(self):
        return 1

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for w in self.id_to_word:
                f.write(w + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            lines = [ln.rstrip("\n") for ln in f]
        if lines[:2] != [PAD, UNK]:
            raise InputError(f"vocabulary cache {path} missing pad/unk header")
        v = cls()
        for w in lines[2:]:
            v.add(w)
        return v


def build_vocabularies(datasets, min_count=1):
    """Word and character vocabularies over all question/document tokens."""
    counts = {}
    chars = {}
    for ds in datasets:
        for ex in ds:
            for tok in ex.question_tokens + ex.document_tokens:
                counts[tok] = counts.get(tok, 0) + 1
                for ch in tok:
                    chars[ch] = chars.get(ch, 0) + 1
    word_vocab = Vocabulary(w for w, c in counts.items() if c >= min_count)
    char_vocab = Vocabulary(c for c, n in chars.items() if n >= min_count)
    return word_vocab, char_vocab


@dataclass
class EmbeddingTable:
    vectors: np.ndarray
    frozen: bool = True

    @property
    def dim(self):
        return self.vectors.shape[1]


def read_embedding_file(path, dim):
    """Parse `word v1 v2 ... vd` lines into a word -> vector map."""
    table = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise InputError(f"{path}:{lineno}: expected word + {dim} floats")
            table[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float32)
    return table


def build_embedding_table(vocab: Vocabulary, word_vectors: dict, dim: int,
                          frozen=True) -> EmbeddingTable:
    """Stack vocabulary vectors; pad, unk, and unseen words are zero rows."""
    mat = np.zeros((len(vocab), dim), dtype=np.float32)
    for word, idx in vocab.word_to_id.items():
        vec = word_vectors.get(word)
        if vec is not None and idx > 1:
            mat[idx] = vec
    return EmbeddingTable(vectors=mat, frozen=frozen)


def write_embedding_file(path, words, vectors):
    with open(path, "w", encoding="utf-8") as f:
        for w, v in zip(words, vectors):
            f.write(w + " " + " ".join(format(float(x), ".6g") for x in v) + "\n")


# --------------------------------------------------------------------------
# Examples and datasets
# --------------------------------------------------------------------------


@dataclass
class Example:
    id: str
    question_tokens: list
    document_tokens: list
    document_offsets: list
    answer_texts: list
    answer_spans: list
    language: str

    def validate(self):
        n = len(self.document_tokens)
        if not self.answer_texts or len(self.answer_texts) != len(self.answer_spans):
            raise InputError(f"example {self.id}: answers and spans misaligned")
        for y1, y2 in self.answer_spans:
            if not (0 <= y1 <= y2 < n):
                raise InputError(f"example {self.id}: span ({y1},{y2}) outside document")


@dataclass
class Dataset:
    examples: list
    language: str
    dropped: int = 0

    def __iter__(self):
        return iter(self.examples)

    def __len__(self):
        return len(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    def by_id(self):
        return {ex.id: ex for ex in self.examples}


def merge_datasets(datasets):
    examples = [ex for ds in datasets for ex in ds]
    langs = {ds.language for ds in datasets}
    language = langs.pop() if len(langs) == 1 else "mixed"
    return Dataset(examples=examples, language=language,
                   dropped=sum(ds.dropped for ds in datasets))


def _char_range_to_span(offsets, a_start, a_end):
    """Indices of tokens overlapping [a_start, a_end); split tokens are
    expanded to full covering tokens."""
    first = last = None
    for i, (s, e) in enumerate(offsets):
        if e > a_start and s < a_end:
            if first is None:
                first = i
            last = i
    if first is None:
        return None
    return first, last


def load_squad_json(path, language, vocab=None, segmenter=None) -> Dataset:
    """Read a SQuAD v1.1 JSON file into tokenized examples.

    Character offsets become inclusive token spans.  Answers whose text is
    not found verbatim at its stated offset are discarded; an example with
    no usable answer is dropped and counted.
    """
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: malformed JSON ({e})") from e
    examples = []
    dropped = 0
    try:
        articles = payload["data"]
        for article in articles:
            for para in article["paragraphs"]:
                context = para["context"]
                doc = tokenize(context, language, vocab=vocab, segmenter=segmenter)
                doc_tokens = [t for t, _, _ in doc]
                doc_offsets = [(s, e) for _, s, e in doc]
                for qa in para["qas"]:
                    qid = qa["id"]
                    q_tokens = [t for t, _, _ in
                                tokenize(qa["question"], language, vocab=vocab,
                                         segmenter=segmenter)]
                    texts, spans = [], []
                    for ans in qa["answers"]:
                        text = ans["text"]
                        a0 = ans["answer_start"]
                        if context[a0 : a0 + len(text)] != text:
                            continue
                        span = _char_range_to_span(doc_offsets, a0, a0 + len(text))
                        if span is None:
                            continue
                        texts.append(text)
                        spans.append(span)
                    if not texts:
                        dropped += 1
                        continue
                    ex = Example(id=qid, question_tokens=q_tokens,
                                 document_tokens=doc_tokens,
                                 document_offsets=doc_offsets,
                                 answer_texts=texts, answer_spans=spans,
                                 language=language)
                    ex.validate()
                    examples.append(ex)
    except KeyError as e:
        raise InputError(f"{path}: missing SQuAD field {e}") from e
    return Dataset(examples=examples, language=language, dropped=dropped)


def reconstruct_context(example: Example) -> str:
    """Rebuild a context string consistent with the example's offsets.
    Characters between tokens are rendered as spaces."""
    if not example.document_offsets:
        return ""
    buf = [" "] * example.document_offsets[-1][1]
    for tok, (s, e) in zip(example.document_tokens, example.document_offsets):
        buf[s:e] = tok
    return "".join(buf)


def write_squad_json(path, dataset: Dataset, title="corpus"):
    """Write a dataset back out in SQuAD v1.1 layout, one paragraph per
    example.  Answers without a token span get answer_start -1 (readers of
    v1.1 files will discard those entries)."""
    paragraphs = []
    for ex in dataset:
        context = reconstruct_context(ex)
        answers = []
        for k, text in enumerate(ex.answer_texts):
            if k < len(ex.answer_spans):
                start = ex.document_offsets[ex.answer_spans[k][0]][0]
            else:
                start = -1
            answers.append({"text": text, "answer_start": start})
        paragraphs.append({
            "context": context,
            "qas": [{"id": ex.id,
                     "question": join_tokens(ex.question_tokens, ex.language),
                     "answers": answers}],
        })
    payload = {"version": "1.1",
               "data": [{"title": title, "paragraphs": paragraphs}]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False)


def filter_by_length(dataset: Dataset, max_doc_tokens: int) -> Dataset:
    if max_doc_tokens < 1:
        raise InputError("max_doc_tokens must be >= 1")
    kept = [ex for ex in dataset if len(ex.document_tokens) <= max_doc_tokens]
    return Dataset(examples=kept, language=dataset.language, dropped=dataset.dropped)


# --------------------------------------------------------------------------
# Batching
# --------------------------------------------------------------------------

MAX_WORD_CHARS = 16


@dataclass
class Batch:
    q_ids: np.ndarray
    d_ids: np.ndarray
    q_chars: np.ndarray
    d_chars: np.ndarray
    q_mask: np.ndarray
    d_mask: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    language: str
    ids: list

    @property
    def size(self):
        return self.q_ids.shape[0]


def _pad_ids(token_lists, vocab, length):
    out = np.zeros((len(token_lists), length), dtype=np.int64)
    for i, toks in enumerate(token_lists):
        for j, t in enumerate(toks):
            out[i, j] = vocab.lookup(t)
    return out


def _pad_chars(token_lists, char_vocab, length, width):
    out = np.zeros((len(token_lists), length, width), dtype=np.int64)
    for i, toks in enumerate(token_lists):
        for j, t in enumerate(toks):
            for k, ch in enumerate(t[:width]):
                out[i, j, k] = char_vocab.lookup(ch)
    return out


def _mask(token_lists, length, dtype):
    m = np.zeros((len(token_lists), length), dtype=dtype)
    for i, toks in enumerate(token_lists):
        m[i, : len(toks)] = 1.0
    return m


def _build_batch(examples, word_vocab, char_vocab, dtype):
    qs = [ex.question_tokens for ex in examples]
    ds = [ex.document_tokens for ex in examples]
    lq = max(len(t) for t in qs)
    ld = max(len(t) for t in ds)
    return Batch(
        q_ids=_pad_ids(qs, word_vocab, lq),
        d_ids=_pad_ids(ds, word_vocab, ld),
        q_chars=_pad_chars(qs, char_vocab, lq, MAX_WORD_CHARS),
        d_chars=_pad_chars(ds, char_vocab, ld, MAX_WORD_CHARS),
        q_mask=_mask(qs, lq, dtype),
        d_mask=_mask(ds, ld, dtype),
        y1=np.asarray([ex.answer_spans[0][0] for ex in examples], dtype=np.int64),
        y2=np.asarray([ex.answer_spans[0][1] for ex in examples], dtype=np.int64),
        language=examples[0].language,
        ids=[ex.id for ex in examples],
    )


def make_batches(dataset, batch_size, shuffle_seed, word_vocab, char_vocab,
                 dtype=np.float32):
    """Shuffle deterministically and emit language-homogeneous padded batches.

    Examples are permuted by a PCG64 generator seeded with shuffle_seed,
    then emitted in that order through per-language buffers: a buffer
    flushes as a batch the moment it reaches batch_size, and leftovers
    flush at the end (sorted by language tag).  Every example appears in
    exactly one batch.  On a single-language dataset this is identical to
    slicing the shuffled list.
    """
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    examples = list(dataset)
    if not examples:
        return []
    rng = np.random.Generator(np.random.PCG64(shuffle_seed))
    order = rng.permutation(len(examples))
    buffers = {}
    batches = []
    for idx in order:
        ex = examples[idx]
        buf = buffers.setdefault(ex.language, [])
        buf.append(ex)
        if len(buf) == batch_size:
            batches.append(_build_batch(buf, word_vocab, char_vocab, dtype))
            buffers[ex.language] = []
    for lang in sorted(buffers):
        if buffers[lang]:
            batches.append(_build_batch(buffers[lang], word_vocab, char_vocab, dtype))
    return batches
