"""Cross-lingual data plumbing.

Covers the bilingual lexicon, word-by-word translation with span
preservation, remapping source words onto target embedding vectors,
assembling sentence-wise translated documents, recovering answer spans in
translated text, and constructing the train-on-target / test-on-source
datasets.  Translations are consumed from files; nothing here calls an
external translation service.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, EmbeddingTable, Example, join_tokens, tokenize
from .errors import InputError
from .evalkit import EvalReport, evaluate, normalize_answer


class BilingualLexicon:
    """Word map src -> tgt with a lazily built first-wins reverse map."""

    def __init__(self, forward: dict):
        self.forward = dict(forward)
        self._reverse = None

    @property
    def reverse(self):
        if self._reverse is None:
            rev = {}
            for k, v in self.forward.items():
                rev.setdefault(v, k)
            self._reverse = rev
        return self._reverse

    def mapping(self, direction: str) -> dict:
        if direction == "src2tgt":
            return self.forward
        if direction == "tgt2src":
            return self.reverse
        raise InputError(f"direction must be src2tgt or tgt2src, got {direction!r}")

    def __len__(self):
        return len(self.forward)

    @classmethod
    def from_tsv(cls, path):
        forward = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0] or not parts[1]:
                    raise InputError(f"{path}:{lineno}: expected src<TAB>tgt")
                forward.setdefault(parts[0], parts[1])
        return cls(forward)

    def save_tsv(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for k, v in self.forward.items():
                f.write(f"{k}\t{v}\n")


@dataclass
class TranslationRecord:
    id: str
    question: str
    sentences: list
    answer: str

    def validate(self):
        if not self.sentences:
            raise InputError(f"record {self.id}: empty sentence list")


def load_translation_records(path):
    records = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec = TranslationRecord(id=obj["id"], question=obj["question"],
                                        sentences=list(obj["sentences"]),
                                        answer=obj["answer"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise InputError(f"{path}:{lineno}: bad translation record ({e})") from e
            rec.validate()
            records[rec.id] = rec
    return records


def save_translation_records(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({"id": rec.id, "question": rec.question,
                                "sentences": rec.sentences, "answer": rec.answer},
                               ensure_ascii=False) + "\n")


# --------------------------------------------------------------------------
# Word-by-word translation
# --------------------------------------------------------------------------

_OTHER = {"src": "tgt", "tgt": "src"}


def _translate_tokens(tokens, mapping, stats):
    """Map each token; a mapped value containing spaces becomes several
    tokens.  Returns the new tokens plus old-index -> new-range bounds."""
    out = []
    starts = []
    ends = []
    for tok in tokens:
        starts.append(len(out))
        val = mapping.get(tok)
        if val is None:
            out.append(tok)
            if stats is not None:
                stats["oov"] = stats.get("oov", 0) + 1
        else:
            out.extend(val.split(" ") if " " in val else [val])
        ends.append(len(out) - 1)
    return out, starts, ends


def _offsets_for(tokens, language):
    sep = 1 if language == "src" else 0
    offsets = []
    pos = 0
    for t in tokens:
        offsets.append((pos, pos + len(t)))
        pos += len(t) + sep
    return offsets


def word_by_word_translate(example: Example, lexicon: BilingualLexicon,
                           direction: str, stats=None) -> Example:
    """Replace every token through the lexicon, keeping word order.

    Out-of-lexicon tokens stay verbatim (counted into stats["oov"]).  With
    single-token mappings the document length is unchanged and span indices
    carry over verbatim; multi-token target values re-index the spans so
    the answer text is still the joined span.
    """
    if not lexicon.forward:
        raise InputError("empty lexicon")
    mapping = lexicon.mapping(direction)
    if example.language != direction[:3]:
        raise InputError(
            f"example language {example.language} does not match direction {direction}")
    new_lang = _OTHER[example.language]
    q_tokens, _, _ = _translate_tokens(example.question_tokens, mapping, stats)
    d_tokens, starts, ends = _translate_tokens(example.document_tokens, mapping, stats)
    spans = [(starts[y1], ends[y2]) for y1, y2 in example.answer_spans]
    texts = [join_tokens(d_tokens[a : b + 1], new_lang) for a, b in spans]
    ex = Example(id=example.id, question_tokens=q_tokens, document_tokens=d_tokens,
                 document_offsets=_offsets_for(d_tokens, new_lang),
                 answer_texts=texts, answer_spans=spans, language=new_lang)
    ex.validate()
    return ex


def remap_shared_embeddings(src_vocab, lexicon: BilingualLexicon, tgt_vocab,
                            tgt_table: EmbeddingTable):
    """Give every source word the embedding vector of its lexicon image.

    Source words without a lexicon entry get the unk vector.  Returns the
    new table plus the fraction of source words that had an entry.
    """
    dim = tgt_table.dim
    mat = np.zeros((len(src_vocab), dim), dtype=tgt_table.vectors.dtype)
    mapped = 0
    for word in src_vocab.words():
        idx = src_vocab.lookup(word)
        image = lexicon.forward.get(word)
        if image is None:
            mat[idx] = tgt_table.vectors[tgt_vocab.unk_id]
        else:
            mapped += 1
            mat[idx] = tgt_table.vectors[tgt_vocab.lookup(image)]
    total = max(1, len(src_vocab.words()))
    return EmbeddingTable(vectors=mat, frozen=True), mapped / total


def assemble_translated_document(record: TranslationRecord, language: str) -> str:
    """Join the record's sentences per the joining rule of `language`."""
    sentences = [s for s in record.sentences if s]
    return join_tokens(sentences, language)


# --------------------------------------------------------------------------
# Span recovery
# --------------------------------------------------------------------------


def _norm_pieces(tokens, language):
    return [normalize_answer(t, language) for t in tokens]


def recover_span(document_tokens, answer_text, language):
    """First (start, end) whose joined tokens normalize to the answer.

    Scans starts ascending, ends ascending; normalized text length grows
    monotonically with the span, so each start stops as soon as it
    overshoots.  Returns None when no span matches.
    """
    target = normalize_answer(answer_text, language)
    pieces = _norm_pieces(document_tokens, language)
    n = len(document_tokens)
    for y1 in range(n):
        acc = ""
        for y2 in range(y1, n):
            p = pieces[y2]
            if language == "src" and acc and p:
                acc = acc + " " + p
            else:
                acc = acc + p
            if acc == target:
                return (y1, y2)
            if len(acc) > len(target):
                break
    return None


# --------------------------------------------------------------------------
# Dataset builders
# --------------------------------------------------------------------------


def _example_from_record(rec: TranslationRecord, language, vocab=None, segmenter=None):
    doc_text = assemble_translated_document(rec, language)
    doc = tokenize(doc_text, language, vocab=vocab, segmenter=segmenter)
    doc_tokens = [t for t, _, _ in doc]
    doc_offsets = [(s, e) for _, s, e in doc]
    q_tokens = [t for t, _, _ in tokenize(rec.question, language, vocab=vocab,
                                          segmenter=segmenter)]
    span = recover_span(doc_tokens, rec.answer, language)
    return doc_tokens, doc_offsets, q_tokens, span


def build_train_on_target(src_dataset: Dataset, records, lexicon_mode: str,
                          lexicon: BilingualLexicon = None, vocab=None,
                          segmenter=None):
    """Turn a source-language training set into target-language examples.

    lexicon_mode="wbw" translates word by word through `lexicon` (spans are
    preserved by construction).  lexicon_mode="records" consumes one
    TranslationRecord per example, re-tokenizes the assembled document, and
    recovers the span in the translated text; examples whose answer cannot
    be found are dropped and counted.
    """
    stats = {"oov": 0}
    out = []
    dropped = 0
    if lexicon_mode == "wbw":
        if lexicon is None:
            raise InputError("wbw mode requires a lexicon")
        for ex in src_dataset:
            out.append(word_by_word_translate(ex, lexicon, "src2tgt", stats))
    elif lexicon_mode == "records":
        for ex in src_dataset:
            rec = records.get(ex.id) if records else None
            if rec is None:
                raise InputError(f"no translation record for example {ex.id}")
            doc_tokens, doc_offsets, q_tokens, span = _example_from_record(
                rec, "tgt", vocab=vocab, segmenter=segmenter)
            if span is None:
                dropped += 1
                continue
            new = Example(id=ex.id, question_tokens=q_tokens,
                          document_tokens=doc_tokens, document_offsets=doc_offsets,
                          answer_texts=[rec.answer], answer_spans=[span],
                          language="tgt")
            new.validate()
            out.append(new)
    else:
        raise InputError(f"lexicon_mode must be wbw or records, got {lexicon_mode!r}")
    out.sort(key=lambda e: e.id)
    return Dataset(examples=out, language="tgt", dropped=dropped)


def build_test_on_source(tgt_dataset: Dataset, records, vocab=None, segmenter=None):
    """Translate a target-language eval set into the source language.

    Returns (full, filtered): the full set keeps every example even when
    the answer is not recoverable in the translated document (such
    examples carry an empty span list and only support text-level
    scoring); the filtered subset keeps only span-recoverable examples.
    """
    full = []
    filtered = []
    for ex in tgt_dataset:
        rec = records.get(ex.id) if records else None
        if rec is None:
            raise InputError(f"no translation record for example {ex.id}")
        doc_tokens, doc_offsets, q_tokens, span = _example_from_record(
            rec, "src", vocab=vocab, segmenter=segmenter)
        spans = [span] if span is not None else []
        new = Example(id=ex.id, question_tokens=q_tokens,
                      document_tokens=doc_tokens, document_offsets=doc_offsets,
                      answer_texts=[rec.answer], answer_spans=spans, language="src")
        full.append(new)
        if span is not None:
            filtered.append(new)
    full.sort(key=lambda e: e.id)
    filtered.sort(key=lambda e: e.id)
    return (Dataset(examples=full, language="src", dropped=0),
            Dataset(examples=filtered, language="src", dropped=0))


def score_back_translated_predictions(predictions: dict, back_translation_map: dict,
                                      gold_dataset: Dataset,
                                      language="tgt") -> EvalReport:
    """Map each predicted string through the back-translation table, then
    score against the gold dataset.  Predictions without a map entry are
    scored as empty strings and counted in the report's map_misses."""
    mapped = {}
    misses = 0
    for ex_id, pred in predictions.items():
        back = back_translation_map.get(pred)
        if back is None:
            misses += 1
            back = ""
        mapped[ex_id] = back
    report = evaluate(mapped, gold_dataset, language)
    report.map_misses = misses
    return report
