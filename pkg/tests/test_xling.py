"""Lexicon mapping, translation builders, span recovery."""

import numpy as np
import pytest

from xlqa.data import Dataset, EmbeddingTable, Example, Vocabulary
from xlqa.errors import InputError
from xlqa.evalkit import normalize_answer
from xlqa.xling import (
    BilingualLexicon,
    TranslationRecord,
    assemble_translated_document,
    build_test_on_source,
    build_train_on_target,
    load_translation_records,
    recover_span,
    remap_shared_embeddings,
    save_translation_records,
    score_back_translated_predictions,
    word_by_word_translate,
)

from tests.conftest import make_rng, tiny_dataset


# -- lexicon -----------------------------------------------------------------


def test_lexicon_tsv_roundtrip_first_wins(tmp_path):
    p = tmp_path / "lex.tsv"
    p.write_text("cat\t猫\ndog\t狗\ncat\t貓\n", encoding="utf-8")
    lex = BilingualLexicon.from_tsv(p)
    assert lex.forward["cat"] == "猫"
    out = tmp_path / "back.tsv"
    lex.save_tsv(out)
    assert BilingualLexicon.from_tsv(out).forward == lex.forward


def test_lexicon_reverse_first_wins():
    lex = BilingualLexicon({"cat": "猫", "feline": "猫"})
    assert lex.reverse["猫"] == "cat"
    assert lex.mapping("src2tgt") is lex.forward
    assert lex.mapping("tgt2src") == lex.reverse
    with pytest.raises(InputError):
        lex.mapping("sideways")


# -- word-by-word translation --------------------------------------------------


def src_example(doc, q, span):
    offsets = []
    cur = 0
    for t in doc:
        offsets.append((cur, cur + len(t)))
        cur += len(t) + 1
    return Example(id="e0", question_tokens=q, document_tokens=doc,
                   document_offsets=offsets,
                   answer_texts=[" ".join(doc[span[0] : span[1] + 1])],
                   answer_spans=[span], language="src")


def test_wbw_preserves_order_and_spans():
    lex = BilingualLexicon({"kora": "甲", "bel": "乙", "tam": "丙"})
    ex = src_example(["kora", "bel", "tam"], ["bel"], (1, 1))
    out = word_by_word_translate(ex, lex, "src2tgt")
    assert out.language == "tgt"
    assert out.document_tokens == ["甲", "乙", "丙"]
    assert out.answer_spans == [(1, 1)]
    assert out.answer_texts == ["乙"]
    # offsets follow the target joining rule (no separators)
    assert out.document_offsets == [(0, 1), (1, 2), (2, 3)]


def test_wbw_multi_word_values_reindex_spans():
    # src2tgt with a two-token image shifts everything after it
    lex2 = BilingualLexicon({"a": "x y", "b": "z", "c": "w"})
    ex2 = src_example(["a", "b", "c"], ["c"], (2, 2))
    out2 = word_by_word_translate(ex2, lex2, "src2tgt")
    assert out2.document_tokens == ["x", "y", "z", "w"]
    assert out2.answer_spans == [(3, 3)]
    assert out2.answer_texts == ["w"]


def test_wbw_oov_tokens_kept_and_counted():
    lex = BilingualLexicon({"kora": "甲"})
    ex = src_example(["kora", "novel"], ["kora"], (0, 0))
    stats = {"oov": 0}
    out = word_by_word_translate(ex, lex, "src2tgt", stats)
    assert out.document_tokens == ["甲", "novel"]
    assert stats["oov"] == 1


def test_wbw_rejects_empty_lexicon_and_wrong_direction():
    ex = src_example(["kora"], ["kora"], (0, 0))
    with pytest.raises(InputError):
        word_by_word_translate(ex, BilingualLexicon({}), "src2tgt")
    lex = BilingualLexicon({"kora": "甲"})
    with pytest.raises(InputError):
        word_by_word_translate(ex, lex, "tgt2src")  # example is src-language


# -- shared embedding remap ----------------------------------------------------


def test_remap_copies_rows_bitwise_and_reports_coverage():
    rng = make_rng(1)
    tgt_vocab = Vocabulary(["甲", "乙"])
    tgt_table = EmbeddingTable(rng.standard_normal((4, 5)).astype(np.float32))
    src_vocab = Vocabulary(["kora", "bel", "missing"])
    lex = BilingualLexicon({"kora": "甲", "bel": "乙"})
    table, coverage = remap_shared_embeddings(src_vocab, lex, tgt_vocab, tgt_table)
    assert np.array_equal(table.vectors[src_vocab.lookup("kora")],
                          tgt_table.vectors[tgt_vocab.lookup("甲")])
    assert np.array_equal(table.vectors[src_vocab.lookup("missing")],
                          tgt_table.vectors[1])
    assert coverage == pytest.approx(2 / 3)
    assert table.frozen


# -- span recovery (brute-force oracle) ----------------------------------------


def brute_recover(tokens, answer, language):
    target = normalize_answer(answer, language)
    n = len(tokens)
    for y1 in range(n):
        for y2 in range(y1, n):
            joined = (" " if language == "src" else "").join(tokens[y1 : y2 + 1])
            if normalize_answer(joined, language) == target:
                return (y1, y2)
    return None


@pytest.mark.parametrize("language", ["src", "tgt"])
@pytest.mark.parametrize("seed", range(8))
def test_recover_span_matches_brute_force(language, seed):
    rng = make_rng(200 + seed)
    if language == "src":
        pool = ["kora", "bel", "tam", "rup", "kora,", "the", "Beto!"]
    else:
        pool = ["甲乙", "丙", "丁。", "戊", "！"]
    for _ in range(40):
        n = int(rng.integers(1, 10))
        tokens = [pool[int(rng.integers(len(pool)))] for _ in range(n)]
        y1 = int(rng.integers(n))
        y2 = int(rng.integers(y1, n))
        answer = (" " if language == "src" else "").join(tokens[y1 : y2 + 1])
        got = recover_span(tokens, answer, language)
        assert got == brute_recover(tokens, answer, language)
        assert got is not None


def test_recover_span_returns_first_match():
    tokens = ["甲", "乙", "甲", "乙"]
    assert recover_span(tokens, "甲乙", "tgt") == (0, 1)


def test_recover_span_ignores_punctuation_differences():
    tokens = ["甲", "。", "乙"]
    # punctuation-only token contributes nothing after normalization
    assert recover_span(tokens, "甲乙", "tgt") == (0, 2)


def test_recover_span_none_when_absent():
    assert recover_span(["甲"], "乙", "tgt") is None
    # empty normalized answer never matches a non-empty requirement
    assert recover_span([], "甲", "tgt") is None


# -- records and dataset builders ----------------------------------------------


def test_records_jsonl_roundtrip(tmp_path):
    recs = [TranslationRecord(id="a", question="問", sentences=["甲乙"],
                              answer="乙"),
            TranslationRecord(id="b", question="q two", sentences=["x y", "z w"],
                              answer="z")]
    p = tmp_path / "r.jsonl"
    save_translation_records(p, recs)
    back = load_translation_records(p)
    assert set(back) == {"a", "b"}
    assert back["b"].sentences == ["x y", "z w"]


def test_load_translation_records_rejects_bad_lines(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "a"}\n', encoding="utf-8")
    with pytest.raises(InputError):
        load_translation_records(p)


def test_assemble_translated_document_joins_by_language():
    rec = TranslationRecord(id="a", question="q", sentences=["x y", "z"],
                            answer="z")
    assert assemble_translated_document(rec, "src") == "x y z"
    rec2 = TranslationRecord(id="a", question="q",
                             sentences=["甲乙", "丙"], answer="丙")
    assert assemble_translated_document(rec2, "tgt") == "甲乙丙"


def test_build_train_on_target_records_mode_drops_unrecoverable():
    ds = Dataset([src_example(["kora", "bel"], ["kora"], (1, 1))], "src")
    recs = {"e0": TranslationRecord(id="e0", question="問",
                                    sentences=["甲乙"], answer="乙")}
    out = build_train_on_target(ds, recs, "records",
                                vocab=["甲", "乙"])
    assert len(out) == 1 and out.dropped == 0
    assert out[0].answer_spans == [(1, 1)]
    bad = {"e0": TranslationRecord(id="e0", question="問",
                                   sentences=["甲甲"], answer="乙")}
    out2 = build_train_on_target(ds, bad, "records", vocab=["甲"])
    assert len(out2) == 0 and out2.dropped == 1


def test_build_train_on_target_missing_record_is_an_error():
    ds = Dataset([src_example(["kora"], ["kora"], (0, 0))], "src")
    with pytest.raises(InputError):
        build_train_on_target(ds, {}, "records")
    with pytest.raises(InputError):
        build_train_on_target(ds, None, "nonsense")


def test_build_test_on_source_full_vs_filtered():
    tgt_ex = Example(id="t0", question_tokens=["問"],
                     document_tokens=["甲", "乙"],
                     document_offsets=[(0, 1), (1, 2)], answer_texts=["乙"],
                     answer_spans=[(1, 1)], language="tgt")
    tgt_ex2 = Example(id="t1", question_tokens=["問"],
                      document_tokens=["甲"], document_offsets=[(0, 1)],
                      answer_texts=["甲"], answer_spans=[(0, 0)],
                      language="tgt")
    recs = {"t0": TranslationRecord(id="t0", question="what",
                                    sentences=["kora bel"], answer="bel"),
            "t1": TranslationRecord(id="t1", question="what",
                                    sentences=["kora bel"], answer="vanished")}
    full, filtered = build_test_on_source(Dataset([tgt_ex, tgt_ex2], "tgt"), recs)
    assert len(full) == 2 and len(filtered) == 1
    assert full.language == "src"
    by_id = full.by_id()
    assert by_id["t0"].answer_spans == [(1, 1)]
    assert by_id["t1"].answer_spans == []  # text kept for generative scoring
    assert filtered[0].id == "t0"


def test_score_back_translated_predictions_counts_misses():
    gold = Dataset([Example(id="t0", question_tokens=["q"],
                            document_tokens=["甲"], document_offsets=[(0, 1)],
                            answer_texts=["甲"], answer_spans=[(0, 0)],
                            language="tgt")], "tgt")
    report = score_back_translated_predictions(
        {"t0": "jia"}, {"jia": "甲"}, gold, language="tgt")
    assert report.exact_match == 100.0 and report.map_misses == 0
    report2 = score_back_translated_predictions(
        {"t0": "unmapped"}, {"jia": "甲"}, gold, language="tgt")
    assert report2.exact_match == 0.0 and report2.map_misses == 1
