"""Paired toy corpora: construction invariants and the experiment harness."""

import numpy as np
import pytest

from xlqa.data import join_tokens, tokenize
from xlqa.errors import InputError
from xlqa.synth import (
    SUITE_ROWS,
    SynthCorpora,
    SynthSpec,
    desk_suite_config,
    generate,
    make_corpora,
    probe_discriminator_accuracy,
    reorder_tokens,
    run_transfer_suite,
    subset_dataset,
    write_series_csv,
    write_table_csv,
)
from xlqa.trainer import TrainerConfig, build_model
from xlqa.xling import build_test_on_source, build_train_on_target, word_by_word_translate

from tests.conftest import tiny_hp


def micro_spec(**kw):
    base = dict(seed=3, vocab_size=40, n_source=24, n_target=12,
                doc_len_min=12, doc_len_max=16, question_templates=2,
                dev_count=8, word_dim=8, sentence_len=4, window=2,
                pairs_per_doc=2)
    base.update(kw)
    return SynthSpec(**base)


@pytest.fixture(scope="module")
def corpora():
    return make_corpora(micro_spec())


# -- spec checks ----------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(InputError):
        SynthSpec(vocab_size=10).validate()
    with pytest.raises(InputError):
        SynthSpec(n_source=10, n_target=20).validate()
    with pytest.raises(InputError):
        SynthSpec(word_order="shuffle").validate()
    with pytest.raises(InputError):
        SynthSpec(sentence_len=7, window=5).validate()


def test_reorder_identity_and_reverse():
    toks = list("abcdefg")
    out, pos = reorder_tokens(toks, "identity", 3)
    assert out == toks and pos == list(range(7))
    out, pos = reorder_tokens(toks, "reverse-clauses", 3)
    assert out == ["c", "b", "a", "f", "e", "d", "g"]
    assert all(out[pos[i]] == toks[i] for i in range(7))
    again, _ = reorder_tokens(out, "reverse-clauses", 3)
    assert again == toks  # the rule is its own inverse


# -- corpus invariants ------------------------------------------------------------


def test_generation_is_deterministic(corpora):
    other = make_corpora(micro_spec())
    for a, b in zip(corpora.tgt_train, other.tgt_train):
        assert a.id == b.id
        assert a.document_tokens == b.document_tokens
        assert a.answer_spans == b.answer_spans
    assert np.array_equal(corpora.resources.tgt_table.vectors,
                          other.resources.tgt_table.vectors)
    assert np.array_equal(corpora.resources.src_table.vectors,
                          other.resources.src_table.vectors)


def test_seed_changes_content():
    a = make_corpora(micro_spec())
    b = make_corpora(micro_spec(seed=4))
    assert any(x.document_tokens != y.document_tokens
               for x, y in zip(a.src_train, b.src_train))


def test_answer_token_is_unique_in_document(corpora):
    for ds in (corpora.src_train, corpora.tgt_train, corpora.tgt_dev):
        for ex in ds:
            (y1, y2), = ex.answer_spans
            assert y1 == y2
            answer = ex.document_tokens[y1]
            assert ex.document_tokens.count(answer) == 1
            assert ex.answer_texts == [answer]


def test_question_key_determines_the_answer_globally(corpora):
    # key i is always paired with value i, across every document
    pairing = {}
    for ex in corpora.src_train:
        key = ex.question_tokens[-1]
        assert ex.document_tokens.count(key) == 1
        if key in pairing:
            assert pairing[key] == ex.answer_texts[0]
        else:
            pairing[key] = ex.answer_texts[0]
    assert len(pairing) > 1
    # but position carries no signal: key-to-value offsets vary
    offsets = set()
    for ex in corpora.src_train:
        (pos, _), = ex.answer_spans
        offsets.add(pos - ex.document_tokens.index(ex.question_tokens[-1]))
    assert len(offsets) > 3


def test_target_examples_are_cipher_images_of_source(corpora):
    lex = corpora.lexicon.forward
    spec = corpora.spec
    for s, t in zip(corpora.src_train, corpora.tgt_train):
        assert s.id[1:] == t.id[1:]
        mapped, pos_map = reorder_tokens([lex[w] for w in s.document_tokens],
                                         spec.word_order, spec.window)
        assert t.document_tokens == mapped
        assert t.answer_texts == [lex[s.answer_texts[0]]]
        (sy, _), = s.answer_spans
        (ty, _), = t.answer_spans
        assert ty == pos_map[sy]


def test_identity_order_makes_wbw_reproduce_the_target(corpora):
    spec = micro_spec(word_order="identity")
    c = make_corpora(spec)
    for s, t in zip(c.src_train, c.tgt_train):
        stats = {"oov": 0}
        out = word_by_word_translate(s, c.lexicon, "src2tgt", stats=stats)
        assert stats["oov"] == 0
        assert out.document_tokens == t.document_tokens
        assert out.answer_spans == t.answer_spans


def test_cipher_words_segment_exactly(corpora):
    for ex in list(corpora.tgt_train)[:6]:
        text = join_tokens(ex.document_tokens, "tgt")
        triples = tokenize(text, "tgt", vocab=corpora.tgt_vocab)
        assert [t for t, _, _ in triples] == ex.document_tokens
        assert [(a, b) for _, a, b in triples] == ex.document_offsets


def test_records_path_equals_direct_image(corpora):
    built = build_train_on_target(corpora.src_train, corpora.records_s2t,
                                  "records", vocab=corpora.tgt_vocab)
    assert len(built) == len(corpora.src_train)
    by_index = {ex.id[1:]: ex for ex in corpora.tgt_train}
    for ex in built:
        assert ex.language == "tgt"
        direct = by_index.get(ex.id[1:])
        if direct is None:
            continue  # beyond the paired prefix
        assert ex.document_tokens == direct.document_tokens
        assert ex.answer_spans == direct.answer_spans


def test_back_translation_records_recover_every_dev_answer(corpora):
    full, filtered = build_test_on_source(corpora.tgt_dev, corpora.records_t2s)
    assert len(full) == len(corpora.tgt_dev)
    assert len(filtered) == len(corpora.tgt_dev)  # nothing unrecoverable
    for ex in filtered:
        assert ex.language == "src"
        assert ex.answer_spans


def test_vocab_quarters_do_not_overlap(corpora):
    keys, values, qwords = set(), set(), set()
    for ex in corpora.src_train:
        (pos, _), = ex.answer_spans
        values.add(ex.document_tokens[pos])
        keys.add(ex.question_tokens[-1])
        qwords.update(ex.question_tokens[:2])
    assert not keys & values
    assert not (keys | values) & qwords


def test_generate_returns_train_triple():
    spec = micro_spec()
    src, tgt, lex = generate(spec)
    assert len(src) == spec.n_source
    assert len(tgt) == spec.n_target
    assert lex.forward


def test_subset_dataset_prefix_and_floor(corpora):
    sub = subset_dataset(corpora.tgt_train, 0.5)
    assert len(sub) == 6
    assert [e.id for e in sub] == [e.id for e in list(corpora.tgt_train)[:6]]
    assert sub.language == "tgt"
    assert len(subset_dataset(corpora.tgt_train, 0.001)) == 1


def test_probe_separates_untrained_feature_spaces(corpora):
    hp = tiny_hp()
    model, _ = build_model(hp, corpora.resources, seed=0, dtype=np.float32)
    acc = probe_discriminator_accuracy(model, hp, corpora.resources,
                                       corpora.tgt_dev, corpora.src_dev,
                                       seed=0, steps=120, batch_size=4)
    assert acc >= 0.75


# -- experiment harness ------------------------------------------------------------


def suite_cfg(steps=2):
    return TrainerConfig(batch_size=4, steps=steps, eval_every=1,
                         patience=1000, lr=1e-3, k=1, lambda_peak=0.001,
                         ramp_steps=2, ema_decay=0.9, seed=0)


def test_transfer_suite_rejects_unknown_row(corpora):
    with pytest.raises(InputError):
        run_transfer_suite(corpora.spec, suite_cfg(), tiny_hp(),
                           rows=("nonsense",), corpora=corpora)


def test_transfer_suite_rows_and_outputs(tmp_path, corpora):
    table = run_transfer_suite(corpora.spec, suite_cfg(), tiny_hp(),
                               rows=("target-only", "gan-ch:0.5"),
                               corpora=corpora)
    assert [r["row"] for r in table] == ["target-only", "gan-ch:0.5"]
    for r in table:
        assert 0.0 <= r["f1"] <= 100.0
        assert 0.0 <= r["d_acc"] <= 1.0
        assert r["steps"] == 2
        assert r["log"]

    tpath = tmp_path / "table.csv"
    write_table_csv(tpath, table)
    lines = tpath.read_text().splitlines()
    assert lines[0] == "row,em,f1,d_acc,steps"
    assert len(lines) == 3
    assert lines[1].startswith("target-only,")

    spath = tmp_path / "series.csv"
    write_series_csv(spath, table)
    series = spath.read_text().splitlines()
    assert series[0] == "row,step,dev_em,dev_f1"
    # step-0 eval plus one per step for both rows
    assert len(series) == 1 + 2 * 3


def test_transfer_suite_reruns_are_byte_identical(tmp_path, corpora):
    paths = []
    for tag in ("a", "b"):
        table = run_transfer_suite(corpora.spec, suite_cfg(), tiny_hp(),
                                   rows=("target-only",), corpora=corpora)
        p = tmp_path / f"{tag}.csv"
        write_table_csv(p, table)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_desk_suite_config_is_stable():
    spec, cfg, hp = desk_suite_config()
    assert spec.word_order == "reverse-clauses"
    assert spec.n_source == 5000 and spec.n_target == 500
    assert cfg.k == 5
    assert cfg.steps == 400
    assert hp.hidden == 32
    spec2, cfg2, _ = desk_suite_config()
    assert spec == spec2 and cfg == cfg2
    assert set(SUITE_ROWS) == {"target-only", "dependent", "gan-ch", "gan-en"}
