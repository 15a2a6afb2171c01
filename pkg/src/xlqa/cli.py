"""Command line entry points.

Subcommands cover the whole pipeline: `prepare` builds vocabulary and
embedding caches, `translate` produces train-on-target or test-on-source
data, `train`/`predict`/`eval` run the model, and `repro` regenerates the
synthetic transfer experiment end to end.  Exit codes: 0 on success, 2 for
bad input (files, formats, config values), 3 for state errors such as a
checkpoint that does not match its configuration.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from .data import (
    Dataset,
    EmbeddingTable,
    Vocabulary,
    build_embedding_table,
    build_vocabularies,
    filter_by_length,
    load_squad_json,
    read_embedding_file,
    write_embedding_file,
    write_squad_json,
)
from .errors import InputError, StateError
from .evalkit import evaluate
from .synth import (
    desk_suite_config,
    make_corpora,
    run_transfer_suite,
    write_series_csv,
    write_table_csv,
)
from .trainer import (
    Resources,
    load_for_predict,
    predict_answers,
    train,
    write_log_csv,
)
from .xling import (
    BilingualLexicon,
    build_test_on_source,
    build_train_on_target,
    load_translation_records,
    save_translation_records,
    word_by_word_translate,
)


def _require_file(path, what):
    if not path:
        raise InputError(f"{what} is required")
    if not os.path.exists(path):
        raise InputError(f"{what} does not exist: {path}")
    return path


# --------------------------------------------------------------------------
# prepare
# --------------------------------------------------------------------------


def cmd_prepare(args):
    for p in args.corpus:
        _require_file(p, "corpus")
    words = None
    vectors = {}
    if args.embeddings:
        _require_file(args.embeddings, "embeddings file")
        vectors = read_embedding_file(args.embeddings, args.dim)
        words = list(vectors)
    seg_vocab = words if args.language == "tgt" else None
    datasets = [load_squad_json(p, args.language, vocab=seg_vocab)
                for p in args.corpus]
    word_vocab, char_vocab = build_vocabularies(datasets, min_count=args.min_count)
    table = build_embedding_table(word_vocab, vectors, args.dim)
    covered = sum(1 for w in word_vocab.words() if w in vectors)
    total = max(1, len(word_vocab.words()))
    os.makedirs(args.out, exist_ok=True)
    lang = args.language
    word_vocab.save(os.path.join(args.out, f"{lang}_vocab.txt"))
    char_vocab.save(os.path.join(args.out, f"{lang}_chars.txt"))
    write_embedding_file(os.path.join(args.out, f"{lang}_embeddings.txt"),
                         word_vocab.id_to_word, table.vectors)
    report = {"language": lang,
              "examples": sum(len(d) for d in datasets),
              "dropped": sum(d.dropped for d in datasets),
              "words": len(word_vocab.words()),
              "chars": len(char_vocab.words()),
              "embedding_coverage": covered / total}
    with open(os.path.join(args.out, f"{lang}_prepare.json"), "w",
              encoding="utf-8") as f:
        json.dump(report, f, indent=2)
    print(f"{lang}: {report['examples']} examples ({report['dropped']} dropped), "
          f"{report['words']} words, {report['chars']} chars, "
          f"coverage {report['embedding_coverage']:.3f}")
    return 0


# --------------------------------------------------------------------------
# translate
# --------------------------------------------------------------------------


def _tgt_words(args, lexicon):
    if args.vocab:
        return Vocabulary.load(_require_file(args.vocab, "vocab")).words()
    if lexicon is not None:
        return sorted(set(lexicon.forward.values()))
    return None


def cmd_translate(args):
    _require_file(args.input, "input corpus")
    lexicon = None
    records = None
    if args.mode == "wbw":
        lexicon = BilingualLexicon.from_tsv(_require_file(args.lexicon, "lexicon"))
    else:
        records = load_translation_records(_require_file(args.records, "records"))
        if args.lexicon:
            lexicon = BilingualLexicon.from_tsv(args.lexicon)
    os.makedirs(args.out, exist_ok=True)
    stats = {"total": 0, "recovered": 0, "dropped": 0, "oov": 0}

    if args.direction == "src2tgt":
        ds = load_squad_json(args.input, "src")
        stats["total"] = len(ds) + ds.dropped
        if args.mode == "wbw":
            out = build_train_on_target(ds, None, "wbw", lexicon=lexicon)
        else:
            out = build_train_on_target(ds, records, "records",
                                        vocab=_tgt_words(args, lexicon))
        stats["recovered"] = len(out)
        stats["dropped"] = ds.dropped + out.dropped
        write_squad_json(os.path.join(args.out, "translated.json"), out)
    else:
        ds = load_squad_json(args.input, "tgt", vocab=_tgt_words(args, lexicon))
        stats["total"] = len(ds) + ds.dropped
        if args.mode == "wbw":
            wstats = {"oov": 0}
            examples = [word_by_word_translate(ex, lexicon, "tgt2src", wstats)
                        for ex in ds]
            full = Dataset(sorted(examples, key=lambda e: e.id), "src")
            filtered = full
            stats["oov"] = wstats["oov"]
        else:
            full, filtered = build_test_on_source(ds, records)
        stats["recovered"] = len(filtered)
        stats["dropped"] = ds.dropped + (len(full) - len(filtered))
        write_squad_json(os.path.join(args.out, "translated_full.json"), full)
        write_squad_json(os.path.join(args.out, "translated_filtered.json"),
                         filtered)
    with open(os.path.join(args.out, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2)
    print(f"{args.direction} {args.mode}: {stats['recovered']}/{stats['total']} "
          f"recovered, {stats['dropped']} dropped")
    return 0


# --------------------------------------------------------------------------
# resources shared by train/predict
# --------------------------------------------------------------------------


def _random_table(vocab, dim, seed, lane):
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((seed, 900 + lane))))
    mat = (0.5 * rng.standard_normal((len(vocab), dim))).astype(np.float32)
    mat[0] = 0.0
    return EmbeddingTable(mat)


def _load_resources(rc):
    paths = rc.paths
    src_vocab = (Vocabulary.load(_require_file(paths.src_vocab, "src_vocab"))
                 if paths.src_vocab else Vocabulary())
    tgt_vocab = (Vocabulary.load(_require_file(paths.tgt_vocab, "tgt_vocab"))
                 if paths.tgt_vocab else Vocabulary())
    if paths.char_vocab:
        char_vocab = Vocabulary.load(_require_file(paths.char_vocab, "char_vocab"))
    else:
        chars = []
        seen = set()
        for w in src_vocab.words() + tgt_vocab.words():
            for ch in w:
                if ch not in seen:
                    seen.add(ch)
                    chars.append(ch)
        char_vocab = Vocabulary(chars)

    def table_for(vocab, emb_path, lane):
        if emb_path:
            vectors = read_embedding_file(_require_file(emb_path, "embeddings"),
                                          paths.emb_dim)
            return build_embedding_table(vocab, vectors, paths.emb_dim)
        return _random_table(vocab, paths.emb_dim, rc.cfg.seed, lane)

    return Resources(src_vocab=src_vocab, tgt_vocab=tgt_vocab,
                     char_vocab=char_vocab,
                     src_table=table_for(src_vocab, paths.src_emb, 0),
                     tgt_table=table_for(tgt_vocab, paths.tgt_emb, 1))


def _resolve_from_args(args):
    overrides = dict(args.set or [])
    for key in ("preset", "mode", "seed", "steps", "out_dir", "resume"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.config:
        _require_file(args.config, "config file")
    return cfgmod.resolve(args.config, overrides)


def _parse_set(pairs):
    out = []
    for item in pairs or ():
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out.append((k.strip(), v.strip()))
    return out


# --------------------------------------------------------------------------
# train / predict / eval
# --------------------------------------------------------------------------


def cmd_train(args):
    args.set = _parse_set(args.set)
    rc = _resolve_from_args(args)
    paths = rc.paths
    cfgmod.require_paths(rc, "train_tgt", "dev")
    if rc.cfg.mode == "adversarial":
        cfgmod.require_paths(rc, "train_src")
        if paths.train_src_language != "src":
            raise InputError("adversarial training needs source-language "
                             "train_src data")
    res = _load_resources(rc)
    tgt_words = res.tgt_vocab.words() or None

    def load(path, language):
        vocab = tgt_words if language == "tgt" else None
        ds = load_squad_json(path, language, vocab=vocab)
        if rc.paths.max_doc_tokens:
            ds = filter_by_length(ds, rc.paths.max_doc_tokens)
        return ds

    datasets = {"tgt": load(paths.train_tgt, "tgt"),
                "dev": load(paths.dev, "tgt")}
    if paths.train_src:
        cfgmod.require_paths(rc, "train_src")
        datasets["src"] = load(paths.train_src, paths.train_src_language)

    os.makedirs(paths.out_dir, exist_ok=True)
    cfgmod.dump_config(os.path.join(paths.out_dir, "resolved.cfg"), rc)
    result = train(rc.cfg.mode, datasets, rc.cfg, rc.hp, res,
                   resume_from=paths.resume or None)
    write_log_csv(os.path.join(paths.out_dir, "log.csv"), result.log)
    result.trainer.save(os.path.join(paths.out_dir, "checkpoint.bin"))
    em, f1 = result.final_dev
    if f1 is not None:
        print(f"finished at step {result.trainer.step}: dev EM {em:.2f} "
              f"F1 {f1:.2f}")
    else:
        print(f"finished at step {result.trainer.step}")
    return 0


def cmd_predict(args):
    args.set = _parse_set(args.set)
    rc = _resolve_from_args(args)
    _require_file(args.checkpoint, "checkpoint")
    _require_file(args.data, "data")
    res = _load_resources(rc)
    model, hp, cfg = load_for_predict(args.checkpoint, res)
    vocab = None
    if args.language == "tgt":
        vocab = res.tgt_vocab.words() or None
    ds = load_squad_json(args.data, args.language, vocab=vocab)
    preds = predict_answers(model, ds, res, hp, cfg.batch_size)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(preds, f, ensure_ascii=False, indent=0, sort_keys=True)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_eval(args):
    _require_file(args.predictions, "predictions")
    _require_file(args.data, "gold data")
    with open(args.predictions, encoding="utf-8") as f:
        try:
            preds = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"{args.predictions}: malformed JSON ({e})") from e
    vocab = None
    if args.vocab:
        vocab = Vocabulary.load(_require_file(args.vocab, "vocab")).words()
    ds = load_squad_json(args.data, args.language, vocab=vocab)
    report = evaluate(preds, ds, args.language)
    payload = report.to_dict()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
    print(f"EM {report.exact_match:.2f}  F1 {report.f1:.2f} "
          f"({report.scored} scored, {report.skipped} skipped)")
    return 0


# --------------------------------------------------------------------------
# repro
# --------------------------------------------------------------------------

_SUITE_ROWS = ("target-only", "dependent", "gan-ch", "gan-en",
               "mt", "mt+gan-ch", "gan-ch:0.6")


def cmd_repro(args):
    spec, cfg, hp = desk_suite_config(seed=args.seed, steps=args.steps,
                                      n_source=args.n_source,
                                      n_target=args.n_target,
                                      dev_count=args.dev_count)
    out = args.out
    os.makedirs(os.path.join(out, "corpora"), exist_ok=True)
    corpora = make_corpora(spec)
    cdir = os.path.join(out, "corpora")
    write_squad_json(os.path.join(cdir, "src_train.json"), corpora.src_train)
    write_squad_json(os.path.join(cdir, "tgt_train.json"), corpora.tgt_train)
    write_squad_json(os.path.join(cdir, "src_dev.json"), corpora.src_dev)
    write_squad_json(os.path.join(cdir, "tgt_dev.json"), corpora.tgt_dev)
    corpora.lexicon.save_tsv(os.path.join(cdir, "lexicon.tsv"))
    recs = [corpora.records_s2t[k] for k in sorted(corpora.records_s2t)]
    save_translation_records(os.path.join(cdir, "records_s2t.jsonl"), recs)
    corpora.src_vocab.save(os.path.join(cdir, "src_vocab.txt"))
    corpora.tgt_vocab.save(os.path.join(cdir, "tgt_vocab.txt"))

    rows = _SUITE_ROWS if not args.rows else tuple(args.rows.split(","))
    table = run_transfer_suite(spec, cfg, hp, rows=rows, corpora=corpora)
    write_table_csv(os.path.join(out, "table.csv"), table)
    write_series_csv(os.path.join(out, "series.csv"), table)
    by_row = {r["row"]: r for r in table}
    with open(os.path.join(out, "labels.csv"), "w", encoding="utf-8") as f:
        f.write("target_fraction,row,em,f1\n")
        for frac, name in (("1.0", "target-only"), ("0.6", "gan-ch:0.6"),
                           ("1.0", "gan-ch")):
            if name in by_row:
                r = by_row[name]
                f.write(f"{frac},{name},{r['em']:.4f},{r['f1']:.4f}\n")
    print(f"{'row':<12} {'EM':>7} {'F1':>7} {'D-acc':>6} {'steps':>6} {'sec':>7}")
    for r in table:
        print(f"{r['row']:<12} {r['em']:7.2f} {r['f1']:7.2f} {r['d_acc']:6.3f} "
              f"{r['steps']:6d} {r['seconds']:7.1f}")
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="xlqa",
                                description="Cross-lingual extractive QA "
                                            "with adversarial feature alignment")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="build vocabulary and embedding caches")
    sp.add_argument("--corpus", action="append", required=True)
    sp.add_argument("--language", choices=("src", "tgt"), required=True)
    sp.add_argument("--embeddings", default="")
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--min-count", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("translate", help="produce translated corpora")
    sp.add_argument("--mode", choices=("wbw", "records"), required=True)
    sp.add_argument("--direction", choices=("src2tgt", "tgt2src"), required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--lexicon", default="")
    sp.add_argument("--records", default="")
    sp.add_argument("--vocab", default="")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_translate)

    for name, fn in (("train", cmd_train), ("predict", cmd_predict)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default="")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE")
        sp.add_argument("--preset", choices=("desk", "full"))
        sp.add_argument("--mode")
        sp.add_argument("--seed")
        sp.add_argument("--steps")
        sp.add_argument("--out-dir", dest="out_dir")
        if name == "train":
            sp.add_argument("--resume")
        else:
            sp.add_argument("--checkpoint", required=True)
            sp.add_argument("--data", required=True)
            sp.add_argument("--language", choices=("src", "tgt"), default="tgt")
            sp.add_argument("--out", required=True)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("eval", help="score a predictions file")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--language", choices=("src", "tgt"), default="tgt")
    sp.add_argument("--vocab", default="")
    sp.add_argument("--out", default="")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("repro", help="regenerate the transfer experiment")
    sp.add_argument("--suite", choices=("transfer",), required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--steps", type=int, default=400)
    sp.add_argument("--n-source", type=int, default=5000)
    sp.add_argument("--n-target", type=int, default=500)
    sp.add_argument("--dev-count", type=int, default=300)
    sp.add_argument("--rows", default="")
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except StateError as e:
        print(f"state error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
