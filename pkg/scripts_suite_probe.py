"""Scratch probe: run transfer-suite rows one at a time with knob overrides.

Usage: python3 scripts_suite_probe.py rows=target-only,dependent steps=1200 \
           vocab=240 word_dim=48 lam=0.03 ramp=300 k=5 every=100 seed=7 \
           out=/tmp/probe.json
"""
import json
import sys
import time
from dataclasses import replace

from xlqa.synth import desk_suite_config, make_corpora, run_transfer_suite

args = dict(a.split("=", 1) for a in sys.argv[1:])
rows = args.get("rows", "target-only,dependent").split(",")
out_path = args.get("out", "/tmp/probe.json")

spec, cfg, hp = desk_suite_config(seed=int(args.get("seed", 7)),
                                  steps=int(args.get("steps", 400)))
spec = replace(spec,
               vocab_size=int(args.get("vocab", spec.vocab_size)),
               word_dim=int(args.get("word_dim", spec.word_dim)),
               pairs_per_doc=int(args.get("pairs", spec.pairs_per_doc)))
cfg = replace(cfg,
              eval_every=int(args.get("every", cfg.eval_every)),
              lambda_peak=float(args.get("lam", cfg.lambda_peak)),
              ramp_steps=int(args.get("ramp", cfg.ramp_steps)),
              k=int(args.get("k", cfg.k)),
              ema_decay=float(args.get("ema", cfg.ema_decay)),
              lr=float(args.get("lr", cfg.lr)),
              dep_lr_scale=float(args.get("depscale", cfg.dep_lr_scale)),
              patience=int(args.get("patience", cfg.patience)))

t0 = time.time()
corpora = make_corpora(spec)
print(f"corpora built in {time.time()-t0:.1f}s", flush=True)

results = []
for row in rows:
    t1 = time.time()
    table = run_transfer_suite(spec, cfg, hp, rows=[row], corpora=corpora)
    r = table[0]
    dt = time.time() - t1
    series = [(e["step"], round(e["dev_f1"], 2)) for e in r["log"]
              if e.get("dev_f1") is not None]
    print(f"{r['row']:<12s} EM {r['em']:6.2f}  F1 {r['f1']:6.2f}  "
          f"d_acc {r['d_acc']:.3f}  {dt:6.1f}s  {series}", flush=True)
    results.append({"row": r["row"], "em": r["em"], "f1": r["f1"],
                    "d_acc": r["d_acc"], "steps": r["steps"],
                    "seconds": dt, "series": series})
    with open(out_path, "w") as f:
        json.dump(results, f, indent=1)
print(f"total {time.time()-t0:.1f}s", flush=True)
