"""Scratch: measure full desk-model gradcheck error across seeds."""
import sys
import time
from dataclasses import replace

import numpy as np

from xlqa.autodiff import check_gradients
from xlqa.data import make_batches
from xlqa.model import QaModel, desk_preset, qa_loss
from xlqa.synth import SynthSpec, make_corpora

spec = SynthSpec(seed=5, vocab_size=60, n_source=8, n_target=8,
                 doc_len_min=12, doc_len_max=16, dev_count=4, word_dim=24)
corpora = make_corpora(spec)
res = corpora.resources

eps = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-5
coords = int(sys.argv[2]) if len(sys.argv) > 2 else 2
seeds = int(sys.argv[3]) if len(sys.argv) > 3 else 10

hp = desk_preset()
worst = 0.0
for seed in range(seeds):
    t0 = time.time()
    model = QaModel(hp, res.src_table, res.tgt_table, len(res.char_vocab),
                    seed=seed, dtype=np.float64)
    from xlqa.data import Dataset
    ds = Dataset(corpora.tgt_train.examples[:2], "tgt")
    batch = make_batches(ds, 2, 0, res.tgt_vocab, res.char_vocab,
                         dtype=np.float64)[0]
    params = model.named_parameters()
    names = sorted(params)
    tensors = [params[k] for k in names]

    def f(*_):
        dist, _, _ = model.qa_forward(batch, train=False)
        return qa_loss(dist, batch.y1, batch.y2)

    err = check_gradients(f, tensors, eps=eps, max_coords_per_input=coords,
                          rng=np.random.default_rng(seed + 100))
    worst = max(worst, err)
    print(f"seed {seed}: err {err:.3e}  ({time.time()-t0:.1f}s, "
          f"{len(tensors)} tensors)", flush=True)
print(f"worst {worst:.3e}  eps {eps}")
