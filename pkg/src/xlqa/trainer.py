"""Alternating adversarial optimization, Adam, EMA, checkpoints, logging.

Every random draw is a pure function of (seed, lane, counter): batch
shuffles derive their seed from the epoch number on a per-stream lane, and
dropout masks derive theirs from the step number.  Nothing consumes a
long-lived generator, so a run can be reproduced bitwise from any step and
a checkpoint needs no RNG state.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .adversary import (
    Discriminator,
    adversarial_generator_loss,
    discriminator_loss,
    score_accuracy,
)
from .autodiff import Tensor, no_grad
from .data import join_tokens, make_batches
from .errors import InputError, StateError
from .evalkit import evaluate
from .model import HyperParams, QaModel, predict_span, qa_loss

MODES = ("target-only", "joint-shuffled", "adversarial")
VARIANTS = ("none", "gan-ch", "gan-en")

# RNG lanes (second element of the seed tuple)
LANE_MODEL_INIT = 0
LANE_DISC_INIT = 1
LANE_QA_TGT = 2
LANE_QA_SRC = 3
LANE_D_TGT = 4
LANE_D_SRC = 5
LANE_DROPOUT = 6
LANE_EVAL = 7


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts))
               .generate_state(1, np.uint64)[0])


def lane_rng(seed, lane, counter) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((int(seed), int(lane), int(counter)))))


@dataclass
class TrainerConfig:
    mode: str = "target-only"
    variant: str = "none"
    k: int = 5
    batch_size: int = 24
    lr: float = 1e-3
    lambda_peak: float = 0.001
    ramp_steps: int = 30000
    ramp_shape: str = "linear"
    l2: float = 3e-7
    clip_norm: float = 5.0
    dep_lr_scale: float = 1.0
    ema_decay: float = 0.999
    steps: int = 1000
    eval_every: int = 500
    patience: int = 10
    seed: int = 0

    def validate(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.variant not in VARIANTS:
            raise InputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.lambda_peak < 0:
            raise InputError("lambda_peak must be >= 0")
        if self.ramp_steps < 1:
            raise InputError("ramp_steps must be >= 1")
        if self.ramp_shape not in ("linear", "cosine"):
            raise InputError(f"ramp_shape must be linear or cosine, got {self.ramp_shape!r}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise InputError("ema_decay must be in [0, 1)")
        if self.dep_lr_scale < 0:
            raise InputError("dep_lr_scale must be >= 0")
        return self


def lambda_schedule(step: int, cfg: TrainerConfig) -> float:
    """Ramp of the adversarial weight: 0 at step 0, peak from ramp_steps on."""
    if step < 0:
        raise InputError("step must be >= 0")
    frac = min(step / cfg.ramp_steps, 1.0)
    if cfg.ramp_shape == "cosine":
        frac = 0.5 * (1.0 - math.cos(math.pi * frac))
    return cfg.lambda_peak * frac


# --------------------------------------------------------------------------
# Optimizer and EMA
# --------------------------------------------------------------------------


def adam_step(params: dict, state: dict, lr: float, beta1=0.9, beta2=0.999,
              eps=1e-7, l2=0.0, clip_norm=0.0, lr_scales=None):
    """One Adam update over named Tensors whose .grad is populated.

    The gradient first gets the L2 term added, then the whole set is
    rescaled to the global clip norm, then standard bias-corrected moments
    apply.  Parameters are updated in place; state holds m, v, t.
    lr_scales maps a name prefix to a multiplier on lr for matching
    parameters (first matching prefix wins).
    """
    grads = {}
    sq = 0.0
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise StateError(f"non-finite gradient for parameter {name}")
        if l2:
            g = g + np.asarray(l2, dtype=g.dtype) * p.data
        grads[name] = g
        sq += float((g.astype(np.float64) ** 2).sum())
    if not grads:
        return state
    if clip_norm:
        norm = math.sqrt(sq)
        if norm > clip_norm:
            scale = clip_norm / norm
            for name in grads:
                grads[name] = grads[name] * np.asarray(scale, dtype=grads[name].dtype)
    state["t"] += 1
    t = state["t"]
    b1t = 1.0 - beta1 ** t
    b2t = 1.0 - beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state["m"].get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state["v"][name]
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state["m"][name] = m
        state["v"][name] = v
        eff = lr
        if lr_scales:
            for prefix, scale in lr_scales.items():
                if name.startswith(prefix):
                    eff = lr * scale
                    break
        p.data -= (eff * (m / b1t) / (np.sqrt(v / b2t) + eps)).astype(p.data.dtype)
    return state


class Adam:
    def __init__(self, lr, l2=0.0, clip_norm=0.0, beta1=0.9, beta2=0.999, eps=1e-7,
                 lr_scales=None):
        self.lr = lr
        self.l2 = l2
        self.clip_norm = clip_norm
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_scales = dict(lr_scales) if lr_scales else None
        self.state = {"m": {}, "v": {}, "t": 0}

    def step(self, params: dict):
        adam_step(params, self.state, self.lr, self.beta1, self.beta2,
                  self.eps, self.l2, self.clip_norm, self.lr_scales)

    @property
    def t(self):
        return self.state["t"]


def ema_update(shadow: dict, params: dict, decay: float) -> dict:
    """shadow <- decay * shadow + (1 - decay) * params, elementwise."""
    if not 0.0 <= decay < 1.0:
        raise InputError("decay must be in [0, 1)")
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else p
        s = shadow.get(name)
        shadow[name] = (data.copy() if s is None
                        else decay * s + (1.0 - decay) * data)
    return shadow


class Ema:
    def __init__(self, params: dict, decay: float):
        self.decay = decay
        self.shadow = {k: p.data.copy() for k, p in params.items()}

    def update(self, params: dict):
        ema_update(self.shadow, params, self.decay)

    class _Swap:
        def __init__(self, ema, params):
            self.ema = ema
            self.params = params
            self.saved = {}

        def __enter__(self):
            for k, p in self.params.items():
                self.saved[k] = p.data
                p.data = self.ema.shadow[k]

        def __exit__(self, *exc):
            for k, p in self.params.items():
                p.data = self.saved[k]
            return False

    def swapped(self, params: dict):
        """Context manager that evaluates with shadow weights in place."""
        return Ema._Swap(self, params)


# --------------------------------------------------------------------------
# Checkpoint container
# --------------------------------------------------------------------------

_MAGIC = b"XLQACKP\x01"
_VERSION = 1
_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "u1"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


def save_checkpoint(path, entries: dict):
    """Write named arrays: header (magic, version, count), then per entry
    the utf-8 name, a dtype code, rank, little-endian int64 dims, and raw
    little-endian values."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(entries)))
        for name in sorted(entries):
            arr = np.asarray(entries[name])
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            code = _DTYPE_CODES.get(np.dtype(arr.dtype.str.replace(">", "<")))
            if code is None:
                raise InputError(f"checkpoint entry {name}: unsupported dtype {arr.dtype}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", code, arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<q", d))
            f.write(arr.astype(_DTYPES[code], copy=False).tobytes())


def load_checkpoint(path) -> dict:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise StateError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:8] != _MAGIC:
        raise StateError(f"{path}: not a checkpoint file (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 8)
        if version != _VERSION:
            raise StateError(f"{path}: unsupported checkpoint version {version}")
        off = 16
        entries = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + nlen].decode("utf-8")
            off += nlen
            code, rank = struct.unpack_from("<BB", blob, off)
            off += 2
            if code not in _DTYPES:
                raise StateError(f"{path}: entry {name} has unknown dtype code {code}")
            dims = struct.unpack_from(f"<{rank}q", blob, off) if rank else ()
            off += 8 * rank
            dt = np.dtype(_DTYPES[code])
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, dtype=dt, count=n, offset=off).reshape(dims)
            off += n * dt.itemsize
            entries[name] = arr.copy()
        if off != len(blob):
            raise StateError(f"{path}: trailing bytes after last entry")
    except (struct.error, ValueError) as e:
        raise StateError(f"{path}: truncated or corrupt checkpoint ({e})") from e
    return entries


# --------------------------------------------------------------------------
# Data plumbing
# --------------------------------------------------------------------------


@dataclass
class Resources:
    """Vocabularies and frozen embedding tables the model is built from."""
    src_vocab: object
    tgt_vocab: object
    char_vocab: object
    src_table: object
    tgt_table: object

    def vocab_for(self, language):
        return self.src_vocab if language == "src" else self.tgt_vocab


def build_model(hp: HyperParams, res: Resources, seed=0, dtype=np.float32):
    model = QaModel(hp, res.src_table, res.tgt_table, len(res.char_vocab),
                    seed=seed, dtype=dtype)
    disc = Discriminator(hp, seed=seed, dtype=dtype)
    return model, disc


class BatchCycler:
    """Infinite deterministic batch stream, random-access by counter.

    Batch i lives in epoch i // per_epoch; each epoch shuffles with a seed
    derived from (seed, lane, epoch), so any position can be recomputed
    without replaying.  The per-epoch tail batch shorter than batch_size is
    dropped (when at least one full batch exists) to keep paired streams
    size-aligned.
    """

    def __init__(self, dataset, batch_size, seed, lane, res: Resources, dtype):
        if len(dataset) == 0:
            raise InputError("cannot build a batch stream over an empty dataset")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.lane = lane
        self.res = res
        self.dtype = dtype
        self.per_epoch = max(len(dataset) // batch_size, 1) \
            if len(dataset) >= batch_size else 1
        self._epoch = -1
        self._cache = None

    def _batches_for_epoch(self, epoch):
        shuffle_seed = derive_seed(self.seed, self.lane, epoch)
        vocab = self.res.vocab_for(self.dataset.language) \
            if self.dataset.language in ("src", "tgt") else self.res.tgt_vocab
        batches = make_batches(self.dataset, self.batch_size, shuffle_seed,
                               vocab, self.res.char_vocab, dtype=self.dtype)
        if len(batches) > 1 and batches[-1].size < self.batch_size:
            batches = batches[:-1]
        return batches

    def at(self, index):
        epoch, k = divmod(index, self.per_epoch)
        if epoch != self._epoch:
            self._cache = self._batches_for_epoch(epoch)
            self._epoch = epoch
        return self._cache[k]


def predict_answers(model: QaModel, dataset, res: Resources, hp: HyperParams,
                    batch_size, dtype=np.float32):
    """Greedy span predictions as id -> answer text for a whole dataset."""
    if len(dataset) == 0:
        return {}
    by_id = dataset.by_id()
    vocab = res.vocab_for(dataset.language)
    batches = make_batches(dataset, batch_size, derive_seed(0, LANE_EVAL, 0),
                           vocab, res.char_vocab, dtype=dtype)
    preds = {}
    for b in batches:
        with no_grad():
            dist, _, _ = model.qa_forward(b, train=False, rng=None)
        for ex_id, (y1, y2) in zip(b.ids, predict_span(dist, hp.max_answer_len)):
            ex = by_id[ex_id]
            preds[ex_id] = join_tokens(ex.document_tokens[y1 : y2 + 1], ex.language)
    return preds


# --------------------------------------------------------------------------
# The trainer
# --------------------------------------------------------------------------

LOG_HEADER = "step,l_qa,l_dis,lambda_g,dev_em,dev_f1"


def write_log_csv(path, rows):
    def fmt(v):
        return "" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v))

    with open(path, "w", encoding="utf-8") as f:
        f.write(LOG_HEADER + "\n")
        for r in rows:
            f.write(",".join(fmt(r.get(c)) for c in LOG_HEADER.split(",")) + "\n")


class Trainer:
    """Owns the parameters, optimizer state, streams, and the step loop."""

    def __init__(self, model: QaModel, disc: Discriminator, cfg: TrainerConfig,
                 hp: HyperParams, res: Resources, datasets: dict,
                 dtype=np.float32):
        cfg.validate()
        self.model = model
        self.disc = disc
        self.cfg = cfg
        self.hp = hp
        self.res = res
        self.dtype = dtype
        self.step = 0
        self.best_f1 = -1.0
        self.evals_since_best = 0
        self.stopped = False
        self.log_rows = []
        self.d_step_count = 0

        tgt = datasets.get("tgt")
        src = datasets.get("src")
        self.dev = datasets.get("dev")
        if tgt is None or len(tgt) == 0:
            raise InputError("training requires a nonempty target dataset")
        if cfg.mode == "adversarial":
            if src is None or len(src) == 0 or src.language != "src":
                raise InputError(
                    "adversarial mode requires a source-language dataset "
                    "(shared-embedding or translated source)")
        self.qa_src = None
        self.d_tgt = self.d_src = None
        if cfg.mode == "joint-shuffled" and src is not None and len(src) \
                and src.language == "tgt":
            from .data import merge_datasets

            tgt = merge_datasets([tgt, src])
            src = None
        self.qa_tgt = BatchCycler(tgt, cfg.batch_size, cfg.seed, LANE_QA_TGT,
                                  res, dtype)
        if cfg.mode in ("joint-shuffled", "adversarial") and src is not None \
                and len(src):
            self.qa_src = BatchCycler(src, cfg.batch_size, cfg.seed, LANE_QA_SRC,
                                      res, dtype)
        if cfg.mode == "adversarial":
            self.d_tgt = BatchCycler(tgt, cfg.batch_size, cfg.seed, LANE_D_TGT,
                                     res, dtype)
            self.d_src = BatchCycler(src, cfg.batch_size, cfg.seed, LANE_D_SRC,
                                     res, dtype)

        self.qa_params = {f"{g}/{k}": v for g in
                          ("dep_src", "dep_tgt", "independent")
                          for k, v in model.groups[g].entries.items()}
        self.dis_params = {f"discriminator/{k}": v
                           for k, v in disc.group.entries.items()}
        scales = None
        if cfg.dep_lr_scale != 1.0:
            # Slow the per-language stacks relative to the shared module so
            # that both keep producing features comparable to each other
            # (they start from one init) while the module above them learns.
            scales = {"dep_src/": cfg.dep_lr_scale, "dep_tgt/": cfg.dep_lr_scale}
        self.opt_qa = Adam(cfg.lr, l2=cfg.l2, clip_norm=cfg.clip_norm,
                           lr_scales=scales)
        self.opt_dis = Adam(cfg.lr, l2=0.0, clip_norm=cfg.clip_norm)
        self.ema = Ema(self.qa_params, cfg.ema_decay)

    # -- phases ------------------------------------------------------------

    def _zero_qa_grads(self):
        for p in self.qa_params.values():
            p.grad = None

    def _zero_dis_grads(self):
        for p in self.dis_params.values():
            p.grad = None

    def _psi(self, batch, train, rng):
        return self.model.dependent_forward(
            batch.language, batch.q_ids, batch.q_chars, batch.d_ids,
            batch.d_chars, batch.q_mask, batch.d_mask, train=train, rng=rng)

    def _discriminator_phase(self, t):
        last_loss = None
        last_acc = None
        for i in range(self.cfg.k):
            tb = self.d_tgt.at(self.cfg.k * t + i)
            sb = self.d_src.at(self.cfg.k * t + i)
            with no_grad():
                tq, td = self._psi(tb, train=False, rng=None)
                sq, sd = self._psi(sb, train=False, rng=None)
            s_tq = self.disc.forward(tq, tb.q_mask)
            s_td = self.disc.forward(td, tb.d_mask)
            s_sq = self.disc.forward(sq, sb.q_mask)
            s_sd = self.disc.forward(sd, sb.d_mask)
            loss = discriminator_loss((s_tq, s_td), (s_sq, s_sd))
            self._zero_dis_grads()
            loss.backward()
            self.opt_dis.step(self.dis_params)
            self.d_step_count += 1
            last_loss = float(loss.data)
            last_acc = score_accuracy(
                np.concatenate([s_tq.data, s_td.data]),
                np.concatenate([s_sq.data, s_sd.data]))
        return last_loss, last_acc

    def _qa_phase(self, t):
        rng = lane_rng(self.cfg.seed, LANE_DROPOUT, t)
        batches = [self.qa_tgt.at(t)]
        if self.qa_src is not None:
            batches.append(self.qa_src.at(t))
        fwd = []
        for b in batches:
            dist, pq, pd = self.model.qa_forward(b, train=True, rng=rng)
            fwd.append((b, dist, pq, pd))
        losses = [qa_loss(dist, b.y1, b.y2, b.d_mask) for b, dist, _, _ in fwd]
        l_qa = losses[0] if len(losses) == 1 else (losses[0] + losses[1]) * 0.5
        lam = 0.0
        if self.cfg.mode == "adversarial" and self.cfg.variant != "none":
            lam = lambda_schedule(t, self.cfg)
        if lam > 0.0:
            selected = "src" if self.cfg.variant == "gan-ch" else "tgt"
            tgt_scores, src_scores = [], []
            for b, _, pq, pd in fwd:
                live = b.language == selected
                feats = (pq, pd) if live else (pq.detach(), pd.detach())
                out = tgt_scores if b.language == "tgt" else src_scores
                out.append(self.disc.forward(feats[0], b.q_mask))
                out.append(self.disc.forward(feats[1], b.d_mask))
            l_dis_term = discriminator_loss(tgt_scores, src_scores)
            total = adversarial_generator_loss(l_qa, l_dis_term, lam)
        else:
            total = l_qa
        self._zero_qa_grads()
        self._zero_dis_grads()
        total.backward()
        # The generator step must not move D even though -lambda*L_dis
        # deposited gradients on it.
        self._zero_dis_grads()
        self.opt_qa.step(self.qa_params)
        self.ema.update(self.qa_params)
        return float(l_qa.data), lam

    def _evaluate_dev(self):
        if self.dev is None or len(self.dev) == 0:
            return None, None
        with self.ema.swapped(self.qa_params):
            preds = predict_answers(self.model, self.dev, self.res, self.hp,
                                    self.cfg.batch_size, self.dtype)
        report = evaluate(preds, self.dev, self.dev.language)
        return report.exact_match, report.f1

    def _eval_and_track(self, row):
        em, f1 = self._evaluate_dev()
        row["dev_em"] = em
        row["dev_f1"] = f1
        if f1 is None:
            return
        if f1 > self.best_f1:
            self.best_f1 = f1
            self.evals_since_best = 0
        else:
            self.evals_since_best += 1
            if self.evals_since_best >= self.cfg.patience:
                self.stopped = True

    # -- driver -------------------------------------------------------------

    def run(self, max_steps=None):
        """Train until cfg.steps (or max_steps) or early stopping."""
        limit = self.cfg.steps if max_steps is None else max_steps
        if self.step == 0 and not self.log_rows:
            row = {"step": 0, "l_qa": None, "l_dis": None, "lambda_g": None,
                   "dev_em": None, "dev_f1": None}
            self._eval_and_track(row)
            self.log_rows.append(row)
        while self.step < limit and not self.stopped:
            t = self.step
            row = {"step": t + 1, "l_qa": None, "l_dis": None,
                   "lambda_g": None, "dev_em": None, "dev_f1": None}
            if self.cfg.mode == "adversarial":
                l_dis, acc = self._discriminator_phase(t)
                row["l_dis"] = l_dis
                row["d_acc"] = acc
            l_qa, lam = self._qa_phase(t)
            row["l_qa"] = l_qa
            row["lambda_g"] = lam
            self.step += 1
            if self.step % self.cfg.eval_every == 0 or self.step == self.cfg.steps:
                self._eval_and_track(row)
            self.log_rows.append(row)
        return self.log_rows

    # -- persistence ---------------------------------------------------------

    def _config_blob(self):
        payload = {"cfg": asdict(self.cfg), "hp": asdict(self.hp),
                   "dtype": np.dtype(self.dtype).str}
        return np.frombuffer(json.dumps(payload, sort_keys=True).encode("utf-8"),
                             dtype=np.uint8)

    def save(self, path):
        entries = {}
        for name, p in {**self.qa_params, **self.dis_params}.items():
            entries[f"param/{name}"] = p.data
        for name, arr in self.ema.shadow.items():
            entries[f"ema/{name}"] = arr
        for prefix, opt in (("adam_qa", self.opt_qa), ("adam_dis", self.opt_dis)):
            for kind in ("m", "v"):
                for name, arr in opt.state[kind].items():
                    entries[f"{prefix}/{kind}/{name}"] = arr
            entries[f"{prefix}/t"] = np.asarray(opt.state["t"], dtype=np.int64)
        entries["meta/step"] = np.asarray(self.step, dtype=np.int64)
        entries["meta/best_f1"] = np.asarray(self.best_f1, dtype=np.float64)
        entries["meta/evals_since_best"] = np.asarray(self.evals_since_best,
                                                      dtype=np.int64)
        entries["meta/stopped"] = np.asarray(int(self.stopped), dtype=np.int64)
        entries["meta/d_step_count"] = np.asarray(self.d_step_count, dtype=np.int64)
        entries["meta/config"] = self._config_blob()
        save_checkpoint(path, entries)

    def restore(self, path):
        entries = load_checkpoint(path)
        blob = entries.get("meta/config")
        if blob is None:
            raise StateError(f"{path}: checkpoint missing config snapshot")
        if not np.array_equal(blob, self._config_blob()):
            raise StateError(f"{path}: checkpoint config does not match trainer config")
        all_params = {**self.qa_params, **self.dis_params}
        for name, p in all_params.items():
            arr = entries.get(f"param/{name}")
            if arr is None or arr.shape != p.data.shape:
                raise StateError(f"{path}: missing or misshaped parameter {name}")
            p.data = arr.astype(p.data.dtype, copy=True)
        for name in self.ema.shadow:
            arr = entries.get(f"ema/{name}")
            if arr is None:
                raise StateError(f"{path}: missing EMA entry {name}")
            self.ema.shadow[name] = arr.astype(self.dtype, copy=True)
        for prefix, opt in (("adam_qa", self.opt_qa), ("adam_dis", self.opt_dis)):
            opt.state = {"m": {}, "v": {}, "t": int(entries[f"{prefix}/t"])}
            for kind in ("m", "v"):
                pre = f"{prefix}/{kind}/"
                for name, arr in entries.items():
                    if name.startswith(pre):
                        opt.state[kind][name[len(pre):]] = arr.copy()
        self.step = int(entries["meta/step"])
        self.best_f1 = float(entries["meta/best_f1"])
        self.evals_since_best = int(entries["meta/evals_since_best"])
        self.stopped = bool(int(entries["meta/stopped"]))
        self.d_step_count = int(entries["meta/d_step_count"])
        return self


def load_for_predict(path, res: Resources, dtype=None):
    """Rebuild a model from a checkpoint for inference.

    The hyperparameters come from the checkpoint's config snapshot; the
    averaged (EMA) weights are installed into the QA parameters, which is
    what predictions are served from.  Returns (model, hp, cfg).
    """
    entries = load_checkpoint(path)
    blob = entries.get("meta/config")
    if blob is None:
        raise StateError(f"{path}: checkpoint missing config snapshot")
    payload = json.loads(bytes(blob).decode("utf-8"))
    hp = HyperParams(**payload["hp"])
    cfg = TrainerConfig(**payload["cfg"])
    if dtype is None:
        dtype = np.dtype(payload["dtype"])
    model, _ = build_model(hp, res, seed=cfg.seed, dtype=dtype)
    for name, p in model.named_parameters().items():
        arr = entries.get(f"ema/{name}", entries.get(f"param/{name}"))
        if arr is None or arr.shape != p.data.shape:
            raise StateError(f"{path}: missing or misshaped parameter {name}")
        p.data = arr.astype(p.data.dtype, copy=True)
    return model, hp, cfg


@dataclass
class TrainResult:
    trainer: Trainer
    log: list = field(default_factory=list)

    @property
    def final_dev(self):
        for row in reversed(self.log):
            if row.get("dev_f1") is not None:
                return row["dev_em"], row["dev_f1"]
        return None, None


def train(mode: str, datasets: dict, cfg: TrainerConfig, hp: HyperParams,
          res: Resources, dtype=np.float32, resume_from=None) -> TrainResult:
    """Build a model and run one training job in the given mode."""
    cfg.mode = mode
    cfg.validate()
    model, disc = build_model(hp, res, seed=cfg.seed, dtype=dtype)
    tr = Trainer(model, disc, cfg, hp, res, datasets, dtype=dtype)
    if resume_from:
        tr.restore(resume_from)
    log = tr.run()
    return TrainResult(trainer=tr, log=log)
