"""Flat key=value run configuration.

One file drives a whole run: model size (via a preset plus individual
overrides), trainer settings, and the input/output paths.  Values are
resolved in layers, later layers winning: built-in defaults, the preset,
the config file, the XLQA_SEED environment variable, and finally command
line flags.  The fully resolved configuration is dumped next to the run's
outputs; feeding that dump back in reproduces the run.
"""

import os
from dataclasses import asdict, dataclass, field, fields as dc_fields

from .errors import InputError
from .model import HyperParams, desk_preset
from .trainer import TrainerConfig

_HP_KEYS = {f.name for f in dc_fields(HyperParams)}
_CFG_KEYS = {f.name for f in dc_fields(TrainerConfig)}


@dataclass
class RunPaths:
    train_tgt: str = ""
    train_src: str = ""
    train_src_language: str = "src"
    dev: str = ""
    records: str = ""
    lexicon: str = ""
    src_vocab: str = ""
    tgt_vocab: str = ""
    char_vocab: str = ""
    src_emb: str = ""
    tgt_emb: str = ""
    emb_dim: int = 32
    max_doc_tokens: int = 0
    resume: str = ""
    out_dir: str = "runs/out"


_PATH_KEYS = {f.name for f in dc_fields(RunPaths)}


@dataclass
class RunConfig:
    preset: str = "full"
    hp: HyperParams = None
    cfg: TrainerConfig = None
    paths: RunPaths = field(default_factory=RunPaths)

    def items(self):
        out = [("preset", self.preset)]
        out += sorted(asdict(self.hp).items())
        out += sorted(asdict(self.cfg).items())
        out += sorted(asdict(self.paths).items())
        return out


def parse_config_file(path):
    """Read `key = value` lines; '#' starts a comment, blanks are skipped."""
    pairs = {}
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InputError(f"{path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                pairs[key.strip()] = value.strip()
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    return pairs


def _convert(key, raw, default):
    if isinstance(raw, bool) or not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as e:
        raise InputError(f"config key {key}: cannot parse {raw!r}") from e
    return raw


def resolve(file_path=None, overrides=None, env=None) -> RunConfig:
    """Layer defaults, preset, file, XLQA_SEED, and flag overrides."""
    env = os.environ if env is None else env
    raw = {}
    if file_path:
        raw.update(parse_config_file(file_path))
    seed_env = env.get("XLQA_SEED")
    if seed_env is not None:
        raw["seed"] = seed_env
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v

    preset = raw.pop("preset", "full")
    if preset == "desk":
        hp_kwargs = asdict(desk_preset())
    elif preset == "full":
        hp_kwargs = asdict(HyperParams())
    else:
        raise InputError(f"unknown preset {preset!r} (expected desk or full)")
    cfg_kwargs = asdict(TrainerConfig())
    path_kwargs = asdict(RunPaths())

    for key, value in raw.items():
        if key in _HP_KEYS:
            hp_kwargs[key] = _convert(key, value, hp_kwargs[key])
        elif key in _CFG_KEYS:
            cfg_kwargs[key] = _convert(key, value, cfg_kwargs[key])
        elif key in _PATH_KEYS:
            path_kwargs[key] = _convert(key, value, path_kwargs[key])
        else:
            raise InputError(f"unknown config key {key!r}")

    rc = RunConfig(preset=preset, hp=HyperParams(**hp_kwargs),
                   cfg=TrainerConfig(**cfg_kwargs), paths=RunPaths(**path_kwargs))
    rc.cfg.validate()
    return rc


def dump_config(path, rc: RunConfig):
    with open(path, "w", encoding="utf-8") as f:
        for key, value in rc.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            f.write(f"{key} = {value}\n")


def require_paths(rc: RunConfig, *keys):
    """Fail fast (before any side effects) if an input path is absent."""
    for key in keys:
        value = getattr(rc.paths, key)
        if not value:
            raise InputError(f"config key {key} is required for this command")
        if not os.path.exists(value):
            raise InputError(f"{key} path does not exist: {value}")
