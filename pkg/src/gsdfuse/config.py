"""TOML experiment configs.

Layout::

    [data]       path = "forest.jsonl"          # an existing dataset, or
    [synth]      codec, srs, n_trees, ...       # a sandbox recipe (see SynthConfig)
    [train] [sampler] [model] [model.gau] [smote] [triplet]
    [sweep]      codecs = [...], srs = [...], ablations = ["all", "no_gin", ...]

Every key of the training sections maps one-to-one onto the dataclass field
of the same name.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .exceptions import ConfigError
from .graph import DEFAULT_RATIOS
from .trainer import Configs

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ABLATIONS = {
    "all": {},
    "no_triplet": {"use_triplet": False},
    "no_smote": {"use_smote": False},
    "no_gin": {"use_gin": False},
    "no_gau": {"use_gau": False},
}
TRAIN_SECTIONS = ("train", "sampler", "model", "smote", "triplet")


@dataclass(frozen=True)
class SynthConfig:
    """Sandbox recipe: toy LM, forest growth, substitution and split."""

    codec: str = "hc"
    srs: float = 0.1
    n_trees: int = 1500
    mean_tree_size: int = 8
    max_len: int = 32
    seed: int = 0
    hc_tree_size: int = 4
    vocab_size: int = 256
    lm_seed: int = 0
    concentration: float = 0.1
    eos_prob: float = 0.05
    split_ratios: tuple = DEFAULT_RATIOS
    split_seed: int = 42
    split_unit: str = "node"

    def __post_init__(self):
        object.__setattr__(self, "split_ratios", tuple(self.split_ratios))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d

    def lm_dict(self) -> dict:
        return {"kind": "dirichlet_bigram", "vocab_size": self.vocab_size, "seed": self.lm_seed,
                "concentration": self.concentration, "eos_prob": self.eos_prob}


@dataclass
class ExperimentConfig:
    configs: Configs
    data_path: Path | None = None
    synth: SynthConfig | None = None
    sweep: dict | None = None
    source: Path | None = None

    def training_dict(self) -> dict:
        return self.configs.to_dict()


def _build(cls, section: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    raw = dict(raw)
    allowed = set(TRAIN_SECTIONS) | {"data", "synth", "sweep"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    configs = Configs.from_dict({k: raw[k] for k in TRAIN_SECTIONS if k in raw})
    data_path = None
    if "data" in raw:
        extra = set(raw["data"]) - {"path"}
        if extra:
            raise ConfigError(f"unknown key(s) in [data]: {sorted(extra)}")
        data_path = Path(raw["data"]["path"])
        if base_dir is not None and not data_path.is_absolute():
            data_path = base_dir / data_path
    synth = _build(SynthConfig, raw["synth"], "synth") if "synth" in raw else None
    sweep = raw.get("sweep")
    if sweep is not None:
        extra = set(sweep) - {"codecs", "srs", "ablations"}
        if extra:
            raise ConfigError(f"unknown key(s) in [sweep]: {sorted(extra)}")
        for a in sweep.get("ablations", []):
            if a not in ABLATIONS:
                raise ConfigError(f"unknown ablation {a!r}; expected one of {sorted(ABLATIONS)}")
    return ExperimentConfig(configs, data_path, synth, sweep)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = parse_config(raw, base_dir=path.parent)
    cfg.source = path
    return cfg
