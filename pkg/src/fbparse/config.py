"""JSON run configuration.

Every published hyperparameter is written as ``{"paper": x, "desk": y}``;
the top-level ``scale`` key picks which column is used. Plain values apply
at both scales.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .inference import MHConfig
from .parsers import ParserConfig
from .training import MODES, TrainingConfig
from .world.corpus import CorruptionPolicy
from .world.feedback import NoiseConfig
from .world.world import DEFAULT_WORLD_SIZES

SCALES = ("desk", "paper")


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "scale": "desk",
    "root_seed": 0,
    "output_dir": "runs/experiment",
    "world": {"seed": 0, "sizes": dict(DEFAULT_WORLD_SIZES)},
    "corpus": {
        "seed_labeled": {"paper": 300, "desk": 50},
        "unlabeled_sizes": {"paper": [300, 500, 1000, 1700], "desk": [50, 100, 200, 300]},
        "test": {"paper": 1285, "desk": 200},
    },
    "replications": {"paper": 10, "desk": 3},
    "modes": list(MODES),
    "parser": {
        "emb_dim": {"paper": 300, "desk": 64},
        "hidden": {"paper": 128, "desk": 32},
        "init_scale": 0.08,
        "max_len": None,
    },
    "training": {
        "pretrain_epochs": {"paper": 20, "desk": 20},
        "semisup_epochs": {"paper": 10, "desk": 10},
        "learning_rate": {"paper": 1e-4, "desk": 5e-3},
        "semisup_learning_rate": {"paper": None, "desk": 5e-4},
        "clip_threshold": {"paper": 10.0, "desk": 10.0},
        "shuffle": True,
        "corrective_mix": 0.5,
        "feedback_steps": 2,
        "self_training_beam": 5,
        "replay": False,
        "record_time": False,
    },
    "mh": {"num_iterations": 20, "reject_yhat": True, "max_resample_attempts": 25},
    "policy": asdict(CorruptionPolicy()),
    "noise": asdict(NoiseConfig()),
    "eval": {"beam_width": 1},
}


def _is_pair(v) -> bool:
    return isinstance(v, dict) and set(v) == {"paper", "desk"}


def resolve(obj, scale: str):
    """Replace every paper/desk pair by the value for ``scale``."""
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; expected one of {SCALES}")
    if _is_pair(obj):
        return copy.deepcopy(obj[scale])
    if isinstance(obj, dict):
        return {k: resolve(v, scale) for k, v in obj.items()}
    return copy.deepcopy(obj)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and not _is_pair(v) and not _is_pair(out[k]):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    world_seed: int = 0
    world_sizes: dict = field(default_factory=lambda: dict(DEFAULT_WORLD_SIZES))
    seed_labeled: int = 50
    unlabeled_sizes: tuple = (50, 100, 200, 300)
    test_size: int = 200
    replications: int = 3
    modes: tuple = MODES
    parser: ParserConfig = ParserConfig()
    derive_max_len: bool = True  # max_len from the seed set when the config leaves it null
    training: TrainingConfig = TrainingConfig()
    policy: CorruptionPolicy = CorruptionPolicy()
    noise: NoiseConfig = NoiseConfig()
    beam_width: int = 1
    root_seed: int = 0
    output_dir: str = "runs/experiment"
    scale: str = "desk"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.unlabeled_sizes or min(self.unlabeled_sizes) < 1:
            raise ConfigError("unlabeled sizes must be positive")
        if len(set(self.unlabeled_sizes)) != len(self.unlabeled_sizes):
            raise ConfigError("unlabeled sizes must be distinct")
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}")
        if self.seed_labeled < 1 or self.test_size < 1:
            raise ConfigError("seed and test sizes must be >= 1")
        if self.beam_width < 1:
            raise ConfigError("beam width must be >= 1")


def _only(d: dict, cls, section: str) -> dict:
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    return d


def from_dict(raw: dict, scale: Optional[str] = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a (possibly partial) config dict."""
    full = merge(DEFAULT_CONFIG, raw)
    scale = scale or full.get("scale", "desk")
    d = resolve(full, scale)
    pdict = dict(d["parser"])
    max_len = pdict.pop("max_len", None)
    parser = ParserConfig(**_only(pdict, ParserConfig, "parser"))
    if max_len is not None:
        parser = replace(parser, max_len=int(max_len))
    mh = MHConfig(**_only(d["mh"], MHConfig, "mh"))
    tdict = _only(dict(d["training"]), TrainingConfig, "training")
    training = TrainingConfig(mh=mh, seed=int(d["root_seed"]), **tdict)
    pol = {k: tuple(v) if isinstance(v, list) else v for k, v in d["policy"].items()}
    try:
        return ExperimentConfig(
            world_seed=int(d["world"]["seed"]),
            world_sizes=dict(d["world"]["sizes"]),
            seed_labeled=int(d["corpus"]["seed_labeled"]),
            unlabeled_sizes=tuple(int(x) for x in d["corpus"]["unlabeled_sizes"]),
            test_size=int(d["corpus"]["test"]),
            replications=int(d["replications"]),
            modes=tuple(d["modes"]),
            parser=parser,
            derive_max_len=max_len is None,
            training=training,
            policy=CorruptionPolicy(**_only(pol, CorruptionPolicy, "policy")),
            noise=NoiseConfig(**_only(d["noise"], NoiseConfig, "noise")),
            beam_width=int(d["eval"]["beam_width"]),
            root_seed=int(d["root_seed"]),
            output_dir=str(d["output_dir"]),
            scale=scale,
        )
    except (TypeError, KeyError) as e:
        raise ConfigError(f"malformed config: {e}") from e


def load_config(path=None, scale: Optional[str] = None) -> ExperimentConfig:
    raw = {} if path is None else json.loads(Path(path).read_text(encoding="utf-8"))
    return from_dict(raw, scale)


def to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config as plain JSON-ready data (echoed next to every run)."""
    d = asdict(cfg)
    d["unlabeled_sizes"] = list(cfg.unlabeled_sizes)
    d["modes"] = list(cfg.modes)
    return json.loads(json.dumps(d))


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"
