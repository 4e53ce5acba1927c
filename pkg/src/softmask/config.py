"""Pipeline configuration: every tunable constant in one JSON document."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .imaging import DEFAULT_WINDOW
from .labels import DEFAULT_THRESHOLD
from .matting import MattingParams
from .trimap import GrabCutParams


@dataclass(frozen=True)
class TrimapConfig:
    se_scale: float = 0.05
    se_shape: str = "disk"
    min_raters: int | None = None  # None: every rater must agree
    union_min: int = 1


@dataclass(frozen=True)
class WindowConfig:
    level: float = DEFAULT_WINDOW[0]
    width: float = DEFAULT_WINDOW[1]


@dataclass(frozen=True)
class Config:
    seed: int = 0
    workers: int = 1
    depth: int = 8
    threshold: float = DEFAULT_THRESHOLD
    window: WindowConfig = field(default_factory=WindowConfig)
    grabcut: GrabCutParams = field(default_factory=GrabCutParams)
    matting: MattingParams = field(default_factory=MattingParams)
    trimap: TrimapConfig = field(default_factory=TrimapConfig)

    def grabcut_params(self) -> GrabCutParams:
        return replace(self.grabcut, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grabcut"].pop("seed")  # driven by the top-level seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {"window": WindowConfig, "grabcut": GrabCutParams, "matting": MattingParams, "trimap": TrimapConfig}


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**data)


def config_from_dict(data: dict, base: Config | None = None) -> Config:
    """Overlay ``data`` (possibly partial) on ``base``."""
    base = base or Config()
    top = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be an object")
            current = asdict(getattr(base, key))
            current.update(value)
            top[key] = _build(_SECTIONS[key], current, key)
        else:
            top[key] = value
    cfg = _build(Config, {**{f.name: getattr(base, f.name) for f in fields(Config)}, **top}, "config")
    if cfg.depth not in (8, 16):
        raise ValueError("depth must be 8 or 16")
    if cfg.workers < 1:
        raise ValueError("workers must be >= 1")
    return cfg


def load_config(path, base: Config | None = None) -> Config:
    with open(Path(path)) as fh:
        return config_from_dict(json.load(fh), base)
