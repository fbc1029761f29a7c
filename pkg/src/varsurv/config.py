"""Experiment configuration read from INI-style key = value files.

Sections: ``[data]``, ``[simulate]``, ``[train]``, ``[eval]``, ``[sweep]``.
Every key is checked against the fields it maps to; unknown sections or keys
raise :class:`ConfigError` before any work starts.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields

from varsurv.errors import ConfigError
from varsurv.experiment import MODEL_KINDS, RATES, SEEDS, SWEEP_M, EvalSettings
from varsurv.model import TrainConfig
from varsurv.simulate import GompertzConfig

DATA_KEYS = {"path": str, "delimiter": str, "time": str, "event": str, "covariates": list, "categorical": list, "missing": list}
SWEEP_KEYS = {"rates": list, "seeds": list, "kinds": list, "M": int, "N": int}


@dataclass
class DataSource:
    path: str = None
    delimiter: str = ","
    time: str = "time"
    event: str = "event"
    covariates: list = None
    categorical: list = field(default_factory=list)
    missing: list = field(default_factory=lambda: [""])


@dataclass
class SweepConfig:
    rates: tuple = RATES
    seeds: tuple = SEEDS
    kinds: tuple = MODEL_KINDS
    M: int = SWEEP_M
    N: int = 50_000


@dataclass
class ExperimentConfig:
    data: DataSource = field(default_factory=DataSource)
    simulate: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: EvalSettings = field(default_factory=EvalSettings)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    model: str = "vsi"
    seed: int = 0

    def train_config(self, **override):
        d = dict(self.train)
        d.setdefault("seed", self.seed)
        d.update(override)
        return TrainConfig.from_dict(d)

    def gompertz(self, preset=None, **override):
        d = dict(self.simulate)
        d.setdefault("seed", self.seed)
        d.update(override)
        if preset is not None:
            return GompertzConfig.preset(preset, **{k: v for k, v in d.items() if k != "censor_horizon"})
        return GompertzConfig(**d)

    def to_dict(self):
        return {
            "data": vars(self.data),
            "simulate": self.simulate,
            "train": self.train,
            "eval": self.eval.to_dict(),
            "sweep": {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self.sweep).items()},
            "model": self.model,
            "seed": self.seed,
        }


def _convert(text, kind, where):
    try:
        if kind is list:
            return [s.strip() for s in text.split(",") if s.strip()]
        if kind is bool:
            return text.strip().lower() in ("1", "true", "yes", "on")
        if kind is float:
            return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind.__name__}") from exc


def _typed_section(section, types, name):
    out = {}
    for key, text in section.items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{name}]; allowed: {sorted(types)}")
        out[key] = _convert(text, types[key], f"[{name}] {key}")
    return out


_BUILTIN = {"int": int, "float": float, "str": str, "bool": bool}


def _field_types(cls):
    return {f.name: f.type if isinstance(f.type, type) else _BUILTIN[f.type] for f in fields(cls)}


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep key case (M, N)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = ExperimentConfig()
    known = {"data", "simulate", "train", "eval", "sweep", "run"}
    for name in parser.sections():
        if name not in known:
            raise ConfigError(f"unknown section [{name}] in {source}; allowed: {sorted(known)}")
    if parser.has_section("data"):
        cfg.data = DataSource(**_typed_section(parser["data"], DATA_KEYS, "data"))
    if parser.has_section("simulate"):
        cfg.simulate = _typed_section(parser["simulate"], _field_types(GompertzConfig), "simulate")
    if parser.has_section("train"):
        cfg.train = _typed_section(parser["train"], _field_types(TrainConfig), "train")
    if parser.has_section("eval"):
        cfg.eval = EvalSettings(**_typed_section(parser["eval"], _field_types(EvalSettings), "eval"))
    if parser.has_section("sweep"):
        d = _typed_section(parser["sweep"], SWEEP_KEYS, "sweep")
        for k in ("rates", "seeds"):
            if k in d:
                d[k] = tuple(_convert(v, int, f"[sweep] {k}") for v in d[k])
        if "kinds" in d:
            bad = [k for k in d["kinds"] if k not in MODEL_KINDS]
            if bad:
                raise ConfigError(f"[sweep] kinds: unknown model kinds {bad}")
            d["kinds"] = tuple(d["kinds"])
        cfg.sweep = SweepConfig(**d)
    if parser.has_section("run"):
        d = _typed_section(parser["run"], {"model": str, "seed": int}, "run")
        cfg.model = d.get("model", cfg.model)
        cfg.seed = d.get("seed", cfg.seed)
    validate(cfg)
    return cfg


def validate(cfg):
    """Construct every typed piece once so errors surface before any work."""
    if cfg.model not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {cfg.model!r}; choose from {list(MODEL_KINDS)}")
    cfg.train_config()
    if cfg.simulate:
        cfg.gompertz()
    bad = [r for r in cfg.sweep.rates if r not in RATES]
    if bad:
        raise ConfigError(f"[sweep] rates must be among {list(RATES)}, got {bad}")
    for k, v in cfg.eval.to_dict().items():
        if v < 1:
            raise ConfigError(f"[eval] {k} must be >= 1")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
