"""Experiment configuration: parsing, defaults, normalisation and validation.

A config is a nested mapping (YAML or JSON on disk). Every field has a
default, so an empty file describes a static 10-client run with 30%
adversaries, lr 0.1 and momentum 0.9. :func:`normalize` fills defaults,
coerces types and reports every violated invariant with its field path.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from robustfed.aggregators import AGGREGATOR_NAMES
from robustfed.attacks import ATTACK_KINDS, AttackSpec
from robustfed.errors import ConfigError, DataError, RobustFedError
from robustfed.learner.models import MODEL_KINDS
from robustfed.truth_inference import TRUTH_STEPS, TruthInferenceConfig

DATA_SOURCES = ("digits", "idx", "csv")


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "digits"
    source: str = "digits"
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_csv: Optional[str] = None
    test_csv: Optional[str] = None
    num_classes: Optional[int] = None
    max_train: Optional[int] = None
    max_test: Optional[int] = None
    test_size: int = 500


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "softmax_regression"
    hidden_dim: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    local_epochs: int = 1
    batch_size: int = 32


@dataclass(frozen=True)
class AggregatorConfig:
    name: str = "robustfed_plus"
    f: Optional[int] = None
    trim_k: Optional[int] = None
    multi_m: Optional[int] = None
    normalize: bool = True
    temporal_mode: Optional[str] = None


@dataclass(frozen=True)
class SuiteConfig:
    aggregators: List[str] = field(default_factory=lambda: list(AGGREGATOR_NAMES))
    attacks: List[str] = field(default_factory=lambda: list(ATTACK_KINDS))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    rounds: int = 50
    selection: str = "static"
    num_clients: int = 10
    pool_size: Optional[int] = None
    clients_per_round: Optional[int] = None
    workers: int = 1
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    attack: AttackSpec = AttackSpec()
    aggregator: AggregatorConfig = AggregatorConfig()
    truth_inference: TruthInferenceConfig = TruthInferenceConfig()
    suite: Optional[SuiteConfig] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


NESTED = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "attack": AttackSpec,
    "aggregator": AggregatorConfig,
    "truth_inference": TruthInferenceConfig,
    "suite": SuiteConfig,
}


def _coerce(value, default, annotation, path, problems):
    """Coerce ``value`` to the type suggested by the field's default/annotation."""
    ann = str(annotation)
    if value is None:
        if "Optional" in ann or default is None:
            return None
        problems.append((path, "must not be null"))
        return default
    try:
        if "List[str]" in ann:
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            if not isinstance(value, (list, tuple)):
                raise TypeError("expected a list")
            return [str(v) for v in value]
        if "bool" in ann:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "yes", "no", "1", "0"):
                return value.lower() in ("true", "yes", "1")
            raise TypeError("expected a boolean")
        if "int" in ann:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError("expected an integer")
            return int(float(value))
        if "float" in ann:
            if isinstance(value, bool):
                raise TypeError("expected a number")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        problems.append((path, f"{exc} (got {value!r})"))
        return default


def _section(cls, raw, prefix, problems):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append((prefix, "must be a mapping"))
        raw = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            problems.append((f"{prefix}.{key}" if prefix else key, "unknown field"))
    values = {}
    for name, f in known.items():
        path = f"{prefix}.{name}" if prefix else name
        if f.default is not dataclasses.MISSING:
            default = f.default
        elif f.default_factory is not dataclasses.MISSING:
            default = f.default_factory()
        else:
            default = None
        if name in NESTED and cls is ExperimentConfig:
            if name == "suite" and raw.get(name) is None:
                values[name] = None
            else:
                values[name] = _section(NESTED[name], raw.get(name), path, problems)
            continue
        values[name] = _coerce(raw[name], default, f.type, path, problems) if name in raw else default
    return values


def _choice(problems, path, value, allowed):
    if value not in allowed:
        problems.append((path, f"must be one of {', '.join(allowed)} (got {value!r})"))


def normalize(raw: Optional[Dict[str, Any]]) -> ExperimentConfig:
    """Fill defaults, coerce types and cross-check invariants.

    Raises :class:`ConfigError` listing every problem found.
    """
    problems: List[Tuple[str, str]] = []
    v = _section(ExperimentConfig, raw or {}, "", problems)

    _choice(problems, "selection", v["selection"], ("static", "dynamic"))
    if v["selection"] == "static":
        v["pool_size"] = v["num_clients"] if v["pool_size"] is None else v["pool_size"]
        v["clients_per_round"] = v["num_clients"] if v["clients_per_round"] is None else v["clients_per_round"]
        if v["pool_size"] != v["num_clients"]:
            problems.append(("pool_size", f"static selection requires pool_size == num_clients ({v['num_clients']})"))
        if v["clients_per_round"] != v["num_clients"]:
            problems.append(("clients_per_round", "static selection requires clients_per_round == num_clients"))
    else:
        v["pool_size"] = 100 if v["pool_size"] is None else v["pool_size"]
        v["clients_per_round"] = v["num_clients"] if v["clients_per_round"] is None else v["clients_per_round"]
        if v["clients_per_round"] > v["pool_size"]:
            problems.append(("clients_per_round", "dynamic selection requires clients_per_round <= pool_size"))
    for key in ("rounds", "num_clients", "pool_size", "clients_per_round", "workers"):
        if v[key] is not None and v[key] < 1:
            problems.append((key, "must be >= 1"))

    ds = v["dataset"]
    _choice(problems, "dataset.source", ds["source"], DATA_SOURCES)
    if ds["source"] == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not ds[key]:
                problems.append((f"dataset.{key}", "required when source is idx"))
    if ds["source"] == "csv":
        for key in ("train_csv", "test_csv"):
            if not ds[key]:
                problems.append((f"dataset.{key}", "required when source is csv"))

    _choice(problems, "model.kind", v["model"]["kind"], MODEL_KINDS)
    mo = v["model"]
    for key in ("hidden_dim", "local_epochs", "batch_size"):
        if mo[key] < 1:
            problems.append((f"model.{key}", "must be >= 1"))
    if not mo["learning_rate"] > 0:
        problems.append(("model.learning_rate", "must be > 0"))
    if not 0.0 <= mo["momentum"] < 1.0:
        problems.append(("model.momentum", "must lie in [0, 1)"))

    at = v["attack"]
    _choice(problems, "attack.kind", at["kind"], ATTACK_KINDS)
    if not 0.0 <= at["malicious_fraction"] < 0.5:
        problems.append(("attack.malicious_fraction", "must be < 0.5: adversaries must be fewer than 50% of clients"))
    if not at["noise_low"] < at["noise_high"]:
        problems.append(("attack.noise_low", "must be below attack.noise_high"))
    if at["byz_sigma"] < 0:
        problems.append(("attack.byz_sigma", "must be >= 0"))

    ag = v["aggregator"]
    _choice(problems, "aggregator.name", ag["name"], AGGREGATOR_NAMES)
    if ag["temporal_mode"] is None:
        ag["temporal_mode"] = v["selection"] if v["selection"] in ("static", "dynamic") else "static"
    _choice(problems, "aggregator.temporal_mode", ag["temporal_mode"], ("static", "dynamic"))

    ti = v["truth_inference"]
    _choice(problems, "truth_inference.truth_step", ti["truth_step"], TRUTH_STEPS)
    if ti["max_iterations"] < 1:
        problems.append(("truth_inference.max_iterations", "must be >= 1"))
    for key in ("convergence_tol", "distance_floor"):
        if not ti[key] > 0:
            problems.append((f"truth_inference.{key}", "must be > 0"))

    if v["suite"] is not None:
        for i, name in enumerate(v["suite"]["aggregators"]):
            _choice(problems, f"suite.aggregators[{i}]", name, AGGREGATOR_NAMES)
        for i, kind in enumerate(v["suite"]["attacks"]):
            _choice(problems, f"suite.attacks[{i}]", kind, ATTACK_KINDS)
        if not v["suite"]["aggregators"] or not v["suite"]["attacks"]:
            problems.append(("suite", "needs at least one aggregator and one attack"))

    if problems:
        raise ConfigError(problems)
    try:
        return ExperimentConfig(
            **{k: val for k, val in v.items() if k not in NESTED},
            **{k: NESTED[k](**v[k]) for k in NESTED if k != "suite"},
            suite=None if v["suite"] is None else SuiteConfig(**v["suite"]),
        )
    except RobustFedError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError([("", f"config file not found: {path}")])
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([("", f"cannot parse {path}: {exc}")]) from None
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level of the config must be a mapping")])
    cfg = normalize(raw)
    return _resolve_paths(cfg, path.parent)


def _resolve_paths(cfg: ExperimentConfig, base: Path) -> ExperimentConfig:
    """Make relative dataset paths relative to the config file's directory."""
    ds = cfg.dataset
    changes = {}
    for key in ("train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv"):
        p = getattr(ds, key)
        if p and not Path(p).is_absolute():
            changes[key] = str((base / p).resolve())
    if not changes:
        return cfg
    return cfg.replace(dataset=dataclasses.replace(ds, **changes))


def dumps(cfg: ExperimentConfig) -> str:
    """Canonical JSON rendering of a normalised config."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def apply_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """CLI-style overrides: seed, rounds, aggregator (name) and attack (kind)."""
    raw = cfg.to_dict()
    if overrides.get("seed") is not None:
        raw["seed"] = overrides["seed"]
    if overrides.get("rounds") is not None:
        raw["rounds"] = overrides["rounds"]
    if overrides.get("aggregator") is not None:
        raw["aggregator"]["name"] = overrides["aggregator"]
    if overrides.get("attack") is not None:
        raw["attack"]["kind"] = overrides["attack"]
    if overrides.get("workers") is not None:
        raw["workers"] = overrides["workers"]
    return normalize(raw)


def check_data_paths(cfg: ExperimentConfig) -> None:
    ds = cfg.dataset
    keys = {"idx": ("train_images", "train_labels", "test_images", "test_labels"), "csv": ("train_csv", "test_csv")}
    for key in keys.get(ds.source, ()):
        p = getattr(ds, key)
        if not Path(p).exists():
            raise DataError(f"dataset.{key}: file not found: {p}")
