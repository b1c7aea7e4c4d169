"""Run configuration and deterministic seed derivation.

One JSON document describes a whole experiment; every field has a desk-
scale default, command-line flags override file values, and the merged
result is echoed into the output directory so a run can be reproduced
from its artifacts alone.

All randomness in the package flows from (seed, domain, ...) tuples fed
to numpy SeedSequence, so independent run phases draw from independent
streams and any one stream can be re-derived without replaying the rest.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from stylesearch.genome import P_FLIP_DEFAULT

# Stream labels for seed derivation. Values are arbitrary but frozen:
# changing any of them changes every derived stream.
DOMAIN_ENCODER = 101
DOMAIN_EXTRACTOR = 202
DOMAIN_ORACLE = 303
DOMAIN_INIT = 404
DOMAIN_RANDOM = 505
DOMAIN_SELECT = 606
DOMAIN_CANDIDATE = 707
DOMAIN_DATA = 808


def seed_for(*parts: int) -> np.random.SeedSequence:
    """A SeedSequence keyed by an integer tuple (seed, domain, ...)."""
    return np.random.SeedSequence(tuple(int(p) for p in parts))


def rng_for(*parts: int) -> np.random.Generator:
    return np.random.default_rng(seed_for(*parts))


def derive_seed(*parts: int) -> int:
    """Collapse a (seed, domain, ...) tuple into one u64 seed, for
    components that persist their seed as a plain integer."""
    return int(seed_for(*parts).generate_state(1, np.uint64)[0])


@dataclass
class SearchConfig:
    """Aging-evolution knobs. Field defaults are the full-scale protocol
    (population 20, budget 140); the desk run config shrinks them."""

    population: int = 20
    budget: int = 140
    tournament: int = 5
    p_flip: float = P_FLIP_DEFAULT
    workers: int = 1

    def validate(self) -> None:
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if not 1 <= self.tournament <= self.population:
            raise ValueError("tournament size must be in 1..population")
        if self.budget < self.population:
            raise ValueError("budget must be >= population")
        if not 0.0 < self.p_flip <= 1.0:
            raise ValueError("p_flip must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class TrainConfig:
    """Candidate-decoder training: plain reconstruction MSE, Adam."""

    steps: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class ObjectiveConfig:
    """Weights of the three scoring terms and the whitening floor."""

    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1
    eig_floor: float = 1e-8

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class OracleConfig:
    """Supervisory reference training; ten times the candidate budget."""

    steps: int = 2000

    def validate(self) -> None:
        if self.steps < 0:
            raise ValueError("oracle steps must be >= 0")


@dataclass
class DataConfig:
    """Image sources. Directories left unset fall back to seeded
    synthetic images at the listed counts."""

    train_dir: str | None = None
    content_dir: str | None = None
    style_dir: str | None = None
    train_count: int = 8
    pair_count: int = 8


@dataclass
class RunConfig:
    """Everything one experiment needs, defaults at desk scale."""

    seed: int = 0
    image_size: int = 32
    channel_plan: tuple = (8, 16, 32, 64, 128)
    out_dir: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    search: SearchConfig = field(
        default_factory=lambda: SearchConfig(population=8, budget=40, workers=4)
    )
    train: TrainConfig = field(default_factory=TrainConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def validate(self) -> None:
        if self.image_size % 16:
            raise ValueError("image_size must be divisible by 16")
        if len(self.channel_plan) != 5:
            raise ValueError("channel_plan needs 5 entries")
        self.search.validate()
        self.train.validate()
        self.objective.validate()
        self.oracle.validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channel_plan"] = list(self.channel_plan)
        return d


_SECTIONS = {
    "data": DataConfig,
    "search": SearchConfig,
    "train": TrainConfig,
    "objective": ObjectiveConfig,
    "oracle": OracleConfig,
}


def _build_section(cls, payload, where: str):
    if not isinstance(payload, dict):
        raise ValueError(f"config section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown config keys in {where!r}: {sorted(unknown)}")
    return cls(**payload)


def config_from_dict(payload: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document, rejecting unknown
    keys so typos fail loudly instead of silently using defaults."""
    if not isinstance(payload, dict):
        raise ValueError("config must be a JSON object")
    top_known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(payload) - top_known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        elif key == "channel_plan":
            kwargs[key] = tuple(int(c) for c in value)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(payload)


def save_config(path, cfg: RunConfig) -> None:
    """Write the fully resolved config: every default materialized."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
