"""Run configuration: one JSON document with optional sections.

Sections: "model" (architecture), "task" (dataset family and sizes),
"train" (optimization), "vote" (energy voting), "simulate" (classical
rollouts). Unknown keys are rejected everywhere, at the top level and
inside every section.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ConfigError
from .network import ModelConfig
from .voting import VoteConfig

__all__ = ["TaskConfig", "TrainConfig", "SimulateConfig", "RunConfig",
           "load_run_config", "parse_run_config"]

_TASK_KINDS = ("blobs", "maze", "shidoku")


def _check_keys(doc: dict, allowed: set, where: str, required: set = frozenset()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing {where} keys: {sorted(missing)}")


@dataclass
class TaskConfig:
    kind: str
    n_train: int = 0
    n_test: int = 0
    seed: int = 0
    # blobs
    size: int = 16
    jitter: float = 2.0
    noise: float = 0.05
    # maze
    height: int = 9
    width: int = 9
    wall_density: float = 0.25
    # shidoku
    givens_min: int = 6
    givens_max: int = 10

    _COMMON = {"kind", "n_train", "n_test", "seed"}
    _PER_KIND = {
        "blobs": {"size", "jitter", "noise"},
        "maze": {"height", "width", "wall_density"},
        "shidoku": {"givens_min", "givens_max"},
    }

    def __post_init__(self):
        if self.kind not in _TASK_KINDS:
            raise ConfigError(f"task kind must be one of {_TASK_KINDS}, got '{self.kind}'")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("n_train and n_test must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskConfig":
        kind = doc.get("kind") if isinstance(doc, dict) else None
        allowed = cls._COMMON | cls._PER_KIND.get(kind, set())
        _check_keys(doc, allowed, "task config", required={"kind"})
        return cls(**doc)

    def generate(self, split: str) -> list:
        """Materialize the train or test split from (parameters, seed).

        The two splits use disjoint derived seeds."""
        from . import tasks

        if split not in ("train", "test"):
            raise ConfigError(f"split must be train or test, got '{split}'")
        n = self.n_train if split == "train" else self.n_test
        # disjoint substreams per split
        seed = self.seed * 2 + (0 if split == "train" else 1)
        if self.kind == "blobs":
            return tasks.gen_blobs(n, size=self.size, jitter=self.jitter,
                                   noise=self.noise, seed=seed)
        if self.kind == "maze":
            return tasks.gen_maze(n, height=self.height, width=self.width,
                                  wall_density=self.wall_density, seed=seed)
        return tasks.gen_shidoku(n, givens_min=self.givens_min,
                                 givens_max=self.givens_max, seed=seed)


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    batch: int
    seed: int = 0
    schedule: str = "constant"
    weight_decay: float = 0.0
    clip_norm: float = 10.0
    target_accuracy: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.lr <= 0:
            raise ConfigError("train config needs epochs >= 0, batch >= 1, lr > 0")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown schedule '{self.schedule}'")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        _check_keys(doc, {"epochs", "lr", "batch", "seed", "schedule",
                          "weight_decay", "clip_norm", "target_accuracy"},
                    "train config", required={"epochs", "lr", "batch"})
        return cls(**doc)


@dataclass
class SimulateConfig:
    kind: str = "kuramoto"  # kuramoto | generalized | winfree
    d: int = 8
    steps: int = 100
    runs: int = 1
    dt: float = 0.1
    gamma: float = 0.1
    q: float = 0.0
    kappa: float = 1.0
    coupling_init: str = "symmetric_normal"
    omega_scale: float = 1.0
    record_energy: bool = False

    def __post_init__(self):
        if self.kind not in ("kuramoto", "generalized", "winfree"):
            raise ConfigError(f"unknown simulate kind '{self.kind}'")
        if self.d < 1 or self.steps < 0 or self.runs < 1:
            raise ConfigError("simulate needs d >= 1, steps >= 0, runs >= 1")
        if self.dt <= 0:
            raise ConfigError("simulate needs dt > 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulateConfig":
        _check_keys(doc, {"kind", "d", "steps", "runs", "dt", "gamma", "q",
                          "kappa", "coupling_init", "omega_scale",
                          "record_energy"},
                    "simulate config")
        return cls(**doc)


def _vote_from_dict(doc: dict) -> VoteConfig:
    _check_keys(doc, {"k", "t_eval", "base_seed"}, "vote config")
    return VoteConfig(**doc)


@dataclass
class RunConfig:
    model: ModelConfig | None = None
    task: TaskConfig | None = None
    train: TrainConfig | None = None
    vote: VoteConfig | None = None
    simulate: SimulateConfig | None = None

    def require(self, *sections: str) -> "RunConfig":
        for section in sections:
            if getattr(self, section) is None:
                raise ConfigError(f"config is missing the '{section}' section")
        return self


def parse_run_config(doc: dict) -> RunConfig:
    _check_keys(doc, {"model", "task", "train", "vote", "simulate"}, "run config")
    out = RunConfig()
    if "model" in doc:
        out.model = ModelConfig.from_dict(doc["model"])
    if "task" in doc:
        out.task = TaskConfig.from_dict(doc["task"])
    if "train" in doc:
        out.train = TrainConfig.from_dict(doc["train"])
    if "vote" in doc:
        out.vote = _vote_from_dict(doc["vote"])
    if "simulate" in doc:
        out.simulate = SimulateConfig.from_dict(doc["simulate"])
    return out


def load_run_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_run_config(doc)
