"""Experiment configuration: method selection, budget, and hyper-parameters.

Method keys:

* ``random``, ``maxent``, ``maxent-cal``, ``ent-gn``, ``exp-gn`` — baseline
  pipelines driven by a single AL scorer.
* ``sant``        — bi-weighted triage: AL score (default ``exp-gn``,
  rank-normalized when unnormalized) fused with the error-triage score.
* ``sant-no-al``  — error-triage score alone, thresholded at 0.5.
* ``sant-no-eat`` — alias for the ``exp-gn`` pipeline.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from .core import ConfigError
from .eat import EatConfig
from .model import ModelConfig

METHODS = (
    "random",
    "maxent",
    "maxent-cal",
    "ent-gn",
    "exp-gn",
    "sant",
    "sant-no-al",
    "sant-no-eat",
)
POST_HOC_MODES = ("none", "reannotate", "retrain+reannotate")


@dataclass
class TrainerConfig:
    """Optimization schedule knobs (the paper-free parts of training)."""

    warmup_epochs: int = 20
    replay_recent: int = 128
    replay_old: int = 32
    steps_per_label: int = 1
    posthoc_retrain_epochs: int = 20
    checkpoint_every: int = 100

    def __post_init__(self) -> None:
        if self.warmup_epochs < 0 or self.steps_per_label < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.replay_recent < 1:
            raise ConfigError("replay_recent must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")


@dataclass
class ExperimentConfig:
    method: str = "sant"
    budget_fraction: float = 0.5
    budget_count: Optional[int] = None
    warmup_count: int = 32
    batch_size: int = 32
    seed: int = 0
    post_hoc: str = "none"
    temperature: float = 1.5
    t0: float = 0.2
    al_scorer: Optional[str] = None
    model: ModelConfig = field(default_factory=ModelConfig)
    eat: EatConfig = field(default_factory=EatConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; pick one of {METHODS}")
        if not (0.0 < self.budget_fraction <= 1.0):
            raise ConfigError("budget_fraction must lie in (0, 1]")
        if self.budget_count is not None and self.budget_count < 0:
            raise ConfigError("budget_count must be non-negative")
        if self.warmup_count < 0:
            raise ConfigError("warmup_count must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.post_hoc not in POST_HOC_MODES:
            raise ConfigError(f"post_hoc must be one of {POST_HOC_MODES}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if not (0.0 <= self.t0 <= 1.0):
            raise ConfigError("t0 must lie in [0, 1]")
        if self.al_scorer is not None and self.al_scorer not in (
            "random",
            "maxent",
            "maxent-cal",
            "ent-gn",
            "exp-gn",
        ):
            raise ConfigError(f"unknown AL scorer {self.al_scorer!r}")

    @property
    def effective_al_scorer(self) -> str:
        """The AL component actually used by the configured method."""
        if self.method in ("random", "maxent", "maxent-cal", "ent-gn", "exp-gn"):
            return self.method
        if self.method == "sant-no-eat":
            return "exp-gn"
        if self.method == "sant-no-al":
            return "none"
        return self.al_scorer or "exp-gn"

    @property
    def uses_eat(self) -> bool:
        return self.method in ("sant", "sant-no-al")

    def budget_for(self, dataset_size: int) -> int:
        if self.budget_count is not None:
            return min(self.budget_count, dataset_size)
        return int(self.budget_fraction * dataset_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eat"]["hidden"] = list(self.eat.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        model = ModelConfig(**d.pop("model", {}) or {})
        eat_raw = dict(d.pop("eat", {}) or {})
        if "hidden" in eat_raw:
            eat_raw["hidden"] = tuple(eat_raw["hidden"])
        eat = EatConfig(**eat_raw)
        trainer = TrainerConfig(**d.pop("trainer", {}) or {})
        return cls(model=model, eat=eat, trainer=trainer, **d)
