"""Core domain types: task description, items, labels, records, budget ledger.

Everything here is a plain value type.  Ground-truth labels never live on
the items themselves; they are held by an :class:`~annotriage.data.Oracle`
so that nothing outside the simulated human / metric code can read them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np


class AnnotriageError(Exception):
    """Base class for all library errors."""


class BudgetExhausted(AnnotriageError):
    """Raised when a charge is attempted on a fully spent ledger."""


class DimensionMismatch(AnnotriageError):
    """A feature vector (or network input) has the wrong length."""


class InvalidLabel(AnnotriageError):
    """A label does not conform to the task."""


class ConfigError(AnnotriageError):
    """An experiment or session configuration is invalid."""


class ParseError(AnnotriageError):
    """A dataset file could not be parsed."""


class DuplicateId(ParseError):
    """Two dataset rows share the same id."""


class TaskKind(str, Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"
    MULTILABEL = "multilabel"


@dataclass(frozen=True)
class TaskSpec:
    """What kind of labels a dataset carries.

    ``num_classes`` is the size of the class/tag vocabulary; ``top_k_eval``
    is the cut-off used for multilabel hit-ratio evaluation (and for the
    tag sets the model annotator emits).
    """

    task_kind: TaskKind
    num_classes: int
    feature_dim: int
    top_k_eval: int = 10

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.task_kind == TaskKind.BINARY and self.num_classes != 2:
            raise ConfigError("binary tasks must have num_classes == 2")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        if self.top_k_eval < 1:
            raise ConfigError("top_k_eval must be >= 1")

    @property
    def is_multilabel(self) -> bool:
        return self.task_kind == TaskKind.MULTILABEL


# A label is either a single class index or a frozen set of tag indices.
Label = Union[int, frozenset]


def validate_label(label: Label, task: TaskSpec) -> Label:
    """Normalize and validate a label against the task; raises InvalidLabel."""
    if task.is_multilabel:
        if isinstance(label, (int, np.integer)):
            raise InvalidLabel("multilabel task requires a tag set")
        tags = frozenset(int(t) for t in label)
        if not tags:
            raise InvalidLabel("multilabel label must contain at least one tag")
        if any(t < 0 or t >= task.num_classes for t in tags):
            raise InvalidLabel("tag index out of range")
        return tags
    if not isinstance(label, (int, np.integer)):
        raise InvalidLabel(f"{task.task_kind.value} task requires a class index")
    idx = int(label)
    if idx < 0 or idx >= task.num_classes:
        raise InvalidLabel(f"class index {idx} out of range [0, {task.num_classes})")
    return idx


def label_to_json(label: Label):
    """JSON representation: int for classes, sorted list for tag sets."""
    if isinstance(label, frozenset):
        return sorted(label)
    return int(label)


def label_from_json(value, task: TaskSpec) -> Label:
    if isinstance(value, list):
        return validate_label(frozenset(value), task)
    return validate_label(value, task)


@dataclass(frozen=True)
class Item:
    """One unit of triage: an id, a feature vector, optional display text.

    The ground truth is deliberately absent; it lives behind the oracle.
    """

    id: str
    features: np.ndarray
    display_payload: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "features", np.asarray(self.features, dtype=np.float64)
        )


class Assignee(str, Enum):
    HUMAN = "human"
    MODEL = "model"


@dataclass(frozen=True)
class TriageScore:
    """Per-item score snapshot taken when the triage decision was made.

    ``al`` is the active-learning score (``al_normalized`` says whether it
    lies in [0,1]); ``eat`` is the estimated probability that the current
    model would mislabel the item; ``combined`` is al^al_exp * eat.  Fields
    that a given method does not compute stay None.
    """

    al: Optional[float] = None
    al_normalized: bool = True
    eat: Optional[float] = None
    al_exp: Optional[float] = None
    combined: Optional[float] = None
    max_pred: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "al": self.al,
            "al_normalized": self.al_normalized,
            "eat": self.eat,
            "al_exp": self.al_exp,
            "combined": self.combined,
            "max_pred": self.max_pred,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TriageScore":
        return cls(
            al=d.get("al"),
            al_normalized=bool(d.get("al_normalized", True)),
            eat=d.get("eat"),
            al_exp=d.get("al_exp"),
            combined=d.get("combined"),
            max_pred=d.get("max_pred"),
        )


@dataclass
class AnnotationRecord:
    """One annotation event.  Records are append-only; a later record for
    the same item supersedes the earlier one and carries ``reannotated=True``.
    """

    item_id: str
    assignee: Assignee
    label: Label
    round: int
    scores: Optional[TriageScore] = None
    reannotated: bool = False
    rule: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "assignee": self.assignee.value,
            "label": label_to_json(self.label),
            "round": self.round,
            "scores": self.scores.to_dict() if self.scores else None,
            "reannotated": self.reannotated,
            "rule": self.rule,
        }


@dataclass
class BudgetLedger:
    """Counts human annotations against a fixed total.  One unit per item."""

    total: int
    used: int = 0

    def __post_init__(self) -> None:
        if self.total < 0 or self.used < 0:
            raise ConfigError("ledger counts must be non-negative")
        if self.used > self.total:
            raise ConfigError("ledger used exceeds total")

    def charge(self) -> None:
        """Spend one budget unit; raises BudgetExhausted at the limit."""
        if self.used >= self.total:
            raise BudgetExhausted(f"budget of {self.total} already spent")
        self.used += 1

    def remaining(self) -> int:
        return self.total - self.used

    @property
    def exhausted(self) -> bool:
        return self.used >= self.total


def charge(ledger: BudgetLedger) -> BudgetLedger:
    """Functional form of :meth:`BudgetLedger.charge`: returns a new ledger."""
    out = BudgetLedger(total=ledger.total, used=ledger.used)
    out.charge()
    return out


def remaining(ledger: BudgetLedger) -> int:
    return ledger.remaining()


def budget_from_fraction(fraction: float, dataset_size: int) -> int:
    """Item-count budget for a fractional budget: floor(fraction * |X|)."""
    if not (0.0 < fraction <= 1.0):
        raise ConfigError("budget fraction must be in (0, 1]")
    return int(np.floor(fraction * dataset_size))
