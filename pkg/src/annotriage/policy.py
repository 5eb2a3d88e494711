"""Triage decisions: score fusion, human/model routing, re-allocation.

Three routing rules are used, matched to how each scoring method behaves:

* ``threshold``            — human iff score >= 0.5; used with the combined
                             (bi-weighted) score and with the bare error
                             probability, whose 2-class argmax it equals.
* ``uncertainty_dynamic``  — human iff (1 - al) * max_pred < al; used with
                             normalized entropy scores.
* ``half_batch``           — the top half of each batch by score goes to
                             the human; used with unnormalized
                             gradient-norm scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import AnnotationRecord, AnnotriageError, Assignee, TriageScore
from .model import AnnotatorModel


class DomainError(AnnotriageError):
    """A score argument fell outside its required range."""


@dataclass(frozen=True)
class BiWeightConfig:
    """Fusion settings; ``t0`` shifts where the AL exponent crosses 1."""

    t0: float = 0.2

    def __post_init__(self) -> None:
        if not (0.0 <= self.t0 <= 1.0):
            raise ValueError("t0 must lie in [0, 1]")


@dataclass(frozen=True)
class TriageDecision:
    assignee: Assignee
    rule: str
    score: Optional[TriageScore] = None

    @property
    def to_human(self) -> bool:
        return self.assignee == Assignee.HUMAN


def al_exponent(t: int, dataset_size: int, t0: float = 0.2) -> float:
    """Time-dependent exponent e^(t/|X| - t0) applied to the AL score.

    Below-1 early in the run (t/|X| < t0), so the AL score dominates while
    the model is data-starved; above-1 later, discounting it.
    """
    if dataset_size < 1:
        raise DomainError("dataset size must be >= 1")
    if not (0 <= t <= dataset_size):
        raise DomainError("t must lie in [0, dataset_size]")
    return math.exp(t / dataset_size - t0)


def bi_weight(al: float, eat: float, exponent: float) -> float:
    """Fused triage score al^exponent * eat, in [0, 1]."""
    if not (0.0 <= al <= 1.0) or not (0.0 <= eat <= 1.0):
        raise DomainError("al and eat scores must lie in [0, 1]")
    if exponent <= 0.0:
        raise DomainError("exponent must be positive")
    return (al**exponent) * eat


def decide_threshold(score: float) -> TriageDecision:
    """Human at or above 0.5 — the argmax of a 2-class triage output."""
    if not (0.0 <= score <= 1.0):
        raise DomainError("threshold rule needs a score in [0, 1]")
    assignee = Assignee.HUMAN if score >= 0.5 else Assignee.MODEL
    return TriageDecision(assignee, "threshold")

def decide_uncertainty_dynamic(al: float, max_pred: float) -> TriageDecision:
    """Human when the AL score outweighs the discounted model confidence."""
    if not (0.0 <= al <= 1.0) or not (0.0 <= max_pred <= 1.0):
        raise DomainError("uncertainty rule needs inputs in [0, 1]")
    assignee = Assignee.HUMAN if (1.0 - al) * max_pred < al else Assignee.MODEL
    return TriageDecision(assignee, "uncertainty_dynamic")


def decide_half_batch(
    item_ids: Sequence[str], scores: Sequence[float]
) -> List[TriageDecision]:
    """Send the ceil(n/2) highest-scored items of a batch to the human.

    Ties break by ascending item id, so equal-scored batches route their
    lexicographically first half to the human.
    """
    n = len(item_ids)
    if n == 0:
        raise ValueError("empty batch")
    if len(scores) != n:
        raise ValueError("ids and scores must align")
    order = sorted(range(n), key=lambda i: (-scores[i], item_ids[i]))
    human_slots = set(order[: math.ceil(n / 2)])
    return [
        TriageDecision(
            Assignee.HUMAN if i in human_slots else Assignee.MODEL, "half_batch"
        )
        for i in range(n)
    ]


def reallocate(
    remaining_budget: int, scored_model_items: Sequence[Tuple[str, float]]
) -> List[str]:
    """Pick leftover-budget items for human re-annotation.

    Model-annotated items are ranked by their current triage score
    (descending, ties by ascending id); the top min(budget, count) ids are
    returned.
    """
    if remaining_budget < 0:
        raise ValueError("remaining budget must be non-negative")
    ranked = sorted(scored_model_items, key=lambda pair: (-pair[1], pair[0]))
    return [item_id for item_id, _ in ranked[:remaining_budget]]


def post_hoc_reannotate(
    final_model: AnnotatorModel,
    model_records: Sequence[AnnotationRecord],
    feature_lookup,
    retrain: bool = False,
    human_features: Optional[np.ndarray] = None,
    human_labels=None,
    retrain_epochs: int = 20,
    start_round: int = 0,
) -> Tuple[List[AnnotationRecord], AnnotatorModel]:
    """Re-predict earlier model annotations with the final-round model.

    With ``retrain`` set, the model first takes ``retrain_epochs``
    full-batch gradient steps on all accumulated human data.  Every
    model-sourced record gets a superseding record (``reannotated=True``)
    carrying the fresh prediction; human records are never touched.
    """
    model = final_model
    if retrain:
        if human_features is None or len(human_features) == 0:
            raise ValueError("retraining requires accumulated human data")
        model = final_model.copy()
        for _ in range(retrain_epochs):
            model.sgd_update_inplace(human_features, human_labels)
    updated = []
    for offset, record in enumerate(model_records):
        if record.assignee != Assignee.MODEL:
            raise ValueError("post-hoc phase only touches model-sourced records")
        updated.append(
            AnnotationRecord(
                item_id=record.item_id,
                assignee=Assignee.MODEL,
                label=model.annotate(feature_lookup(record.item_id)),
                round=start_round + offset,
                scores=None,
                reannotated=True,
                rule="post_hoc",
            )
        )
    return updated, model
