"""Active-learning scorers: per-item informativeness weights.

Available scorers, selected by config string:

* ``random``     — uniform draw in [0, 1)
* ``maxent``     — prediction entropy, normalized by its task maximum
* ``maxent-cal`` — entropy of the temperature-scaled prediction
* ``ent-gn``     — expected squared gradient norm of the annotator loss
                   w.r.t. the output-layer weights, pseudo-labels weighted
                   by the model's own prediction
* ``exp-gn``     — same, pseudo-labels weighted by the empirical class
                   frequencies of past human labels

The gradient-norm scorers use a closed form.  For a softmax head the
expectation over pseudo-labels y with weights w is

    sum_y w_y * ||p - e_y||^2 * ||phi(x)||^2
        = (||p||^2 + 1 - 2 w.p) * ||phi(x)||^2

where phi(x) is the input to the output layer.  For a sigmoid head the
tags are treated as independent Bernoullis, giving

    ||phi(x)||^2 / C^2 * sum_c [ w_c (1 - p_c)^2 + (1 - w_c) p_c^2 ].

Gradient-norm values are non-negative but not bounded by 1; they are
consumed rank-wise (half-batch rule, or rank-normalized for bi-weighting).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Label, TaskSpec
from .model import AnnotatorModel, calibrate, entropy, max_entropy

SCORER_NAMES = ("random", "maxent", "maxent-cal", "ent-gn", "exp-gn")


@dataclass(frozen=True)
class ALScore:
    value: float
    normalized: bool


class HumanLabelHistory:
    """Running class/tag counts over all human annotations so far."""

    def __init__(self, task: TaskSpec):
        self.task = task
        self.counts = np.zeros(task.num_classes)
        self.total = 0

    def update(self, label: Label) -> None:
        if self.task.is_multilabel:
            for t in label:
                self.counts[t] += 1
        else:
            self.counts[int(label)] += 1
        self.total += 1

    def frequencies(self) -> Optional[np.ndarray]:
        """Empirical pseudo-label weights; None while no labels were seen.

        Single-label tasks get a distribution over classes; multilabel
        tasks get per-tag Bernoulli rates in [0, 1].
        """
        if self.total == 0:
            return None
        if self.task.is_multilabel:
            return np.clip(self.counts / self.total, 0.0, 1.0)
        return self.counts / self.counts.sum()


# ----------------------------------------------------------------- batch ops


def batch_random(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random(n)


def batch_max_entropy(
    model: AnnotatorModel, features: np.ndarray, temperature: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized entropy scores and the distributions they came from."""
    x = np.atleast_2d(features)
    if temperature is None:
        probs = model.predict(x)
    else:
        probs = calibrate(model.logits(x), temperature, model.task)
    h = entropy(probs, model.task)
    return h / max_entropy(model.task), probs


def batch_grad_norm(
    model: AnnotatorModel,
    features: np.ndarray,
    mode: str,
    history: Optional[HumanLabelHistory] = None,
) -> np.ndarray:
    if mode not in ("ent", "exp"):
        raise ValueError(f"unknown gradient-norm mode {mode!r}")
    x = np.atleast_2d(features)
    p = model.predict(x)
    phi = model.last_layer_input(x)
    phi_sq = np.einsum("ij,ij->i", phi, phi)
    w = None
    if mode == "exp" and history is not None:
        w = history.frequencies()
    if model.task.is_multilabel:
        if w is None:
            w = p  # ent mode / empty-history fallback
        else:
            w = np.broadcast_to(w, p.shape)
        c = model.task.num_classes
        expected_sq = (w * (1.0 - p) ** 2 + (1.0 - w) * p**2).sum(axis=1) / (c * c)
        return expected_sq * phi_sq
    if w is None:
        return (1.0 - np.einsum("ij,ij->i", p, p)) * phi_sq
    w = np.broadcast_to(w, p.shape)
    p_sq = np.einsum("ij,ij->i", p, p)
    return (p_sq + 1.0 - 2.0 * np.einsum("ij,ij->i", w, p)) * phi_sq


def rank_normalize(
    values: np.ndarray,
    tie_key: Optional[np.ndarray] = None,
    saturate_top_half: bool = False,
) -> np.ndarray:
    """Map raw scores to (0, 1] by fractional rank: (rank + 0.5) / n.

    Used to feed unnormalized gradient-norm scores into bi-weighting.
    Ties are broken by ``tie_key`` (ascending), so the ordering matches
    the half-batch rule's tie-break by item id.

    With ``saturate_top_half`` the rank is doubled and clipped at 1, so
    exactly the ceil(n/2) items the half-batch rule would route to the
    human carry weight 1.0: against a neutral (0.5) error score, the
    0.5-threshold on the fused score then reproduces the half-batch rule,
    and the error score takes over as it sharpens.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    if tie_key is None:
        tie_key = np.arange(n)
    # ascending value; among ties the smaller key ranks higher, mirroring
    # the half-batch rule's (-score, id) ordering
    order = np.lexsort((-np.asarray(tie_key), v))
    ranks = np.empty(n)
    ranks[order] = np.arange(n)
    frac = (ranks + 0.5) / n
    if saturate_top_half:
        return np.minimum(1.0, 2.0 * frac)
    return frac


# ------------------------------------------------------------ per-item forms


def score_random(rng: np.random.Generator) -> ALScore:
    return ALScore(float(rng.random()), normalized=True)


def score_max_entropy(
    model: AnnotatorModel, features: np.ndarray, temperature: Optional[float] = None
) -> ALScore:
    vals, _ = batch_max_entropy(model, features, temperature)
    return ALScore(float(vals[0]), normalized=True)


def score_grad_norm(
    model: AnnotatorModel,
    features: np.ndarray,
    mode: str,
    history: Optional[HumanLabelHistory] = None,
) -> ALScore:
    vals = batch_grad_norm(model, features, mode, history)
    return ALScore(float(vals[0]), normalized=False)
