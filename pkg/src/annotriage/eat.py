"""Error-aware triage (EAT): estimates the probability the current model
would mislabel an item, so hard items can be routed to the human.

The estimator is a small fully-connected network over the concatenation of

* the item's feature vector,
* the model's predictive distribution for the item, and
* the weighted neighborhood entropy: entropies of the model's predictions
  on the item's top-k cosine neighbors within the same batch, each scaled
  by its cosine similarity to the item.

It outputs a two-entry distribution (P[error], P[correct]); the error
probability doubles as the triage score.  Training combines a weighted
error-classification loss with a max-margin term that pushes the average
annotator loss on human-routed items above the average on model-routed
items.  Neighbor retrieval is frozen per batch: similarities are computed,
sorted once, and never differentiated through.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import DimensionMismatch, Label, TaskSpec
from .model import (
    AnnotatorModel,
    FeedForwardNet,
    PROB_EPS,
    entropy,
    softmax,
    top_k_tags,
)


@dataclass
class EatConfig:
    """Hyper-parameters of the error-aware triage network.

    The output layer starts at zero so a fresh network scores every item
    at exactly 0.5 (maximally unsure) instead of making confident triage
    calls; hidden layers carry the usual He initialization.
    """

    k: int = 3
    margin: float = 0.3
    hidden: Tuple[int, ...] = (64, 32)
    dropout: float = 0.1
    lr: float = 0.05
    seed: int = 0
    out_init_scale: float = 0.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must lie in [0, 1)")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class NeighborhoodFeatures:
    """Top-k in-batch neighbors of one item, with their weighted entropies."""

    neighbor_ids: List[Optional[str]]
    similarities: np.ndarray
    entropies: np.ndarray
    weighted: np.ndarray


def eat_input_dim(task: TaskSpec, config: EatConfig) -> int:
    return task.feature_dim + task.num_classes + config.k


def cosine_similarities(x: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Cosine of ``x`` against each candidate row; zero vectors give 0."""
    x = np.asarray(x, dtype=np.float64)
    c = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    nx = np.linalg.norm(x)
    nc = np.linalg.norm(c, axis=1)
    denom = nc * nx
    sims = np.zeros(c.shape[0])
    ok = denom > 0
    sims[ok] = (c[ok] @ x) / denom[ok]
    return sims


def neighborhood_features(
    item_id: str,
    item_features: np.ndarray,
    batch_ids: Sequence[str],
    batch_features: np.ndarray,
    batch_entropies: np.ndarray,
    k: int,
) -> NeighborhoodFeatures:
    """Retrieve the item's top-k cosine neighbors among its batch mates.

    The item itself is skipped when present in the batch.  Ties in
    similarity are broken by ascending neighbor id; short batches pad the
    trailing entries with zeros.
    """
    keep = [i for i, bid in enumerate(batch_ids) if bid != item_id]
    ids = [batch_ids[i] for i in keep]
    sims = cosine_similarities(item_features, batch_features[keep]) if keep else np.zeros(0)
    ents = np.asarray(batch_entropies)[keep] if keep else np.zeros(0)
    order = sorted(range(len(keep)), key=lambda i: (-sims[i], ids[i]))[:k]

    neighbor_ids: List[Optional[str]] = [None] * k
    out_sims = np.zeros(k)
    out_ents = np.zeros(k)
    for slot, i in enumerate(order):
        neighbor_ids[slot] = ids[i]
        out_sims[slot] = sims[i]
        out_ents[slot] = ents[i]
    return NeighborhoodFeatures(neighbor_ids, out_sims, out_ents, out_ents * out_sims)


def build_eat_input(
    item_id: str,
    item_features: np.ndarray,
    batch_ids: Sequence[str],
    batch_features: np.ndarray,
    model: AnnotatorModel,
    config: EatConfig,
) -> np.ndarray:
    """Per-item triage input: concat(features, prediction, weighted entropy)."""
    if len(batch_ids) == 0:
        raise ValueError("empty batch")
    batch_probs = model.predict(np.atleast_2d(batch_features))
    ents = entropy(batch_probs, model.task)
    nf = neighborhood_features(
        item_id, item_features, batch_ids, np.atleast_2d(batch_features), ents, config.k
    )
    pred = model.predict(item_features)
    return np.concatenate([np.asarray(item_features, dtype=np.float64), pred, nf.weighted])


def batch_neighbor_table(
    batch_ids: Sequence[str], batch_features: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized neighbor retrieval for a whole batch at once.

    Returns index and similarity arrays of shape (n, k); index -1 marks a
    padded slot.  Selection matches :func:`neighborhood_features` exactly,
    including the tie-break by ascending id.
    """
    x = np.atleast_2d(np.asarray(batch_features, dtype=np.float64))
    n = x.shape[0]
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    xn = x / safe[:, None]
    sims = xn @ xn.T
    sims[norms == 0, :] = 0.0
    sims[:, norms == 0] = 0.0
    id_rank = np.empty(n, dtype=np.intp)
    id_rank[sorted(range(n), key=lambda i: batch_ids[i])] = np.arange(n)

    idx = np.full((n, k), -1, dtype=np.intp)
    out_sims = np.zeros((n, k))
    take = min(k, n - 1)
    for i in range(n):
        row = sims[i].copy()
        row[i] = -np.inf  # exclude the item itself
        order = np.lexsort((id_rank, -row))[:take]
        idx[i, :take] = order
        out_sims[i, :take] = sims[i, order]
    return idx, out_sims


def weighted_entropy_from_table(
    idx: np.ndarray, sims: np.ndarray, entropies: np.ndarray
) -> np.ndarray:
    """Weighted neighborhood entropy for every row of a neighbor table."""
    ents = np.where(idx >= 0, np.asarray(entropies)[np.maximum(idx, 0)], 0.0)
    return ents * sims


# ============================================================== EAT network


class EatNetwork:
    """Fully-connected error estimator with a 2-class softmax output."""

    def __init__(self, input_dim: int, config: EatConfig):
        self.config = config
        dims = [input_dim, *config.hidden, 2]
        self.net = FeedForwardNet(
            dims,
            "softmax",
            seed=config.seed,
            dropout=config.dropout,
            out_init_scale=config.out_init_scale,
        )

    @property
    def input_dim(self) -> int:
        return self.net.dims[0]

    def copy(self) -> "EatNetwork":
        out = EatNetwork.__new__(EatNetwork)
        out.config = self.config
        out.net = self.net.copy()
        return out

    def output_distribution(self, eat_input: np.ndarray) -> np.ndarray:
        """(P[error], P[correct]) rows; dropout disabled."""
        return self.net.probs(eat_input)

    def error_prob(self, eat_input: np.ndarray) -> np.ndarray:
        single = np.asarray(eat_input).ndim == 1
        p = self.output_distribution(eat_input)[:, 0]
        return float(p[0]) if single else p

    def to_json_dict(self) -> dict:
        return {
            "kind": "eat",
            "k": self.config.k,
            "margin": self.config.margin,
            "net": self.net.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EatNetwork":
        cfg = EatConfig(k=d["k"], margin=d["margin"])
        out = cls.__new__(cls)
        out.config = cfg
        out.net = FeedForwardNet.from_json_dict(d["net"])
        return out


def eat_score(net: EatNetwork, eat_input: np.ndarray) -> float:
    """The estimated probability that the model errs on this item."""
    x = np.asarray(eat_input, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DimensionMismatch(f"input width {x.shape[-1]} != {net.input_dim}")
    return net.error_prob(x)


# ==================================================== indicators and weights


def error_indicator(pred: np.ndarray, label: Label, task: TaskSpec) -> int:
    """1 when the model's annotation would miss the label, else 0.

    Single-label: argmax mismatch.  Multilabel: none of the true tags
    appear among the top ``task.top_k_eval`` predicted tags.
    """
    p = np.asarray(pred)
    if task.is_multilabel:
        top = top_k_tags(p, task.top_k_eval)
        return 0 if any(t in label for t in top) else 1
    return 0 if int(np.argmax(p)) == int(label) else 1


@dataclass
class IndicatorCounts:
    """Cumulative error/correct indicator counts over human annotations."""

    error: int = 0
    correct: int = 0

    def update(self, indicator: int) -> None:
        if indicator:
            self.error += 1
        else:
            self.correct += 1

    @property
    def total(self) -> int:
        return self.error + self.correct


@dataclass(frozen=True)
class ErrorClassWeights:
    weight_error: float = 1.0
    weight_correct: float = 1.0


def class_weights(counts: IndicatorCounts) -> ErrorClassWeights:
    """Inverse-frequency weights, floored at one observation per class."""
    total = counts.total
    if total < 1:
        raise ValueError("need at least one indicator observation")
    return ErrorClassWeights(
        weight_error=total / (2.0 * max(counts.error, 1)),
        weight_correct=total / (2.0 * max(counts.correct, 1)),
    )


def per_sample_weights(indicators: np.ndarray, weights: ErrorClassWeights) -> np.ndarray:
    ind = np.asarray(indicators, dtype=bool)
    return np.where(ind, weights.weight_error, weights.weight_correct)


# ============================================================== the two losses


def error_nll_loss(
    indicators: np.ndarray,
    error_probs: np.ndarray,
    weights: ErrorClassWeights = ErrorClassWeights(),
) -> float:
    """Weighted mean NLL of the 2-class triage output against the indicator.

    Each term is -log P[error] for indicator 1 and -log P[correct] for
    indicator 0, scaled by its class weight; the mean divides by the
    sample count, so doubling a class weight doubles that class's
    contribution.
    """
    ind = np.asarray(indicators, dtype=bool)
    if ind.size == 0:
        raise ValueError("empty sample list")
    d = np.clip(np.asarray(error_probs, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    nll = np.where(ind, -np.log(d), -np.log(1.0 - d))
    return float((per_sample_weights(ind, weights) * nll).sum()) / ind.size


def margin_loss(
    model_losses: np.ndarray,
    error_probs: np.ndarray,
    margin: float,
    mode: str = "hard",
) -> float:
    """Hinge on the gap between mean annotator losses of the two partitions.

    ``hard`` partitions at error_prob >= 0.5 (human) vs < 0.5 (model) and
    treats an empty partition's mean as 0.  ``soft`` replaces the masks
    with weights error_prob and (1 - error_prob) — the differentiable
    surrogate used during training.
    """
    losses = np.asarray(model_losses, dtype=np.float64)
    d = np.asarray(error_probs, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("empty sample list")
    if mode == "hard":
        human = d >= 0.5
        mean_h = losses[human].mean() if human.any() else 0.0
        mean_m = losses[~human].mean() if (~human).any() else 0.0
    elif mode == "soft":
        s_h, s_m = d.sum(), (1.0 - d).sum()
        mean_h = float(d @ losses) / s_h if s_h > 0 else 0.0
        mean_m = float((1.0 - d) @ losses) / s_m if s_m > 0 else 0.0
    else:
        raise ValueError(f"unknown margin-loss mode {mode!r}")
    return float(max(0.0, margin + mean_m - mean_h))


def margin_loss_soft_with_grad(
    model_losses: np.ndarray, error_probs: np.ndarray, margin: float
) -> Tuple[float, np.ndarray]:
    """Soft margin loss and its gradient w.r.t. each error probability."""
    losses = np.asarray(model_losses, dtype=np.float64)
    d = np.asarray(error_probs, dtype=np.float64)
    s_h, s_m = float(d.sum()), float((1.0 - d).sum())
    mean_h = float(d @ losses) / s_h if s_h > 0 else 0.0
    mean_m = float((1.0 - d) @ losses) / s_m if s_m > 0 else 0.0
    value = max(0.0, margin + mean_m - mean_h)
    if value <= 0.0:
        return 0.0, np.zeros_like(d)
    g = np.zeros_like(d)
    if s_m > 0:
        g -= (losses - mean_m) / s_m
    if s_h > 0:
        g -= (losses - mean_h) / s_h
    return value, g


def margin_loss_grad(
    model_losses: np.ndarray, error_probs: np.ndarray, margin: float
) -> np.ndarray:
    """Gradient of the soft margin loss w.r.t. each error probability."""
    return margin_loss_soft_with_grad(model_losses, error_probs, margin)[1]


def eat_loss(error_term: float, margin_term: float) -> float:
    """Total triage training loss: the sum of the two components."""
    return error_term + margin_term


def eat_grad_logits(
    probs: np.ndarray,
    indicators: np.ndarray,
    weights: ErrorClassWeights,
    model_losses: np.ndarray,
    margin: float,
    margin_grad: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gradient of (error NLL + soft margin loss) w.r.t. the EAT logits.

    ``probs`` are the 2-class outputs; column 0 is P[error].  The NLL path
    is the standard weighted softmax gradient; the margin path goes through
    d = probs[:, 0] with dd/dlogits = d(1-d) * [1, -1].  Pass a precomputed
    ``margin_grad`` to avoid recomputing the soft margin statistics.
    """
    n = probs.shape[0]
    ind = np.asarray(indicators, dtype=bool)
    w = per_sample_weights(ind, weights)
    target = np.where(ind, 0, 1)  # column of the correct output entry
    dlogits = probs.copy()
    dlogits[np.arange(n), target] -= 1.0
    dlogits *= (w / n)[:, None]

    d = probs[:, 0]
    if margin_grad is None:
        margin_grad = margin_loss_grad(model_losses, d, margin)
    g = margin_grad * d * (1.0 - d)
    dlogits[:, 0] += g
    dlogits[:, 1] -= g
    return dlogits
