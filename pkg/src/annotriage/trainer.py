"""Alternating optimization of the model annotator and the triage network.

Each :meth:`Trainer.coordinate_step` performs one round of coordinate
descent on a batch of human-labeled rows:

1. gradient step on the annotator loss, triage parameters frozen;
2. recompute error indicators and per-item annotator losses under the
   freshly updated annotator;
3. gradient step on the triage loss (weighted error NLL + soft margin
   term), annotator frozen.

Triage inputs reuse the neighbor retrieval frozen at triage time (ids and
cosine similarities); the prediction-dependent slices — the item's own
predictive distribution and its neighbors' entropies — are recomputed
under the current annotator, so the triage network always tracks the
annotator it is grading.

There is no learnable AL component in the shipped scorers, so its loss
contribution is identically zero; the slot is kept in the report so a
differentiable scorer can be added without changing the bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import TrainerConfig
from .core import Label, TaskSpec
from .eat import (
    EatNetwork,
    ErrorClassWeights,
    IndicatorCounts,
    class_weights,
    eat_grad_logits,
    error_nll_loss,
    margin_loss,
    margin_loss_soft_with_grad,
)
from .model import (
    AnnotatorModel,
    entropy,
    per_item_losses,
    sigmoid,
    softmax,
)


@dataclass(frozen=True)
class LossReport:
    """Loss components of one optimization round.

    ``l_m`` is the soft (trained) margin term and enters the totals;
    ``l_m_hard`` is the thresholded variant, reported for monitoring only.
    ``l_eat = l_d + l_m`` and ``total = l_f + l_eat + l_al``.
    """

    l_f: float
    l_d: float = 0.0
    l_m: float = 0.0
    l_m_hard: float = 0.0
    l_al: float = 0.0

    @property
    def l_eat(self) -> float:
        return self.l_d + self.l_m

    @property
    def total(self) -> float:
        return self.l_f + self.l_eat + self.l_al

    def to_dict(self) -> dict:
        return {
            "l_f": self.l_f,
            "l_d": self.l_d,
            "l_m": self.l_m,
            "l_m_hard": self.l_m_hard,
            "l_al": self.l_al,
            "l_eat": self.l_eat,
            "total": self.total,
        }


class EmptyHistory(ValueError):
    """Training was requested before any human label arrived."""


class Trainer:
    """Owns the trainable state of one session.

    ``neighbor_idx`` / ``neighbor_sims`` are dataset-aligned (n, k) tables
    filled in by the run loop as batches get scored; -1 marks a padded
    slot.  ``train_eat=False`` (baseline pipelines) skips the triage
    network entirely.
    """

    def __init__(
        self,
        task: TaskSpec,
        features: np.ndarray,
        model: AnnotatorModel,
        eat_net: Optional[EatNetwork],
        config: TrainerConfig,
        margin: float,
        eat_lr: float,
        neighbor_idx: Optional[np.ndarray] = None,
        neighbor_sims: Optional[np.ndarray] = None,
        dropout_rng: Optional[np.random.Generator] = None,
        replay_rng: Optional[np.random.Generator] = None,
    ):
        n = features.shape[0]
        self.task = task
        self.features = features
        self.model = model
        self.eat_net = eat_net
        self.config = config
        self.margin = margin
        self.eat_lr = eat_lr
        k = eat_net.config.k if eat_net is not None else 1
        self.neighbor_idx = (
            neighbor_idx if neighbor_idx is not None else np.full((n, k), -1, dtype=np.intp)
        )
        self.neighbor_sims = (
            neighbor_sims if neighbor_sims is not None else np.zeros((n, k))
        )
        self.dropout_rng = dropout_rng or np.random.default_rng(0)
        self.replay_rng = replay_rng or np.random.default_rng(1)

        self._human_rows = np.empty(n, dtype=np.intp)
        self._n_human = 0
        self.indicator_counts = IndicatorCounts()
        self.epoch = 0
        if task.is_multilabel:
            self._y_mat = np.zeros((n, task.num_classes))
        else:
            self._y_int = np.full(n, -1, dtype=np.intp)

    @property
    def train_eat(self) -> bool:
        return self.eat_net is not None

    @property
    def num_human(self) -> int:
        return self._n_human

    @property
    def human_rows(self) -> np.ndarray:
        return self._human_rows[: self._n_human]

    # ------------------------------------------------------------- label store

    def add_human_label(self, row: int, label: Label) -> None:
        if self.task.is_multilabel:
            self._y_mat[row, sorted(label)] = 1.0
        else:
            self._y_int[row] = int(label)
        self._human_rows[self._n_human] = int(row)
        self._n_human += 1

    def labels_for(self, rows: np.ndarray):
        if self.task.is_multilabel:
            return self._y_mat[rows]
        return self._y_int[rows]

    def label_of(self, row: int) -> Label:
        if self.task.is_multilabel:
            return frozenset(int(t) for t in np.flatnonzero(self._y_mat[row]))
        return int(self._y_int[row])

    # ---------------------------------------------------------------- helpers

    def _probs_from_logits(self, logits: np.ndarray) -> np.ndarray:
        return sigmoid(logits) if self.task.is_multilabel else softmax(logits)

    def batch_indicators(self, probs: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Vectorized error indicators for labeled rows under given probs."""
        if self.task.is_multilabel:
            top = np.argsort(-probs, axis=1, kind="stable")[:, : self.task.top_k_eval]
            hits = np.take_along_axis(self._y_mat[rows], top, axis=1).any(axis=1)
            return ~hits
        return np.argmax(probs, axis=1) != self._y_int[rows]

    def eat_inputs(self, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(triage inputs, own predictive distributions) for labeled rows.

        Retrieval comes from the frozen per-batch neighbor tables; entropies
        and predictions are recomputed under the current annotator.
        """
        rows = np.asarray(rows, dtype=np.intp)
        m = rows.shape[0]
        nb = self.neighbor_idx[rows]
        flat_nb = np.maximum(nb.ravel(), 0)  # padded slots predict row 0, masked below
        probs_all = self.model.predict(self.features[np.concatenate([rows, flat_nb])])
        own_probs = probs_all[:m]
        nb_ents = entropy(probs_all[m:], self.task).reshape(nb.shape)
        nb_ents[nb < 0] = 0.0
        weighted = nb_ents * self.neighbor_sims[rows]
        inputs = np.hstack([self.features[rows], own_probs, weighted])
        return inputs, own_probs

    def _weights(self) -> ErrorClassWeights:
        if self.indicator_counts.total < 1:
            return ErrorClassWeights()
        return class_weights(self.indicator_counts)

    # ------------------------------------------------------------ optimization

    def total_loss(self, rows: Optional[Sequence[int]] = None) -> LossReport:
        """All loss components at the current parameters; mutates nothing."""
        rows = self._resolve_rows(rows)
        x = self.features[rows]
        labels = self.labels_for(rows)
        probs = self.model.predict(x)
        l_f = float(np.mean(per_item_losses(probs, labels, self.task)))
        if not self.train_eat:
            return LossReport(l_f=l_f)
        inputs, own_probs = self.eat_inputs(rows)
        indicators = self.batch_indicators(own_probs, rows)
        item_losses = per_item_losses(own_probs, labels, self.task)
        d = self.eat_net.error_prob(inputs)
        w = self._weights()
        return LossReport(
            l_f=l_f,
            l_d=error_nll_loss(indicators, d, w),
            l_m=margin_loss(item_losses, d, self.margin, mode="soft"),
            l_m_hard=margin_loss(item_losses, d, self.margin, mode="hard"),
        )

    def coordinate_step(self, rows: Optional[Sequence[int]] = None) -> LossReport:
        """One alternating update over the given labeled rows.

        The returned report reuses the forward passes the update itself
        needs: the annotator loss is measured before its step, the triage
        terms on the already-updated annotator (dropout active).  Use
        :meth:`total_loss` for a clean same-state snapshot.
        """
        rows = self._resolve_rows(rows)
        x = self.features[rows]
        labels = self.labels_for(rows)

        logits, cache = self.model.net.forward(x)
        probs = self._probs_from_logits(logits)
        item_l = per_item_losses(probs, labels, self.task)
        l_f = float(item_l.sum()) / item_l.shape[0]
        dlogits = self.model.loss_grad_logits(logits, labels)
        self.model.net.apply_grads(self.model.net.backward(cache, dlogits), self.model.lr)

        report = LossReport(l_f=l_f)
        if self.train_eat:
            inputs, own_probs = self.eat_inputs(rows)  # under the updated annotator
            indicators = self.batch_indicators(own_probs, rows)
            item_losses = per_item_losses(own_probs, labels, self.task)
            w = self._weights()
            eat_logits, eat_cache = self.eat_net.net.forward(
                inputs, train=self.eat_net.config.dropout > 0, rng=self.dropout_rng
            )
            eat_probs = softmax(eat_logits)
            d = eat_probs[:, 0]
            l_m_soft, margin_grad = margin_loss_soft_with_grad(
                item_losses, d, self.margin
            )
            report = LossReport(
                l_f=l_f,
                l_d=error_nll_loss(indicators, d, w),
                l_m=l_m_soft,
                l_m_hard=margin_loss(item_losses, d, self.margin, mode="hard"),
            )
            dlog = eat_grad_logits(
                eat_probs, indicators, w, item_losses, self.margin, margin_grad=margin_grad
            )
            self.eat_net.net.apply_grads(self.eat_net.net.backward(eat_cache, dlog), self.eat_lr)
        self.epoch += 1
        return report

    def _resolve_rows(self, rows: Optional[Sequence[int]]) -> np.ndarray:
        if rows is None:
            rows = self.human_rows
        if len(rows) == 0:
            raise EmptyHistory("no human-labeled data to train on")
        return np.asarray(rows, dtype=np.intp)

    def replay_batch(self) -> np.ndarray:
        """Recent human rows plus a uniform resample of older ones."""
        if self._n_human == 0:
            raise EmptyHistory("no human-labeled data to train on")
        n_old = max(self._n_human - self.config.replay_recent, 0)
        recent = self._human_rows[n_old : self._n_human]
        if n_old and self.config.replay_old > 0:
            take = min(self.config.replay_old, n_old)
            picked = self.replay_rng.integers(0, n_old, size=take)
            return np.concatenate([recent, self._human_rows[picked]])
        return recent

    def after_label(self) -> List[LossReport]:
        """Per-interaction training: coordinate steps on a replay batch."""
        return [
            self.coordinate_step(self.replay_batch())
            for _ in range(self.config.steps_per_label)
        ]

    def warmup_train(self, rows: Sequence[int], epochs: int) -> List[LossReport]:
        """Full-batch coordinate steps on the warmup block."""
        return [self.coordinate_step(rows) for _ in range(epochs)]
