"""The annotation run loop, shared by the simulation harness and the live
HTTP service.

A :class:`SessionEngine` walks one dataset through four phases:

* **warmup** — the first W items (dataset order) go to the human; once all
  W labels are in, the trainable state takes its warmup epochs.
* **stream** — remaining items arrive in seeded-shuffle order, in batches.
  Each batch is scored once under the then-current model; items are then
  processed in order: human-routed items pause the engine until a label is
  submitted (charging the budget and triggering per-interaction training),
  model-routed items are annotated by the current model on the spot.  When
  the budget runs out mid-stream, everything left is model-annotated with
  no further scoring or training.
* **reallocation** — leftover budget re-annotates the highest-scored
  model-annotated items, one human label (and training round) at a time.
* **post-hoc** — optionally re-predict all remaining model annotations
  with the final (optionally re-trained) model.

The engine is a pull-driven state machine: ``pending_item_id()`` names the
item awaiting a human label and ``submit_human_label`` feeds one in.  All
randomness derives from the run seed, so two engines fed the same labels
in the same order produce identical records and events.  Events carry no
timestamps for exactly that reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .al import HumanLabelHistory, batch_grad_norm, batch_max_entropy, rank_normalize
from .config import ExperimentConfig
from .core import (
    AnnotationRecord,
    AnnotriageError,
    Assignee,
    BudgetExhausted,
    BudgetLedger,
    ConfigError,
    Label,
    TriageScore,
    label_to_json,
    validate_label,
)
from .data import Dataset
from .eat import EatNetwork, batch_neighbor_table, eat_input_dim, error_indicator
from .model import AnnotatorModel
from .policy import (
    al_exponent,
    bi_weight,
    decide_half_batch,
    decide_threshold,
    decide_uncertainty_dynamic,
    post_hoc_reannotate,
)
from .trainer import Trainer

PHASES = ("warmup", "stream", "reallocation", "posthoc", "done")


class WrongItem(AnnotriageError):
    """A label was submitted for an item that is not the one awaiting."""


@dataclass
class _Pending:
    item_id: str
    row: int
    kind: str  # warmup | stream | reallocation
    rule: Optional[str]
    scores: Optional[TriageScore]
    payload: Optional[dict] = None  # lazily built suggestion payload


@dataclass
class _BatchContext:
    rows: List[int]
    ids: List[str]
    rule: str
    to_human: np.ndarray  # bool per item
    scores: List[TriageScore]
    preds: Optional[np.ndarray] = None  # cache, dropped whenever the model trains


class SessionEngine:
    def __init__(self, dataset: Dataset, config: ExperimentConfig):
        n = len(dataset)
        if n == 0:
            raise ConfigError("empty dataset")
        self.dataset = dataset
        self.task = dataset.task
        self.config = config
        budget = config.budget_for(n)
        if config.warmup_count > n:
            raise ConfigError("warmup_count exceeds the dataset size")
        if config.warmup_count > budget:
            raise BudgetExhausted(
                f"warmup needs {config.warmup_count} labels but the budget is {budget}"
            )
        self.ledger = BudgetLedger(total=budget)

        seeds = np.random.SeedSequence(config.seed).spawn(6)
        self._rng_shuffle = np.random.default_rng(seeds[0])
        self._rng_scorer = np.random.default_rng(seeds[1])
        model_seed = int(seeds[2].generate_state(1)[0])
        eat_seed = int(seeds[3].generate_state(1)[0])

        model = AnnotatorModel(
            self.task, replace(config.model, seed=model_seed)
        )
        eat_net = None
        if config.uses_eat:
            eat_net = EatNetwork(
                eat_input_dim(self.task, config.eat),
                replace(config.eat, seed=eat_seed),
            )
        k = config.eat.k
        self._nb_idx = np.full((n, k), -1, dtype=np.intp)
        self._nb_sims = np.zeros((n, k))
        self.trainer = Trainer(
            task=self.task,
            features=dataset.features,
            model=model,
            eat_net=eat_net,
            config=config.trainer,
            margin=config.eat.margin,
            eat_lr=config.eat.lr,
            neighbor_idx=self._nb_idx,
            neighbor_sims=self._nb_sims,
            dropout_rng=np.random.default_rng(seeds[4]),
            replay_rng=np.random.default_rng(seeds[5]),
        )
        self.al_history = HumanLabelHistory(self.task)

        self.records: List[AnnotationRecord] = []
        self.active: Dict[str, AnnotationRecord] = {}
        self.events: List[dict] = []
        self._seq = 0
        self._round = 0
        self.loss_trace: List[dict] = []

        # counters surfaced in the run report
        self.decisions_scored = 0
        self.train_steps = 0
        self.checkpoints_emitted = 0
        self.realloc_planned = 0
        self.remaining_at_stream_end = 0

        # stream plan: warmup block in dataset order, the rest shuffled
        w = config.warmup_count
        self._warmup_rows = list(range(w))
        rest = np.arange(w, n)
        self._rng_shuffle.shuffle(rest)
        bs = config.batch_size
        self._batches: List[List[int]] = [
            [int(r) for r in rest[i : i + bs]] for i in range(0, len(rest), bs)
        ]
        self._warmup_pos = 0
        self._batch_i = 0
        self._batch_pos = 0
        self._batch_ctx: Optional[_BatchContext] = None
        self._realloc_queue: List[Tuple[str, TriageScore]] = []
        self._realloc_pos = 0

        self.phase = "warmup"
        self._pending: Optional[_Pending] = None
        self._emit(
            {
                "type": "run_start",
                "method": config.method,
                "dataset_size": n,
                "budget": budget,
                "seed": config.seed,
            }
        )
        self._emit({"type": "phase", "phase": "warmup"})
        self._advance()

    # ----------------------------------------------------------- public API

    @property
    def model(self) -> AnnotatorModel:
        return self.trainer.model

    @property
    def eat_net(self) -> Optional[EatNetwork]:
        return self.trainer.eat_net

    @property
    def done(self) -> bool:
        return self.phase == "done"

    def pending_item_id(self) -> Optional[str]:
        return self._pending.item_id if self._pending else None

    def pending_payload(self) -> Optional[dict]:
        """Suggestion payload for the awaiting item; cached for idempotent peeks."""
        if self._pending is None:
            return None
        if self._pending.payload is None:
            self._pending.payload = self._build_payload(self._pending)
        return self._pending.payload

    def submit_human_label(self, item_id: str, label: Label) -> dict:
        """Record one human label, train, and advance to the next pause point."""
        if self._pending is None:
            raise WrongItem("no item is awaiting a label")
        if item_id != self._pending.item_id:
            raise WrongItem(
                f"awaiting {self._pending.item_id!r}, got {item_id!r}"
            )
        label = validate_label(label, self.task)
        pend = self._pending
        self.ledger.charge()

        indicator = error_indicator(
            self.model.predict(self.dataset.features[pend.row]), label, self.task
        )
        self.trainer.indicator_counts.update(indicator)
        self.al_history.update(label)
        self.trainer.add_human_label(pend.row, label)
        self._append_record(
            AnnotationRecord(
                item_id=item_id,
                assignee=Assignee.HUMAN,
                label=label,
                round=self._round,
                scores=pend.scores,
                reannotated=(pend.kind == "reallocation"),
                rule=pend.rule,
            ),
            phase=pend.kind,
        )
        self._pending = None

        if pend.kind == "warmup":
            self._warmup_pos += 1
        else:
            self._train_after_label()
            if self._batch_ctx is not None:
                self._batch_ctx.preds = None  # model changed; predictions are stale
            if pend.kind == "reallocation":
                self._realloc_pos += 1
        if self.trainer.num_human % self.config.trainer.checkpoint_every == 0:
            self._checkpoint()
        self._advance()
        return {
            "budget": {"used": self.ledger.used, "total": self.ledger.total},
            "phase": self.phase,
        }

    def run_with_oracle(self) -> None:
        """Drive the engine to completion with the dataset's own oracle."""
        oracle = self.dataset.oracle
        if oracle is None:
            raise ConfigError("dataset has no oracle; labels must come from outside")
        while not self.done:
            item_id = self.pending_item_id()
            self.submit_human_label(item_id, oracle.reveal(item_id))

    def counts(self) -> dict:
        """Partition of the active records into the four outcome classes."""
        out = {"human": 0, "model": 0, "reallocated": 0, "reannotated": 0}
        for rec in self.active.values():
            if rec.assignee == Assignee.HUMAN:
                out["reallocated" if rec.reannotated else "human"] += 1
            else:
                out["reannotated" if rec.reannotated else "model"] += 1
        return out

    # -------------------------------------------------------------- internals

    def _emit(self, event: dict) -> None:
        event["seq"] = self._seq
        self._seq += 1
        self.events.append(event)

    def _append_record(self, record: AnnotationRecord, phase: str) -> None:
        self.records.append(record)
        self.active[record.item_id] = record
        self._round += 1
        self._emit(
            {
                "type": "label",
                "round": record.round,
                "item_id": record.item_id,
                "assignee": record.assignee.value,
                "label": label_to_json(record.label),
                "reannotated": record.reannotated,
                "rule": record.rule,
                "phase": phase,
                "budget_used": self.ledger.used,
            }
        )

    def _train_after_label(self) -> None:
        for report in self.trainer.after_label():
            self.train_steps += 1
            entry = {"type": "train", "step": self.train_steps, **report.to_dict()}
            self.loss_trace.append(entry)
            self._emit(entry)  # loss_trace shares the dict (never mutated later)

    def _checkpoint(self) -> None:
        self.checkpoints_emitted += 1
        payload = {
            "type": "checkpoint",
            "human_labels": self.trainer.num_human,
            "annotator": self.model.to_json_dict(),
        }
        if self.eat_net is not None:
            payload["eat"] = self.eat_net.to_json_dict()
        self._emit(payload)

    def _set_phase(self, phase: str) -> None:
        self.phase = phase
        self._emit({"type": "phase", "phase": phase})

    def _advance(self) -> None:
        while self._pending is None and self.phase != "done":
            if self.phase == "warmup":
                self._advance_warmup()
            elif self.phase == "stream":
                self._advance_stream()
            elif self.phase == "reallocation":
                self._advance_realloc()
            elif self.phase == "posthoc":
                self._run_posthoc()
                self._checkpoint()
                self._set_phase("done")

    def _advance_warmup(self) -> None:
        w = self.config.warmup_count
        if self._warmup_pos < w:
            row = self._warmup_rows[self._warmup_pos]
            self._pending = _Pending(
                item_id=self.dataset.items[row].id,
                row=row,
                kind="warmup",
                rule="warmup",
                scores=None,
            )
            return
        if w > 0:
            if self.config.uses_eat:
                self._store_neighbors(self._warmup_rows)
            for report in self.trainer.warmup_train(
                self._warmup_rows, self.config.trainer.warmup_epochs
            ):
                self.train_steps += 1
                entry = {"type": "train", "step": self.train_steps, **report.to_dict()}
                self.loss_trace.append(entry)
                self._emit(entry)
        self._set_phase("stream")

    def _store_neighbors(self, rows: Sequence[int]) -> None:
        ids = [self.dataset.items[r].id for r in rows]
        local_idx, sims = batch_neighbor_table(
            ids, self.dataset.features[list(rows)], self.config.eat.k
        )
        rows_arr = np.asarray(rows, dtype=np.intp)
        self._nb_idx[rows_arr] = np.where(local_idx >= 0, rows_arr[local_idx], -1)
        self._nb_sims[rows_arr] = sims

    def _advance_stream(self) -> None:
        while True:
            if self._batch_i >= len(self._batches):
                self._enter_reallocation()
                return
            if self.ledger.exhausted:
                self._flush_model_only()
                self._enter_reallocation()
                return
            rows = self._batches[self._batch_i]
            if self._batch_ctx is None:
                self._batch_ctx = self._score_batch(rows)
            ctx = self._batch_ctx
            while self._batch_pos < len(rows) and not self.ledger.exhausted:
                j = self._batch_pos
                row = rows[j]
                item_id = self.dataset.items[row].id
                self.decisions_scored += 1
                to_human = bool(ctx.to_human[j])
                self._emit(
                    {
                        "type": "decision",
                        "round": self._round,
                        "item_id": item_id,
                        "rule": ctx.rule,
                        "assignee": "human" if to_human else "model",
                        "scores": ctx.scores[j].to_dict(),
                    }
                )
                if to_human:
                    self._batch_pos += 1
                    self._pending = _Pending(
                        item_id=item_id,
                        row=row,
                        kind="stream",
                        rule=ctx.rule,
                        scores=ctx.scores[j],
                    )
                    return
                if ctx.preds is None:
                    ctx.preds = self.model.predict(self.dataset.features[rows])
                self._record_model_label(
                    row, item_id, ctx.preds[j], scores=ctx.scores[j], rule=ctx.rule
                )
                self._batch_pos += 1
            if self._batch_pos >= len(rows):
                self._batch_i += 1
                self._batch_pos = 0
                self._batch_ctx = None

    def _flush_model_only(self) -> None:
        """Budget gone: the model annotates everything left, untrained."""
        rest: List[int] = []
        if self._batch_i < len(self._batches):
            rest.extend(self._batches[self._batch_i][self._batch_pos :])
            for batch in self._batches[self._batch_i + 1 :]:
                rest.extend(batch)
        self._batch_i = len(self._batches)
        self._batch_pos = 0
        self._batch_ctx = None
        if not rest:
            return
        preds = self.model.predict(self.dataset.features[rest])
        for j, row in enumerate(rest):
            self._record_model_label(
                row,
                self.dataset.items[row].id,
                preds[j],
                scores=None,
                rule="budget_exhausted",
            )

    def _record_model_label(
        self,
        row: int,
        item_id: str,
        probs: np.ndarray,
        scores: Optional[TriageScore],
        rule: str,
    ) -> None:
        self._append_record(
            AnnotationRecord(
                item_id=item_id,
                assignee=Assignee.MODEL,
                label=self.model.annotate_from_probs(probs),
                round=self._round,
                scores=scores,
                reannotated=False,
                rule=rule,
            ),
            phase="stream",
        )

    # ------------------------------------------------------------- scoring

    def _score_batch(self, rows: List[int]) -> _BatchContext:
        ids = [self.dataset.items[r].id for r in rows]
        x = self.dataset.features[rows]
        nb = len(rows)
        t_start = len(self.active)
        method = self.config.method
        scorer = self.config.effective_al_scorer

        if self.config.uses_eat:
            self._store_neighbors(rows)
            eat_inputs, _ = self.trainer.eat_inputs(np.asarray(rows, dtype=np.intp))
            eat_scores = self.eat_net.error_prob(eat_inputs)

        if method in ("maxent", "maxent-cal"):
            temp = self.config.temperature if method == "maxent-cal" else None
            al, probs = batch_max_entropy(self.model, x, temp)
            max_pred = probs.max(axis=1)
            decisions = [
                decide_uncertainty_dynamic(float(al[j]), float(max_pred[j]))
                for j in range(nb)
            ]
            scores = [
                TriageScore(al=float(al[j]), max_pred=float(max_pred[j]))
                for j in range(nb)
            ]
            return _BatchContext(
                rows, ids, "uncertainty_dynamic",
                np.array([d.to_human for d in decisions]), scores,
            )

        if method == "random":
            al = self._rng_scorer.random(nb)
            decisions = [decide_threshold(float(al[j])) for j in range(nb)]
            scores = [TriageScore(al=float(al[j])) for j in range(nb)]
            return _BatchContext(
                rows, ids, "threshold",
                np.array([d.to_human for d in decisions]), scores,
            )

        if method in ("ent-gn", "exp-gn", "sant-no-eat"):
            mode = "ent" if scorer == "ent-gn" else "exp"
            raw = batch_grad_norm(self.model, x, mode, self.al_history)
            decisions = decide_half_batch(ids, raw.tolist())
            scores = [
                TriageScore(al=float(raw[j]), al_normalized=False) for j in range(nb)
            ]
            return _BatchContext(
                rows, ids, "half_batch",
                np.array([d.to_human for d in decisions]), scores,
            )

        if method == "sant-no-al":
            decisions = [decide_threshold(float(eat_scores[j])) for j in range(nb)]
            scores = [
                TriageScore(eat=float(eat_scores[j]), combined=float(eat_scores[j]))
                for j in range(nb)
            ]
            return _BatchContext(
                rows, ids, "threshold",
                np.array([d.to_human for d in decisions]), scores,
            )

        # method == "sant": fuse an AL score in [0,1] with the error score
        al01 = self._al01_for(scorer, x, ids)
        n_total = len(self.dataset)
        exps = np.exp((t_start + np.arange(nb)) / n_total - self.config.t0)
        combined = np.array(
            [bi_weight(float(al01[j]), float(eat_scores[j]), float(exps[j])) for j in range(nb)]
        )
        decisions = [decide_threshold(float(combined[j])) for j in range(nb)]
        scores = [
            TriageScore(
                al=float(al01[j]),
                eat=float(eat_scores[j]),
                al_exp=float(exps[j]),
                combined=float(combined[j]),
            )
            for j in range(nb)
        ]
        return _BatchContext(
            rows, ids, "threshold",
            np.array([d.to_human for d in decisions]), scores,
        )

    def _al01_for(self, scorer: str, x: np.ndarray, ids: List[str]) -> np.ndarray:
        """AL score mapped into [0,1] for bi-weighting."""
        if scorer == "random":
            return self._rng_scorer.random(len(ids))
        if scorer in ("maxent", "maxent-cal"):
            temp = self.config.temperature if scorer == "maxent-cal" else None
            al, _ = batch_max_entropy(self.model, x, temp)
            return al
        mode = "ent" if scorer == "ent-gn" else "exp"
        raw = batch_grad_norm(self.model, x, mode, self.al_history)
        id_rank = np.empty(len(ids), dtype=np.intp)
        id_rank[sorted(range(len(ids)), key=lambda i: ids[i])] = np.arange(len(ids))
        return rank_normalize(raw, tie_key=id_rank, saturate_top_half=True)

    # --------------------------------------------------------- reallocation

    def _enter_reallocation(self) -> None:
        self._set_phase("reallocation")
        self.remaining_at_stream_end = self.ledger.remaining()
        model_items = [
            (rec.item_id, self.dataset.index[rec.item_id])
            for rec in self.active.values()
            if rec.assignee == Assignee.MODEL
        ]
        if self.remaining_at_stream_end == 0 or not model_items:
            self.realloc_planned = 0
            self._set_phase("posthoc")
            return
        ids = [i for i, _ in model_items]
        rows = np.asarray([r for _, r in model_items], dtype=np.intp)
        scored = self._realloc_scores(ids, rows)
        ranked = sorted(
            range(len(ids)), key=lambda i: (-scored[i].sortkey, ids[i])
        )[: self.remaining_at_stream_end]
        self._realloc_queue = [(ids[i], scored[i].score) for i in ranked]
        self.realloc_planned = len(self._realloc_queue)
        self._realloc_pos = 0

    def _realloc_scores(self, ids: List[str], rows: np.ndarray):
        """Current triage score for each model-annotated item."""

        @dataclass
        class _Scored:
            sortkey: float
            score: TriageScore

        method = self.config.method
        x = self.dataset.features[rows]
        n_total = len(self.dataset)
        if method in ("sant", "sant-no-al"):
            inputs, _ = self.trainer.eat_inputs(rows)
            eat_scores = self.eat_net.error_prob(inputs)
            if method == "sant-no-al":
                return [
                    _Scored(float(e), TriageScore(eat=float(e), combined=float(e)))
                    for e in eat_scores
                ]
            al01 = self._al01_for(self.config.effective_al_scorer, x, ids)
            exp = al_exponent(n_total, n_total, self.config.t0)
            return [
                _Scored(
                    bi_weight(float(al01[j]), float(eat_scores[j]), exp),
                    TriageScore(
                        al=float(al01[j]),
                        eat=float(eat_scores[j]),
                        al_exp=exp,
                        combined=bi_weight(float(al01[j]), float(eat_scores[j]), exp),
                    ),
                )
                for j in range(len(ids))
            ]
        if method == "random":
            draws = self._rng_scorer.random(len(ids))
            return [_Scored(float(v), TriageScore(al=float(v))) for v in draws]
        if method in ("maxent", "maxent-cal"):
            temp = self.config.temperature if method == "maxent-cal" else None
            al, probs = batch_max_entropy(self.model, x, temp)
            mp = probs.max(axis=1)
            return [
                _Scored(float(al[j]), TriageScore(al=float(al[j]), max_pred=float(mp[j])))
                for j in range(len(ids))
            ]
        mode = "ent" if self.config.effective_al_scorer == "ent-gn" else "exp"
        raw = batch_grad_norm(self.model, x, mode, self.al_history)
        return [
            _Scored(float(raw[j]), TriageScore(al=float(raw[j]), al_normalized=False))
            for j in range(len(ids))
        ]

    def _advance_realloc(self) -> None:
        if self._realloc_pos < len(self._realloc_queue):
            item_id, score = self._realloc_queue[self._realloc_pos]
            self._pending = _Pending(
                item_id=item_id,
                row=self.dataset.index[item_id],
                kind="reallocation",
                rule="reallocation",
                scores=score,
            )
            return
        self._set_phase("posthoc")

    # -------------------------------------------------------------- post-hoc

    def _run_posthoc(self) -> None:
        if self.config.post_hoc == "none":
            return
        model_records = [
            self.active[item.id]
            for item in self.dataset.items
            if self.active[item.id].assignee == Assignee.MODEL
        ]
        if not model_records:
            return
        retrain = self.config.post_hoc == "retrain+reannotate"
        human_rows = np.asarray(self.trainer.human_rows, dtype=np.intp)
        new_records, used_model = post_hoc_reannotate(
            self.model,
            model_records,
            feature_lookup=self.dataset.features_for,
            retrain=retrain,
            human_features=self.dataset.features[human_rows] if retrain else None,
            human_labels=self.trainer.labels_for(human_rows) if retrain else None,
            retrain_epochs=self.config.trainer.posthoc_retrain_epochs,
            start_round=self._round,
        )
        if retrain:
            self.trainer.model = used_model
        for rec in new_records:
            self._append_record(rec, phase="posthoc")

    # -------------------------------------------------------------- payloads

    def _build_payload(self, pend: _Pending) -> dict:
        item = self.dataset.item(pend.item_id)
        probs = self.model.predict(item.features)
        order = np.argsort(-probs, kind="stable")[:5]
        return {
            "item_id": pend.item_id,
            "text": item.display_payload,
            "suggestion": [
                {"class": int(c), "prob": float(probs[c])} for c in order
            ],
            "scores": pend.scores.to_dict() if pend.scores else None,
            "rule": pend.rule,
            "phase": pend.kind,
            "budget": {"used": self.ledger.used, "total": self.ledger.total},
        }


def replay_records(events: Sequence[dict]) -> Dict[str, dict]:
    """Fold an event stream back into the final active record set.

    Returns ``item_id -> {assignee, label, round, reannotated, rule}`` and
    must reconstruct exactly what the engine's ``active`` map holds.
    """
    out: Dict[str, dict] = {}
    for ev in events:
        if ev.get("type") != "label":
            continue
        out[ev["item_id"]] = {
            "item_id": ev["item_id"],
            "assignee": ev["assignee"],
            "label": ev["label"],
            "round": ev["round"],
            "reannotated": ev["reannotated"],
            "rule": ev["rule"],
        }
    return out
