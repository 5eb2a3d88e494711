"""Simulated-human experiments: run loop driver, metrics, sweeps, reports.

Quality metrics are computed against the oracle over the *active* record
set (one record per item, later records superseding earlier ones).
Single-label tasks use accuracy; multilabel tasks use the top-k hit
ratio, where a human record counts 1.0 and a model record contributes
``|top-k tags ∩ true tags| / min(k, |true tags|)``.

``summary.csv`` column order (fixed):

    method, budget_fraction, seed, quality_model, quality_overall,
    n_human, n_model, n_reallocated, n_reannotated,
    budget_total, budget_used, dataset_size
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .config import ExperimentConfig
from .core import (
    AnnotationRecord,
    AnnotriageError,
    Assignee,
    ConfigError,
    TaskSpec,
)
from .data import Dataset, Oracle, ingest_jsonl  # re-exported for convenience
from .engine import SessionEngine, replay_records

SUMMARY_COLUMNS = [
    "method",
    "budget_fraction",
    "seed",
    "quality_model",
    "quality_overall",
    "n_human",
    "n_model",
    "n_reallocated",
    "n_reannotated",
    "budget_total",
    "budget_used",
    "dataset_size",
]


class WrongTaskKind(AnnotriageError):
    """A metric was asked for on a task it does not apply to."""


@dataclass
class RunReport:
    method: str
    seed: int
    dataset_size: int
    budget_fraction: float
    budget_total: int
    budget_used: int
    quality_model_annotated: Optional[float]
    quality_overall: Optional[float]
    counts: dict
    realloc_planned: int
    remaining_at_stream_end: int
    decisions_scored: int
    train_steps: int
    checkpoints_emitted: int
    config: dict
    rounds: List[dict]
    loss_trace: List[dict]
    events: Optional[List[dict]] = None  # not part of to_dict/report.json

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "dataset_size": self.dataset_size,
            "budget_fraction": self.budget_fraction,
            "budget_total": self.budget_total,
            "budget_used": self.budget_used,
            "quality_model_annotated": self.quality_model_annotated,
            "quality_overall": self.quality_overall,
            "counts": self.counts,
            "realloc_planned": self.realloc_planned,
            "remaining_at_stream_end": self.remaining_at_stream_end,
            "decisions_scored": self.decisions_scored,
            "train_steps": self.train_steps,
            "checkpoints_emitted": self.checkpoints_emitted,
            "config": self.config,
            "rounds": self.rounds,
            "loss_trace": self.loss_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(events=None, **d)

    def summary_row(self) -> dict:
        return {
            "method": self.method,
            "budget_fraction": self.budget_fraction,
            "seed": self.seed,
            "quality_model": self.quality_model_annotated,
            "quality_overall": self.quality_overall,
            "n_human": self.counts["human"],
            "n_model": self.counts["model"],
            "n_reallocated": self.counts["reallocated"],
            "n_reannotated": self.counts["reannotated"],
            "budget_total": self.budget_total,
            "budget_used": self.budget_used,
            "dataset_size": self.dataset_size,
        }


# ------------------------------------------------------------------ metrics


def _item_score(record: AnnotationRecord, oracle: Oracle, task: TaskSpec) -> float:
    truth = oracle.reveal(record.item_id)
    if task.is_multilabel:
        if record.assignee == Assignee.HUMAN:
            return 1.0
        hit = len(record.label & truth)
        return hit / min(task.top_k_eval, len(truth))
    return 1.0 if record.label == truth else 0.0


def metric_accuracy(records: Sequence[AnnotationRecord], oracle: Oracle) -> float:
    """Fraction of records whose label equals the oracle's ground truth."""
    if not records:
        raise ValueError("accuracy over an empty record set is undefined")
    return math.fsum(
        1.0 if rec.label == oracle.reveal(rec.item_id) else 0.0 for rec in records
    ) / len(records)


def metric_hr_at_10(
    records: Sequence[AnnotationRecord], oracle: Oracle, task: TaskSpec
) -> float:
    """Mean per-item hit ratio at ``task.top_k_eval``; human records score 1.0."""
    if not task.is_multilabel:
        raise WrongTaskKind("hit ratio only applies to multilabel tasks")
    if not records:
        raise ValueError("hit ratio over an empty record set is undefined")
    return math.fsum(_item_score(r, oracle, task) for r in records) / len(records)


def annotation_quality(
    records: Sequence[AnnotationRecord], oracle: Oracle, task: TaskSpec
) -> float:
    """Task-matched quality: accuracy, or hit ratio for multilabel."""
    if task.is_multilabel:
        return metric_hr_at_10(records, oracle, task)
    return metric_accuracy(records, oracle)


def overall_from_parts(
    records: Sequence[AnnotationRecord], oracle: Oracle, task: TaskSpec
) -> float:
    """Overall quality recomputed as (human count + model scores) / |X|.

    Human records contribute exactly 1 each; model records contribute their
    per-item score (0/1 correctness, or hit ratio).  A single exactly
    rounded summation keeps the identity bit-exact regardless of record
    order.
    """
    return math.fsum(
        1.0 if r.assignee == Assignee.HUMAN else _item_score(r, oracle, task)
        for r in records
    ) / len(records)


# -------------------------------------------------------------- experiments


def run_experiment(
    config: ExperimentConfig, dataset: Dataset, keep_events: bool = True
) -> RunReport:
    """One full simulated run; deterministic for a fixed config and seed."""
    if dataset.oracle is None:
        raise ConfigError("simulation requires a dataset with oracle labels")
    engine = SessionEngine(dataset, config)
    engine.run_with_oracle()
    return build_report(engine, keep_events=keep_events)


def build_report(engine: SessionEngine, keep_events: bool = True) -> RunReport:
    """Assemble the report for a finished engine (simulated or live)."""
    dataset = engine.dataset
    actives = [engine.active[item.id] for item in dataset.items]
    quality_overall = None
    quality_model = None
    if dataset.oracle is not None:
        quality_overall = annotation_quality(actives, dataset.oracle, dataset.task)
        model_recs = [r for r in actives if r.assignee == Assignee.MODEL]
        if model_recs:
            quality_model = annotation_quality(model_recs, dataset.oracle, dataset.task)
    return RunReport(
        method=engine.config.method,
        seed=engine.config.seed,
        dataset_size=len(dataset),
        budget_fraction=engine.config.budget_fraction,
        budget_total=engine.ledger.total,
        budget_used=engine.ledger.used,
        quality_model_annotated=quality_model,
        quality_overall=quality_overall,
        counts=engine.counts(),
        realloc_planned=engine.realloc_planned,
        remaining_at_stream_end=engine.remaining_at_stream_end,
        decisions_scored=engine.decisions_scored,
        train_steps=engine.train_steps,
        checkpoints_emitted=engine.checkpoints_emitted,
        config=engine.config.to_dict(),
        rounds=[rec.to_dict() for rec in engine.records],
        loss_trace=list(engine.loss_trace),
        events=list(engine.events) if keep_events else None,
    )


def sweep_budgets(
    base_config: ExperimentConfig,
    fractions: Sequence[float],
    dataset: Dataset,
    seeds: Optional[Sequence[int]] = None,
    keep_events: bool = False,
) -> List[RunReport]:
    """One run per (fraction, seed) with the shared base configuration."""
    if any(not (0.0 < f <= 1.0) for f in fractions):
        raise ConfigError("budget fractions must lie in (0, 1]")
    if list(fractions) != sorted(fractions):
        raise ConfigError("budget fractions must be sorted ascending")
    seeds = list(seeds) if seeds is not None else [base_config.seed]
    reports = []
    for fraction in fractions:
        for seed in seeds:
            cfg = ExperimentConfig.from_dict(
                {**base_config.to_dict(), "budget_fraction": fraction, "seed": seed}
            )
            reports.append(run_experiment(cfg, dataset, keep_events=keep_events))
    return reports


# ------------------------------------------------------------------- output


def write_summary_csv(reports: Sequence[RunReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.summary_row())


def emit_report(report: RunReport, out_dir) -> dict:
    """Write report.json, summary.csv, and events.jsonl into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "events": os.path.join(out_dir, "events.jsonl"),
    }
    with open(paths["report"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    write_summary_csv([report], paths["summary"])
    with open(paths["events"], "w") as fh:
        for event in report.events or []:
            fh.write(json.dumps(event) + "\n")
    return paths


def load_report(out_dir) -> RunReport:
    with open(os.path.join(out_dir, "report.json")) as fh:
        return RunReport.from_dict(json.load(fh))


def load_events(out_dir) -> List[dict]:
    events = []
    with open(os.path.join(out_dir, "events.jsonl")) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events
