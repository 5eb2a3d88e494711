"""Datasets: JSONL ingestion, the ground-truth oracle, synthetic corpora.

A dataset never exposes labels through its items.  Labels parsed from disk
are placed behind an :class:`Oracle`, the capability handed to the
simulated human and to metric computation.  Datasets without labels are
valid (live annotation sessions) but support no quality metrics.

JSONL row format::

    {"id": "...", "features": [0.1, ...], "label": 3, "text": "optional"}

``label`` is an integer class index for binary/multiclass tasks and a list
of tag indices for multilabel tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import (
    DimensionMismatch,
    DuplicateId,
    Item,
    Label,
    ParseError,
    TaskKind,
    TaskSpec,
    validate_label,
)


class Oracle:
    """Reveals masked ground truth; stands in for the human in simulation."""

    def __init__(self, labels: Dict[str, Label]):
        self._labels = dict(labels)

    def reveal(self, item_id: str) -> Label:
        return self._labels[item_id]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._labels

    def __len__(self) -> int:
        return len(self._labels)


@dataclass
class Dataset:
    task: TaskSpec
    items: List[Item]
    oracle: Optional[Oracle] = None

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(
            np.stack([it.features for it in self.items]), dtype=np.float64
        )
        self.index = {it.id: i for i, it in enumerate(self.items)}
        if len(self.index) != len(self.items):
            raise DuplicateId("duplicate item ids in dataset")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def ids(self) -> List[str]:
        return [it.id for it in self.items]

    def features_for(self, item_id: str) -> np.ndarray:
        return self.features[self.index[item_id]]

    def item(self, item_id: str) -> Item:
        return self.items[self.index[item_id]]

    @property
    def has_oracle(self) -> bool:
        return self.oracle is not None


def _infer_task(labels: List[Optional[Label]], feature_dim: int, top_k_eval: int) -> TaskSpec:
    concrete = [l for l in labels if l is not None]
    if not concrete:
        raise ParseError("cannot infer the task from a dataset with no labels")
    if isinstance(concrete[0], frozenset):
        max_tag = max(max(tags) for tags in concrete)
        return TaskSpec(
            TaskKind.MULTILABEL, max(2, max_tag + 1), feature_dim, top_k_eval
        )
    max_cls = max(int(l) for l in concrete)
    num_classes = max(2, max_cls + 1)
    kind = TaskKind.BINARY if num_classes == 2 else TaskKind.MULTICLASS
    return TaskSpec(kind, num_classes, feature_dim, top_k_eval)


def dataset_from_rows(
    rows: Sequence[dict], task: Optional[TaskSpec] = None, top_k_eval: int = 10
) -> Dataset:
    """Build a validated dataset from parsed JSONL rows."""
    if not rows:
        raise ParseError("no items")
    items: List[Item] = []
    raw_labels: List[Optional[Label]] = []
    seen = set()
    feature_dim = None
    for lineno, row in enumerate(rows, start=1):
        if not isinstance(row, dict) or "id" not in row or "features" not in row:
            raise ParseError(f"line {lineno}: rows need 'id' and 'features'")
        item_id = str(row["id"])
        if item_id in seen:
            raise DuplicateId(f"line {lineno}: duplicate id {item_id!r}")
        seen.add(item_id)
        feats = np.asarray(row["features"], dtype=np.float64)
        if feats.ndim != 1:
            raise ParseError(f"line {lineno}: features must be a flat list")
        if not np.all(np.isfinite(feats)):
            raise ParseError(f"line {lineno}: features must be finite")
        if feature_dim is None:
            feature_dim = feats.shape[0]
        elif feats.shape[0] != feature_dim:
            raise DimensionMismatch(
                f"line {lineno}: feature length {feats.shape[0]} != {feature_dim}"
            )
        if "label" in row and row["label"] is not None:
            raw = row["label"]
            raw_labels.append(frozenset(int(t) for t in raw) if isinstance(raw, list) else int(raw))
        else:
            raw_labels.append(None)
        items.append(Item(id=item_id, features=feats, display_payload=row.get("text")))

    labeled = [l for l in raw_labels if l is not None]
    if labeled and len(labeled) != len(raw_labels):
        raise ParseError("dataset mixes labeled and unlabeled rows")
    if task is None:
        if not labeled:
            raise ParseError("cannot infer the task from a dataset with no labels")
        task = _infer_task(raw_labels, feature_dim, top_k_eval)
    oracle = None
    if labeled:
        oracle = Oracle(
            {
                item.id: validate_label(lbl, task)
                for item, lbl in zip(items, raw_labels)
            }
        )
    return Dataset(task=task, items=items, oracle=oracle)


def parse_jsonl(text: str) -> List[dict]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    return rows


def ingest_jsonl(path, task: Optional[TaskSpec] = None, top_k_eval: int = 10) -> Dataset:
    """Load and validate a JSONL dataset file; labels go behind the oracle."""
    with open(path, encoding="utf-8") as fh:
        rows = parse_jsonl(fh.read())
    return dataset_from_rows(rows, task=task, top_k_eval=top_k_eval)


def write_jsonl(dataset: Dataset, path) -> None:
    """Write a dataset (with its oracle labels, if any) back to JSONL."""
    from .core import label_to_json

    with open(path, "w", encoding="utf-8") as fh:
        for item in dataset.items:
            row = {"id": item.id, "features": item.features.tolist()}
            if dataset.oracle is not None:
                row["label"] = label_to_json(dataset.oracle.reveal(item.id))
            if item.display_payload is not None:
                row["text"] = item.display_payload
            fh.write(json.dumps(row) + "\n")


# ========================================================= synthetic corpora


def synth_gaussian(
    n: int,
    num_classes: int = 2,
    feature_dim: int = 8,
    hard_frac: float = 0.2,
    seed: int = 0,
    with_text: bool = True,
) -> Dataset:
    """Gaussian-mixture classification set with a controllable hard slice.

    Easy items sit in well-separated class clusters that share a common
    offset direction; a ``hard_frac`` fraction is drawn from a separate
    overlap blob further out along that shared direction, with uniformly
    random labels, so no model can beat chance on them — but the region
    itself is identifiable from the features.  Ids are zero-padded so
    lexicographic order equals stream order.
    """
    if not (0.0 <= hard_frac < 1.0):
        raise ValueError("hard_frac must lie in [0, 1)")
    if feature_dim < num_classes + 1:
        raise ValueError("feature_dim must be at least num_classes + 1")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(feature_dim, num_classes + 1)))
    shared = 2.0 * basis[:, 0]
    centers = shared + 2.0 * basis[:, 1:].T
    hard_center = 5.2 * basis[:, 0]

    labels = rng.integers(0, num_classes, size=n)
    hard = rng.random(n) < hard_frac
    feats = centers[labels] + rng.normal(0.0, 0.5, size=(n, feature_dim))
    feats[hard] = hard_center + rng.normal(0.0, 0.45, size=(int(hard.sum()), feature_dim))

    width = len(str(max(n - 1, 1)))
    items, truth = [], {}
    for i in range(n):
        item_id = f"item-{i:0{width}d}"
        text = None
        if with_text:
            head = ", ".join(f"{v:.2f}" for v in feats[i, : min(4, feature_dim)])
            text = f"sample {i} [{head}, ...]" if feature_dim > 4 else f"sample {i} [{head}]"
        items.append(Item(id=item_id, features=feats[i], display_payload=text))
        truth[item_id] = int(labels[i])
    kind = TaskKind.BINARY if num_classes == 2 else TaskKind.MULTICLASS
    task = TaskSpec(kind, num_classes, feature_dim)
    return Dataset(task=task, items=items, oracle=Oracle(truth))


def synth_multilabel(
    n: int,
    num_tags: int = 20,
    feature_dim: int = 16,
    tags_per_item: int = 3,
    hard_frac: float = 0.1,
    seed: int = 0,
    with_text: bool = True,
) -> Dataset:
    """Tagging set: features are noisy sums of per-tag direction vectors."""
    rng = np.random.default_rng(seed)
    directions = rng.normal(0.0, 1.0, size=(num_tags, feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    width = len(str(max(n - 1, 1)))
    items, truth = [], {}
    for i in range(n):
        tags = frozenset(
            int(t) for t in rng.choice(num_tags, size=tags_per_item, replace=False)
        )
        if rng.random() < hard_frac:
            feats = rng.normal(0.0, 1.0, size=feature_dim)
        else:
            feats = directions[sorted(tags)].sum(axis=0) + rng.normal(
                0.0, 0.3, size=feature_dim
            )
        item_id = f"item-{i:0{width}d}"
        items.append(
            Item(
                id=item_id,
                features=feats,
                display_payload=f"document {i}" if with_text else None,
            )
        )
        truth[item_id] = tags
    task = TaskSpec(TaskKind.MULTILABEL, num_tags, feature_dim, top_k_eval=10)
    return Dataset(task=task, items=items, oracle=Oracle(truth))
