"""The model annotator: a small feed-forward head with explicit numpy gradients.

The annotator is a linear map or a one-hidden-layer ReLU MLP over
precomputed feature vectors, ending in a softmax (single-label tasks) or
element-wise sigmoid (multilabel).  Training is plain SGD; gradients are
written out by hand and checked against finite differences in the tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DimensionMismatch,
    Label,
    TaskKind,
    TaskSpec,
    AnnotriageError,
)

PROB_EPS = 1e-12


class NonPositiveTemperature(AnnotriageError):
    pass


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; accepts 1-D or 2-D input."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class FeedForwardNet:
    """Fully-connected net with ReLU hidden layers and hand-written backprop.

    ``dims`` lists layer widths input-first, e.g. ``[16, 64, 2]``.  Dropout
    (inverted) applies to hidden activations and only when ``train=True``.
    """

    def __init__(
        self,
        dims: Sequence[int],
        out_kind: str,
        seed: int = 0,
        dropout: float = 0.0,
        out_init_scale: float = 1.0,
    ):
        if len(dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if out_kind not in ("softmax", "sigmoid"):
            raise ValueError(f"unknown output kind {out_kind!r}")
        self.dims = [int(d) for d in dims]
        self.out_kind = out_kind
        self.seed = int(seed)
        self.dropout = float(dropout)
        self.out_init_scale = float(out_init_scale)
        rng = np.random.default_rng(self.seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        last = len(self.dims) - 2
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            scale = np.sqrt(2.0 / fan_in)
            if i == last:
                scale *= self.out_init_scale
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # ---------------------------------------------------------------- forward

    def forward(
        self, x: np.ndarray, train: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Tuple[np.ndarray, dict]:
        """Return (logits, cache); cache feeds :meth:`backward`."""
        a = x
        if not (isinstance(a, np.ndarray) and a.ndim == 2 and a.dtype == np.float64):
            a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.dims[0]:
            raise DimensionMismatch(
                f"input width {a.shape[1]} != expected {self.dims[0]}"
            )
        acts = [a]
        masks: List[Optional[np.ndarray]] = []
        n_layers = len(self.weights)
        for i in range(n_layers - 1):
            a = a @ self.weights[i] + self.biases[i]
            np.maximum(a, 0.0, out=a)
            if train and self.dropout > 0.0:
                if rng is None:
                    raise ValueError("dropout training requires an rng")
                mask = (rng.random(a.shape) >= self.dropout) / (1.0 - self.dropout)
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(a)
        logits = a @ self.weights[-1] + self.biases[-1]
        return logits, {"acts": acts, "masks": masks}

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def probs(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        return softmax(z) if self.out_kind == "softmax" else sigmoid(z)

    def last_layer_input(self, x: np.ndarray) -> np.ndarray:
        """Input to the output layer (the item features for a linear head)."""
        _, cache = self.forward(x)
        return cache["acts"][-1]

    # --------------------------------------------------------------- backward

    def backward(self, cache: dict, dlogits: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Backprop a gradient w.r.t. the logits to all parameters."""
        acts, masks = cache["acts"], cache["masks"]
        grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)
        delta = np.atleast_2d(dlogits)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
            if i > 0:
                delta = delta @ self.weights[i].T
                if masks[i - 1] is not None:
                    delta = delta * masks[i - 1]
                delta = delta * (acts[i] > 0.0)
        return grads

    def apply_grads(self, grads, lr: float) -> None:
        for (w, b), (dw, db) in zip(zip(self.weights, self.biases), grads):
            w -= lr * dw
            b -= lr * db

    # ------------------------------------------------------------------ misc

    def copy(self) -> "FeedForwardNet":
        out = FeedForwardNet.__new__(FeedForwardNet)
        out.dims = list(self.dims)
        out.out_kind = self.out_kind
        out.seed = self.seed
        out.dropout = self.dropout
        out.out_init_scale = self.out_init_scale
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        i = 0
        for w in self.weights:
            w[...] = flat[i : i + w.size].reshape(w.shape)
            i += w.size
        for b in self.biases:
            b[...] = flat[i : i + b.size]
            i += b.size

    def to_json_dict(self) -> dict:
        return {
            "dims": self.dims,
            "out_kind": self.out_kind,
            "seed": self.seed,
            "dropout": self.dropout,
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FeedForwardNet":
        net = cls(d["dims"], d["out_kind"], seed=d.get("seed", 0), dropout=d.get("dropout", 0.0))
        for w, flat in zip(net.weights, d["weights"]):
            w[...] = np.asarray(flat, dtype=np.float64).reshape(w.shape)
        for b, flat in zip(net.biases, d["biases"]):
            b[...] = np.asarray(flat, dtype=np.float64)
        return net


# ============================================================== the annotator


@dataclass
class ModelConfig:
    """Architecture and optimizer settings for the model annotator."""

    arch: str = "linear"  # "linear" or "mlp"
    hidden: int = 64
    lr: float = 0.05
    seed: int = 0
    zero_init: bool = False

    def __post_init__(self) -> None:
        if self.arch not in ("linear", "mlp"):
            raise ValueError(f"unknown annotator arch {self.arch!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")


class AnnotatorModel:
    """The online-trained classifier that annotates triage-to-model data."""

    def __init__(self, task: TaskSpec, config: ModelConfig):
        self.task = task
        self.config = config
        out_kind = "sigmoid" if task.is_multilabel else "softmax"
        if config.arch == "linear":
            dims = [task.feature_dim, task.num_classes]
        else:
            dims = [task.feature_dim, config.hidden, task.num_classes]
        self.net = FeedForwardNet(dims, out_kind, seed=config.seed)
        if config.zero_init:
            for w in self.net.weights:
                w[...] = 0.0

    @property
    def lr(self) -> float:
        return self.config.lr

    def copy(self) -> "AnnotatorModel":
        out = AnnotatorModel.__new__(AnnotatorModel)
        out.task = self.task
        out.config = self.config
        out.net = self.net.copy()
        return out

    # ------------------------------------------------------------- inference

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Predictive distribution(s): softmax rows, or per-tag sigmoids."""
        single = np.asarray(features).ndim == 1
        p = self.net.probs(features)
        return p[0] if single else p

    def logits(self, features: np.ndarray) -> np.ndarray:
        single = np.asarray(features).ndim == 1
        z = self.net.logits(features)
        return z[0] if single else z

    def last_layer_input(self, features: np.ndarray) -> np.ndarray:
        single = np.asarray(features).ndim == 1
        phi = self.net.last_layer_input(features)
        return phi[0] if single else phi

    def annotate(self, features: np.ndarray) -> Label:
        """The label the model would write down for one item."""
        return self.annotate_from_probs(self.predict(features))

    def annotate_from_probs(self, probs: np.ndarray) -> Label:
        if self.task.is_multilabel:
            return frozenset(top_k_tags(probs, self.task.top_k_eval))
        return int(np.argmax(probs))

    # -------------------------------------------------------------- training

    def sgd_update(self, features: np.ndarray, labels, lr: Optional[float] = None) -> "AnnotatorModel":
        """One gradient step on the mean batch loss; returns a new model."""
        out = self.copy()
        out.sgd_update_inplace(features, labels, lr)
        return out

    def sgd_update_inplace(self, features: np.ndarray, labels, lr: Optional[float] = None) -> None:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[0] == 0:
            raise ValueError("empty batch")
        step = self.lr if lr is None else lr
        logits, cache = self.net.forward(x)
        dlogits = self.loss_grad_logits(logits, labels)
        grads = self.net.backward(cache, dlogits)
        self.net.apply_grads(grads, step)

    def loss_grad_logits(self, logits: np.ndarray, labels) -> np.ndarray:
        """Gradient of the mean batch loss w.r.t. the logits."""
        n = logits.shape[0]
        if self.task.is_multilabel:
            y = labels_to_matrix(labels, self.task)
            return (sigmoid(logits) - y) / (n * self.task.num_classes)
        p = softmax(logits)
        y = np.asarray(labels, dtype=np.intp).reshape(-1)
        d = p.copy()
        d[np.arange(n), y] -= 1.0
        return d / n

    def mean_loss(self, features: np.ndarray, labels) -> float:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return float(np.mean(per_item_losses(self.predict(x), labels, self.task)))

    # ----------------------------------------------------------- persistence

    def to_json_dict(self) -> dict:
        return {
            "kind": "annotator",
            "arch": self.config.arch,
            "task": {
                "task_kind": self.task.task_kind.value,
                "num_classes": self.task.num_classes,
                "feature_dim": self.task.feature_dim,
                "top_k_eval": self.task.top_k_eval,
            },
            "lr": self.config.lr,
            "net": self.net.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AnnotatorModel":
        task = TaskSpec(
            task_kind=TaskKind(d["task"]["task_kind"]),
            num_classes=d["task"]["num_classes"],
            feature_dim=d["task"]["feature_dim"],
            top_k_eval=d["task"]["top_k_eval"],
        )
        cfg = ModelConfig(arch=d["arch"], lr=d["lr"])
        out = cls(task, cfg)
        out.net = FeedForwardNet.from_json_dict(d["net"])
        return out


# ====================================================== losses and entropies


def labels_to_matrix(labels, task: TaskSpec) -> np.ndarray:
    """Dense n x C binary matrix from a sequence of tag sets."""
    if isinstance(labels, np.ndarray) and labels.ndim == 2:
        return labels.astype(np.float64)
    y = np.zeros((len(labels), task.num_classes))
    for i, tags in enumerate(labels):
        y[i, sorted(tags)] = 1.0
    return y


def per_item_losses(probs: np.ndarray, labels, task: TaskSpec) -> np.ndarray:
    """Task-matched per-item loss: NLL of the true class, or mean per-tag BCE."""
    p = _clamp(np.atleast_2d(probs))
    if task.is_multilabel:
        y = labels_to_matrix(labels, task)
        bce = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
        return bce.mean(axis=1)
    y = np.asarray(labels, dtype=np.intp).reshape(-1)
    return -np.log(p[np.arange(p.shape[0]), y])


def model_loss(pred: np.ndarray, label: Label, task: TaskSpec) -> float:
    """Loss of a single prediction against a single label."""
    if task.is_multilabel:
        return float(per_item_losses(pred, [label], task)[0])
    return float(per_item_losses(pred, [int(label)], task)[0])


def calibrate(logits: np.ndarray, temperature: float, task: Optional[TaskSpec] = None) -> np.ndarray:
    """Temperature-scaled predictive distribution: softmax(logits / T).

    Multilabel heads scale each tag logit before the sigmoid instead.
    """
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    if task is not None and task.is_multilabel:
        return sigmoid(z)
    return softmax(z)


def entropy(pred: np.ndarray, task: Optional[TaskSpec] = None) -> np.ndarray:
    """Shannon entropy in nats; rows of a 2-D input are handled at once.

    Multilabel distributions use total entropy: the sum of the per-tag
    binary entropies.
    """
    p = _clamp(np.asarray(pred, dtype=np.float64))
    multilabel = task is not None and task.is_multilabel
    if multilabel:
        h = -(p * np.log(p) + (1.0 - p) * np.log(1.0 - p))
    else:
        h = -p * np.log(p)
    out = h.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def max_entropy(task: TaskSpec) -> float:
    """Entropy of the least-informative distribution for the task."""
    if task.is_multilabel:
        return task.num_classes * np.log(2.0)
    return float(np.log(task.num_classes))


def top_k_tags(pred: np.ndarray, k: int) -> list:
    """Indices of the k highest-scoring tags, ties broken by lower index."""
    p = np.asarray(pred)
    k = min(k, p.shape[-1])
    order = np.argsort(-p, kind="stable")
    return [int(t) for t in order[:k]]


def save_checkpoint(path, annotator: AnnotatorModel, extra: Optional[dict] = None) -> None:
    payload = {"annotator": annotator.to_json_dict()}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
