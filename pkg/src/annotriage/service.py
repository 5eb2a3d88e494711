"""HTTP session service: live annotation runs driven by a real human.

The service wraps the same :class:`~annotriage.engine.SessionEngine` the
simulation harness uses; the only difference is where labels come from.
Sessions are persisted as an append-only label log under the data
directory and rebuilt by deterministic replay on restart, so a service
restart never loses state.

Endpoints (JSON bodies throughout):

* ``POST /datasets``                 — upload a JSONL dataset (raw text body)
* ``GET  /datasets/{id}``            — dataset info
* ``POST /sessions``                 — create a session: {dataset_id, config}
* ``GET  /sessions/{id}``            — status and budget gauge
* ``GET  /sessions/{id}/next``       — the item awaiting a human label, with
                                       the model's suggestion attached
* ``POST /sessions/{id}/labels``     — submit a label: {item_id, label}
* ``GET  /sessions/{id}/metrics``    — live counts, budget, losses, quality
* ``GET  /sessions/{id}/events?from=n`` — the event log, same objects as
                                       events.jsonl

Status codes: 200/201 success, 404 unknown resource, 409 conflict
(out-of-order submit, exhausted budget), 422 invalid dataset, config, or
label.
"""

from __future__ import annotations

import json
import os
import secrets
from typing import List, Optional, Union

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ExperimentConfig
from .core import (
    Assignee,
    BudgetExhausted,
    ConfigError,
    InvalidLabel,
    ParseError,
    label_from_json,
    label_to_json,
)
from .data import Dataset, dataset_from_rows, parse_jsonl
from .engine import SessionEngine, WrongItem
from .harness import annotation_quality


class LabelSubmission(BaseModel):
    item_id: str
    label: Union[int, List[int]]


class SessionRequest(BaseModel):
    dataset_id: str
    config: dict = {}


class SessionRuntime:
    """One live session: the engine plus its persistence hooks."""

    def __init__(
        self,
        session_id: str,
        dataset_id: str,
        dataset: Dataset,
        config: ExperimentConfig,
        session_dir: Optional[str] = None,
    ):
        self.id = session_id
        self.dataset_id = dataset_id
        self.dataset = dataset
        self.config = config
        self.session_dir = session_dir
        self.engine = SessionEngine(dataset, config)

    @property
    def status(self) -> str:
        if self.engine.done:
            return "done"
        return "awaiting_label" if self.engine.pending_item_id() else "running"

    def persist_create(self) -> None:
        if self.session_dir is None:
            return
        os.makedirs(self.session_dir, exist_ok=True)
        with open(os.path.join(self.session_dir, "session.json"), "w") as fh:
            json.dump(
                {"dataset_id": self.dataset_id, "config": self.config.to_dict()}, fh
            )

    def persist_label(self, item_id: str, label) -> None:
        if self.session_dir is None:
            return
        with open(os.path.join(self.session_dir, "labels.jsonl"), "a") as fh:
            fh.write(json.dumps({"item_id": item_id, "label": label_to_json(label)}) + "\n")

    def replay_labels(self) -> None:
        if self.session_dir is None:
            return
        path = os.path.join(self.session_dir, "labels.jsonl")
        if not os.path.exists(path):
            return
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                label = label_from_json(row["label"], self.dataset.task)
                self.engine.submit_human_label(row["item_id"], label)

    def gauge(self) -> dict:
        return {"used": self.engine.ledger.used, "total": self.engine.ledger.total}

    def metrics(self) -> dict:
        engine = self.engine
        actives = [
            engine.active[item.id]
            for item in self.dataset.items
            if item.id in engine.active
        ]
        quality_overall = None
        quality_model = None
        if self.dataset.oracle is not None and actives:
            quality_overall = annotation_quality(
                actives, self.dataset.oracle, self.dataset.task
            )
            model_recs = [r for r in actives if r.assignee == Assignee.MODEL]
            if model_recs:
                quality_model = annotation_quality(
                    model_recs, self.dataset.oracle, self.dataset.task
                )
        counts = engine.counts()
        return {
            "session_id": self.id,
            "status": self.status,
            "phase": engine.phase,
            "budget": self.gauge(),
            "counts": counts,
            "annotated": sum(counts.values()),
            "quality_overall": quality_overall,
            "quality_model_annotated": quality_model,
            "train_steps": engine.train_steps,
            "last_loss": engine.loss_trace[-1] if engine.loss_trace else None,
        }


class ServiceState:
    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = data_dir
        self.datasets: dict[str, Dataset] = {}
        self.sessions: dict[str, SessionRuntime] = {}
        if data_dir:
            os.makedirs(os.path.join(data_dir, "datasets"), exist_ok=True)
            os.makedirs(os.path.join(data_dir, "sessions"), exist_ok=True)
            self._load_persisted()

    # ----------------------------------------------------------- persistence

    def _dataset_path(self, dataset_id: str) -> str:
        return os.path.join(self.data_dir, "datasets", f"{dataset_id}.jsonl")

    def _session_dir(self, session_id: str) -> Optional[str]:
        if self.data_dir is None:
            return None
        return os.path.join(self.data_dir, "sessions", session_id)

    def _load_persisted(self) -> None:
        ds_dir = os.path.join(self.data_dir, "datasets")
        for name in sorted(os.listdir(ds_dir)):
            if not name.endswith(".jsonl"):
                continue
            dataset_id = name[: -len(".jsonl")]
            with open(os.path.join(ds_dir, name)) as fh:
                self.datasets[dataset_id] = dataset_from_rows(parse_jsonl(fh.read()))
        sess_dir = os.path.join(self.data_dir, "sessions")
        for session_id in sorted(os.listdir(sess_dir)):
            meta_path = os.path.join(sess_dir, session_id, "session.json")
            if not os.path.exists(meta_path):
                continue
            with open(meta_path) as fh:
                meta = json.load(fh)
            dataset = self.datasets.get(meta["dataset_id"])
            if dataset is None:
                continue
            runtime = SessionRuntime(
                session_id,
                meta["dataset_id"],
                dataset,
                ExperimentConfig.from_dict(meta["config"]),
                session_dir=self._session_dir(session_id),
            )
            runtime.replay_labels()
            self.sessions[session_id] = runtime

    # ------------------------------------------------------------ operations

    def add_dataset(self, text: str) -> tuple[str, Dataset]:
        dataset = dataset_from_rows(parse_jsonl(text))
        dataset_id = f"ds-{secrets.token_hex(4)}"
        self.datasets[dataset_id] = dataset
        if self.data_dir:
            with open(self._dataset_path(dataset_id), "w") as fh:
                fh.write(text if text.endswith("\n") else text + "\n")
        return dataset_id, dataset

    def create_session(self, dataset_id: str, config: ExperimentConfig) -> SessionRuntime:
        dataset = self.datasets[dataset_id]
        session_id = f"sess-{secrets.token_hex(4)}"
        runtime = SessionRuntime(
            session_id, dataset_id, dataset, config,
            session_dir=self._session_dir(session_id),
        )
        runtime.persist_create()
        self.sessions[session_id] = runtime
        return runtime


def create_app(data_dir: Optional[str] = None, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="annotriage", version="0.1.0")
    # local annotation tool: the console may be served from another origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = ServiceState(data_dir)
    app.state.service = state
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def _not_found(kind: str, key: str) -> JSONResponse:
        return JSONResponse({"error": "not_found", "detail": f"unknown {kind} {key!r}"}, 404)

    @app.post("/datasets", status_code=201)
    async def upload_dataset(request: Request):
        text = (await request.body()).decode("utf-8")
        try:
            dataset_id, dataset = state.add_dataset(text)
        except ParseError as exc:
            return JSONResponse({"error": "invalid_dataset", "detail": str(exc)}, 422)
        return {
            "dataset_id": dataset_id,
            "items": len(dataset),
            "task": {
                "task_kind": dataset.task.task_kind.value,
                "num_classes": dataset.task.num_classes,
                "feature_dim": dataset.task.feature_dim,
            },
            "evaluation_mode": dataset.has_oracle,
        }

    @app.get("/datasets/{dataset_id}")
    def dataset_info(dataset_id: str):
        dataset = state.datasets.get(dataset_id)
        if dataset is None:
            return _not_found("dataset", dataset_id)
        return {
            "dataset_id": dataset_id,
            "items": len(dataset),
            "task": {
                "task_kind": dataset.task.task_kind.value,
                "num_classes": dataset.task.num_classes,
                "feature_dim": dataset.task.feature_dim,
            },
            "evaluation_mode": dataset.has_oracle,
        }

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        if req.dataset_id not in state.datasets:
            return _not_found("dataset", req.dataset_id)
        try:
            config = ExperimentConfig.from_dict(req.config)
            runtime = state.create_session(req.dataset_id, config)
        except (ConfigError, BudgetExhausted, TypeError) as exc:
            return JSONResponse({"error": "invalid_config", "detail": str(exc)}, 422)
        return {
            "session_id": runtime.id,
            "status": runtime.status,
            "budget": runtime.gauge(),
        }

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        runtime = state.sessions.get(session_id)
        if runtime is None:
            return _not_found("session", session_id)
        return {
            "session_id": runtime.id,
            "status": runtime.status,
            "phase": runtime.engine.phase,
            "budget": runtime.gauge(),
            "counts": runtime.engine.counts(),
        }

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str):
        runtime = state.sessions.get(session_id)
        if runtime is None:
            return _not_found("session", session_id)
        payload = runtime.engine.pending_payload()
        return {
            "status": runtime.status,
            "item": payload,
            "budget": runtime.gauge(),
        }

    @app.post("/sessions/{session_id}/labels")
    def submit_label(session_id: str, submission: LabelSubmission):
        runtime = state.sessions.get(session_id)
        if runtime is None:
            return _not_found("session", session_id)
        if runtime.engine.done:
            return JSONResponse(
                {"error": "session_done", "detail": "run already complete"}, 409
            )
        try:
            label = label_from_json(submission.label, runtime.dataset.task)
        except InvalidLabel as exc:
            return JSONResponse({"error": "invalid_label", "detail": str(exc)}, 422)
        try:
            ack = runtime.engine.submit_human_label(submission.item_id, label)
        except WrongItem as exc:
            return JSONResponse({"error": "wrong_item", "detail": str(exc)}, 409)
        except InvalidLabel as exc:
            return JSONResponse({"error": "invalid_label", "detail": str(exc)}, 422)
        except BudgetExhausted as exc:
            return JSONResponse({"error": "budget_exhausted", "detail": str(exc)}, 409)
        runtime.persist_label(submission.item_id, label)
        return {"ok": True, "status": runtime.status, **ack}

    @app.get("/sessions/{session_id}/metrics")
    def session_metrics(session_id: str):
        runtime = state.sessions.get(session_id)
        if runtime is None:
            return _not_found("session", session_id)
        return runtime.metrics()

    @app.get("/sessions/{session_id}/events")
    def session_events(session_id: str, from_: int = Query(0, alias="from", ge=0)):
        runtime = state.sessions.get(session_id)
        if runtime is None:
            return _not_found("session", session_id)
        events = runtime.engine.events[from_:]
        return {"events": events, "next": from_ + len(events)}

    return app
