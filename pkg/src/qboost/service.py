"""HTTP service running live studies over the fusion loop.

Every study lives in its own directory under ``<data_dir>/studies/<id>/``:

* ``events.log`` -- append-only JSONL of accepted events (``created``,
  ``response``, ``advanced``); the sole source of truth.
* ``snapshot-<itr>.json`` -- state snapshot written after each advance;
  an optimization for restart, never required for correctness.

State reconstruction replays the newest snapshot plus the event-log
tail through the same pure loop functions that served the live
requests, so a restarted service reaches a bit-identical state digest.
Responses are idempotent per (annotator, pair, iteration): replays are
rejected with 409 and change nothing.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from .errors import DataError, QboostError
from .loop import IterationRecord, LoopConfig, StudyState, init_state, step
from .pcm import AcrRatingTable, PairComparisonMatrix, read_acr_csv
from .recovery import QualityEstimate
from .sampling import BatchPair, SamplingBatch


class CreateStudyRequest(BaseModel):
    stimulus_ids: list[str] | None = None
    acr_csv: str | None = None
    config: dict


class ResponseBody(BaseModel):
    i: str
    j: str
    choice: Literal["first", "second"]
    annotator: str


def _presentation_order(
    study_id: str, iteration: int, i: str, j: str
) -> tuple[str, str]:
    """Deterministic left/right order per (study, iteration, pair)."""
    first, second = sorted((i, j))
    key = f"{study_id}:{iteration}:{first}:{second}".encode()
    if hashlib.sha256(key).digest()[0] % 2:
        first, second = second, first
    return first, second


def _estimate_from_payload(payload: dict) -> QualityEstimate:
    return QualityEstimate.from_json_dict(payload)


def _batch_from_payload(
    payload: dict | None, stimulus_ids: tuple[str, ...]
) -> SamplingBatch | None:
    if payload is None:
        return None
    index = {s: k for k, s in enumerate(stimulus_ids)}
    pairs = tuple(
        BatchPair(index[p["i"]], index[p["j"]], float(p["eig"]))
        for p in payload["pairs"]
    )
    return SamplingBatch(int(payload["iteration"]), stimulus_ids, pairs)


def _state_to_payload(state: StudyState) -> dict:
    return {
        "config": state.config.to_json_dict(),
        "stimulus_ids": list(state.stimulus_ids),
        "pcm_counts": [float(v) for v in state.pcm.counts.ravel()],
        "iteration": state.iteration,
        "estimate": state.estimate.to_json_dict(),
        "outstanding": None
        if state.outstanding is None
        else state.outstanding.to_json_dict(),
        "history": [
            {
                "iteration": record.iteration,
                "pcm_digest": record.pcm_digest,
                "estimate": record.estimate.to_json_dict(),
                "batch": None
                if record.issued_batch is None
                else record.issued_batch.to_json_dict(),
            }
            for record in state.history
        ],
    }


def _state_from_payload(payload: dict) -> StudyState:
    ids = tuple(payload["stimulus_ids"])
    n = len(ids)
    counts = np.array(payload["pcm_counts"], dtype=float).reshape(n, n)
    history = tuple(
        IterationRecord(
            iteration=int(rec["iteration"]),
            pcm_digest=rec["pcm_digest"],
            estimate=_estimate_from_payload(rec["estimate"]),
            issued_batch=_batch_from_payload(rec["batch"], ids),
        )
        for rec in payload["history"]
    )
    return StudyState(
        config=LoopConfig.from_json_dict(payload["config"]),
        stimulus_ids=ids,
        pcm=PairComparisonMatrix(ids, counts),
        iteration=int(payload["iteration"]),
        estimate=_estimate_from_payload(payload["estimate"]),
        outstanding=_batch_from_payload(payload["outstanding"], ids),
        history=history,
    )


@dataclass
class StudyRuntime:
    """In-memory state of one study plus its persistence paths."""

    study_id: str
    directory: Path
    state: StudyState
    # (annotator, min_idx, max_idx) -> winner index, for the open batch
    pending: dict[tuple[str, int, int], int] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def events_path(self) -> Path:
        return self.directory / "events.log"

    def append_event(self, event: dict) -> None:
        line = json.dumps(event, sort_keys=True)
        with open(self.events_path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def write_snapshot(self, event_count: int) -> None:
        payload = {
            "study_id": self.study_id,
            "event_count": event_count,
            "state": _state_to_payload(self.state),
        }
        path = self.directory / f"snapshot-{self.state.iteration}.json"
        path.write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    def count_events(self) -> int:
        if not self.events_path.exists():
            return 0
        with open(self.events_path, "r", encoding="utf-8") as handle:
            return sum(1 for line in handle if line.strip())


def _build_delta(
    state: StudyState, pending: dict[tuple[str, int, int], int]
) -> PairComparisonMatrix:
    n = len(state.stimulus_ids)
    counts = np.zeros((n, n))
    for (annotator, a, b), winner in pending.items():
        loser = b if winner == a else a
        counts[winner, loser] += 1.0
    return PairComparisonMatrix(state.stimulus_ids, counts)


def _state_from_created(event: dict) -> StudyState:
    config = LoopConfig.from_json_dict(event["config"])
    acr = None
    if event.get("acr_rows"):
        acr = AcrRatingTable.from_rows(
            [(obs, stim, float(r)) for obs, stim, r in event["acr_rows"]]
        )
    return init_state(acr, tuple(event["stimulus_ids"]), config)


class StudyStore:
    """Loads, caches and persists studies under one data directory."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.studies_dir = self.root / "studies"
        self.studies_dir.mkdir(parents=True, exist_ok=True)
        self._runtimes: dict[str, StudyRuntime] = {}
        self._lock = threading.Lock()

    def create(self, event: dict) -> StudyRuntime:
        study_id = event["study_id"]
        directory = self.studies_dir / study_id
        directory.mkdir(parents=True, exist_ok=False)
        state = _state_from_created(event)
        runtime = StudyRuntime(study_id, directory, state)
        runtime.append_event(event)
        with self._lock:
            self._runtimes[study_id] = runtime
        return runtime

    def get(self, study_id: str) -> StudyRuntime:
        with self._lock:
            runtime = self._runtimes.get(study_id)
        if runtime is not None:
            return runtime
        directory = self.studies_dir / study_id
        if not (directory / "events.log").exists():
            raise KeyError(study_id)
        runtime = self._load(study_id, directory)
        with self._lock:
            return self._runtimes.setdefault(study_id, runtime)

    def _load(self, study_id: str, directory: Path) -> StudyRuntime:
        """Rebuild state from the newest snapshot plus the event tail."""
        events = []
        with open(directory / "events.log", "r", encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    events.append(json.loads(line))
        start = 0
        state: StudyState | None = None
        snapshots = sorted(
            directory.glob("snapshot-*.json"),
            key=lambda p: int(p.stem.split("-")[1]),
        )
        if snapshots:
            payload = json.loads(snapshots[-1].read_text(encoding="utf-8"))
            if payload.get("event_count", 0) <= len(events):
                state = _state_from_payload(payload["state"])
                start = int(payload["event_count"])
        pending: dict[tuple[str, int, int], int] = {}
        for event in events[start:]:
            kind = event["event"]
            if kind == "created":
                state = _state_from_created(event)
            elif kind == "response":
                assert state is not None
                index = {s: k for k, s in enumerate(state.stimulus_ids)}
                a, b = sorted((index[event["i"]], index[event["j"]]))
                pending[(event["annotator"], a, b)] = index[event["winner"]]
            elif kind == "advanced":
                assert state is not None
                state = step(state, _build_delta(state, pending))
                pending.clear()
        if state is None:
            raise KeyError(study_id)
        runtime = StudyRuntime(study_id, directory, state)
        runtime.pending = pending
        return runtime


def create_app(data_dir: str | Path) -> FastAPI:
    store = StudyStore(data_dir)
    app = FastAPI(title="qboost study service")

    def _runtime_or_404(study_id: str) -> StudyRuntime:
        try:
            return store.get(study_id)
        except KeyError:
            raise HTTPException(404, f"unknown study {study_id!r}") from None

    @app.post("/studies", status_code=201)
    def create_study(request: CreateStudyRequest):
        acr_rows = None
        stimulus_ids = request.stimulus_ids
        if request.acr_csv is not None:
            try:
                table = read_acr_csv(StringIO(request.acr_csv))
            except DataError as exc:
                raise HTTPException(422, f"bad ACR CSV: {exc}") from exc
            acr_rows = [
                [obs, stim, value]
                for (obs, stim), value in sorted(table.ratings.items())
            ]
            if stimulus_ids is None:
                stimulus_ids = list(table.stimulus_ids)
        if not stimulus_ids:
            raise HTTPException(422, "stimulus_ids or acr_csv required")
        config_payload = dict(request.config)
        config_payload.setdefault("use_acr_init", request.acr_csv is not None)
        try:
            config = LoopConfig.from_json_dict(config_payload)
        except (DataError, ValueError) as exc:
            raise HTTPException(422, f"bad config: {exc}") from exc
        event = {
            "event": "created",
            "study_id": uuid.uuid4().hex,
            "stimulus_ids": list(stimulus_ids),
            "config": config.to_json_dict(),
            "acr_rows": acr_rows,
            "ts": time.time(),
        }
        try:
            runtime = store.create(event)
        except (DataError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"study_id": runtime.study_id, "iteration": 0}

    def _batch_payload(runtime: StudyRuntime, annotator: str | None) -> dict:
        state = runtime.state
        batch = state.outstanding
        payload = {
            "study_id": runtime.study_id,
            "complete": state.complete,
            "iteration": state.iteration if batch is None else batch.iteration,
            "budget": {
                "n_pc": state.config.n_pc,
                "n_itr": state.config.n_itr,
                "completed_iterations": state.iteration,
            },
            "pairs": [],
        }
        if batch is None:
            return payload
        ids = state.stimulus_ids
        for pair in batch.pairs:
            i_id, j_id = ids[pair.i], ids[pair.j]
            first, second = _presentation_order(
                runtime.study_id, batch.iteration, i_id, j_id
            )
            a, b = sorted((pair.i, pair.j))
            entry = {
                "i": i_id,
                "j": j_id,
                "eig": float(pair.eig),
                "first": first,
                "second": second,
                "responses": sum(
                    1 for (_, x, y) in runtime.pending if (x, y) == (a, b)
                ),
            }
            if annotator is not None:
                entry["answered"] = (annotator, a, b) in runtime.pending
            payload["pairs"].append(entry)
        return payload

    @app.get("/studies/{study_id}/batch")
    def get_batch(study_id: str, annotator: str | None = Query(default=None)):
        runtime = _runtime_or_404(study_id)
        with runtime.lock:
            return _batch_payload(runtime, annotator)

    @app.post("/studies/{study_id}/responses")
    def post_response(study_id: str, body: ResponseBody):
        runtime = _runtime_or_404(study_id)
        with runtime.lock:
            state = runtime.state
            if state.outstanding is None:
                raise HTTPException(423, "study budget exhausted")
            index = {s: k for k, s in enumerate(state.stimulus_ids)}
            if body.i not in index or body.j not in index:
                raise HTTPException(422, "unknown stimulus id")
            if body.i == body.j:
                raise HTTPException(422, "pair members must differ")
            a, b = sorted((index[body.i], index[body.j]))
            batch = state.outstanding
            in_batch = any(sorted((p.i, p.j)) == [a, b] for p in batch.pairs)
            if not in_batch:
                raise HTTPException(
                    409, "pair is not in the outstanding batch"
                )
            key = (body.annotator, a, b)
            if key in runtime.pending:
                raise HTTPException(
                    409, "duplicate response for this annotator and pair"
                )
            first, second = _presentation_order(
                runtime.study_id,
                batch.iteration,
                state.stimulus_ids[a],
                state.stimulus_ids[b],
            )
            winner_id = first if body.choice == "first" else second
            event = {
                "event": "response",
                "annotator": body.annotator,
                "iteration": batch.iteration,
                "i": body.i,
                "j": body.j,
                "first": first,
                "second": second,
                "choice": body.choice,
                "winner": winner_id,
                "ts": time.time(),
            }
            runtime.append_event(event)
            runtime.pending[key] = index[winner_id]
            return {
                "accepted": True,
                "iteration": batch.iteration,
                "winner": winner_id,
            }

    @app.post("/studies/{study_id}/advance")
    def advance(study_id: str):
        runtime = _runtime_or_404(study_id)
        with runtime.lock:
            state = runtime.state
            if state.outstanding is None:
                raise HTTPException(423, "study budget exhausted")
            delta = _build_delta(state, runtime.pending)
            try:
                new_state = step(state, delta)
            except QboostError as exc:
                raise HTTPException(422, str(exc)) from exc
            runtime.state = new_state
            runtime.pending = {}
            runtime.append_event(
                {
                    "event": "advanced",
                    "iteration": new_state.iteration,
                    "ts": time.time(),
                }
            )
            runtime.write_snapshot(runtime.count_events())
            return {
                "iteration": new_state.iteration,
                "complete": new_state.complete,
                "digest": new_state.digest(),
            }

    @app.get("/studies/{study_id}/estimate")
    def get_estimate(study_id: str):
        runtime = _runtime_or_404(study_id)
        with runtime.lock:
            return {
                "study_id": runtime.study_id,
                "iteration": runtime.state.iteration,
                "estimate": runtime.state.estimate.to_json_dict(),
            }

    @app.get("/studies/{study_id}/history")
    def get_history(study_id: str):
        runtime = _runtime_or_404(study_id)
        with runtime.lock:
            return {
                "study_id": runtime.study_id,
                "iteration": runtime.state.iteration,
                "digest": runtime.state.digest(),
                "records": runtime.state.history_json(),
            }

    return app
