"""HTTP service distributing side-by-side tasks and collecting votes.

Votes are persisted to an append-only NDJSON log, fsync'd before the 201
acknowledgment, and replayed on startup; a truncated final line (torn
write during a crash) is discarded. Task placement (which model is shown
left) stays server-side so annotators remain blind; left/right votes are
translated back to model sides when results are aggregated.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import InvariantError, ParseError
from .evalstats import (
    ANNOTATORS_PER_TASK,
    Annotation,
    SbSTask,
    build_tasks,
    criterion_outcome,
    load_experiment,
    majority_vote,
)

DEFAULT_BIND_ENV = "PIXSIFT_BIND"
DEFAULT_BIND = "127.0.0.1:8000"


@dataclass(frozen=True)
class VoteRecord:
    task_id: str
    annotator_id: str
    choice: str  # left | right | tie
    received_at: float


class VoteLog:
    """Append-only NDJSON vote store with torn-tail recovery."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = None

    def replay(self) -> list[VoteRecord]:
        if not self.path.exists():
            return []
        raw = self.path.read_text(encoding="utf-8")
        votes = []
        lines = raw.split("\n")
        # Without a trailing newline the final segment is a torn write.
        complete, tail = lines[:-1], lines[-1]
        for lineno, line in enumerate(complete, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(
                    f"{self.path}:{lineno}: corrupt vote log entry: {exc.msg}"
                ) from exc
            votes.append(
                VoteRecord(
                    task_id=str(obj["task_id"]),
                    annotator_id=str(obj["annotator_id"]),
                    choice=str(obj["choice"]),
                    received_at=float(obj.get("received_at", 0.0)),
                )
            )
        if tail.strip():
            pass  # discarded: the vote was never acknowledged
        return votes

    def append(self, vote: VoteRecord) -> None:
        if self._fh is None:
            self._fh = self.path.open("a", encoding="utf-8")
        line = json.dumps(
            {
                "task_id": vote.task_id,
                "annotator_id": vote.annotator_id,
                "choice": vote.choice,
                "received_at": vote.received_at,
            },
            ensure_ascii=False,
        )
        self._fh.write(line + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class AnnotationState:
    """In-memory index over the experiment's tasks and the persisted votes."""

    def __init__(self, experiment, tasks: list[SbSTask], log: VoteLog) -> None:
        self.experiment = experiment
        self.tasks = tasks
        self.by_id = {t.task_id: t for t in tasks}
        self.votes: dict[str, dict[str, str]] = {t.task_id: {} for t in tasks}
        self.log = log
        self.lock = threading.Lock()
        for vote in log.replay():
            if vote.task_id not in self.by_id:
                raise InvariantError(
                    f"vote log references unknown task {vote.task_id!r}"
                )
            # Replay is idempotent: an already-seen (task, annotator) is skipped.
            self.votes[vote.task_id].setdefault(vote.annotator_id, vote.choice)

    def next_task(self, annotator_id: str) -> Optional[SbSTask]:
        with self.lock:
            candidates = [
                (len(self.votes[t.task_id]), i)
                for i, t in enumerate(self.tasks)
                if annotator_id not in self.votes[t.task_id]
                and len(self.votes[t.task_id]) < ANNOTATORS_PER_TASK
            ]
            if not candidates:
                return None
            _, index = min(candidates)
            return self.tasks[index]

    def submit(self, task_id: str, annotator_id: str, choice: str) -> None:
        """Durably record one vote; raises HTTPException with REST semantics."""
        task = self.by_id.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id!r}")
        with self.lock:
            cell = self.votes[task_id]
            if annotator_id in cell:
                raise HTTPException(
                    status_code=409,
                    detail=f"annotator {annotator_id!r} already voted on {task_id!r}",
                )
            if len(cell) >= ANNOTATORS_PER_TASK:
                raise HTTPException(
                    status_code=409, detail=f"task {task_id!r} already has all votes"
                )
            self.log.append(
                VoteRecord(
                    task_id=task_id,
                    annotator_id=annotator_id,
                    choice=choice,
                    received_at=time.time(),
                )
            )
            cell[annotator_id] = choice

    def results(self) -> dict:
        with self.lock:
            votes_snapshot = {t: dict(v) for t, v in self.votes.items()}
        completed = {
            task_id: votes
            for task_id, votes in votes_snapshot.items()
            if len(votes) == ANNOTATORS_PER_TASK
        }
        outcomes = []
        for criterion in self.experiment.criteria:
            majority_choices = []
            for task in self.tasks:
                if task.criterion != criterion or task.task_id not in completed:
                    continue
                annotations = [
                    Annotation(
                        experiment_id=task.experiment_id,
                        prompt_index=task.prompt_index,
                        criterion=task.criterion,
                        annotator_id=annotator_id,
                        choice=task.choice_to_model_side(choice),
                    )
                    for annotator_id, choice in sorted(completed[task.task_id].items())
                ]
                majority_choices.append(majority_vote(annotations))
            if majority_choices:
                outcomes.append(criterion_outcome(criterion, majority_choices))
        return {
            "experiment_id": self.experiment.experiment_id,
            "model_a": self.experiment.model_a,
            "model_b": self.experiment.model_b,
            "completion": len(completed) / len(self.tasks) if self.tasks else 0.0,
            "outcomes": [o.to_jsonable() for o in outcomes],
        }


class VoteIn(BaseModel):
    task_id: str
    annotator_id: str
    choice: Literal["left", "right", "tie"]


def _task_payload(task: SbSTask) -> dict:
    # Placement is deliberately omitted: annotators stay blind to which
    # side is which model.
    return {
        "task_id": task.task_id,
        "experiment_id": task.experiment_id,
        "prompt_index": task.prompt_index,
        "prompt": task.prompt,
        "criterion": task.criterion,
        "left_image_uri": task.left_image_uri,
        "right_image_uri": task.right_image_uri,
    }


def create_app(
    experiment_path: str | Path,
    log_dir: str | Path,
    static_dir: str | Path | None = None,
) -> FastAPI:
    experiment, image_pairs, seed = load_experiment(experiment_path)
    if not image_pairs:
        raise InvariantError(f"{experiment_path}: experiment defines no image_pairs")
    tasks = build_tasks(experiment, image_pairs, seed=seed)
    log = VoteLog(Path(log_dir) / f"votes-{experiment.experiment_id}.ndjson")
    state = AnnotationState(experiment, tasks, log)

    app = FastAPI(title="pixsift annotation service")
    app.state.annotation = state

    @app.get("/tasks/next")
    def tasks_next(request: Request, annotator: str = Query(default="")):
        if not annotator:
            raise HTTPException(status_code=400, detail="missing annotator id")
        task = request.app.state.annotation.next_task(annotator)
        if task is None:
            return Response(status_code=204)
        return JSONResponse(_task_payload(task))

    @app.post("/annotations", status_code=201)
    def post_annotation(vote: VoteIn, request: Request):
        request.app.state.annotation.submit(vote.task_id, vote.annotator_id, vote.choice)
        return {"status": "recorded", "task_id": vote.task_id}

    @app.get("/results/{experiment_id}")
    def get_results(experiment_id: str, request: Request):
        state = request.app.state.annotation
        if experiment_id != state.experiment.experiment_id:
            raise HTTPException(
                status_code=404, detail=f"unknown experiment {experiment_id!r}"
            )
        return state.results()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def bind_address() -> tuple[str, int]:
    raw = os.environ.get(DEFAULT_BIND_ENV, DEFAULT_BIND)
    host, _, port = raw.rpartition(":")
    if not host or not port.isdigit():
        raise InvariantError(
            f"{DEFAULT_BIND_ENV} must look like host:port, got {raw!r}"
        )
    return host, int(port)
