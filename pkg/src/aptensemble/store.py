"""Crash-safe persistence for experiment runs.

Each run owns a directory under the store root:

    <root>/<run_id>/config.json    written once at creation
    <root>/<run_id>/events.jsonl   append-only label events, fsynced per line
    <root>/<run_id>/run.json       snapshot of the run record, rewritten atomically

Label answers are the only state that cannot be recomputed: a campaign is
deterministic given its config and the oracle's answers, so a restarted
process replays the recorded answers and lands exactly where the dying
process was. The event line hits disk before the labeling client is
acknowledged, which is what makes the replay complete.
"""
from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig, UnknownRun

PENDING = "Pending"
TRAINING = "Training"
ACTIVE_LOOP = "ActiveLoop"
AWAITING_LABELS = "AwaitingLabels"
DONE = "Done"
FAILED = "Failed"

STATUSES = (PENDING, TRAINING, ACTIVE_LOOP, AWAITING_LABELS, DONE, FAILED)

# Forward order plus the labeling ping-pong; Failed reachable from any
# live state, terminal states frozen.
ALLOWED_TRANSITIONS: dict[str, set[str]] = {
    PENDING: {TRAINING, FAILED},
    TRAINING: {ACTIVE_LOOP, FAILED},
    ACTIVE_LOOP: {AWAITING_LABELS, DONE, FAILED},
    AWAITING_LABELS: {ACTIVE_LOOP, FAILED},
    DONE: set(),
    FAILED: set(),
}


@dataclass
class RunRecord:
    """Everything a client can observe about one experiment run."""

    run_id: str
    config: dict
    status: str = PENDING
    stage: str = "created"
    error: str | None = None
    created_at: float = 0.0
    updated_at: float = 0.0
    n_labels: int = 0
    model_rows: list = field(default_factory=list)
    iteration_metrics: dict = field(default_factory=dict)
    queue: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def transition(self, new_status: str, stage: str | None = None,
                   error: str | None = None) -> None:
        if new_status not in STATUSES:
            raise InvalidConfig(f"unknown status {new_status!r}")
        if new_status not in ALLOWED_TRANSITIONS[self.status]:
            raise InvalidConfig(f"illegal transition {self.status} -> {new_status}")
        self.status = new_status
        if stage is not None:
            self.stage = stage
        if error is not None:
            self.error = error
        self.updated_at = time.time()

    def reset_for_resume(self) -> None:
        """Rewind a reloaded record so a fresh worker can replay it.

        Resume re-executes the run from the top (the event log makes that
        deterministic), so this is the one sanctioned way around the
        forward-only transition order. Terminal runs are not resumable.
        """
        if self.status in (DONE, FAILED):
            raise InvalidConfig(f"cannot resume a {self.status} run")
        self.status = PENDING
        self.stage = "resuming"
        self.queue = []
        self.updated_at = time.time()

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "status": self.status,
            "stage": self.stage,
            "error": self.error,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "n_labels": self.n_labels,
            "model_rows": self.model_rows,
            "iteration_metrics": self.iteration_metrics,
            "queue": self.queue,
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(
            run_id=d["run_id"],
            config=d["config"],
            status=d.get("status", PENDING),
            stage=d.get("stage", "created"),
            error=d.get("error"),
            created_at=d.get("created_at", 0.0),
            updated_at=d.get("updated_at", 0.0),
            n_labels=d.get("n_labels", 0),
            model_rows=d.get("model_rows", []),
            iteration_metrics=d.get("iteration_metrics", {}),
            queue=d.get("queue", []),
            artifacts=d.get("artifacts", {}),
        )


class RunStore:
    """Directory-backed store; one subdirectory per run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def create_run(self, config: dict, run_id: str | None = None) -> RunRecord:
        run_id = run_id or uuid.uuid4().hex[:12]
        d = self.run_dir(run_id)
        if d.exists():
            raise InvalidConfig(f"run {run_id!r} already exists")
        d.mkdir(parents=True)
        (d / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True))
        now = time.time()
        record = RunRecord(run_id=run_id, config=config, created_at=now, updated_at=now)
        self.save_snapshot(record)
        return record

    def append_label(self, run_id: str, record_id: str, label: int) -> None:
        """Write one label event and force it to disk before returning."""
        path = self.run_dir(run_id) / "events.jsonl"
        if not path.parent.is_dir():
            raise UnknownRun(run_id)
        line = json.dumps({"type": "label", "record_id": record_id,
                           "label": int(label), "ts": time.time()})
        with open(path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def read_labels(self, run_id: str) -> list[dict]:
        """All durable label events, in the order they were answered.

        A torn final line (process died mid-write) is dropped: its answer
        was never acknowledged, so the client will resubmit it.
        """
        path = self.run_dir(run_id) / "events.jsonl"
        if not path.exists():
            return []
        events = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                ev = json.loads(line)
            except json.JSONDecodeError:
                continue
            if ev.get("type") == "label":
                events.append(ev)
        return events

    def save_snapshot(self, record: RunRecord) -> None:
        d = self.run_dir(record.run_id)
        if not d.is_dir():
            raise UnknownRun(record.run_id)
        tmp = d / "run.json.tmp"
        tmp.write_text(json.dumps(record.to_dict(), indent=2))
        tmp.replace(d / "run.json")

    def load_run(self, run_id: str) -> RunRecord:
        path = self.run_dir(run_id) / "run.json"
        if not path.exists():
            raise UnknownRun(run_id)
        record = RunRecord.from_dict(json.loads(path.read_text()))
        record.n_labels = len(self.read_labels(run_id))
        return record

    def load_config(self, run_id: str) -> dict:
        path = self.run_dir(run_id) / "config.json"
        if not path.exists():
            raise UnknownRun(run_id)
        return json.loads(path.read_text())

    def list_runs(self) -> list[RunRecord]:
        records = []
        for entry in sorted(self.root.iterdir()):
            if entry.is_dir() and (entry / "run.json").exists():
                records.append(self.load_run(entry.name))
        records.sort(key=lambda r: (r.created_at, r.run_id))
        return records
