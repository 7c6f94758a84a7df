"""HTTP service hosting experiment runs and the human labeling queue.

Runs execute in background threads. A human-oracle run parks its
uncertainty queries in a queue served over HTTP; analysts answer them in
any order, the campaign consumes answers in stream order, and every
answer is fsynced to the run's event log before the client is
acknowledged. Killing the process therefore never loses an acknowledged
label: on restart the campaign replays recorded answers deterministically
and parks only the still-unanswered queries.
"""
from __future__ import annotations

import json
import threading
import time
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .agents import predict
from .errors import AptEnsembleError, CampaignAborted, InvalidConfig, OracleTimeout, UnknownRun
from .experiment import ExperimentConfig, run_experiment
from .store import ACTIVE_LOOP, AWAITING_LABELS, DONE, FAILED, RunRecord, RunStore


class NotPending(AptEnsembleError):
    """Label submitted for a record that is not awaiting one."""


class HumanQueueOracle:
    """Blocks campaign queries until an analyst answers over HTTP.

    prefetch() parks each iteration's whole selection before query()
    starts consuming answers in stream order, so answer arrival order
    cannot change the campaign's trajectory. Answers replayed from the
    event log resolve instantly; that is the resume path.

    All state is guarded by the run handle's lock (the condition below
    wraps that same lock), which is also what serializes every mutation
    of the run record.
    """

    kind = "human"

    def __init__(self, handle: "RunHandle", timeout: float | None = None):
        self.handle = handle
        self.timeout = timeout
        self.cond = threading.Condition(handle.lock)
        self.answers: dict[str, int] = {}
        self.pending: dict[str, dict] = {}
        self.agents: list = []
        self.agent_names: list[str] = []
        self.feature_names: list[str] = []

    def preload(self, events: list[dict]) -> None:
        for ev in events:
            self.answers[ev["record_id"]] = int(ev["label"])

    def attach(self, feature_names: list[str], agents: list, agent_names: list[str]) -> None:
        self.feature_names = list(feature_names)
        self.agents = agents
        self.agent_names = list(agent_names)

    def _entry(self, item) -> dict:
        on_bits = [self.feature_names[i] for i, v in enumerate(item.x) if v >= 0.5] \
            if self.feature_names else [str(i) for i, v in enumerate(item.x) if v >= 0.5]
        p_apt: dict[str, float] = {}
        margin: dict[str, float] = {}
        for name, agent in zip(self.agent_names, self.agents):
            pred = predict(agent, item.state)
            p_apt[name] = pred.p_apt
            margin[name] = pred.margin
        return {
            "record_id": item.record_id,
            "features_on": on_bits,
            "eps": float(item.state.eps),
            "p_apt": p_apt,
            "margin": margin,
            "iteration": self.handle.iterations_done,
            "queued_at": time.time(),
        }

    def prefetch(self, items: list) -> None:
        with self.cond:
            changed = False
            for item in items:
                if item.record_id in self.answers or item.record_id in self.pending:
                    continue
                self.pending[item.record_id] = self._entry(item)
                changed = True
            if changed:
                self.handle.sync_queue_locked(self.queue_view_locked())

    def queue_view_locked(self) -> list[dict]:
        return [dict(v) for v in self.pending.values()]

    def mark_answered_locked(self, record_id: str, label: int) -> None:
        """Caller holds the handle lock and has already persisted the event."""
        if record_id not in self.pending:
            raise NotPending(record_id)
        self.pending.pop(record_id)
        self.answers[record_id] = int(label)
        self.cond.notify_all()

    def query(self, record_id: str, features, state) -> int:
        with self.cond:
            deadline = None if self.timeout is None else time.monotonic() + self.timeout
            while record_id not in self.answers:
                if self.handle.shutdown.is_set():
                    raise CampaignAborted("service shutting down")
                if deadline is not None and time.monotonic() >= deadline:
                    self.pending.pop(record_id, None)
                    self.handle.sync_queue_locked(self.queue_view_locked())
                    # the campaign drops this query and moves on
                    self.handle.set_active_locked()
                    raise OracleTimeout([record_id])
                self.handle.set_awaiting_locked()
                self.cond.wait(timeout=0.1)
            label = self.answers[record_id]
            self.pending.pop(record_id, None)
            self.handle.sync_queue_locked(self.queue_view_locked())
            self.handle.set_active_locked()
            return label


class RunHandle:
    """Live state of one run inside the service process."""

    def __init__(self, store: RunStore, record: RunRecord, shutdown: threading.Event):
        self.store = store
        self.record = record
        self.shutdown = shutdown
        self.lock = threading.RLock()
        self.oracle: HumanQueueOracle | None = None
        self.thread: threading.Thread | None = None
        self.iterations_done = 0

    # The *_locked methods assume self.lock is already held.

    def sync_queue_locked(self, queue: list[dict]) -> None:
        self.record.queue = queue
        self.store.save_snapshot(self.record)

    def set_awaiting_locked(self) -> None:
        if self.record.status == ACTIVE_LOOP:
            self.record.transition(AWAITING_LABELS)
            self.store.save_snapshot(self.record)

    def set_active_locked(self) -> None:
        if self.record.status == AWAITING_LABELS:
            self.record.transition(ACTIVE_LOOP)
            self.store.save_snapshot(self.record)

    def on_iteration(self, it, ens_report, buffer_size, agent_reports) -> None:
        self.iterations_done = it + 1

    def snapshot_dict(self) -> dict:
        with self.lock:
            return json.loads(json.dumps(self.record.to_dict()))


class ServiceState:
    """All live runs plus the store; the app below is a thin shell over it."""

    def __init__(self, root, label_timeout: float | None = None):
        self.store = RunStore(root)
        self.handles: dict[str, RunHandle] = {}
        self.registry_lock = threading.Lock()
        self.shutdown = threading.Event()
        self.label_timeout = label_timeout

    def submit(self, config: dict) -> RunRecord:
        cfg = ExperimentConfig.from_dict(config)
        record = self.store.create_run(cfg.to_dict())
        self._spawn(cfg, record, preloaded=[])
        return record

    def resume_all(self) -> list[str]:
        """Restart every unfinished run from its event log."""
        resumed = []
        for record in self.store.list_runs():
            if record.status in (DONE, FAILED):
                continue
            cfg = ExperimentConfig.from_dict(self.store.load_config(record.run_id))
            events = self.store.read_labels(record.run_id)
            record.reset_for_resume()
            record.n_labels = len(events)
            self.store.save_snapshot(record)
            self._spawn(cfg, record, preloaded=events)
            resumed.append(record.run_id)
        return resumed

    def _spawn(self, cfg: ExperimentConfig, record: RunRecord, preloaded: list[dict]) -> RunHandle:
        handle = RunHandle(self.store, record, self.shutdown)
        oracle = None
        if cfg.oracle == "human":
            oracle = HumanQueueOracle(handle, timeout=self.label_timeout)
            oracle.preload(preloaded)
            handle.oracle = oracle
        with self.registry_lock:
            self.handles[record.run_id] = handle
        thread = threading.Thread(
            target=self._worker, args=(handle, cfg, oracle),
            name=f"run-{record.run_id}", daemon=True)
        handle.thread = thread
        thread.start()
        return handle

    def _worker(self, handle: RunHandle, cfg: ExperimentConfig, oracle) -> None:
        try:
            run_experiment(cfg, store=self.store, record=handle.record,
                           oracle=oracle, on_iteration=handle.on_iteration)
        except CampaignAborted:
            pass  # resumable; next process picks the run up
        except Exception:
            pass  # record already marked Failed and snapshotted

    def get_handle(self, run_id: str) -> RunHandle | None:
        with self.registry_lock:
            return self.handles.get(run_id)

    def get_record_dict(self, run_id: str) -> dict:
        handle = self.get_handle(run_id)
        if handle is not None:
            return handle.snapshot_dict()
        return self.store.load_run(run_id).to_dict()

    def list_run_dicts(self) -> list[dict]:
        out = []
        for record in self.store.list_runs():
            d = self.get_record_dict(record.run_id)
            out.append({
                "run_id": d["run_id"],
                "name": d["config"].get("name"),
                "status": d["status"],
                "stage": d["stage"],
                "n_labels": d["n_labels"],
                "n_pending": len(d["queue"]),
                "created_at": d["created_at"],
            })
        return out

    def queue_view(self, run_id: str) -> list[dict]:
        handle = self.get_handle(run_id)
        if handle is None:
            return self.store.load_run(run_id).to_dict()["queue"]
        with handle.lock:
            if handle.oracle is not None:
                return handle.oracle.queue_view_locked()
            return list(handle.record.queue)

    def label(self, run_id: str, record_id: str, label: int) -> dict:
        handle = self.get_handle(run_id)
        if handle is None:
            self.store.load_run(run_id)  # raises UnknownRun when absent
            raise NotPending(record_id)  # finished or foreign run: nothing pending
        with handle.lock:
            oracle = handle.oracle
            if oracle is None or record_id not in oracle.pending:
                raise NotPending(record_id)
            # durability before acknowledgment: the event hits disk first
            self.store.append_label(run_id, record_id, label)
            oracle.mark_answered_locked(record_id, label)
            handle.record.n_labels += 1
            handle.sync_queue_locked(oracle.queue_view_locked())
            return {
                "ok": True,
                "run_id": run_id,
                "record_id": record_id,
                "n_labels": handle.record.n_labels,
                "n_pending": len(oracle.pending),
            }

    def stop(self, join_timeout: float = 10.0) -> None:
        """Cooperative shutdown: abort campaigns and wait for workers."""
        self.shutdown.set()
        with self.registry_lock:
            handles = list(self.handles.values())
        for handle in handles:
            if handle.thread is not None:
                handle.thread.join(timeout=join_timeout)


def build_app(state: ServiceState) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.shutdown.set()

    app = FastAPI(title="aptensemble service", lifespan=lifespan)

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/runs")
    def list_runs():
        return {"runs": state.list_run_dicts()}

    @app.post("/runs")
    async def submit_run(request: Request):
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return error(400, "body must be a JSON object")
        if not isinstance(body, dict):
            return error(400, "body must be a JSON object")
        try:
            record = state.submit(body)
        except (InvalidConfig, TypeError, KeyError, ValueError) as exc:
            return error(400, f"invalid experiment config: {exc}")
        return JSONResponse(status_code=201, content=record.to_dict())

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        try:
            return state.get_record_dict(run_id)
        except UnknownRun:
            return error(404, f"no run {run_id!r}")

    @app.get("/runs/{run_id}/queue")
    def get_queue(run_id: str):
        try:
            queue = state.queue_view(run_id)
        except UnknownRun:
            return error(404, f"no run {run_id!r}")
        return {"run_id": run_id, "n_pending": len(queue), "queue": queue}

    @app.post("/runs/{run_id}/labels")
    async def post_label(run_id: str, request: Request):
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return error(400, "body must be a JSON object")
        if not isinstance(body, dict):
            return error(400, "body must be a JSON object")
        record_id = body.get("record_id")
        label = body.get("label")
        if not isinstance(record_id, str) or not record_id:
            return error(400, "record_id must be a non-empty string")
        if isinstance(label, bool) or not isinstance(label, int) or label not in (0, 1):
            return error(400, "label must be 0 (benign) or 1 (apt)")
        try:
            return state.label(run_id, record_id, label)
        except UnknownRun:
            return error(404, f"no run {run_id!r}")
        except NotPending:
            return error(409, f"record {record_id!r} is not awaiting a label")

    @app.get("/runs/{run_id}/metrics")
    def get_metrics(run_id: str):
        try:
            d = state.get_record_dict(run_id)
        except UnknownRun:
            return error(404, f"no run {run_id!r}")
        return {"run_id": run_id, "status": d["status"],
                "iteration_metrics": d["iteration_metrics"],
                "model_rows": d["model_rows"]}

    return app


def serve(root, host: str = "127.0.0.1", port: int = 8000,
          label_timeout: float | None = None) -> None:
    """Run the service until interrupted; resumes unfinished runs first."""
    import uvicorn

    state = ServiceState(root, label_timeout=label_timeout)
    resumed = state.resume_all()
    if resumed:
        print(f"resumed {len(resumed)} unfinished run(s): {', '.join(resumed)}")
    uvicorn.run(build_app(state), host=host, port=port, log_level="warning")
