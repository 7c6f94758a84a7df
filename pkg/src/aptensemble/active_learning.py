"""Uncertainty-triggered labeling loop around any agent and any oracle.

Each iteration flags the stream records the agent is least sure about,
asks the oracle for their labels (within a per-iteration budget), stores
the answers in a replay buffer, and fine-tunes the agent on the whole
buffer with the anomaly-shaped reward. A campaign runs that loop for a
roster of agents against one shared buffer and fuses their verdicts.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentPrediction, agent_kind, predict, train_agent
from .autoencoder import AutoencoderModel
from .dataset import BooleanDataset
from .ensemble import ensemble_action, fit_weights, majority_vote
from .environment import DefenderState, RewardParams, make_state
from .errors import InvalidConfig, OracleTimeout
from .metrics import EvalReport, auc, classification_report, trajectory_mean
from .neural_core import TrainConfig


class SimulatedOracle:
    """Answers instantly from a ground-truth label table."""

    kind = "simulated"

    def __init__(self, labels_by_id: dict):
        self.labels_by_id = dict(labels_by_id)
        self.query_count = 0

    def query(self, record_id: str, features, state) -> int:
        if record_id not in self.labels_by_id:
            raise InvalidConfig(f"oracle has no ground truth for {record_id!r}")
        self.query_count += 1
        return int(self.labels_by_id[record_id])


@dataclass(frozen=True)
class StreamItem:
    record_id: str
    x: np.ndarray
    state: DefenderState


@dataclass(frozen=True)
class BufferEntry:
    state: DefenderState
    label: int
    record_id: str
    iteration: int


class ActiveBuffer:
    """Append-only store of oracle answers, FIFO-capped, unique per record id.

    queried_ids also tracks queries that were dropped on timeout so a
    campaign never asks about the same record twice.
    """

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity <= 0:
            raise InvalidConfig(f"buffer capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.entries: list[BufferEntry] = []
        self.queried_ids: set[str] = set()

    def mark_queried(self, record_id: str) -> None:
        self.queried_ids.add(record_id)

    def add(self, entry: BufferEntry) -> None:
        if any(e.record_id == entry.record_id for e in self.entries):
            raise InvalidConfig(f"duplicate record id in buffer: {entry.record_id!r}")
        self.queried_ids.add(entry.record_id)
        self.entries.append(entry)
        if self.capacity is not None and len(self.entries) > self.capacity:
            self.entries.pop(0)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LoopConfig:
    iterations: int = 50
    delta: float = 0.1
    query_budget: int = 32
    lam: float = 1.0
    retrain_epochs: int = 5

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise InvalidConfig(f"iterations must be at least 1, got {self.iterations}")
        if self.delta <= 0:
            raise InvalidConfig(f"delta must be positive, got {self.delta}")
        if self.query_budget < 0:
            raise InvalidConfig(f"query_budget must be non-negative, got {self.query_budget}")
        if self.lam < 0:
            raise InvalidConfig(f"lambda must be non-negative, got {self.lam}")
        if self.retrain_epochs < 1:
            raise InvalidConfig(f"retrain_epochs must be at least 1, got {self.retrain_epochs}")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "delta": self.delta,
            "query_budget": self.query_budget,
            "lambda": self.lam,
            "retrain_epochs": self.retrain_epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LoopConfig":
        return cls(
            iterations=d.get("iterations", 50),
            delta=d.get("delta", 0.1),
            query_budget=d.get("query_budget", 32),
            lam=d.get("lambda", 1.0),
            retrain_epochs=d.get("retrain_epochs", 5),
        )


def is_uncertain(pred: AgentPrediction, delta: float) -> bool:
    """A prediction is uncertain when its margin falls inside the delta band."""
    if delta <= 0:
        raise InvalidConfig(f"delta must be positive, got {delta}")
    return pred.margin < delta


# Retraining runs every iteration over a buffer that is small and heavily
# benign-skewed, so it has to adapt gently: repeated full-rate passes erase
# what base training learned before the buffer is large enough to replace it.
# Batches of a few dozen average the benign skew out of each step, and the
# low rate keeps one iteration from dragging an agent far off its base policy.
RETRAIN_LR = 0.01
RETRAIN_BATCH = 32


def state_digest(state: DefenderState) -> str:
    return hashlib.sha1(state.as_vector().tobytes()).hexdigest()[:12]


def shaped_params(params: RewardParams, lam: float) -> RewardParams:
    """Retraining reward with the anomaly shaping term folded in.

    R' adds lam times the sample's own reconstruction loss, which for a
    single record is exactly its eps, so shaping is a beta shift.
    """
    return RewardParams(beta=params.beta + lam, lam=params.lam, gamma=params.gamma)


@dataclass
class IterationReport:
    iteration: int
    n_uncertain: int
    n_queried: int
    n_dropped: int
    buffer_size: int
    report: EvalReport | None

    def to_dict(self) -> dict:
        d = {
            "iteration": self.iteration,
            "n_uncertain": self.n_uncertain,
            "n_queried": self.n_queried,
            "n_dropped": self.n_dropped,
            "buffer_size": self.buffer_size,
        }
        if self.report is not None:
            d["metrics"] = self.report.to_dict()
        return d


def evaluate_agent(agent, stream: list[StreamItem], labels_by_id: dict) -> EvalReport:
    """Full-stream scoring of one agent: ranking AUC plus action metrics."""
    preds = [predict(agent, item.state) for item in stream]
    labels = np.array([labels_by_id[item.record_id] for item in stream])
    scores = np.array([p.p_apt for p in preds])
    actions = np.array([p.action for p in preds])
    return classification_report(actions, labels, auc_value=auc(scores, labels))


def run_active_iteration(
    agent,
    test_stream: list[StreamItem],
    oracle,
    buffer: ActiveBuffer,
    cfg: LoopConfig,
    params: RewardParams,
    iteration: int = 0,
    labels_by_id: dict | None = None,
    seed: int = 0,
    transcript: list | None = None,
):
    """One pass of flag-query-store-retrain for a single agent.

    Candidates are ranked most-uncertain-first under the query budget and
    issued in stream order. Answers land in the shared buffer, whose
    queried-id set already screens out records any earlier pass asked
    about. Retraining runs over the full buffer whenever it holds anything.
    """
    candidates: list[tuple[float, int]] = []  # (margin, stream index)
    for idx, item in enumerate(test_stream):
        if item.record_id in buffer.queried_ids:
            continue
        pred = predict(agent, item.state)
        if is_uncertain(pred, cfg.delta):
            candidates.append((pred.margin, idx))
    selected = sorted(candidates, key=lambda c: (c[0], c[1]))[: cfg.query_budget]
    selected_idx = sorted(idx for _, idx in selected)

    # Oracles that batch their work (a human answering over HTTP) get the
    # whole selection up front; answers are still consumed in stream order,
    # so arrival order cannot change the outcome.
    prefetch = getattr(oracle, "prefetch", None)
    if prefetch is not None and selected_idx:
        prefetch([test_stream[idx] for idx in selected_idx])

    n_queried = 0
    n_dropped = 0
    for idx in selected_idx:
        item = test_stream[idx]
        started = time.perf_counter()
        try:
            answer = oracle.query(item.record_id, item.x, item.state)
        except OracleTimeout:
            buffer.mark_queried(item.record_id)
            n_dropped += 1
            continue
        latency_ms = (time.perf_counter() - started) * 1000.0
        if transcript is not None:
            transcript.append(
                {
                    "record_id": item.record_id,
                    "digest": state_digest(item.state),
                    "answer": int(answer),
                    "iteration": iteration,
                    "latency_ms": latency_ms,
                }
            )
        buffer.add(BufferEntry(state=item.state, label=int(answer), record_id=item.record_id, iteration=iteration))
        n_queried += 1

    if len(buffer) > 0:
        train_cfg = TrainConfig(
            learning_rate=RETRAIN_LR,
            epochs=cfg.retrain_epochs,
            batch_size=RETRAIN_BATCH,
            seed=seed,
        )
        train_agent(
            agent,
            [(e.state, e.label) for e in buffer.entries],
            shaped_params(params, cfg.lam),
            train_cfg,
        )

    report = None
    if labels_by_id is not None:
        report = evaluate_agent(agent, test_stream, labels_by_id)
    return agent, buffer, IterationReport(
        iteration=iteration,
        n_uncertain=len(candidates),
        n_queried=n_queried,
        n_dropped=n_dropped,
        buffer_size=len(buffer),
        report=report,
    )


@dataclass
class CampaignReport:
    config: dict
    seed: int
    agent_names: list[str]
    per_agent: dict
    ensemble: dict
    weights_per_iteration: list[list[float]]
    transcript: list
    n_dropped: int

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "agent_names": self.agent_names,
            "per_agent": self.per_agent,
            "ensemble": self.ensemble,
            "weights_per_iteration": self.weights_per_iteration,
            "transcript": self.transcript,
            "n_dropped": self.n_dropped,
        }


def agent_names(agents: list) -> list[str]:
    """Stable display names: the kind, suffixed by index only on collision."""
    names = []
    for i, agent in enumerate(agents):
        kind = agent_kind(agent)
        names.append(kind if sum(1 for a in agents if agent_kind(a) == kind) == 1 else f"{kind}{i}")
    return names


def build_stream(model: AutoencoderModel, ds: BooleanDataset):
    """Prepare stream items and the ground-truth table for a campaign."""
    x = ds.features_matrix()
    stream = [
        StreamItem(record_id=rec.id, x=x[i], state=make_state(model, x[i]))
        for i, rec in enumerate(ds.records)
    ]
    labels_by_id = None
    if ds.labeled:
        labels_by_id = {rec.id: int(rec.label) for rec in ds.records}
    return stream, labels_by_id


def run_active_campaign(
    agents: list,
    stream: list[StreamItem],
    oracle,
    cfg: LoopConfig,
    params: RewardParams,
    labels_by_id: dict | None = None,
    seed: int = 0,
    buffer_capacity: int | None = None,
    on_iteration=None,
) -> CampaignReport:
    """Run the full labeling loop for a roster of agents over one stream.

    Agents share one answer buffer: a record is asked about once per
    campaign no matter how many agents are unsure about it. Per-iteration
    metrics cover every agent plus the fused verdicts; final figures are
    means over iterations.
    """
    if not agents:
        raise InvalidConfig("campaign needs at least one agent")
    names = agent_names(agents)

    buffer = ActiveBuffer(capacity=buffer_capacity)
    transcript: list = []
    per_agent_iters: dict = {name: [] for name in names}
    ensemble_iters: list[EvalReport] = []
    weights_history: list[list[float]] = []
    n_dropped = 0

    labels = None
    if labels_by_id is not None:
        labels = np.array([labels_by_id[item.record_id] for item in stream])

    for it in range(cfg.iterations):
        for a_idx, agent in enumerate(agents):
            _, _, it_report = run_active_iteration(
                agent,
                stream,
                oracle,
                buffer,
                cfg,
                params,
                iteration=it,
                labels_by_id=labels_by_id,
                seed=seed * 100000 + it * 100 + a_idx,
                transcript=transcript,
            )
            per_agent_iters[names[a_idx]].append(it_report)
            n_dropped += it_report.n_dropped

        if labels is not None:
            scores = np.stack(
                [[predict(agent, item.state).p_apt for item in stream] for agent in agents]
            )
            weights = fit_weights([(row, labels) for row in scores])
            weights_history.append(list(weights.weights))
            p_ens = np.asarray(weights.weights) @ scores
            fused_actions = np.array([ensemble_action(p) for p in p_ens])
            majority_actions = np.array(
                [majority_vote([1 if row[j] >= 0.5 else 0 for row in scores]) for j in range(len(stream))]
            )
            rep = classification_report(fused_actions, labels, auc_value=auc(p_ens, labels))
            majority_rep = classification_report(majority_actions, labels)
            ensemble_iters.append(
                EvalReport(
                    auc=rep.auc, precision=rep.precision, recall=rep.recall, f1=rep.f1,
                    tp=rep.tp, fp=rep.fp, tn=rep.tn, fn=rep.fn, n=rep.n,
                    extra={"majority_f1": majority_rep.f1},
                )
            )

        if on_iteration is not None:
            on_iteration(
                it,
                ensemble_iters[-1] if ensemble_iters else None,
                len(buffer),
                {name: per_agent_iters[name][-1] for name in names},
            )

    per_agent: dict = {}
    for name in names:
        reports = [r.report for r in per_agent_iters[name] if r.report is not None]
        agent_summary: dict = {
            "per_iteration": [r.to_dict() for r in per_agent_iters[name]],
        }
        if reports:
            mean_auc, mean_f1 = trajectory_mean(reports)
            agent_summary["mean_auc"] = mean_auc
            agent_summary["mean_f1"] = mean_f1
        per_agent[name] = agent_summary

    ensemble_summary: dict = {"per_iteration": [r.to_dict() for r in ensemble_iters]}
    if ensemble_iters:
        mean_auc, mean_f1 = trajectory_mean(ensemble_iters)
        ensemble_summary["mean_auc"] = mean_auc
        ensemble_summary["mean_f1"] = mean_f1
        ensemble_summary["majority_mean_f1"] = float(
            np.mean([r.extra["majority_f1"] for r in ensemble_iters])
        )

    return CampaignReport(
        config={"loop": cfg.to_dict(), "reward": params.to_dict()},
        seed=seed,
        agent_names=names,
        per_agent=per_agent,
        ensemble=ensemble_summary,
        weights_per_iteration=weights_history,
        transcript=transcript,
        n_dropped=n_dropped,
    )
