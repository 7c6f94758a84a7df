"""End-to-end experiment orchestration.

One experiment walks the whole pipeline: dataset (file or synthetic) ->
autoencoder on benign training records -> base-training of the agent
roster -> active labeling campaign on the held-out stream -> one
comparison table with a row per model configuration:

    AE-RL    threshold rule on reconstruction error alone
    Q-RL     tabular Q agent, base-trained, no labeling loop
    DQN      deep Q agent, base-trained, no labeling loop
    PPO      clipped policy agent, base-trained, no labeling loop
    MARL     committee of the base-trained agents (majority actions,
             uniform mean probability as the ranking score)
    AMARL    the adversarially trained agent alone, base-trained
    AAMARL   the adversarial agent inside the labeling loop,
             metrics averaged over iterations
    EAAMARL  AUC-weighted ensemble of all agents in the labeling loop,
             metrics averaged over iterations

A grid run executes many experiments (optionally in parallel processes)
and aggregates their tables into one summary.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .active_learning import (
    LoopConfig, SimulatedOracle, agent_names, build_stream, evaluate_agent, run_active_campaign,
)
from .agents import agent_kind, load_agent, make_adversarial, make_dqn, make_ppo, make_q_table, predict, train_agent
from .autoencoder import AutoencoderModel, benign_threshold, default_latent_dim, recon_errors, train_ae
from .dataset import BENIGN, BooleanDataset, SynthConfig, load_csv, split, synth_generate
from .ensemble import majority_vote
from .environment import RewardParams, make_state
from .errors import CampaignAborted, InvalidConfig
from .metrics import auc, classification_report
from .neural_core import TrainConfig
from .store import ACTIVE_LOOP, DONE, FAILED, TRAINING, RunRecord, RunStore

MODEL_NAMES = ["AE-RL", "Q-RL", "DQN", "PPO", "MARL", "AMARL", "AAMARL", "EAAMARL"]

AGENT_FACTORIES = {
    "q": make_q_table,
    "dqn": make_dqn,
    "ppo": make_ppo,
    "adversarial": make_adversarial,
}


def default_agent_specs() -> list[dict]:
    # Tuned so no committee member drowns out the rest. The table needs fine
    # bins to separate anomaly scores that pile up near tau. PPO barely moves
    # off its init at the shared rate, so it trains hotter and shorter. The
    # adversarial member gets two base epochs only: worst-of-k augmentation
    # overfits a lucky perturbation direction when pushed longer, and the
    # label loop supplies the rest of its training anyway.
    return [
        {"kind": "q", "bins_per_dim": 44, "train": {"epochs": 2}},
        {"kind": "dqn"},
        {"kind": "ppo", "train": {"learning_rate": 0.05, "epochs": 4}},
        {
            "kind": "adversarial",
            "hidden": 8,
            "delta_bound": 0.02,
            "k_samples": 8,
            "train": {"epochs": 2},
        },
    ]


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, JSON-serializable end to end."""

    name: str = "synth"
    dataset: dict = field(default_factory=lambda: {"synth": SynthConfig().to_dict()})
    train_fraction: float = 0.7
    ae_latent: int | None = None  # None: sized from the feature dimension
    tau_percentile: float = 99.0
    ae_train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=2.0, epochs=40))
    agent_specs: list = field(default_factory=default_agent_specs)
    agent_train: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.02, epochs=5))
    reward: RewardParams = field(default_factory=RewardParams)
    loop: LoopConfig = field(default_factory=LoopConfig)
    oracle: str = "simulated"
    seed: int = 1

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidConfig("experiment name must be non-empty")
        keys = set(self.dataset)
        if keys != {"synth"} and keys != {"path"}:
            raise InvalidConfig("dataset must specify exactly one of 'synth' or 'path'")
        if "synth" in self.dataset:
            SynthConfig.from_dict(self.dataset["synth"])  # validates
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if not 0.0 < self.tau_percentile <= 100.0:
            raise InvalidConfig(f"tau_percentile must be in (0,100], got {self.tau_percentile}")
        if not self.agent_specs:
            raise InvalidConfig("experiment needs at least one agent")
        for spec in self.agent_specs:
            if spec.get("kind") not in AGENT_FACTORIES:
                raise InvalidConfig(f"unknown agent kind {spec.get('kind')!r}")
        if self.oracle not in ("simulated", "human"):
            raise InvalidConfig(f"oracle must be 'simulated' or 'human', got {self.oracle!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dataset": self.dataset,
            "train_fraction": self.train_fraction,
            "ae_latent": self.ae_latent,
            "tau_percentile": self.tau_percentile,
            "ae_train": self.ae_train.to_dict(),
            "agent_specs": self.agent_specs,
            "agent_train": self.agent_train.to_dict(),
            "reward": self.reward.to_dict(),
            "loop": self.loop.to_dict(),
            "oracle": self.oracle,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        if "ae_train" in kwargs:
            kwargs["ae_train"] = TrainConfig.from_dict(kwargs["ae_train"])
        if "agent_train" in kwargs:
            kwargs["agent_train"] = TrainConfig.from_dict(kwargs["agent_train"])
        if "reward" in kwargs:
            kwargs["reward"] = RewardParams.from_dict(kwargs["reward"])
        if "loop" in kwargs:
            kwargs["loop"] = LoopConfig.from_dict(kwargs["loop"])
        return cls(**kwargs)


def load_experiment_dataset(cfg: ExperimentConfig) -> BooleanDataset:
    if "path" in cfg.dataset:
        return load_csv(cfg.dataset["path"])
    return synth_generate(SynthConfig.from_dict(cfg.dataset["synth"]))


def _make_agent(spec: dict, state_dim: int, seed: int):
    opts = {k: v for k, v in spec.items() if k not in ("kind", "train")}
    return AGENT_FACTORIES[spec["kind"]](state_dim, seed, **opts)


def _agent_train_config(cfg: "ExperimentConfig", spec: dict, seed: int) -> TrainConfig:
    """Base-training settings: experiment-wide defaults, per-agent overrides."""
    merged = {**cfg.agent_train.to_dict(), **spec.get("train", {}), "seed": seed}
    return TrainConfig.from_dict(merged)


def _row(model: str, auc_value: float, f1: float, **extra) -> dict:
    row = {"model": model, "auc": float(auc_value), "f1": float(f1)}
    row.update(extra)
    return row


def _static_rows(static_agents: list, stream, labels_arr: np.ndarray, labels_by_id: dict) -> list[dict]:
    """Rows for the base-trained models evaluated once, without the loop."""
    rows = []
    single_names = {"q": "Q-RL", "dqn": "DQN", "ppo": "PPO"}
    preds_by_agent = [[predict(a, item.state) for item in stream] for a in static_agents]

    seen = set()
    for agent, preds in zip(static_agents, preds_by_agent):
        kind = agent_kind(agent)
        if kind not in single_names or kind in seen:
            continue
        seen.add(kind)
        rep = evaluate_agent(agent, stream, labels_by_id)
        rows.append(_row(single_names[kind], rep.auc, rep.f1,
                         precision=rep.precision, recall=rep.recall))

    if len(static_agents) >= 2:
        mean_scores = np.mean([[p.p_apt for p in preds] for preds in preds_by_agent], axis=0)
        votes = [
            majority_vote([preds[j].action for preds in preds_by_agent])
            for j in range(len(stream))
        ]
        rep = classification_report(np.array(votes), labels_arr,
                                    auc_value=auc(mean_scores, labels_arr))
        rows.append(_row("MARL", rep.auc, rep.f1,
                         precision=rep.precision, recall=rep.recall))

    for agent in static_agents:
        if agent_kind(agent) == "adversarial":
            rep = evaluate_agent(agent, stream, labels_by_id)
            rows.append(_row("AMARL", rep.auc, rep.f1,
                             precision=rep.precision, recall=rep.recall))
            break
    return rows


def _campaign_rows(campaign) -> list[dict]:
    """Iteration-averaged rows for the models that live inside the loop."""
    rows = []
    for name in campaign.agent_names:
        if name.startswith("adversarial"):
            summary = campaign.per_agent[name]
            if "mean_auc" in summary:
                rows.append(_row("AAMARL", summary["mean_auc"], summary["mean_f1"]))
            break
    if "mean_auc" in campaign.ensemble:
        rows.append(_row("EAAMARL", campaign.ensemble["mean_auc"], campaign.ensemble["mean_f1"],
                         majority_f1=campaign.ensemble["majority_mean_f1"]))
    return rows


def _ordered(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: MODEL_NAMES.index(r["model"]))


def rows_to_csv(rows: list[dict]) -> str:
    """Full-precision CSV of the comparison table (repr keeps every bit)."""
    lines = ["model,auc,f1"]
    for r in rows:
        lines.append(f"{r['model']},{r['auc']!r},{r['f1']!r}")
    return "\n".join(lines) + "\n"


def rows_to_text(rows: list[dict]) -> str:
    width = max(len(r["model"]) for r in rows)
    lines = [f"{'model':<{width}}  {'AUC':>7}  {'F1':>7}"]
    for r in rows:
        lines.append(f"{r['model']:<{width}}  {r['auc']:7.4f}  {r['f1']:7.4f}")
    return "\n".join(lines) + "\n"


def run_experiment(
    cfg: ExperimentConfig,
    store: RunStore | None = None,
    record: RunRecord | None = None,
    oracle=None,
    on_iteration=None,
) -> RunRecord:
    """Execute one experiment and return its populated RunRecord.

    With a store, every stage change and loop iteration is snapshotted to
    disk. A human-oracle run must be handed its oracle by the caller; the
    default is ground-truth simulation over the held-out stream.
    """
    if record is None:
        record = store.create_run(cfg.to_dict()) if store is not None else RunRecord(
            run_id=f"{cfg.name}-{cfg.seed}", config=cfg.to_dict(), created_at=time.time())

    def snapshot() -> None:
        if store is not None:
            store.save_snapshot(record)

    try:
        record.transition(TRAINING, stage="dataset")
        snapshot()
        ds = load_experiment_dataset(cfg)
        train_ds, test_ds = split(ds, cfg.train_fraction, seed=cfg.seed)

        record.stage = "autoencoder"
        snapshot()
        x_train = train_ds.features_matrix()
        benign_x = x_train[train_ds.labels_array() == BENIGN]
        k = cfg.ae_latent if cfg.ae_latent is not None else default_latent_dim(ds.d)
        ae_cfg = TrainConfig.from_dict({**cfg.ae_train.to_dict(), "seed": 1000 * cfg.seed + 1})
        model = train_ae(benign_x, ae_cfg, k)
        model.tau = benign_threshold(model, benign_x, cfg.tau_percentile)
        if store is not None:
            ae_path = store.run_dir(record.run_id) / "autoencoder.json"
            model.save(ae_path)
            record.artifacts["autoencoder"] = str(ae_path)

        record.stage = "base_training"
        snapshot()
        train_labels = train_ds.labels_array()
        train_states = [(make_state(model, x_train[i]), int(train_labels[i]))
                        for i in range(len(train_ds.records))]
        agents = []
        for i, spec in enumerate(cfg.agent_specs):
            agent = _make_agent(spec, k + 1, 1000 * cfg.seed + 10 + i)
            train_cfg = _agent_train_config(cfg, spec, 1000 * cfg.seed + 50 + i)
            train_agent(agent, train_states, cfg.reward, train_cfg)
            agents.append(agent)
        # frozen copies carry the no-loop rows while the originals keep learning
        static_agents = [load_agent(a.to_dict()) for a in agents]

        record.transition(ACTIVE_LOOP, stage="campaign")
        snapshot()
        stream, labels_by_id = build_stream(model, test_ds)
        if labels_by_id is None:
            raise InvalidConfig("experiment requires a labeled dataset")
        if oracle is None:
            if cfg.oracle != "simulated":
                raise InvalidConfig("human oracle runs need an oracle supplied by the service")
            oracle = SimulatedOracle(labels_by_id)
        attach = getattr(oracle, "attach", None)
        if attach is not None:
            # queue-serving oracles enrich entries with feature names plus
            # live per-agent scores
            attach(ds.feature_names, agents, agent_names(agents))
        labels_arr = np.array([labels_by_id[item.record_id] for item in stream])

        live_ens: list = []
        live_agents: dict[str, list] = {}

        def progress(it, ens_report, buffer_size, agent_reports):
            for name, rep in agent_reports.items():
                live_agents.setdefault(name, []).append(rep.to_dict())
            if ens_report is not None:
                live_ens.append(ens_report.to_dict())
            # assign a fresh dict so concurrent readers only ever see a
            # complete structure, never one mid-append
            record.iteration_metrics = {"live": {
                "ensemble": list(live_ens),
                "agents": {k: list(v) for k, v in live_agents.items()},
                "buffer_size": buffer_size,
            }}
            snapshot()
            if on_iteration is not None:
                on_iteration(it, ens_report, buffer_size, agent_reports)

        campaign = run_active_campaign(
            agents, stream, oracle, cfg.loop, cfg.reward,
            labels_by_id=labels_by_id, seed=cfg.seed, on_iteration=progress)

        record.stage = "report"
        x_test = test_ds.features_matrix()
        eps_scores = recon_errors(model, x_test)
        ae_actions = (eps_scores > model.tau).astype(int)
        ae_rep = classification_report(ae_actions, labels_arr,
                                       auc_value=auc(eps_scores, labels_arr))
        rows = [_row("AE-RL", ae_rep.auc, ae_rep.f1,
                     precision=ae_rep.precision, recall=ae_rep.recall)]
        rows += _static_rows(static_agents, stream, labels_arr, labels_by_id)
        rows += _campaign_rows(campaign)
        record.model_rows = _ordered(rows)
        record.iteration_metrics = {
            "ensemble": campaign.ensemble,
            "agents": campaign.per_agent,
            "n_queried_total": len(campaign.transcript),
            "n_dropped": campaign.n_dropped,
        }
        if store is not None:
            run_dir = store.run_dir(record.run_id)
            (run_dir / "table.csv").write_text(rows_to_csv(record.model_rows))
            (run_dir / "table.txt").write_text(rows_to_text(record.model_rows))
            record.artifacts["table_csv"] = str(run_dir / "table.csv")
            record.artifacts["table_txt"] = str(run_dir / "table.txt")
        record.transition(DONE, stage="done")
        snapshot()
        return record
    except CampaignAborted:
        # shutdown, not failure: leave the record as-is for the next process
        snapshot()
        raise
    except Exception as exc:
        if record.status not in (DONE, FAILED):
            record.transition(FAILED, error=f"{record.stage}: {exc}")
            snapshot()
        raise


# -- grid ---------------------------------------------------------------------

def _grid_worker(cfg_dict: dict, store_root: str | None) -> tuple[str, list | None, str | None]:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        store = RunStore(store_root) if store_root else None
        record = store.create_run(cfg.to_dict(), run_id=cfg.name) if store else None
        result = run_experiment(cfg, store=store, record=record)
        return cfg.name, result.model_rows, None
    except Exception as exc:  # cell isolation: one bad config cannot sink the grid
        return cfg.name, None, f"{type(exc).__name__}: {exc}"


@dataclass
class GridSummary:
    rows: list  # [{"name", "cells": {model: {"auc","f1"}} | None, "error": str | None}]

    def columns(self) -> list[str]:
        present = set()
        for row in self.rows:
            if row["cells"]:
                present.update(row["cells"])
        return [m for m in MODEL_NAMES if m in present]

    def to_csv(self) -> str:
        cols = self.columns()
        lines = ["dataset," + ",".join(cols)]
        for row in self.rows:
            if row["error"] is not None:
                lines.append(f"{row['name']}," + ",".join(["FAILED"] * len(cols)))
                continue
            cells = []
            for m in cols:
                c = row["cells"].get(m)
                cells.append(f"{c['auc']:.4f} / {c['f1']:.4f}" if c else "")
            lines.append(f"{row['name']}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        cols = self.columns()
        name_w = max([len("dataset")] + [len(r["name"]) for r in self.rows])
        cell_w = max(len("0.0000 / 0.0000"), max((len(m) for m in cols), default=0))
        header = f"{'dataset':<{name_w}}  " + "  ".join(f"{m:>{cell_w}}" for m in cols)
        lines = [header, "-" * len(header)]
        for row in self.rows:
            if row["error"] is not None:
                lines.append(f"{row['name']:<{name_w}}  FAILED: {row['error']}")
                continue
            cells = []
            for m in cols:
                c = row["cells"].get(m)
                cells.append(f"{c['auc']:.4f} / {c['f1']:.4f}" if c else "")
            lines.append(f"{row['name']:<{name_w}}  " + "  ".join(f"{c:>{cell_w}}" for c in cells))
        return "\n".join(lines) + "\n"


def summarize_records(named_rows: list[tuple[str, list | None, str | None]]) -> GridSummary:
    """Pure aggregation of per-run tables into the grid summary."""
    rows = []
    for name, model_rows, error in named_rows:
        cells = None
        if model_rows is not None:
            cells = {r["model"]: {"auc": r["auc"], "f1": r["f1"]} for r in model_rows}
        rows.append({"name": name, "cells": cells, "error": error})
    return GridSummary(rows=rows)


def run_grid(configs: list[ExperimentConfig], parallel: int = 1,
             store_root: str | None = None) -> GridSummary:
    """Run every experiment, in parallel processes when asked, and summarize."""
    if not configs:
        raise InvalidConfig("grid needs at least one experiment config")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise InvalidConfig("experiment names in a grid must be unique")

    if parallel > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_grid_worker,
                                    [c.to_dict() for c in configs],
                                    [store_root] * len(configs)))
    else:
        results = [_grid_worker(c.to_dict(), store_root) for c in configs]

    summary = summarize_records(results)
    if store_root:
        root = Path(store_root)
        (root / "grid.csv").write_text(summary.to_csv())
        (root / "grid.txt").write_text(summary.to_text())
    return summary
