"""Command-line entry points for the whole pipeline.

Subcommands:

    synth      generate a synthetic boolean process dataset as CSV
    ingest     load a dataset CSV and print its shape summary
    train      train the autoencoder on a dataset's benign records
    campaign   run one full experiment (AE + agents + labeling loop)
    grid       run a list of experiments and print the summary table
    serve      host the HTTP service with the human labeling queue
    report     print stored run tables from a service/state directory

Experiment settings come from a JSON config file (--config) whose keys
mirror ExperimentConfig; common top-level keys also exist as flags, and
flags win over the file.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import SynthConfig, load_csv, synth_generate, write_csv
from .errors import AptEnsembleError
from .experiment import (
    ExperimentConfig, rows_to_text, run_experiment, run_grid,
)
from .store import RunStore


def _load_config_dict(args) -> dict:
    cfg: dict = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise AptEnsembleError("--config file must hold a JSON object")
    for key in ("name", "seed", "train_fraction", "oracle", "tau_percentile", "ae_latent"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "data", None):
        cfg["dataset"] = {"path": args.data}
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig keys")
    p.add_argument("--name", help="experiment name")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--oracle", choices=["simulated", "human"])
    p.add_argument("--tau-percentile", dest="tau_percentile", type=float)
    p.add_argument("--ae-latent", dest="ae_latent", type=int)
    p.add_argument("--data", help="dataset CSV path (overrides config dataset)")


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_records=args.n_records, d=args.d, apt_rate=args.apt_rate,
        benign_pattern_count=args.benign_patterns,
        apt_flip_count=args.apt_flips, seed=args.seed)
    ds = synth_generate(cfg)
    write_csv(ds, args.out)
    print(f"wrote {len(ds.records)} records x {ds.d} features to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    ds = load_csv(args.path)
    print(json.dumps(ds.summary(), indent=2))
    return 0


def cmd_train(args) -> int:
    from .autoencoder import benign_threshold, default_latent_dim, train_ae
    from .dataset import BENIGN
    from .neural_core import TrainConfig

    cfg = ExperimentConfig.from_dict(_load_config_dict(args))
    from .experiment import load_experiment_dataset
    ds = load_experiment_dataset(cfg)
    x = ds.features_matrix()
    benign_x = x[ds.labels_array() == BENIGN]
    k = cfg.ae_latent if cfg.ae_latent is not None else default_latent_dim(ds.d)
    ae_cfg = TrainConfig.from_dict({**cfg.ae_train.to_dict(), "seed": 1000 * cfg.seed + 1})
    model = train_ae(benign_x, ae_cfg, k)
    model.tau = benign_threshold(model, benign_x, cfg.tau_percentile)
    print(f"trained autoencoder: d={ds.d} k={k} "
          f"final loss={model.train_log[-1]:.6f} tau={model.tau:.6f}")
    if args.out:
        model.save(args.out)
        print(f"saved checkpoint to {args.out}")
    return 0


def cmd_campaign(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config_dict(args))
    if cfg.oracle != "simulated":
        print("campaign runs from the CLI use the simulated oracle; "
              "use `serve` for human labeling", file=sys.stderr)
        return 2
    store = RunStore(args.out) if args.out else None
    record = run_experiment(cfg, store=store)
    print(rows_to_text(record.model_rows), end="")
    if store is not None:
        print(f"run {record.run_id} stored under {args.out}")
    return 0


def cmd_grid(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    if isinstance(raw, dict):
        raw = raw.get("experiments", [])
    configs = [ExperimentConfig.from_dict(d) for d in raw]
    summary = run_grid(configs, parallel=args.parallel, store_root=args.out)
    print(summary.to_text(), end="")
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(args.dir, host=args.host, port=args.port)
    return 0


def cmd_report(args) -> int:
    store = RunStore(args.dir)
    records = store.list_runs()
    if args.run:
        records = [r for r in records if r.run_id == args.run]
        if not records:
            print(f"no run {args.run!r} under {args.dir}", file=sys.stderr)
            return 1
    for record in records:
        print(f"run {record.run_id} [{record.status}] "
              f"{record.config.get('name', '')} seed={record.config.get('seed')}")
        if record.error:
            print(f"  error: {record.error}")
        if record.model_rows:
            print(rows_to_text(record.model_rows), end="")
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aptensemble",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n-records", dest="n_records", type=int, default=2000)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--apt-rate", dest="apt_rate", type=float, default=0.02)
    p.add_argument("--benign-patterns", dest="benign_patterns", type=int, default=5)
    p.add_argument("--apt-flips", dest="apt_flips", type=int, default=8)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load a dataset CSV and print its summary")
    p.add_argument("--path", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the autoencoder only")
    _add_config_flags(p)
    p.add_argument("--out", help="checkpoint path for the trained autoencoder")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("campaign", help="run one full experiment")
    _add_config_flags(p)
    p.add_argument("--out", help="state directory to persist the run")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("grid", help="run an experiment grid")
    p.add_argument("--config", required=True,
                   help="JSON list of experiment configs, or {'experiments': [...]}")
    p.add_argument("--out", help="state directory for runs and summary files")
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("serve", help="host the HTTP service")
    p.add_argument("--dir", required=True, help="state directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="print stored run tables")
    p.add_argument("--dir", required=True, help="state directory")
    p.add_argument("--run", help="single run id")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AptEnsembleError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
