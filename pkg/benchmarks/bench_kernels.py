"""Compare the compiled dense-layer kernels against the numpy fallback.

The backend is frozen at import time, so each measurement runs in a
fresh subprocess: once with the compiled extension, once with
APTENSEMBLE_PURE_PY=1. Timings are medians over --repeat runs.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 9 --json
"""
import argparse
import json
import os
import statistics
import subprocess
import sys
import time

CASES = [
    ("layer_forward 256x64->32 relu", "forward", dict(n=256, d_in=64, d_out=32, iters=400)),
    ("layer_backward 256x64->32 relu", "backward", dict(n=256, d_in=64, d_out=32, iters=400)),
    ("layer_forward 32x16->2 (agent-sized)", "forward", dict(n=32, d_in=16, d_out=2, iters=4000)),
    ("autoencoder 3 epochs, n=1000 d=64", "ae_train", dict()),
]


def run_case(kind: str, params: dict) -> float:
    import numpy as np

    from aptensemble import kernels

    if kind in ("forward", "backward"):
        rng = np.random.default_rng(0)
        x = np.ascontiguousarray(rng.normal(size=(params["n"], params["d_in"])))
        w = np.ascontiguousarray(rng.normal(size=(params["d_out"], params["d_in"])))
        b = rng.normal(size=params["d_out"])
        out = kernels.layer_forward(x, w, b, kernels.ACT_RELU)
        g = np.ascontiguousarray(rng.normal(size=out.shape))
        start = time.perf_counter()
        for _ in range(params["iters"]):
            if kind == "forward":
                kernels.layer_forward(x, w, b, kernels.ACT_RELU)
            else:
                kernels.layer_backward(g, out, x, w, kernels.ACT_RELU)
        return time.perf_counter() - start

    if kind == "ae_train":
        from aptensemble.autoencoder import train_ae
        from aptensemble.dataset import BENIGN, SynthConfig, synth_generate
        from aptensemble.neural_core import TrainConfig

        ds = synth_generate(SynthConfig(n_records=1000, d=64, apt_rate=0.02, seed=1))
        x = ds.features_matrix()[ds.labels_array() == BENIGN]
        start = time.perf_counter()
        train_ae(x, TrainConfig(learning_rate=2.0, epochs=3, seed=1), 16)
        return time.perf_counter() - start

    raise ValueError(f"unknown case kind {kind!r}")


def worker(case_index: int) -> None:
    name, kind, params = CASES[case_index]
    from aptensemble import kernels

    print(json.dumps({"backend": kernels.BACKEND, "seconds": run_case(kind, params)}))


def measure(case_index: int, pure: bool, repeat: int) -> tuple[str, float]:
    env = dict(os.environ)
    env.pop("APTENSEMBLE_PURE_PY", None)
    if pure:
        env["APTENSEMBLE_PURE_PY"] = "1"
    times = []
    backend = "?"
    for _ in range(repeat):
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker", str(case_index)],
            env=env, capture_output=True, text=True, check=True)
        doc = json.loads(out.stdout.strip().splitlines()[-1])
        backend = doc["backend"]
        times.append(doc["seconds"])
    return backend, statistics.median(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--worker", type=int, default=None, help=argparse.SUPPRESS)
    ap.add_argument("--repeat", type=int, default=5, help="runs per backend per case")
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args()

    if args.worker is not None:
        worker(args.worker)
        return

    rows = []
    for idx, (name, _, _) in enumerate(CASES):
        compiled_backend, compiled = measure(idx, pure=False, repeat=args.repeat)
        _, pure = measure(idx, pure=True, repeat=args.repeat)
        rows.append({
            "case": name,
            "compiled_backend": compiled_backend,
            "compiled_s": compiled,
            "python_s": pure,
            "speedup": pure / compiled if compiled > 0 else float("inf"),
        })

    if args.json:
        print(json.dumps(rows, indent=2))
        return

    if rows and rows[0]["compiled_backend"] != "cython":
        print("note: compiled extension not importable; both columns ran the "
              "numpy fallback\n")
    width = max(len(r["case"]) for r in rows)
    print(f"{'case':<{width}}  {'compiled':>10}  {'python':>10}  {'speedup':>8}")
    for r in rows:
        print(f"{r['case']:<{width}}  {r['compiled_s']:>9.3f}s  {r['python_s']:>9.3f}s  "
              f"{r['speedup']:>7.2f}x")


if __name__ == "__main__":
    main()