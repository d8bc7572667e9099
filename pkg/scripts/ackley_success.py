"""Multistart success rate of BBI on Ackley: random starts in [-4, 4]^2, several restarts each."""

import argparse
import json
from pathlib import Path

from ecd.harness import ExperimentConfig, UniformBox, dumps, multistart_experiment, write_text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=30)
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--threshold", type=float, default=5e-4, help="success when F drops below this")
    ap.add_argument("--max-iters", type=int, default=30_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/ackley")
    args = ap.parse_args()

    cfg = ExperimentConfig(
        objective="ackley", optimizer="bbi",
        hyperparams=dict(dt=args.dt, dE=2.0, dV=args.threshold, T0=20, Nb=4, T1=100),
        n_runs=args.points, restarts=args.restarts, base_seed=args.seed,
        init=UniformBox((-4.0, -4.0), (4.0, 4.0)), max_iters=args.max_iters, workers=args.workers,
    )
    result = multistart_experiment(cfg)
    out = Path(args.out)
    write_text(out / "config.json", cfg.to_json())
    write_text(out / "success.json", dumps(result.to_dict()))
    print(f"{result.successes}/{result.points} start points succeeded (rate {result.rate:.2f})")
    print("attempts per point:", json.dumps(result.attempts))


if __name__ == "__main__":
    main()
