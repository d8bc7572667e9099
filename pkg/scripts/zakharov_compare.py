"""Tune BBI and GDM on 10-d Zakharov by random search, then compare 1e4-step runs."""

import argparse
from pathlib import Path

from ecd.harness import (
    ExperimentConfig,
    FixedPoint,
    compare_runs,
    comparison_csv,
    dumps,
    random_search,
    write_text,
)
from ecd.objectives import Zakharov


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--steps", type=int, default=2500, help="iterations per search trial")
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--eta-max", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/zakharov")
    args = ap.parse_args()

    start = FixedPoint(tuple([-1.0] * 10))
    bbi_cfg = ExperimentConfig(objective="zakharov", optimizer="bbi", init=start, base_seed=args.seed,
                               hyperparams=dict(dE=0.0, dV=1e-22, T0=10**9, T1=10**9, Nb=0),
                               ranges={"dt": ("log", 1e-6, 1e-2)})
    gdm_cfg = ExperimentConfig(objective="zakharov", optimizer="gdm", init=start, base_seed=args.seed,
                               ranges={"eta": ("log", 1e-10, args.eta_max), "mu": ("uniform", 0.0, 1.0)})
    bbi_search = random_search(bbi_cfg, args.trials, args.steps)
    gdm_search = random_search(gdm_cfg, args.trials, args.steps)
    print("BBI best:", bbi_search.best_params, "score", bbi_search.best_score)
    print("GDM best:", gdm_search.best_params, "score", gdm_search.best_score)

    specs = [("bbi", bbi_cfg.build_hyperparams(bbi_search.best_params)),
             ("gdm", gdm_cfg.build_hyperparams(gdm_search.best_params))]
    runs = compare_runs(lambda: Zakharov(10), start.theta0, specs, args.iters, args.seed)
    out = Path(args.out)
    write_text(out / "search_bbi.json", dumps(bbi_search.to_dict()))
    write_text(out / "search_gdm.json", dumps(gdm_search.to_dict()))
    write_text(out / "compare.csv", comparison_csv(["bbi", "gdm"], runs))
    for name, run in zip(["bbi", "gdm"], runs):
        print(f"{name}: final F = {run.final_f:.3e} after {run.steps_taken} steps ({run.stop_reason.value})")


if __name__ == "__main__":
    main()
