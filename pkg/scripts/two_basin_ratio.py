"""Basin statistics on the two-well landscape versus the phase-space volume prediction."""

import argparse
from pathlib import Path

from ecd.analysis import locate_basins, volume_ratio
from ecd.harness import ExperimentConfig, FixedPoint, basin_experiment, dumps, write_text
from ecd.objectives import make_objective


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--theta0", default="4,-4", help="shared start point (use --theta0=-1,2 for negatives)")
    ap.add_argument("--Nb", type=int, default=1)
    ap.add_argument("--T0", type=int, default=20)
    ap.add_argument("--T1", type=int, default=750)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/two_basin")
    args = ap.parse_args()

    objective = make_objective("two_basin")
    basins = locate_basins(objective)
    predicted = volume_ratio(basins[0], basins[1], 1.0)
    cfg = ExperimentConfig(
        objective="two_basin", optimizer="bbi",
        hyperparams=dict(dt=1e-2, dV=1e-3, dE=0.0, T0=args.T0, T1=args.T1, Nb=args.Nb),
        n_runs=args.runs, base_seed=args.seed, workers=args.workers,
        init=FixedPoint(tuple(float(x) for x in args.theta0.split(","))),
    )
    tally, _ = basin_experiment(cfg, [b.minimum_location for b in basins])
    out = Path(args.out)
    write_text(out / "ratios.csv", tally.ratios_csv())
    write_text(out / "tally.json", dumps({"tally": tally.to_dict(), "predicted_ratio": predicted,
                                          "basins": [b.to_dict() for b in basins]}))
    print(f"counts {tally.counts}, unresolved {tally.unresolved}")
    print(f"empirical ratio {tally.ratio:.4f}, predicted {predicted:.4f}, "
          f"relative difference {abs(tally.ratio / predicted - 1):.3f}")


if __name__ == "__main__":
    main()
