"""Late-time decay rates on V = m^2 theta^2 / 2: BBI goes like m/sqrt(2), overdamped GDM like m^2."""

import argparse
import math

from ecd.analysis import fit_decay_rate
from ecd.core import BbiHyperParams, GdmHyperParams
from ecd.objectives import ShallowQuadratic
from ecd.optimizers import bbi_run, gdm_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--masses", default="0.25,0.5,1,2")
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--eta", type=float, default=1e-2)
    ap.add_argument("--mu", type=float, default=0.5)
    args = ap.parse_args()

    print("m,bbi_rate,bbi_rate/(m/sqrt2),gdm_rate_per_step,gdm_rate/(eta m^2/(1-mu))")
    for m in (float(x) for x in args.masses.split(",")):
        q = ShallowQuadratic(m)
        hp = BbiHyperParams(dt=args.dt, dE=0.01, max_iters=200_000, T0=10**9, T1=10**9, Nb=0)
        s = bbi_run(q, [1.0], hp, 0, trace_every=1)
        bbi = fit_decay_rate(s.trace, hp.dt, energy=0.5 * m * m + hp.dE)
        g = gdm_run(q, [1.0], GdmHyperParams(eta=args.eta, mu=args.mu), 20_000, trace_every=1)
        gdm = fit_decay_rate(g.trace[100:], 1.0)
        gdm_pred = args.eta * m * m / (1 - args.mu)
        print(f"{m},{bbi:.5f},{bbi / (m / math.sqrt(2)):.4f},{gdm:.6f},{gdm / gdm_pred:.4f}")


if __name__ == "__main__":
    main()
