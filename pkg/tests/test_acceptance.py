"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the "acceptance criteria"
section at the end of the pytest run) and then asserts the same condition.
"""

import json
import math

import numpy as np
import pytest

from conftest import central_gradient, central_jacobian
from ecd import cli
from ecd.analysis import basin_radial_volume, fit_decay_rate, hypergeometric_radial_volume
from ecd.core import BbiHyperParams, GdmHyperParams, Rng, derive_seed
from ecd.harness import (
    ExperimentConfig,
    FixedPoint,
    UniformBox,
    basin_experiment,
    multistart_experiment,
    random_search,
    run_single,
)
from ecd.objectives import Ackley, ShallowQuadratic, Zakharov, make_objective
from ecd.optimizers import BornInfeld, bbi_init, bbi_run, bbi_step, gdm_run

pytestmark = pytest.mark.slow

NO_BOUNCE = dict(T0=10**9, T1=10**9, Nb=0)


def test_criterion_01_energy_conservation(acceptance_report):
    z = Zakharov(10)
    hp = BbiHyperParams(dt=2e-3, dE=1.0, max_iters=10_000)
    worst, checked = 0.0, 0

    def watch(state, info):
        nonlocal worst, checked
        if info.bounced or info.target_pi2 < 0 or info.pi2_after_rescale == 0:
            return
        checked += 1
        scale = state.energy ** 2 / info.v_old
        worst = max(worst, abs(info.pi2_after_rescale - info.target_pi2) / scale)

    s = bbi_run(z, -np.ones(10), hp, 0, callback=watch)
    ok = s.steps_taken == 10_000 and checked > 9000 and worst <= 1e-12
    acceptance_report(1, "energy conservation", ok,
                      f"{s.steps_taken} steps, {checked} checks, max |Pi^2 - target|/(E^2/V) = {worst:.2e} (<= 1e-12)")
    assert ok


def test_criterion_02_symplectic_order(acceptance_report):
    q = ShallowQuadratic(1.0)

    def drift(dt):
        hp = BbiHyperParams(dt=dt, dE=0.5, rescale=False)
        state = bbi_init(q, [1.0], hp, 0)
        bbi_step(state, q, hp)
        return abs(BornInfeld.energy(state.v_current, float(state.pi @ state.pi)) - state.energy)

    ratio = drift(1e-2) / drift(5e-3)
    ok = 3.0 <= ratio <= 5.0
    acceptance_report(2, "symplectic order", ok, f"drift(dt)/drift(dt/2) = {ratio:.4f} (in [3, 5])")
    assert ok


def test_criterion_03_stall_freedom(acceptance_report):
    hp = BbiHyperParams(dt=1e-2, dE=0.0, max_iters=100_000)
    smallest, stalls = math.inf, 0

    def watch(state, info):
        nonlocal smallest, stalls
        if info.bounced or info.v_old <= hp.eps2:
            return
        smallest = min(smallest, info.displacement)
        stalls += info.displacement == 0.0

    s = bbi_run(Ackley(), [2.0, 3.0], hp, 0, callback=watch)
    ok = s.steps_taken == 100_000 and stalls == 0 and smallest > 0
    acceptance_report(3, "stall freedom", ok,
                      f"{s.steps_taken} steps from a local basin, min |dTheta| = {smallest:.3e}, stalls = {stalls}")
    assert ok


def _bbi_rate(m):
    hp = BbiHyperParams(dt=1e-2, dE=0.01, max_iters=40_000, **NO_BOUNCE)
    s = bbi_run(ShallowQuadratic(m), [1.0], hp, 0, trace_every=1)
    return fit_decay_rate(s.trace, hp.dt, energy=0.5 * m * m + hp.dE)


def _gdm_rate(m):
    hp = GdmHyperParams(eta=1e-2, mu=0.5)  # overdamped: eta m^2 << (1 - sqrt(mu))^2
    s = gdm_run(ShallowQuadratic(m), [1.0], hp, 3000, trace_every=1)
    return fit_decay_rate(s.trace[100:], hp.eta)


def test_criterion_04_shallow_valley_rates(acceptance_report):
    bbi1, bbi_half = _bbi_rate(1.0), _bbi_rate(0.5)
    gdm1, gdm_half = _gdm_rate(1.0), _gdm_rate(0.5)
    rate_ok = abs(bbi1 / (1 / math.sqrt(2)) - 1) <= 0.15
    bbi_scaling_ok = abs((bbi_half / bbi1) / 0.5 - 1) <= 0.15
    gdm_scaling_ok = abs((gdm_half / gdm1) / 0.25 - 1) <= 0.20
    ok = rate_ok and bbi_scaling_ok and gdm_scaling_ok
    acceptance_report(4, "shallow-valley rates", ok,
                      f"BBI rate {bbi1:.4f} vs 1/sqrt2 = 0.7071; BBI m-ratio {bbi_half / bbi1:.4f} (0.5 +-15%); "
                      f"GDM m-ratio {gdm_half / gdm1:.4f} (0.25 +-20%)")
    assert ok


def test_criterion_05_ackley_success_rate(acceptance_report):
    cfg = ExperimentConfig(
        objective="ackley", optimizer="bbi",
        hyperparams=dict(dt=1e-2, dE=2.0, dV=5e-4, T0=20, Nb=4, T1=100),
        n_runs=30, restarts=5, base_seed=0, init=UniformBox((-4.0, -4.0), (4.0, 4.0)), max_iters=30_000,
    )
    result = multistart_experiment(cfg)
    ok = result.successes >= 24
    acceptance_report(5, "Ackley success rate", ok,
                      f"{result.successes}/30 start points reach V < 5e-4 within 3e4 iterations (need >= 24)")
    assert ok


def test_criterion_06_zakharov_comparison(acceptance_report):
    start = FixedPoint(tuple([-1.0] * 10))
    bbi_cfg = ExperimentConfig(objective="zakharov", optimizer="bbi", init=start, base_seed=0,
                               hyperparams=dict(dE=0.0, dV=1e-22, **NO_BOUNCE),
                               ranges={"dt": ("log", 1e-6, 1e-2)})
    gdm_cfg = ExperimentConfig(objective="zakharov", optimizer="gdm", init=start, base_seed=0,
                               ranges={"eta": ("log", 1e-10, 0.5), "mu": ("uniform", 0.0, 1.0)})
    bbi_best = random_search(bbi_cfg, trials=100, steps_per_trial=2500).best_params
    gdm_best = random_search(gdm_cfg, trials=100, steps_per_trial=2500).best_params
    z = Zakharov(10)
    bbi = run_single(z, start.theta0, "bbi", bbi_cfg.build_hyperparams(bbi_best).replace(max_iters=10_000), 0,
                     max_iters=10_000)
    gdm = run_single(z, start.theta0, "gdm", gdm_cfg.build_hyperparams(gdm_best), 0, max_iters=10_000)
    ok = bbi.final_f < gdm.final_f and bbi.final_f <= 1e-20
    acceptance_report(6, "Zakharov comparison", ok,
                      f"BBI dt={bbi_best['dt']:.3e} final F={bbi.final_f:.3e} ({bbi.steps_taken} steps); "
                      f"GDM eta={gdm_best['eta']:.3e} mu={gdm_best['mu']:.3f} final F={gdm.final_f:.3e}")
    assert ok


@pytest.fixture(scope="module")
def basin_result():
    objective = make_objective("two_basin")
    cfg = ExperimentConfig(
        objective="two_basin", optimizer="bbi",
        hyperparams=dict(dt=1e-2, dV=1e-3, dE=0.0, T0=20, T1=750, Nb=1),
        n_runs=1000, base_seed=0, init=FixedPoint(tuple(cli.default_start("two_basin", 2))),
        max_iters=100_000,
    )
    tally, _ = basin_experiment(cfg)
    return tally


def test_criterion_07_basin_ratio(acceptance_report, basin_result, tmp_path, capsys):
    assert cli.main(["volume", "--out", str(tmp_path)]) == 0
    predicted = json.loads(capsys.readouterr().out)["predicted_ratio"]
    ratio = basin_result.ratio
    rel = abs(ratio / predicted - 1)
    ok = 1.88 <= predicted <= 1.98 and rel <= 0.15
    acceptance_report(7, "basin ratio", ok,
                      f"counts {basin_result.counts}, unresolved {basin_result.unresolved}, ratio {ratio:.4f} vs "
                      f"predicted {predicted:.4f} (off by {100 * rel:.1f}%, need <= 15%)")
    assert ok


def test_basin_partial_ratios_settle(basin_result):
    assert basin_result.completed == 1000
    assert basin_result.tail_fluctuation(200) < 0.10


def test_criterion_08_volume_oracle(acceptance_report):
    worst = 0.0
    for n in (2, 3, 4):
        for v in (1e-2, 1e-4):
            q = basin_radial_volume(v, n)
            worst = max(worst, abs(hypergeometric_radial_volume(v, n) / q - 1))
    worst_log = max(abs(basin_radial_volume(v, 2) / math.log1p(1 / (2 * v)) - 1) for v in (1e-2, 1e-4))
    ok = worst <= 1e-6 and worst_log <= 1e-9
    acceptance_report(8, "volume oracle", ok,
                      f"max rel diff quadrature vs hypergeometric {worst:.2e} (<= 1e-6), "
                      f"vs log(1 + 1/(2V)) {worst_log:.2e} (<= 1e-9)")
    assert ok


def _points(obj, lo, hi, seed):
    rng = Rng(seed)
    pts = []
    while len(pts) < 100:
        p = rng.uniform_vector([lo] * obj.dim, [hi] * obj.dim)
        if obj.name == "ackley" and np.linalg.norm(p) < 1e-2:
            continue  # cone tip
        pts.append(p)
    return pts


def test_criterion_09_derivative_oracles(acceptance_report):
    cases = [(Ackley(), -4, 4), (Zakharov(10), -2, 2), (make_objective("two_basin"), -4, 4),
             (ShallowQuadratic(0.7, 3), -3, 3)]
    worst_g, worst_h = 0.0, 0.0
    for k, (obj, lo, hi) in enumerate(cases):
        for p in _points(obj, lo, hi, derive_seed(9, k)):
            fd = central_gradient(obj.value, p)
            worst_g = max(worst_g, np.linalg.norm(obj.grad(p) - fd) / np.linalg.norm(fd))
            fh = central_jacobian(obj.grad, p)
            worst_h = max(worst_h, np.linalg.norm(obj.hess(p) - fh) / np.linalg.norm(fh))
    ok = worst_g <= 1e-6 and worst_h <= 1e-5
    acceptance_report(9, "gradient/Hessian oracles", ok,
                      f"4 objectives x 100 points: max rel grad error {worst_g:.2e} (<= 1e-6), "
                      f"Hessian {worst_h:.2e} (<= 1e-5)")
    assert ok


EXPERIMENTS = [
    ["run", "--objective", "zakharov", "--dt", "2.2e-3", "--dV", "1e-22", "--trace-every", "10"],
    ["run", "--objective", "ackley", "--opt", "mecd", "--dE", "2", "--max-iters", "2000"],
    ["sweep", "--objective", "zakharov", "--trials", "5", "--steps", "300"],
    ["sweep", "--objective", "zakharov", "--opt", "gdm", "--trials", "5", "--steps", "300"],
    ["basins", "--n-runs", "20", "--trace-every", "100"],
    ["volume"],
    ["compare", "--objective", "zakharov", "--dt", "2.2e-3", "--eta", "3e-6", "--mu", "0.7"],
]


def _snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(acceptance_report, tmp_path, capsys):
    differing = []
    files = 0
    for i, argv in enumerate(EXPERIMENTS):
        a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
        cli.main([*argv, "--seed", "17", "--out", str(a)])
        cli.main([*argv, "--seed", "17", "--out", str(b)])
        snap_a, snap_b = _snapshot(a), _snapshot(b)
        files += len(snap_a)
        if not snap_a or snap_a != snap_b:
            differing.append(argv[0])
    capsys.readouterr()
    ok = not differing
    acceptance_report(10, "determinism", ok,
                      f"{len(EXPERIMENTS)} experiments rerun, {files} output files compared byte-for-byte"
                      + (f"; differing: {differing}" if differing else ""))
    assert ok
