import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecd.core import BbiHyperParams, SearchFailed, StopReason, derive_seed
from ecd.harness import (
    BasinTally,
    ExperimentConfig,
    FixedPoint,
    ParamRange,
    UniformBox,
    basin_experiment,
    classify_basin,
    compare_runs,
    comparison_csv,
    dumps,
    multistart_experiment,
    random_search,
    run_experiment,
    write_runs,
)
from ecd.objectives import Ackley, make_objective
from ecd.optimizers import bbi_run

CENTERS = [np.array([-2.0, -2.0]), np.array([2.0, 2.0])]


def ackley_cfg(**kw):
    base = dict(objective="ackley", optimizer="bbi", hyperparams=dict(dt=1e-2, dE=2.0, dV=5e-4),
                n_runs=3, base_seed=5, init=UniformBox((-4.0, -4.0), (4.0, 4.0)), max_iters=2000)
    return ExperimentConfig(**{**base, **kw})


def test_single_run_equals_direct_call():
    cfg = ackley_cfg(n_runs=1, trace_every=10)
    [summary] = run_experiment(cfg)
    direct = bbi_run(Ackley(), cfg.start_point(0), cfg.build_hyperparams(), derive_seed(5, 0), trace_every=10)
    assert summary.to_json() == direct.to_json()
    assert summary.trace_csv() == direct.trace_csv()


def test_experiment_is_deterministic_and_worker_independent():
    cfg = ackley_cfg(n_runs=4)
    a = [s.to_json() for s in run_experiment(cfg)]
    b = [s.to_json() for s in run_experiment(cfg)]
    c = [s.to_json() for s in run_experiment(ackley_cfg(n_runs=4, workers=2))]
    assert a == b == c


def test_runs_carry_their_seeds():
    summaries = run_experiment(ackley_cfg(n_runs=3))
    assert [s.seed for s in summaries] == [derive_seed(5, i) for i in range(3)]


def test_restarts_share_start_points():
    cfg = ackley_cfg(n_runs=4, restarts=2)
    assert np.array_equal(cfg.start_point(0), cfg.start_point(0))
    assert not np.array_equal(cfg.start_point(0), cfg.start_point(1))
    box = cfg.init
    p = cfg.start_point(3)
    assert all(lo <= x < hi for x, lo, hi in zip(p, box.lo, box.hi))


def test_run_errors_are_recorded_not_raised():
    cfg = ExperimentConfig(objective="quadratic", hyperparams=dict(dV=10.0), n_runs=2,
                           init=FixedPoint((1.0,)), max_iters=10)
    summaries = run_experiment(cfg)
    assert all(s.stop_reason is StopReason.DIVERGED for s in summaries)
    assert all("NonPositiveInitialLoss" in s.error for s in summaries)


@pytest.mark.parametrize("theta, converged, label", [
    ((-2.01, -1.98), True, 1),
    ((1.5, 2.5), True, 2),
    ((0.0, 0.0), True, 1),  # equidistant: lowest label wins
    ((-2.0, -2.0), False, None),
])
def test_classify_basin(theta, converged, label):
    assert classify_basin(theta, CENTERS, converged) == label


@given(st.lists(st.sampled_from([1, 2, None]), min_size=1, max_size=200))
def test_tally_invariants(labels):
    tally = BasinTally.from_labels(labels)
    assert sum(tally.counts) + tally.unresolved == len(labels) == tally.completed
    assert len(tally.ratios) == len(labels)
    assert tally.counts[0] == labels.count(1) and tally.unresolved == labels.count(None)


@given(st.permutations([1, 1, 2, None, 1, 2, 2, 1]))
def test_tally_final_ratio_is_order_independent(labels):
    assert BasinTally.from_labels(labels).ratio == 4 / 3


def test_ratio_csv_layout():
    text = BasinTally.from_labels([2, 1, 1]).ratios_csv()
    assert text == "run_index,ratio\n0,0.0\n1,1.0\n2,2.0\n"


def test_basin_experiment_small():
    cfg = ExperimentConfig(objective="two_basin", hyperparams=dict(dt=1e-2, dV=1e-3, T0=20, T1=750, Nb=1),
                           n_runs=12, init=FixedPoint((4.0, -4.0)), base_seed=3)
    tally, summaries = basin_experiment(cfg)
    assert tally.completed == 12 and len(summaries) == 12
    assert tally.unresolved == sum(not s.reached_target for s in summaries)


def test_without_bounces_symmetric_start_does_not_mix():
    cfg = ExperimentConfig(objective="two_basin", hyperparams=dict(dt=1e-2, dV=1e-3, T0=10**9, T1=10**9, Nb=0),
                           n_runs=10, init=FixedPoint((0.0, 0.0)), base_seed=1)
    tally, _ = basin_experiment(cfg)
    assert sorted(tally.counts)[0] == 0  # every resolved run lands in the same basin


def test_multistart_counts():
    result = multistart_experiment(ackley_cfg(n_runs=3, restarts=2, max_iters=500))
    assert result.points == 3 and len(result.attempts) == 3
    assert result.successes == sum(result.succeeded)
    assert all(1 <= a <= 2 for a in result.attempts)


def zakharov_search_cfg(**kw):
    base = dict(objective="zakharov", optimizer="bbi",
                hyperparams=dict(dE=0.0, dV=1e-22, T0=10**9, T1=10**9, Nb=0),
                init=FixedPoint(tuple([-1.0] * 10)), base_seed=0, ranges={"dt": ("log", 1e-6, 1e-2)})
    return ExperimentConfig(**{**base, **kw})


def test_search_finds_a_working_step_on_zakharov():
    result = random_search(zakharov_search_cfg(), trials=20, steps_per_trial=2500)
    assert result.best_score < 1.0
    assert 1e-6 <= result.best_params["dt"] <= 1e-2
    scores = [t.score for t in result.trials if math.isfinite(t.score)]
    assert result.best_score == min(scores)


def test_search_is_deterministic():
    a = random_search(zakharov_search_cfg(), trials=5, steps_per_trial=200)
    b = random_search(zakharov_search_cfg(), trials=5, steps_per_trial=200)
    assert dumps(a.to_dict()) == dumps(b.to_dict())


def test_degenerate_range_uses_one_trial():
    result = random_search(zakharov_search_cfg(ranges={"dt": ("log", 2e-3, 2e-3)}), trials=50, steps_per_trial=100)
    assert len(result.trials) == 1 and result.best_params == {"dt": 2e-3}


def test_all_diverged_raises():
    with pytest.raises(SearchFailed):
        random_search(zakharov_search_cfg(ranges={"dt": ("log", 1.0, 10.0)}), trials=3, steps_per_trial=200)


def test_ties_go_to_earlier_trial():
    # zero-length runs all score the starting loss
    result = random_search(zakharov_search_cfg(), trials=4, steps_per_trial=0)
    assert result.best_trial == 0


@pytest.mark.parametrize("args", [("cubic", 1, 2), ("log", 0.0, 1.0), ("uniform", 2.0, 1.0)])
def test_bad_ranges(args):
    with pytest.raises(ValueError):
        ParamRange(*args)


@given(st.integers(0, 2**32))
def test_log_uniform_samples_stay_in_range(seed):
    from ecd.core import Rng
    r = ParamRange("log", 1e-10, 0.5)
    x = r.sample(Rng(seed))
    assert 1e-10 <= x <= 0.5


def test_config_json_round_trip_and_unknown_keys():
    cfg = zakharov_search_cfg(n_runs=3, trace_every=5)
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back.to_json() == cfg.to_json()
    d = json.loads(cfg.to_json())
    d["colour"] = "blue"
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(d)


@pytest.mark.parametrize("kw", [
    {"n_runs": 0}, {"objective": "nope"}, {"optimizer": "adam"}, {"hyperparams": {"eta": 0.1}},
    {"init": {"kind": "box", "lo": [1.0, 0.0], "hi": [0.0, 1.0]}},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"objective": "two_basin", **kw})


def test_comparison_table():
    z = lambda: make_objective("zakharov", dim=3)
    hp = BbiHyperParams(dt=2e-3, dE=0.0, T0=10**9, T1=10**9, Nb=0)
    runs = compare_runs(z, [-1.0] * 3, [("bbi", hp), ("bbi", hp)], max_iters=50, seed=0)
    text = comparison_csv(["bbi", "bbi"], runs)
    lines = text.splitlines()
    assert lines[0] == "step,loss_bbi,loss_bbi_2"
    assert all(row.split(",")[1] == row.split(",")[2] for row in lines[1:])
    assert len(lines) == 52


def test_write_runs(tmp_path):
    summaries = run_experiment(ackley_cfg(n_runs=2, trace_every=100))
    write_runs(tmp_path, summaries)
    assert json.loads((tmp_path / "runs.json").read_text())[1]["seed"] == derive_seed(5, 1)
    assert (tmp_path / "traces" / "run_00001.csv").read_text().startswith("step,V,")
