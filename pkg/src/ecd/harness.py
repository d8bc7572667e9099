"""Seeded multi-run experiments: basin statistics, multistart success rates,
optimizer comparisons and a random hyperparameter search.

Run ``i`` of an experiment always uses seed ``derive_seed(base_seed, i)``, so
any single run can be re-executed in isolation. Aggregates are folds over
run index order, so they do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .core import (
    BbiHyperParams,
    EcdError,
    GdmHyperParams,
    Rng,
    RunSummary,
    SearchFailed,
    StopReason,
    as_vector,
    derive_seed,
    mix64,
)
from .objectives import OBJECTIVE_NAMES, Objective, make_objective, refine_minimum
from .optimizers import OPTIMIZER_NAMES, ecd_run, gdm_run

INIT_SALT = 0x1A17_5EED  # separates start-point streams from run streams

BBI_KEYS = ("dt", "dV", "dE", "T0", "T1", "Nb", "eps1", "eps2", "adapt_dV", "rescale")
GDM_KEYS = ("eta", "mu")
OBJECTIVE_KEYS = ("dim", "m", "epsilon", "widths")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    theta0: tuple[float, ...]

    def point(self, rng: Rng) -> np.ndarray:
        return np.array(self.theta0, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"kind": "fixed", "theta0": list(self.theta0)}


@dataclass(frozen=True)
class UniformBox:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box bounds differ in length")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box bounds need lo < hi componentwise")

    def point(self, rng: Rng) -> np.ndarray:
        return rng.uniform_vector(self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


def init_from_dict(d: dict) -> FixedPoint | UniformBox:
    kind = d.get("kind")
    if kind == "fixed":
        return FixedPoint(tuple(float(x) for x in d["theta0"]))
    if kind == "box":
        return UniformBox(tuple(float(x) for x in d["lo"]), tuple(float(x) for x in d["hi"]))
    raise ValueError(f"unknown init kind {kind!r}; expected 'fixed' or 'box'")


@dataclass(frozen=True)
class ParamRange:
    """Search range. ``log`` samples log-uniformly, ``uniform`` linearly."""

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("log", "uniform"):
            raise ValueError(f"range kind must be 'log' or 'uniform', got {self.kind!r}")
        if not self.lo <= self.hi:
            raise ValueError(f"range needs lo <= hi, got [{self.lo}, {self.hi}]")
        if self.kind == "log" and not self.lo > 0:
            raise ValueError("log range needs lo > 0")

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def sample(self, rng: Rng) -> float:
        if self.degenerate:
            return self.lo
        if self.kind == "log":
            return math.exp(rng.uniform(math.log(self.lo), math.log(self.hi)))
        return rng.uniform(self.lo, self.hi)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a batch of runs.

    Runs are grouped ``restarts`` at a time: runs ``p*restarts ... p*restarts +
    restarts - 1`` share start point ``p`` and differ only in their seed.
    """

    objective: str = "two_basin"
    objective_params: dict = field(default_factory=dict)
    optimizer: str = "bbi"
    hyperparams: dict = field(default_factory=dict)
    n_runs: int = 1
    base_seed: int = 0
    init: FixedPoint | UniformBox = field(default_factory=lambda: FixedPoint((0.0, 0.0)))
    restarts: int = 1
    max_iters: int = 100_000
    trace_every: int = 0
    f_target: float | None = None
    success_threshold: float | None = None
    ranges: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVE_NAMES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.optimizer not in OPTIMIZER_NAMES:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 0 or self.trace_every < 0:
            raise ValueError("max_iters and trace_every must be non-negative")
        if isinstance(self.init, dict):
            self.init = init_from_dict(self.init)
        bad = set(self.objective_params) - set(OBJECTIVE_KEYS)
        if bad:
            raise ValueError(f"unknown objective parameters {sorted(bad)}")
        allowed = BBI_KEYS if self.optimizer != "gdm" else GDM_KEYS
        bad = set(self.hyperparams) - set(allowed)
        if bad:
            raise ValueError(f"unknown {self.optimizer} hyperparameters {sorted(bad)}")
        self.ranges = {k: r if isinstance(r, ParamRange) else ParamRange(*r) for k, r in self.ranges.items()}
        bad = set(self.ranges) - set(allowed)
        if bad:
            raise ValueError(f"unknown search parameters {sorted(bad)}")
        self.build_hyperparams()  # validate values early

    def build_objective(self) -> Objective:
        return make_objective(self.objective, **self.objective_params)

    def build_hyperparams(self, overrides: dict | None = None) -> BbiHyperParams | GdmHyperParams:
        params = {**self.hyperparams, **(overrides or {})}
        if self.optimizer == "gdm":
            return GdmHyperParams(**params)
        return BbiHyperParams(**params, max_iters=self.max_iters)

    def start_point(self, point_index: int) -> np.ndarray:
        return self.init.point(Rng(derive_seed(mix64(self.base_seed ^ INIT_SALT), point_index)))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["init"] = self.init.to_dict()
        d["ranges"] = {k: [r.kind, r.lo, r.hi] for k, r in sorted(self.ranges.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        if "init" in d:
            d["init"] = init_from_dict(d["init"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def run_single(objective: Objective, theta0, optimizer: str, hp, seed: int, *, max_iters: int,
               trace_every: int = 0, f_target: float | None = None) -> RunSummary:
    """One run of any optimizer. Errors are caught and recorded in the summary."""
    try:
        if optimizer == "gdm":
            return gdm_run(objective, theta0, hp, max_iters, seed=seed, f_target=f_target,
                           trace_every=trace_every)
        return ecd_run(objective, theta0, hp, seed, dynamics=optimizer, trace_every=trace_every)
    except (EcdError, ValueError, FloatingPointError) as exc:
        theta = np.asarray(theta0, dtype=np.float64).reshape(-1)
        return RunSummary(theta.copy(), math.nan, StopReason.DIVERGED, 0, 0, seed,
                          optimizer=optimizer, error=f"{type(exc).__name__}: {exc}")


def run_index(cfg: ExperimentConfig, index: int) -> RunSummary:
    """Run ``index`` of the experiment, exactly as run_experiment would produce it."""
    theta0 = cfg.start_point(index // cfg.restarts)
    return run_single(cfg.build_objective(), theta0, cfg.optimizer, cfg.build_hyperparams(),
                      derive_seed(cfg.base_seed, index), max_iters=cfg.max_iters,
                      trace_every=cfg.trace_every, f_target=cfg.f_target)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def run_experiment(cfg: ExperimentConfig) -> list[RunSummary]:
    return _map(partial(run_index, cfg), range(cfg.n_runs), cfg.workers)


# ---------------------------------------------------------------------------
# Basin statistics
# ---------------------------------------------------------------------------


def classify_basin(final_theta, centers: Sequence, converged: bool = True) -> int | None:
    """1-based label of the nearest center, or None (unresolved) if not converged.

    Exact ties go to the lowest label.
    """
    if not converged:
        return None
    theta = np.asarray(final_theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        return None
    dists = [float(np.linalg.norm(theta - np.asarray(c))) for c in centers]
    return int(np.argmin(dists)) + 1  # argmin picks the first minimum


@dataclass
class BasinTally:
    """Counts per basin plus the ratio counts[0]/counts[1] after every run."""

    counts: list[int]
    unresolved: int = 0
    ratios: list[float] = field(default_factory=list)

    @classmethod
    def from_labels(cls, labels: Sequence[int | None], n_basins: int = 2) -> BasinTally:
        tally = cls([0] * n_basins)
        for label in labels:
            tally.add(label)
        return tally

    def add(self, label: int | None) -> None:
        if label is None:
            self.unresolved += 1
        else:
            self.counts[label - 1] += 1
        self.ratios.append(self.ratio)

    @property
    def completed(self) -> int:
        return sum(self.counts) + self.unresolved

    @property
    def ratio(self) -> float:
        a, b = self.counts[0], self.counts[1]
        if b == 0:
            return math.inf if a else math.nan
        return a / b

    def tail_fluctuation(self, window: int = 200) -> float:
        """max |r_k - r_final| / r_final over the last ``window`` partial ratios."""
        tail = np.array(self.ratios[-window:])
        final = self.ratios[-1]
        return float(np.max(np.abs(tail - final)) / final)

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "unresolved": self.unresolved,
                "completed": self.completed, "ratio": _jsonable(self.ratio)}

    def ratios_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["run_index", "ratio"])
        for i, r in enumerate(self.ratios):
            writer.writerow([i, repr(float(r))])
        return buf.getvalue()


def basin_centers(objective: Objective) -> list[np.ndarray]:
    return [refine_minimum(objective, g) for g in objective.minima_guesses()]


def basin_experiment(cfg: ExperimentConfig, centers: Sequence | None = None
                     ) -> tuple[BasinTally, list[RunSummary]]:
    """Run the batch and tally which minimum each converged run ends nearest to."""
    if centers is None:
        centers = basin_centers(cfg.build_objective())
    summaries = run_experiment(cfg)
    labels = [classify_basin(s.final_theta, centers, s.reached_target) for s in summaries]
    return BasinTally.from_labels(labels, len(centers)), summaries


# ---------------------------------------------------------------------------
# Multistart success
# ---------------------------------------------------------------------------


@dataclass
class MultistartResult:
    points: int
    successes: int
    # number of runs used per point (restarts stop at the first success)
    attempts: list[int]
    succeeded: list[bool]

    @property
    def rate(self) -> float:
        return self.successes / self.points

    def to_dict(self) -> dict:
        return asdict(self) | {"rate": self.rate}


def run_succeeded(summary: RunSummary, threshold: float | None) -> bool:
    if threshold is None:
        return summary.reached_target
    return summary.best_f < threshold


def _point_attempts(cfg: ExperimentConfig, point: int) -> tuple[bool, int]:
    for r in range(cfg.restarts):
        if run_succeeded(run_index(cfg, point * cfg.restarts + r), cfg.success_threshold):
            return True, r + 1
    return False, cfg.restarts


def multistart_experiment(cfg: ExperimentConfig) -> MultistartResult:
    """A start point succeeds if any of its ``restarts`` runs succeeds.

    ``cfg.n_runs`` counts start points here. Restarts from a point stop at the
    first success; the runs that do happen are identical to run_experiment's.
    """
    results = _map(partial(_point_attempts, cfg), range(cfg.n_runs), cfg.workers)
    ok = [r[0] for r in results]
    return MultistartResult(cfg.n_runs, sum(ok), [r[1] for r in results], ok)


# ---------------------------------------------------------------------------
# Random search
# ---------------------------------------------------------------------------


@dataclass
class TrialRecord:
    index: int
    params: dict
    score: float
    stop_reason: str


@dataclass
class SearchResult:
    best_params: dict
    best_score: float
    best_trial: int
    trials: list[TrialRecord]

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params,
            "best_score": _jsonable(self.best_score),
            "best_trial": self.best_trial,
            "trials": [{"index": t.index, "params": t.params, "score": _jsonable(t.score),
                        "stop_reason": t.stop_reason} for t in self.trials],
        }


def sample_params(ranges: dict[str, ParamRange], rng: Rng) -> dict:
    return {name: ranges[name].sample(rng) for name in sorted(ranges)}


def _trial(cfg: ExperimentConfig, theta0, steps: int, index: int) -> TrialRecord:
    seed = derive_seed(cfg.base_seed, index)
    params = sample_params(cfg.ranges, Rng(seed))
    try:
        hp = cfg.build_hyperparams(params)
    except ValueError as exc:
        return TrialRecord(index, params, math.nan, f"Invalid: {exc}")
    if cfg.optimizer != "gdm":
        hp = hp.replace(max_iters=steps)
    run = run_single(cfg.build_objective(), theta0, cfg.optimizer, hp, seed, max_iters=steps)
    score = run.best_f if run.stop_reason is not StopReason.DIVERGED else math.nan
    return TrialRecord(index, params, score, run.stop_reason.value)


def random_search(cfg: ExperimentConfig, trials: int, steps_per_trial: int) -> SearchResult:
    """Sample ``cfg.ranges`` and keep the trial with the lowest loss seen during its run.

    Trial ``k`` draws its parameters (in sorted-name order) and its bounce
    stream from ``derive_seed(base_seed, k)``. Diverged trials are excluded;
    ties go to the earlier trial. All-degenerate ranges need just one trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if cfg.ranges and all(r.degenerate for r in cfg.ranges.values()):
        trials = 1
    theta0 = cfg.start_point(0)
    records = _map(partial(_trial, cfg, theta0, steps_per_trial), range(trials), cfg.workers)
    best = None
    for rec in records:
        if math.isfinite(rec.score) and (best is None or rec.score < best.score):
            best = rec
    if best is None:
        raise SearchFailed(f"all {trials} trials diverged")
    return SearchResult(best.params, best.score, best.index, records)


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------


def compare_runs(objective_factory: Callable[[], Objective], theta0,
                 specs: Sequence[tuple[str, Any]], max_iters: int, seed: int,
                 trace_every: int = 1, f_target: float | None = None) -> list[RunSummary]:
    """Run each (optimizer name, hyperparameters) from the same start and seed."""
    out = []
    for name, hp in specs:
        if name != "gdm":
            hp = hp.replace(max_iters=max_iters)
        out.append(run_single(objective_factory(), theta0, name, hp, seed, max_iters=max_iters,
                              trace_every=trace_every, f_target=f_target))
    return out


def comparison_csv(names: Sequence[str], runs: Sequence[RunSummary]) -> str:
    """Joined loss-versus-step table. Cells after a run has stopped are left empty."""
    header = ["step"]
    seen: dict[str, int] = {}
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        header.append(f"loss_{name}" if seen[name] == 1 else f"loss_{name}_{seen[name]}")
    columns = [{rec.step: rec.F for rec in run.trace or []} for run in runs]
    steps = sorted(set().union(*columns))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for step in steps:
        writer.writerow([step] + [repr(float(c[step])) if step in c else "" for c in columns])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, strict (non-finite floats become strings)."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text(path: os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def write_runs(out_dir: os.PathLike, summaries: Sequence[RunSummary], name: str = "runs.json") -> None:
    """Write all summaries as one JSON file plus a trace CSV per traced run."""
    out_dir = Path(out_dir)
    write_text(out_dir / name, dumps([s.to_dict() for s in summaries]))
    for i, s in enumerate(summaries):
        if s.trace is not None:
            write_text(out_dir / "traces" / f"run_{i:05d}.csv", s.trace_csv())
