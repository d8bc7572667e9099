"""Command-line front end: ``ecd {run,sweep,basins,volume,compare}``.

Settings come from three layers, later ones winning: per-command defaults,
a JSON config file (``--config``), then command-line flags. Config keys are
the flag names with dashes turned into underscores (``dt``, ``dV``, ``dE``,
``T0``, ``T1``, ``Nb``, ``eps1``, ``eps2``, ``max_iters``, ...); unknown keys
are rejected.

Exit codes: 0 success, 2 usage or config error, 3 analysis failure,
4 divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .analysis import basin_volume, locate_basins, volume_prefactor
from .core import (
    BbiHyperParams,
    CalibrationFailed,
    DomainError,
    EcdError,
    GdmHyperParams,
    SearchFailed,
    StopReason,
    as_vector,
)
from .harness import (
    BBI_KEYS,
    GDM_KEYS,
    ExperimentConfig,
    FixedPoint,
    ParamRange,
    basin_experiment,
    compare_runs,
    comparison_csv,
    dumps,
    random_search,
    write_runs,
    write_text,
)
from .objectives import OBJECTIVE_NAMES, make_objective
from .optimizers import OPTIMIZER_NAMES, ecd_run, gdm_run

EXIT_OK, EXIT_USAGE, EXIT_ANALYSIS, EXIT_DIVERGED = 0, 2, 3, 4
OUTPUT_ENV = "ECD_OUTPUT_DIR"
DEFAULT_OUTPUT = "ecd_output"

log = logging.getLogger("ecd")

COMMON_DEFAULTS = {"seed": 0, "trace_every": 1, "max_iters": 10_000, "workers": 1}
COMMAND_DEFAULTS = {
    "run": {"objective": "zakharov", "opt": "bbi"},
    "sweep": {"objective": "zakharov", "opt": "bbi", "trials": 100, "steps": 2500, "trace_every": 0},
    "basins": {
        "objective": "two_basin", "n_runs": 1000, "trace_every": 0, "max_iters": 100_000,
        "dt": 1e-2, "dV": 1e-3, "dE": 0.0, "T0": 20, "T1": 750, "Nb": 1,
    },
    "volume": {"objective": "two_basin", "energy": 1.0, "v_ref": 1e-3},
    "compare": {"objective": "zakharov", "opts": "bbi,gdm"},
}
DEFAULT_RANGES = {
    "bbi": {"dt": ("log", 1e-6, 1e-2)},
    "mecd": {"dt": ("log", 1e-6, 1e-2)},
    "gdm": {"eta": ("log", 1e-10, 0.5), "mu": ("uniform", 0.0, 1.0)},
}


def default_start(objective: str, dim: int) -> list[float]:
    """Reference start points: a Ackley local basin, the Zakharov corner,
    the far-field bisector between the two wells, and ones for the quadratic."""
    if objective == "ackley":
        return [2.0, 3.0]
    if objective == "zakharov":
        return [-1.0] * dim
    if objective == "two_basin":
        return [4.0, -4.0]
    return [1.0] * dim


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _range(text: str) -> tuple[str, tuple]:
    try:
        name, spec = text.split("=", 1)
        kind, lo, hi = spec.split(":")
        return name, (kind, float(lo), float(hi))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=KIND:LO:HI, got {text!r}")


def _epsilon(text: str):
    return text if text == "auto" else float(text)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--config", help="JSON file of settings; flags override it")
    g.add_argument("--seed", type=int, help="base seed (default 0)")
    g.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    g.add_argument("--trace-every", dest="trace_every", type=int, help="record every N-th step")
    g.add_argument("--workers", type=int, help="worker processes for batch commands")
    g.add_argument("-v", "--verbose", action="count", help="more logging to stderr")

    g = p.add_argument_group("objective")
    g.add_argument("--objective", help=f"one of {', '.join(OBJECTIVE_NAMES)}")
    g.add_argument("--dim", type=int)
    g.add_argument("--m", type=float, help="curvature of the quadratic objective")
    g.add_argument("--epsilon", type=_epsilon, help="two-basin depth correction, or 'auto'")
    g.add_argument("--theta0", type=_floats, help="start point, comma-separated")

    g = p.add_argument_group("energy-conserving optimizers")
    g.add_argument("--dt", type=float)
    g.add_argument("--dV", type=float)
    g.add_argument("--dE", type=float)
    g.add_argument("--T0", type=int)
    g.add_argument("--T1", type=int)
    g.add_argument("--Nb", type=int)
    g.add_argument("--eps1", type=float)
    g.add_argument("--eps2", type=float)
    g.add_argument("--adapt-dV", dest="adapt_dV", action=argparse.BooleanOptionalAction)
    g.add_argument("--max-iters", dest="max_iters", type=int)

    g = p.add_argument_group("gradient descent with momentum")
    g.add_argument("--eta", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--f-target", dest="f_target", type=float, help="stop GDM once F <= this")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecd", description=__doc__.split("\n\n")[0],
                                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded run; writes summary.json and trace.csv",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--opt", help=f"one of {', '.join(OPTIMIZER_NAMES)}")

    p = sub.add_parser("sweep", help="random hyperparameter search; writes search.json",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--opt")
    p.add_argument("--trials", type=int)
    p.add_argument("--steps", type=int, help="iterations per trial")
    p.add_argument("--range", dest="ranges", type=_range, action="append",
                   help="NAME=KIND:LO:HI with KIND log or uniform (repeatable)")

    p = sub.add_parser("basins", help="multi-run basin statistics; writes tally.json and ratios.csv",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--n-runs", dest="n_runs", type=int)

    p = sub.add_parser("volume", help="basin Hessians and predicted volume ratio as JSON",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--energy", type=float)
    p.add_argument("--v-ref", dest="v_ref", type=float, help="V_I of the lowest minimum")

    p = sub.add_parser("compare", help="loss-versus-step table for several optimizers",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--opts", help="comma-separated optimizer names (default bbi,gdm)")
    return parser


CONFIG_KEYS = frozenset(
    {"seed", "out", "trace_every", "workers", "verbose", "objective", "dim", "m", "epsilon", "theta0",
     "max_iters", "f_target", "opt", "opts", "trials", "steps", "ranges", "n_runs", "energy", "v_ref"}
    | set(BBI_KEYS) | set(GDM_KEYS)
)


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve(args: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    config = load_config(args.config) if getattr(args, "config", None) else {}
    s = {**COMMON_DEFAULTS, **COMMAND_DEFAULTS[args.command], **config, **flags}
    if isinstance(s.get("ranges"), list):
        s["ranges"] = dict(s["ranges"])
    if isinstance(s.get("theta0"), str):
        s["theta0"] = _floats(s["theta0"])
    return s


# ---------------------------------------------------------------------------
# Settings -> objects
# ---------------------------------------------------------------------------


def objective_params(s: dict) -> dict:
    return {k: s[k] for k in ("dim", "m", "epsilon") if k in s}


def build_objective(s: dict):
    if s["objective"] not in OBJECTIVE_NAMES:
        raise UsageError(f"unknown objective {s['objective']!r}; choose from {', '.join(OBJECTIVE_NAMES)}")
    try:
        return make_objective(s["objective"], **objective_params(s))
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))


def start_point(s: dict, objective) -> list[float]:
    theta0 = s.get("theta0") or default_start(s["objective"], objective.dim)
    try:
        return list(as_vector(theta0, objective.dim))
    except ValueError as exc:
        raise UsageError(f"theta0: {exc}")


def check_optimizer(name: str) -> str:
    if name not in OPTIMIZER_NAMES:
        raise UsageError(f"unknown optimizer {name!r}; choose from {', '.join(OPTIMIZER_NAMES)}")
    return name


def hyperparams(s: dict, optimizer: str):
    try:
        if optimizer == "gdm":
            return GdmHyperParams(**{k: s[k] for k in GDM_KEYS if k in s})
        return BbiHyperParams(**{k: s[k] for k in BBI_KEYS if k in s}, max_iters=s["max_iters"])
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad hyperparameters: {exc}")


def hyperparam_dict(s: dict, optimizer: str) -> dict:
    keys = GDM_KEYS if optimizer == "gdm" else BBI_KEYS
    return {k: s[k] for k in keys if k in s}


def output_dir(s: dict) -> Path:
    return Path(s.get("out") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _settings_record(s: dict) -> dict:
    return {k: v for k, v in sorted(s.items()) if k not in ("out", "verbose", "workers")}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(s: dict) -> int:
    opt = check_optimizer(s["opt"])
    objective = build_objective(s)
    theta0 = start_point(s, objective)
    hp = hyperparams(s, opt)
    try:
        if opt == "gdm":
            summary = gdm_run(objective, theta0, hp, s["max_iters"], seed=s["seed"],
                              f_target=s.get("f_target"), trace_every=s["trace_every"])
        else:
            summary = ecd_run(objective, theta0, hp, s["seed"], dynamics=opt, trace_every=s["trace_every"])
    except EcdError as exc:
        raise UsageError(str(exc))
    out = output_dir(s)
    record = {"settings": _settings_record(s), "summary": summary.to_dict()}
    write_text(out / "summary.json", dumps(record))
    write_text(out / "trace.csv", summary.trace_csv())
    print(dumps(summary.to_dict()), end="")
    if summary.stop_reason is StopReason.DIVERGED:
        log.error("run diverged: %s", summary.error)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(s: dict) -> int:
    opt = check_optimizer(s["opt"])
    objective = build_objective(s)
    ranges = s.get("ranges") or DEFAULT_RANGES[opt]
    try:
        cfg = ExperimentConfig(
            objective=s["objective"], objective_params=objective_params(s), optimizer=opt,
            hyperparams=hyperparam_dict(s, opt), n_runs=1, base_seed=s["seed"],
            init=FixedPoint(tuple(start_point(s, objective))), max_iters=s["steps"],
            ranges={k: ParamRange(*v) for k, v in ranges.items()}, workers=s["workers"],
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    try:
        result = random_search(cfg, s["trials"], s["steps"])
    except SearchFailed as exc:
        log.error("%s", exc)
        return EXIT_ANALYSIS
    write_text(output_dir(s) / "search.json", dumps({"settings": _settings_record(s), **result.to_dict()}))
    print(dumps({"best_params": result.best_params, "best_score": result.best_score,
                 "best_trial": result.best_trial}), end="")
    return EXIT_OK


def cmd_basins(s: dict) -> int:
    objective = build_objective(s)
    try:
        cfg = ExperimentConfig(
            objective=s["objective"], objective_params=objective_params(s), optimizer="bbi",
            hyperparams=hyperparam_dict(s, "bbi"), n_runs=s["n_runs"], base_seed=s["seed"],
            init=FixedPoint(tuple(start_point(s, objective))), max_iters=s["max_iters"],
            trace_every=s["trace_every"], workers=s["workers"],
        )
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc))
    try:
        basins = locate_basins(objective)
        tally, summaries = basin_experiment(cfg, [b.minimum_location for b in basins])
        predicted = basin_volume(basins[0], 1.0) / basin_volume(basins[1], 1.0)
    except (CalibrationFailed, DomainError, IndexError) as exc:
        log.error("basin analysis failed: %s", exc)
        return EXIT_ANALYSIS
    out = output_dir(s)
    record = {"settings": _settings_record(s), "tally": tally.to_dict(), "predicted_ratio": predicted,
              "centers": [[float(x) for x in b.minimum_location] for b in basins]}
    write_text(out / "tally.json", dumps(record))
    write_text(out / "ratios.csv", tally.ratios_csv())
    write_runs(out, summaries)
    print(dumps({"tally": tally.to_dict(), "predicted_ratio": predicted}), end="")
    return EXIT_OK


def volume_report(objective, energy: float, v_ref: float) -> dict:
    basins = locate_basins(objective, v_ref)
    rows = []
    for b in basins:
        rows.append(b.to_dict() | {
            "prefactor": volume_prefactor(b.n, energy, b.masses),
            "volume": basin_volume(b, energy),
        })
    ratio = rows[0]["volume"] / rows[1]["volume"] if len(rows) >= 2 else None
    return {"energy": energy, "v_ref": v_ref, "basins": rows, "predicted_ratio": ratio}


def cmd_volume(s: dict) -> int:
    objective = build_objective(s)
    try:
        report = volume_report(objective, s["energy"], s["v_ref"])
    except (CalibrationFailed, DomainError, FloatingPointError) as exc:
        log.error("volume analysis failed: %s", exc)
        return EXIT_ANALYSIS
    text = dumps(report)
    write_text(output_dir(s) / "volume.json", text)
    print(text, end="")
    return EXIT_OK


def cmd_compare(s: dict) -> int:
    names = [check_optimizer(n.strip()) for n in str(s["opts"]).split(",") if n.strip()]
    if len(names) < 2:
        raise UsageError("compare needs at least two optimizers")
    objective = build_objective(s)
    theta0 = start_point(s, objective)
    specs = [(n, hyperparams(s, n)) for n in names]
    runs = compare_runs(lambda: build_objective(s), theta0, specs, s["max_iters"], s["seed"],
                        trace_every=max(1, s["trace_every"]), f_target=s.get("f_target"))
    out = output_dir(s)
    write_text(out / "compare.csv", comparison_csv(names, runs))
    write_text(out / "compare.json", dumps({"settings": _settings_record(s),
                                            "runs": [r.to_dict() for r in runs]}))
    print(dumps([r.to_dict() for r in runs]), end="")
    if any(r.stop_reason is StopReason.DIVERGED for r in runs):
        return EXIT_DIVERGED
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "basins": cmd_basins, "volume": cmd_volume,
            "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        s = resolve(args)
        verbosity = s.get("verbose") or 0
        logging.basicConfig(level=logging.WARNING - 10 * min(verbosity, 2),
                            format="%(levelname)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](s)
    except UsageError as exc:
        print(f"ecd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
