"""Shared data model: hyperparameters, optimizer state, run summaries and the RNG.

All reals are float64. The random stream is a counter-based SplitMix64
generator so that a run is fully determined by ``(seed, hyperparameters,
objective, start point)`` on any platform.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15  # 2**64 / golden ratio, odd
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB

TRACE_HEADER = ("step", "V", "pi_norm", "speed", "energy_err", "bounce")


class EcdError(Exception):
    """Base class for errors raised by this package."""


class NonFiniteValue(EcdError, ValueError):
    pass


class DimensionMismatch(EcdError, ValueError):
    pass


class NonPositiveInitialLoss(EcdError, ValueError):
    pass


class DivergedError(EcdError, FloatingPointError):
    """A loss, gradient or parameter became NaN/Inf."""


class DomainError(EcdError, ValueError):
    pass


class CalibrationFailed(EcdError, RuntimeError):
    pass


class InsufficientData(EcdError, ValueError):
    pass


class SearchFailed(EcdError, RuntimeError):
    pass


class RegimeWarning(UserWarning):
    """Emitted when an asymptotic formula is used outside its regime."""


# --------------------------------------------------------------------------
# Random numbers
# --------------------------------------------------------------------------


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche mix on 64-bit integers."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, run_index: int) -> int:
    """Seed for run ``run_index`` of an experiment with ``base_seed``.

    ``mix64(base + (index + 1) * GOLDEN_GAMMA)``. For a fixed base the map is
    injective over ``0 <= index < 2**64`` because the affine counter is
    injective and ``mix64`` is a bijection.
    """
    return mix64((base_seed & MASK64) + ((run_index + 1) * GOLDEN_GAMMA & MASK64))


class Rng:
    """Counter-based 64-bit generator.

    Draw ``k`` (k = 0, 1, ...) is ``mix64(seed + (k + 1) * GOLDEN_GAMMA)``,
    i.e. SplitMix64 written in counter form. The full state is the pair
    ``(seed, counter)``.

    * uniform: top 53 bits scaled by 2**-53, in [0, 1)
    * normal: Box-Muller cosine branch, consuming two draws
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + (self.counter * GOLDEN_GAMMA & MASK64))

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return lo + (hi - lo) * u

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normal_vector(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])

    def uniform_vector(self, lo, hi) -> np.ndarray:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return np.array([self.uniform(a, b) for a, b in zip(lo, hi)])

    def __eq__(self, other):
        return isinstance(other, Rng) and (self.seed, self.counter) == (other.seed, other.counter)

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"


# --------------------------------------------------------------------------
# Vectors
# --------------------------------------------------------------------------


def as_vector(values, dim: int | None = None) -> np.ndarray:
    """Copy ``values`` into a finite 1-D float64 array."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if dim is not None and arr.size != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"non-finite component in {arr!r}")
    return arr


def vector_norm(p) -> float:
    arr = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("vector_norm of a non-finite vector")
    return float(math.sqrt(float(np.dot(arr, arr))))


# --------------------------------------------------------------------------
# Hyperparameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BbiHyperParams:
    """Algorithm hyperparameters for the bouncing energy-conserving optimizers.

    ``rescale=False`` switches off the energy-restoration sub-step; it exists
    for the integrator-order diagnostics and is not part of the algorithm.
    """

    dt: float = 1e-2
    dV: float = 0.0
    dE: float = 0.0
    T0: int = 20
    T1: int = 100
    Nb: int = 4
    eps1: float = 1e-10
    eps2: float = 1e-40
    max_iters: int = 100_000
    adapt_dV: bool = False
    rescale: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dV < 0 or self.dE < 0:
            raise ValueError("dV and dE must be non-negative")
        if self.T0 < 1 or self.T1 < 1:
            raise ValueError("T0 and T1 must be >= 1")
        if self.Nb < 0:
            raise ValueError("Nb must be >= 0")
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("eps1 and eps2 must be positive")
        if not self.eps2 < self.eps1:
            raise ValueError("eps2 must be smaller than eps1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    def replace(self, **changes) -> BbiHyperParams:
        return BbiHyperParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class GdmHyperParams:
    eta: float = 1e-3
    mu: float = 0.9

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mu must lie in [0, 1), got {self.mu}")


# --------------------------------------------------------------------------
# State and results
# --------------------------------------------------------------------------


class StopReason(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    NEGATIVE_LOSS = "NegativeLoss"
    DIVERGED = "Diverged"


@dataclass
class EcdState:
    """Mutable optimizer state. Step functions update it in place."""

    theta: np.ndarray
    pi: np.ndarray
    energy: float
    v_current: float
    v_best: float
    f_best: float
    dV: float
    c0: int = 0
    c1: int = 0
    n_b: int = 0
    step: int = 0
    bounces: int = 0
    rng: Rng = field(default_factory=lambda: Rng(0))
    # gradient at theta, cached between steps; not serialized
    grad: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "theta": [float(x) for x in self.theta],
            "pi": [float(x) for x in self.pi],
            "energy": self.energy,
            "v_current": self.v_current,
            "v_best": self.v_best,
            "f_best": self.f_best,
            "dV": self.dV,
            "c0": self.c0,
            "c1": self.c1,
            "n_b": self.n_b,
            "step": self.step,
            "bounces": self.bounces,
            "rng": {"seed": self.rng.seed, "counter": self.rng.counter},
        }

    @classmethod
    def from_dict(cls, d: dict) -> EcdState:
        d = dict(d)
        rng = d.pop("rng")
        return cls(
            theta=np.array(d.pop("theta"), dtype=np.float64),
            pi=np.array(d.pop("pi"), dtype=np.float64),
            rng=Rng(rng["seed"], rng["counter"]),
            **d,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> EcdState:
        return cls.from_dict(json.loads(text))


@dataclass
class TraceRecord:
    step: int
    V: float
    pi_norm: float
    speed: float
    energy_err: float
    bounce: bool
    # kept in memory for diagnostics; not part of the CSV layout
    F: float = math.nan
    theta_norm: float = math.nan

    def csv_row(self) -> list:
        return [self.step, repr(self.V), repr(self.pi_norm), repr(self.speed),
                repr(self.energy_err), int(self.bounce)]


@dataclass
class RunSummary:
    final_theta: np.ndarray
    final_v: float
    stop_reason: StopReason
    steps_taken: int
    bounce_count: int
    seed: int
    best_f: float = math.nan
    final_f: float = math.nan
    optimizer: str = ""
    error: str | None = None
    trace: list[TraceRecord] | None = None

    @property
    def reached_target(self) -> bool:
        """True when the loop ended because V dropped to (or below) zero."""
        return self.stop_reason in (StopReason.CONVERGED, StopReason.NEGATIVE_LOSS)

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "seed": self.seed,
            "stop_reason": self.stop_reason.value,
            "steps_taken": self.steps_taken,
            "bounce_count": self.bounce_count,
            "final_v": _json_float(self.final_v),
            "final_f": _json_float(self.final_f),
            "best_f": _json_float(self.best_f),
            "final_theta": [_json_float(x) for x in self.final_theta],
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunSummary:
        return cls(
            final_theta=np.array([_from_json_float(x) for x in d["final_theta"]]),
            final_v=_from_json_float(d["final_v"]),
            stop_reason=StopReason(d["stop_reason"]),
            steps_taken=d["steps_taken"],
            bounce_count=d["bounce_count"],
            seed=d["seed"],
            best_f=_from_json_float(d["best_f"]),
            final_f=_from_json_float(d["final_f"]),
            optimizer=d.get("optimizer", ""),
            error=d.get("error"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for rec in self.trace or []:
            writer.writerow(rec.csv_row())
        return buf.getvalue()


def _json_float(x: float):
    # JSON has no NaN/Inf; encode them as strings so files stay strict JSON
    x = float(x)
    if math.isfinite(x):
        return x
    return str(x)


def _from_json_float(x) -> float:
    return float(x)


def read_trace_csv(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"unexpected trace header {rows[0]}")
    return [
        TraceRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), bool(int(r[5])))
        for r in rows[1:]
    ]
