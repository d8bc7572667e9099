"""Energy-conserving descent: bouncing Born-Infeld optimizer, benchmarks and analysis."""

from .core import (
    BbiHyperParams,
    EcdState,
    GdmHyperParams,
    Rng,
    RunSummary,
    StopReason,
    TraceRecord,
    derive_seed,
)
from .objectives import Ackley, ShallowQuadratic, TwoBasin, Zakharov, make_objective
from .optimizers import bbi_run, ecd_run, gdm_run, massive_ecd_run

__version__ = "0.1.0"
