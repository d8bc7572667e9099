"""Phase-space volume estimates for basins and trajectory diagnostics.

Near a quadratic minimum V = V_I + 1/2 sum m_i^2 (theta_i - theta_Ii)^2 the
Born-Infeld microcanonical volume of the basin (for V << E) is

    (2 pi^{n/2} / Gamma(n/2))^2 * E^{n-1} / prod(m_i) * R_n(V_I)
    R_n(V_I) = int_0^1 eta^{n-1} / (V_I + eta^2/2)^{n/2} d eta

R_n grows like |log V_I| as V_I -> 0, so low flat minima dominate. Only
ratios are meaningful (the overall constant is not fixed), which is all the
basin experiments use.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate, special

from .core import DivergedError, DomainError, InsufficientData, RegimeWarning, TraceRecord, as_vector
from .objectives import Objective, refine_minimum


def numerical_hessian(objective: Objective, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of F, symmetrised. Step h_i = rel_step * max(1, |theta_i|)."""
    theta = as_vector(theta, objective.dim)
    n = theta.size
    h = rel_step * np.maximum(1.0, np.abs(theta))
    f0 = objective.value(theta)

    def f(*shifts):
        x = theta.copy()
        for i, s in shifts:
            x[i] += s * h[i]
        val = objective.value(x)
        if not math.isfinite(val):
            raise DivergedError(f"non-finite value at {x}")
        return val

    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (f((i, 1)) - 2.0 * f0 + f((i, -1))) / (h[i] * h[i])
        for j in range(i + 1, n):
            H[i, j] = (f((i, 1), (j, 1)) - f((i, 1), (j, -1))
                       - f((i, -1), (j, 1)) + f((i, -1), (j, -1))) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


@dataclass
class BasinSpec:
    minimum_location: np.ndarray
    v_min: float
    hessian_eigenvalues: np.ndarray
    f_min: float = math.nan

    def __post_init__(self):
        self.minimum_location = np.asarray(self.minimum_location, dtype=np.float64)
        self.hessian_eigenvalues = np.asarray(self.hessian_eigenvalues, dtype=np.float64)
        if np.any(self.hessian_eigenvalues <= 0):
            raise DomainError(f"not a minimum: Hessian eigenvalues {self.hessian_eigenvalues}")
        if self.v_min < 0:
            raise DomainError(f"v_min must be non-negative, got {self.v_min}")

    @property
    def n(self) -> int:
        return self.hessian_eigenvalues.size

    @property
    def masses(self) -> np.ndarray:
        return np.sqrt(self.hessian_eigenvalues)

    @classmethod
    def from_hessian(cls, location, v_min: float, hessian, f_min: float = math.nan) -> BasinSpec:
        eig = np.linalg.eigvalsh(0.5 * (hessian + hessian.T))
        return cls(location, v_min, eig, f_min)

    def to_dict(self) -> dict:
        return {
            "minimum_location": [float(x) for x in self.minimum_location],
            "f_min": float(self.f_min),
            "v_min": float(self.v_min),
            "hessian_eigenvalues": [float(x) for x in self.hessian_eigenvalues],
            "masses": [float(x) for x in self.masses],
        }


def _radial_pieces(integrand_eta, v_i, limit):
    # split at the peak sqrt(2 V_I); integrate the tail in log(eta) so the
    # 1/eta-like decay spanning many decades stays well resolved
    a = min(math.sqrt(2.0 * v_i), 1.0)
    head, _ = integrate.quad(integrand_eta, 0.0, a, epsabs=0.0, epsrel=1e-12, limit=limit)
    tail = 0.0
    if a < 1.0:
        tail, _ = integrate.quad(lambda u: integrand_eta(math.exp(u)) * math.exp(u),
                                 math.log(a), 0.0, epsabs=0.0, epsrel=1e-12, limit=limit)
    return head + tail


def basin_radial_volume(v_i: float, n: int, limit: int = 200) -> float:
    """R_n(V_I) = int_0^1 eta^{n-1} / (V_I + eta^2/2)^{n/2} d eta, by adaptive quadrature."""
    if not v_i > 0:
        raise DomainError(f"radial volume diverges for V_I = {v_i} <= 0")
    if n < 1:
        raise DomainError("n must be >= 1")
    half_n = 0.5 * n

    def integrand(eta):
        return eta ** (n - 1) / (v_i + 0.5 * eta * eta) ** half_n

    return _radial_pieces(integrand, v_i, limit)


def hypergeometric_radial_volume(v_i: float, n: int, limit: int = 200) -> float:
    """The same radial integral in closed form, (V_I^{-n/2}/n) 2F1(n/2, n/2; n/2+1; -1/(2 V_I)).

    The 2F1 is evaluated through its Euler integral
    2F1(b, b; b+1; z) = b * int_0^1 t^{b-1} (1 - z t)^{-b} dt, with b = n/2,
    which is independent of the eta-integral used by basin_radial_volume.
    """
    if not v_i > 0:
        raise DomainError(f"V_I must be positive, got {v_i}")
    b = 0.5 * n
    z = -1.0 / (2.0 * v_i)
    # (1 - z t)^{-b} falls off on the scale t ~ 2 V_I; split there
    s = min(1.0, 20.0 * v_i)
    head, _ = integrate.quad(lambda t: (1.0 - z * t) ** (-b), 0.0, s, weight="alg",
                             wvar=(b - 1.0, 0.0), epsabs=0.0, epsrel=1e-12, limit=limit)
    tail = 0.0
    if s < 1.0:
        tail, _ = integrate.quad(lambda u: math.exp(u * b) * (1.0 - z * math.exp(u)) ** (-b),
                                 math.log(s), 0.0, epsabs=0.0, epsrel=1e-12, limit=limit)
    hyp = b * (head + tail)
    return v_i ** (-b) / n * hyp


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1}: 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (0.5 * n) / special.gamma(0.5 * n)


def volume_prefactor(n: int, energy: float, masses: Sequence[float]) -> float:
    return sphere_area(n) ** 2 * energy ** (n - 1) / float(np.prod(masses))


def basin_volume(basin: BasinSpec, energy: float, limit: int = 200) -> float:
    """Phase-space volume of a quadratic basin, up to an n-dependent constant."""
    if not energy > 0:
        raise DomainError("energy must be positive")
    if not basin.v_min < 0.1 * energy:
        warnings.warn(f"V_I = {basin.v_min} is not small compared to E = {energy}", RegimeWarning,
                      stacklevel=2)
    return volume_prefactor(basin.n, energy, basin.masses) * basin_radial_volume(basin.v_min, basin.n, limit)


def volume_ratio(first: BasinSpec, second: BasinSpec, energy: float) -> float:
    return basin_volume(first, energy) / basin_volume(second, energy)


def bi_volume_weight(v: float, energy: float, n: int) -> float:
    """Momentum-integrated BI density (E/V) (E^2/V - V)^{(n-2)/2}; diverges as V -> 0 for n >= 2."""
    if not 0 < v < energy:
        raise DomainError("need 0 < V < E")
    return energy / v * (energy * energy / v - v) ** (0.5 * (n - 2))


def nonrelativistic_volume_weight(v: float, energy: float, n: int) -> float:
    """Frictionless Newtonian density (E - V)^{(n-2)/2}; finite as V -> 0."""
    if not 0 <= v < energy:
        raise DomainError("need 0 <= V < E")
    return (energy - v) ** (0.5 * (n - 2))


# ---------------------------------------------------------------------------
# Basins of a concrete objective
# ---------------------------------------------------------------------------


def locate_basins(objective: Objective, v_ref: float = 1e-3, starts: Iterable | None = None,
                  gtol: float = 1e-10) -> list[BasinSpec]:
    """Refine each minimum, take its numerical Hessian and build BasinSpecs.

    V_I is measured from the lowest of the located minima plus ``v_ref``, so
    degenerate minima share V_I = v_ref and their volume ratio is set purely by
    the Hessians.
    """
    starts = objective.minima_guesses() if starts is None else list(starts)
    located = [refine_minimum(objective, s, gtol=gtol) for s in starts]
    values = [objective.value(x) for x in located]
    floor = min(values)
    return [
        BasinSpec.from_hessian(x, f - floor + v_ref, numerical_hessian(objective, x), f_min=f)
        for x, f in zip(located, values)
    ]


def predicted_ratio(objective: Objective, energy: float = 1.0, v_ref: float = 1e-3) -> float:
    """Vol(M_1)/Vol(M_2) for an objective with two located minima."""
    first, second = locate_basins(objective, v_ref)[:2]
    return volume_ratio(first, second, energy)


# ---------------------------------------------------------------------------
# Decay-rate fitting
# ---------------------------------------------------------------------------


def decay_rate(times, norms) -> float:
    """Least-squares rate k in |theta| ~ exp(-k t)."""
    times = np.asarray(times, dtype=np.float64)
    norms = np.asarray(norms, dtype=np.float64)
    if times.size < 10:
        raise InsufficientData(f"need at least 10 points, got {times.size}")
    slope = np.polyfit(times, np.log(norms), 1)[0]
    return float(-slope)


def fit_decay_rate(trace: Sequence[TraceRecord], dt: float, energy: float | None = None,
                   window: Callable[[TraceRecord], bool] | None = None, eps2: float = 1e-40) -> float:
    """Fit the exponential decay of |theta| over the asymptotic part of a trace.

    The default window keeps records with V/E < 0.01 and V > 1e3 eps2 (needs
    ``energy``); without an energy every record with |theta| > 0 is used.
    """
    if window is None:
        if energy is None:
            def window(rec):
                return True
        else:
            def window(rec):
                return rec.V / energy < 0.01 and rec.V > 1e3 * eps2
    picked = [r for r in trace if window(r) and r.theta_norm > 0 and math.isfinite(r.theta_norm)]
    return decay_rate([r.step * dt for r in picked], [r.theta_norm for r in picked])
