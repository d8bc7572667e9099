"""Benchmark landscapes with hand-coded gradients and Hessians."""

from __future__ import annotations

import math

import numpy as np

from .core import CalibrationFailed, DimensionMismatch, Rng, as_vector

TWO_PI = 2.0 * math.pi


class Objective:
    """A differentiable scalar field F(theta).

    Subclasses implement ``value`` and ``grad``; ``hess`` is optional.
    ``resample`` is the hook for minibatch-style time dependence: it may change
    the internal sample set but never the dimension.
    """

    name = "objective"
    dim: int

    def value(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.name} has no analytic Hessian")

    def value_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(theta), self.grad(theta)

    @property
    def has_hess(self) -> bool:
        return type(self).hess is not Objective.hess

    def resample(self, rng: Rng) -> None:
        """Deterministic benchmarks ignore this."""

    def minima_guesses(self) -> list[np.ndarray]:
        """Starting points for locating the minima of interest."""
        return [np.zeros(self.dim)]

    def __call__(self, theta) -> float:
        return self.value(theta)

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(f"{self.name} expects dimension {self.dim}, got shape {theta.shape}")
        return theta


class Ackley(Objective):
    """Two-dimensional Ackley function; global minimum 0 at the origin."""

    name = "ackley"
    dim = 2

    def value(self, theta):
        x, y = self._check(theta)
        r = math.sqrt(0.5 * (x * x + y * y))
        return (-20.0 * math.exp(-0.2 * r)
                - math.exp(0.5 * (math.cos(TWO_PI * x) + math.cos(TWO_PI * y)))
                + math.e + 20.0)

    def grad(self, theta):
        x, y = self._check(theta)
        r = math.sqrt(0.5 * (x * x + y * y))
        ec = math.exp(0.5 * (math.cos(TWO_PI * x) + math.cos(TWO_PI * y)))
        # the cone term is non-smooth at the origin; use the zero subgradient
        radial = 0.0 if r == 0.0 else 2.0 * math.exp(-0.2 * r) / r
        return np.array([
            radial * x + math.pi * math.sin(TWO_PI * x) * ec,
            radial * y + math.pi * math.sin(TWO_PI * y) * ec,
        ])

    def value_and_grad(self, theta):
        x, y = self._check(theta)
        r = math.sqrt(0.5 * (x * x + y * y))
        er = math.exp(-0.2 * r)
        ec = math.exp(0.5 * (math.cos(TWO_PI * x) + math.cos(TWO_PI * y)))
        radial = 0.0 if r == 0.0 else 2.0 * er / r
        f = -20.0 * er - ec + math.e + 20.0
        return f, np.array([radial * x + math.pi * math.sin(TWO_PI * x) * ec,
                            radial * y + math.pi * math.sin(TWO_PI * y) * ec])

    def hess(self, theta):
        x, y = self._check(theta)
        r = math.sqrt(0.5 * (x * x + y * y))
        if r == 0.0:
            raise ValueError("Ackley Hessian is undefined at the origin")
        er = math.exp(-0.2 * r)
        ec = math.exp(0.5 * (math.cos(TWO_PI * x) + math.cos(TWO_PI * y)))
        sx, sy = math.sin(TWO_PI * x), math.sin(TWO_PI * y)
        cx, cy = math.cos(TWO_PI * x), math.cos(TWO_PI * y)
        # d/dx_j (2 e^{-0.2 r} / r) = -(0.2/r + 1/r^2) * (2 e^{-0.2 r} / r) * x_j / 2
        g = 2.0 * er / r
        dg = -0.5 * (0.2 / r + 1.0 / (r * r)) * g
        h = np.empty((2, 2))
        h[0, 0] = g + dg * x * x + 2 * math.pi ** 2 * cx * ec - math.pi ** 2 * sx * sx * ec
        h[1, 1] = g + dg * y * y + 2 * math.pi ** 2 * cy * ec - math.pi ** 2 * sy * sy * ec
        h[0, 1] = h[1, 0] = dg * x * y - math.pi ** 2 * sx * sy * ec
        return h


class Zakharov(Objective):
    """sum(theta^2) + S^2 + S^4 with S = 1/2 sum(i * theta_i), i = 1..n."""

    name = "zakharov"

    def __init__(self, dim: int = 10):
        if dim < 1:
            raise DimensionMismatch("Zakharov needs dim >= 1")
        self.dim = dim
        self._half_i = 0.5 * np.arange(1, dim + 1, dtype=np.float64)

    def value(self, theta):
        theta = self._check(theta)
        s = float(self._half_i @ theta)
        s2 = s * s
        return float(theta @ theta) + s2 + s2 * s2

    def grad(self, theta):
        theta = self._check(theta)
        s = float(self._half_i @ theta)
        return 2.0 * theta + (2.0 * s + 4.0 * s * s * s) * self._half_i

    def value_and_grad(self, theta):
        theta = self._check(theta)
        s = float(self._half_i @ theta)
        s2 = s * s
        return (float(theta @ theta) + s2 + s2 * s2,
                2.0 * theta + (2.0 * s + 4.0 * s2 * s) * self._half_i)

    def hess(self, theta):
        theta = self._check(theta)
        s = float(self._half_i @ theta)
        return 2.0 * np.eye(self.dim) + (2.0 + 12.0 * s * s) * np.outer(self._half_i, self._half_i)


class TwoBasin(Objective):
    """Two Gaussian wells in a quartic confinement.

    F = -exp(-w1 |t - c1|^2) - (1 - epsilon) exp(-w2 |t - c2|^2)
        + k |t - c1|^2 |t - c2|^2 + 1

    With the default widths (0.4, 0.8) the well at ``c1`` is the wider one.
    ``epsilon`` equalises the two minimum values; see :func:`calibrate_epsilon`.
    """

    name = "two_basin"
    dim = 2

    def __init__(self, epsilon: float = 0.0, widths=(0.4, 0.8),
                 centers=((-2.0, -2.0), (2.0, 2.0)), coupling: float = 1e-3):
        self.epsilon = float(epsilon)
        self.w1, self.w2 = (float(w) for w in widths)
        self.c1 = np.array(centers[0], dtype=np.float64)
        self.c2 = np.array(centers[1], dtype=np.float64)
        self.coupling = float(coupling)

    def _parts(self, theta):
        d1 = theta - self.c1
        d2 = theta - self.c2
        r1 = float(d1 @ d1)
        r2 = float(d2 @ d2)
        e1 = math.exp(-self.w1 * r1)
        e2 = (1.0 - self.epsilon) * math.exp(-self.w2 * r2)
        return d1, d2, r1, r2, e1, e2

    def value(self, theta):
        theta = self._check(theta)
        _, _, r1, r2, e1, e2 = self._parts(theta)
        return -e1 - e2 + self.coupling * r1 * r2 + 1.0

    def grad(self, theta):
        theta = self._check(theta)
        d1, d2, r1, r2, e1, e2 = self._parts(theta)
        return (2.0 * self.w1 * e1 * d1 + 2.0 * self.w2 * e2 * d2
                + self.coupling * (2.0 * r2 * d1 + 2.0 * r1 * d2))

    def value_and_grad(self, theta):
        theta = self._check(theta)
        d1, d2, r1, r2, e1, e2 = self._parts(theta)
        f = -e1 - e2 + self.coupling * r1 * r2 + 1.0
        g = ((2.0 * self.w1 * e1 + 2.0 * self.coupling * r2) * d1
             + (2.0 * self.w2 * e2 + 2.0 * self.coupling * r1) * d2)
        return f, g

    def hess(self, theta):
        theta = self._check(theta)
        d1, d2, r1, r2, e1, e2 = self._parts(theta)
        eye = np.eye(2)
        h = e1 * (2.0 * self.w1 * eye - 4.0 * self.w1 ** 2 * np.outer(d1, d1))
        h += e2 * (2.0 * self.w2 * eye - 4.0 * self.w2 ** 2 * np.outer(d2, d2))
        h += self.coupling * (2.0 * (r1 + r2) * eye + 4.0 * (np.outer(d1, d2) + np.outer(d2, d1)))
        return h

    def minima_guesses(self):
        return [self.c1.copy(), self.c2.copy()]

    def with_epsilon(self, epsilon: float) -> TwoBasin:
        return TwoBasin(epsilon, (self.w1, self.w2), (self.c1, self.c2), self.coupling)


class ShallowQuadratic(Objective):
    """1/2 m^2 |theta|^2, the model of a shallow direction."""

    name = "quadratic"

    def __init__(self, m: float = 1.0, dim: int = 1):
        if not m > 0:
            raise ValueError("m must be positive")
        self.m = float(m)
        self.dim = dim

    def value(self, theta):
        theta = self._check(theta)
        return 0.5 * self.m ** 2 * float(theta @ theta)

    def grad(self, theta):
        return self.m ** 2 * self._check(theta)

    def hess(self, theta):
        self._check(theta)
        return self.m ** 2 * np.eye(self.dim)


class SampledQuadratic(Objective):
    """Mean of 1/2 |theta - x_k|^2 over a resampled subset of fixed data points.

    A small stand-in for a minibatch loss: each ``resample`` picks a new batch,
    which makes V(theta, t) jump between epochs. ``shift`` is added so that the
    loss stays positive.
    """

    name = "sampled_quadratic"

    def __init__(self, data, batch_size: int, shift: float = 0.0):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DimensionMismatch("data must be a 2-D array of points")
        self.dim = self.data.shape[1]
        self.batch_size = batch_size
        self.shift = shift
        self.batch = self.data[:batch_size]

    def resample(self, rng: Rng) -> None:
        n = len(self.data)
        # partial Fisher-Yates driven by the package RNG
        idx = list(range(n))
        for i in range(self.batch_size):
            j = i + int(rng.uniform() * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        self.batch = self.data[idx[: self.batch_size]]

    def value(self, theta):
        theta = self._check(theta)
        diff = theta - self.batch
        return 0.5 * float(np.mean(np.sum(diff * diff, axis=1))) + self.shift

    def grad(self, theta):
        theta = self._check(theta)
        return theta - self.batch.mean(axis=0)

    def hess(self, theta):
        self._check(theta)
        return np.eye(self.dim)


# --------------------------------------------------------------------------
# Locating and balancing minima
# --------------------------------------------------------------------------


def refine_minimum(objective: Objective, theta0, gtol: float = 1e-10, step: float = 1e-2,
                   max_iters: int = 200_000) -> np.ndarray:
    """Damped gradient descent with backtracking until ``|grad F| < gtol``.

    The step grows by 2x after each accepted move and halves on rejection, so
    the initial 1e-2 only sets the scale.
    """
    theta = as_vector(theta0, objective.dim)
    f = objective.value(theta)
    g = objective.grad(theta)
    for _ in range(max_iters):
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            return theta
        while step >= 1e-14:
            trial = theta - step * g
            ft = objective.value(trial)
            gt = objective.grad(trial)
            if ft <= f - 0.5 * step * gnorm * gnorm:
                break
            # below float resolution of F, judge progress by the gradient instead
            if abs(ft - f) <= 1e-14 * max(1.0, abs(f)) and np.linalg.norm(gt) < gnorm:
                break
            step *= 0.5
        else:
            break
        theta, f, g = trial, ft, gt
        step = min(step * 2.0, 1.0)
    if float(np.linalg.norm(g)) < gtol:
        return theta
    raise CalibrationFailed(f"minimum refinement stalled at |grad|={np.linalg.norm(g):.3e}")


def basin_gap(objective: TwoBasin) -> float:
    """F(min2) - F(min1) after refining both minima."""
    m1 = refine_minimum(objective, objective.c1)
    m2 = refine_minimum(objective, objective.c2)
    return objective.value(m2) - objective.value(m1)


def calibrate_epsilon(template: TwoBasin | None = None, lo: float = 0.0, hi: float = 1e-4,
                      ftol: float = 1e-12) -> float:
    """Bisect on epsilon in [lo, hi] until both minima have equal height."""
    template = template or TwoBasin()
    gap_lo = basin_gap(template.with_epsilon(lo))
    if abs(gap_lo) < ftol:
        return lo
    gap_hi = basin_gap(template.with_epsilon(hi))
    if abs(gap_hi) < ftol:
        return hi
    if gap_lo * gap_hi > 0:
        raise CalibrationFailed(f"no sign change on [{lo}, {hi}]: gaps {gap_lo:.3e}, {gap_hi:.3e}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gap = basin_gap(template.with_epsilon(mid))
        if abs(gap) < 0.1 * ftol or hi - lo < 1e-18:
            break
        if gap * gap_lo > 0:
            lo, gap_lo = mid, gap
        else:
            hi = mid
    if abs(gap) >= ftol:
        raise CalibrationFailed(f"bisection ended with gap {gap:.3e}")
    return mid


# --------------------------------------------------------------------------
# Name registry used by the CLI and the experiment configs
# --------------------------------------------------------------------------

OBJECTIVE_NAMES = ("ackley", "zakharov", "two_basin", "quadratic")


def make_objective(name: str, dim: int | None = None, m: float = 1.0,
                   epsilon: float | str | None = "auto", widths=(0.4, 0.8)) -> Objective:
    """Build a benchmark by name. ``epsilon='auto'`` calibrates the two-basin wells."""
    if name == "ackley":
        if dim not in (None, 2):
            raise DimensionMismatch("ackley is two-dimensional")
        return Ackley()
    if name == "zakharov":
        return Zakharov(10 if dim is None else dim)
    if name == "two_basin":
        if dim not in (None, 2):
            raise DimensionMismatch("two_basin is two-dimensional")
        base = TwoBasin(widths=widths)
        if epsilon == "auto" or epsilon is None:
            epsilon = cached_epsilon(tuple(widths))
        return base.with_epsilon(float(epsilon))
    if name == "quadratic":
        return ShallowQuadratic(m, 1 if dim is None else dim)
    raise ValueError(f"unknown objective {name!r}; choose from {', '.join(OBJECTIVE_NAMES)}")


_EPS_CACHE: dict[tuple, float] = {}


def cached_epsilon(widths=(0.4, 0.8)) -> float:
    key = tuple(float(w) for w in widths)
    if key not in _EPS_CACHE:
        _EPS_CACHE[key] = calibrate_epsilon(TwoBasin(widths=key))
    return _EPS_CACHE[key]
