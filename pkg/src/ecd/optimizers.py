"""Energy-conserving optimizers (bouncing Born-Infeld, massive ECD) and the GDM baseline.

Both energy-conserving variants share one stepping engine; they differ only
in the Hamiltonian H(V, |Pi|^2) and its first-order symplectic update:

=========  =====================  ==================  =====================
variant    H                      momentum kick       position drift
=========  =====================  ==================  =====================
BI         sqrt(V (V + Pi^2))     1/2 dt (V/E + E/V)  dt V/E
massive    1/2 V Pi^2             dt E/V              dt V
=========  =====================  ==================  =====================

The kick uses the gradient at the old position and the drift uses the kicked
momentum, with V frozen at the old position for both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    BbiHyperParams,
    DivergedError,
    EcdState,
    GdmHyperParams,
    NonPositiveInitialLoss,
    Rng,
    RunSummary,
    StopReason,
    TraceRecord,
    as_vector,
    derive_seed,
)
from .objectives import Objective

# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


class BornInfeld:
    name = "bbi"

    @staticmethod
    def target_pi2(v, e):
        return v * (e * e / (v * v) - 1.0)

    @staticmethod
    def kick(v, e, dt):
        return 0.5 * dt * (v / e + e / v)

    @staticmethod
    def drift(v, e, dt):
        return dt * v / e

    @staticmethod
    def energy(v, pi2):
        return math.sqrt(v * (v + pi2)) if v * (v + pi2) >= 0 else math.nan


class MassiveEcd:
    """Mass 1/V particle, H = 1/2 V Pi^2."""

    name = "mecd"

    @staticmethod
    def target_pi2(v, e):
        return 2.0 * e / v

    @staticmethod
    def kick(v, e, dt):
        return dt * e / v

    @staticmethod
    def drift(v, e, dt):
        return dt * v

    @staticmethod
    def energy(v, pi2):
        return 0.5 * v * pi2


DYNAMICS = {"bbi": BornInfeld, "mecd": MassiveEcd}


@dataclass
class StepInfo:
    """What happened inside one main-branch iteration (for diagnostics)."""

    v_old: float
    target_pi2: float
    rescaled: bool
    pi2_after_rescale: float
    drift_speed: float  # |Pi| * drift / dt after rescaling, before the kick
    displacement: float
    bounced: bool = False


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------


def _init(objective: Objective, theta0, hp: BbiHyperParams, seed: int, dyn) -> EcdState:
    theta = as_vector(theta0, objective.dim)
    rng = Rng(seed)
    f0 = objective.value(theta)
    v0 = f0 - hp.dV
    if not math.isfinite(v0):
        raise DivergedError(f"initial loss is not finite: {f0}")
    if v0 <= 0:
        raise NonPositiveInitialLoss(f"V0 = F(theta0) - dV = {v0} must be positive")
    g = objective.grad(theta)
    if not np.all(np.isfinite(g)):
        raise DivergedError("initial gradient is not finite")
    energy = v0 + hp.dE
    if dyn is BornInfeld:
        norm = math.sqrt(max(energy * energy / v0 - v0, 0.0))
        if hp.dE == 0:
            norm = 0.0
    else:
        norm = math.sqrt(2.0 * energy / v0)
    gnorm = float(np.linalg.norm(g))
    if norm == 0.0:
        pi = np.zeros_like(theta)
    elif gnorm > 0:
        pi = -g / gnorm * norm
    else:
        direction = rng.normal_vector(objective.dim)
        pi = direction / np.linalg.norm(direction) * norm
    return EcdState(theta=theta, pi=pi, energy=energy, v_current=v0, v_best=v0,
                    f_best=f0, dV=hp.dV, rng=rng, grad=g)


def bbi_init(objective: Objective, theta0, hp: BbiHyperParams, seed: int) -> EcdState:
    """Energy E = V0 + dE; momentum along -grad F with |Pi0|^2 = E^2/V0 - V0."""
    return _init(objective, theta0, hp, seed, BornInfeld)


def mecd_init(objective: Objective, theta0, hp: BbiHyperParams, seed: int) -> EcdState:
    """Energy E = V0 + dE (same convention as BBI); |Pi0|^2 = 2E/V0 along -grad F."""
    return _init(objective, theta0, hp, seed, MassiveEcd)


# ---------------------------------------------------------------------------
# One iteration
# ---------------------------------------------------------------------------


def _advance(state: EcdState, objective: Objective, hp: BbiHyperParams, dyn) -> StepInfo:
    v = state.v_current
    e = state.energy
    pi = state.pi
    pi2 = float(pi @ pi)
    target = dyn.target_pi2(v, e)

    rescaled = False
    if hp.rescale and target >= 0 and pi2 > 0 and abs(pi2 - target) >= hp.eps1:
        pi = pi * math.sqrt(target / pi2)
        pi2 = float(pi @ pi)
        rescaled = True
    dt = hp.dt
    drift = dyn.drift(v, e, dt)
    drift_speed = math.sqrt(pi2) * drift / dt

    g = state.grad if state.grad is not None else objective.grad(state.theta)
    pi = pi - dyn.kick(v, e, dt) * g
    delta = drift * pi
    moved2 = float(delta @ delta)
    if not math.isfinite(moved2):
        raise DivergedError(f"non-finite update at step {state.step}")
    theta = state.theta + delta

    state.pi = pi
    state.theta = theta
    state.c0 += 1
    state.c1 += 1
    state.step += 1

    f, state.grad = objective.value_and_grad(theta)
    if not math.isfinite(f):
        raise DivergedError(f"non-finite loss at step {state.step}")
    state.v_current = f - state.dV
    if f < state.f_best:
        state.f_best = f
        state.c1 = 0
    if state.v_current < state.v_best:
        state.v_best = state.v_current
    return StepInfo(v, target, rescaled, pi2, drift_speed, math.sqrt(moved2))


def bbi_step(state: EcdState, objective: Objective, hp: BbiHyperParams) -> EcdState:
    """One main-branch iteration of the bouncing Born-Infeld loop, in place.

    Restores |Pi|^2 to E^2/V - V (when that target is non-negative and off by at
    least eps1), kicks Pi with the gradient, drifts theta, bumps the counters and
    re-evaluates V. Raises DivergedError on non-finite values. A negative V is
    left for the caller to handle.
    """
    _advance(state, objective, hp, BornInfeld)
    return state


def mecd_step(state: EcdState, objective: Objective, hp: BbiHyperParams) -> EcdState:
    _advance(state, objective, hp, MassiveEcd)
    return state


def bounce_due(state: EcdState, hp: BbiHyperParams) -> bool:
    return (state.c0 == hp.T0 and state.n_b < hp.Nb) or state.c1 == hp.T1


def bbi_bounce(state: EcdState, hp: BbiHyperParams) -> EcdState:
    """Replace Pi by an isotropic random vector of the same norm; theta is untouched."""
    pi2 = float(state.pi @ state.pi)
    if pi2 > 0:
        new = state.rng.normal_vector(state.pi.size)
        state.pi = new * math.sqrt(pi2 / float(new @ new))
    if state.c0 == hp.T0 and state.n_b < hp.Nb:
        state.n_b += 1
        if state.n_b < hp.Nb:
            state.c0 = 0
        else:
            state.c0 += 1
    state.c1 = 0
    state.bounces += 1
    return state


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _adapt_shift(state: EcdState, hp: BbiHyperParams) -> bool:
    """Lower dV to 0.9 * best raw loss and re-anchor E. False if impossible."""
    if state.f_best <= 0:
        return False
    f_now = state.v_current + state.dV
    state.dV = 0.9 * state.f_best
    state.v_current = f_now - state.dV
    state.energy = state.v_current + hp.dE
    return state.v_current > 0


def _record(state: EcdState, dyn, speed: float, bounced: bool) -> TraceRecord:
    pi2 = float(state.pi @ state.pi)
    v = state.v_current
    return TraceRecord(
        step=state.step,
        V=v,
        pi_norm=math.sqrt(pi2),
        speed=speed,
        energy_err=dyn.energy(v, pi2) - state.energy,
        bounce=bounced,
        F=v + state.dV,
        theta_norm=float(np.linalg.norm(state.theta)),
    )


def ecd_run(objective: Objective, theta0, hp: BbiHyperParams, seed: int, *,
            dynamics: str = "bbi", trace_every: int = 0, epoch_len: int | None = None,
            callback: Callable[[EcdState, StepInfo], None] | None = None) -> RunSummary:
    """Run the bouncing energy-conserving loop until V <= eps2 or a cap is hit.

    ``epoch_len`` resamples the objective every that many steps, using an RNG
    stream separate from the bounce stream. ``callback(state, info)`` is called
    after every iteration, bounces included.
    """
    dyn = DYNAMICS[dynamics]
    state = _init(objective, theta0, hp, seed, dyn)
    epoch_rng = Rng(derive_seed(seed, 1))
    trace = [_record(state, dyn, 0.0, False)] if trace_every else None
    pending_bounce = False
    reason = None
    error = None
    try:
        # overflow is detected explicitly and reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            while True:
                v = state.v_current
                if v < 0:
                    if hp.adapt_dV and _adapt_shift(state, hp):
                        continue
                    reason = StopReason.NEGATIVE_LOSS
                    break
                if v <= hp.eps2:
                    reason = StopReason.CONVERGED
                    break
                if state.step >= hp.max_iters:
                    reason = StopReason.MAX_ITERS
                    break
                if bounce_due(state, hp):
                    bbi_bounce(state, hp)
                    pending_bounce = True
                    if callback is not None:
                        pi2 = float(state.pi @ state.pi)
                        callback(state, StepInfo(v, dyn.target_pi2(v, state.energy), False, pi2,
                                                 0.0, 0.0, bounced=True))
                    continue
                info = _advance(state, objective, hp, dyn)
                if callback is not None:
                    callback(state, info)
                if trace is not None and state.step % trace_every == 0:
                    trace.append(_record(state, dyn, info.displacement / hp.dt, pending_bounce))
                    pending_bounce = False
                if epoch_len and state.step % epoch_len == 0:
                    objective.resample(epoch_rng)
                    f, state.grad = objective.value_and_grad(state.theta)
                    state.v_current = f - state.dV
                    if f < state.f_best:
                        state.f_best = f
    except DivergedError as exc:
        reason = StopReason.DIVERGED
        error = str(exc)
    if trace is not None and trace[-1].step != state.step:
        trace.append(_record(state, dyn, math.nan, pending_bounce))
    return RunSummary(
        final_theta=state.theta.copy(),
        final_v=state.v_current,
        stop_reason=reason,
        steps_taken=state.step,
        bounce_count=state.bounces,
        seed=seed,
        best_f=state.f_best,
        final_f=state.v_current + state.dV,
        optimizer=dynamics,
        error=error,
        trace=trace,
    )


def bbi_run(objective: Objective, theta0, hp: BbiHyperParams, seed: int, **kwargs) -> RunSummary:
    return ecd_run(objective, theta0, hp, seed, dynamics="bbi", **kwargs)


def massive_ecd_run(objective: Objective, theta0, hp: BbiHyperParams, seed: int, **kwargs) -> RunSummary:
    return ecd_run(objective, theta0, hp, seed, dynamics="mecd", **kwargs)


def gdm_run(objective: Objective, theta0, hp: GdmHyperParams, max_iters: int = 100_000, *,
            seed: int = 0, f_target: float | None = None, trace_every: int = 0,
            epoch_len: int | None = None) -> RunSummary:
    """Gradient descent with momentum in the ML convention.

    v <- mu v - grad F(theta);  theta <- theta + eta v.
    Stops at ``max_iters``, on a non-finite value, or (if given) once F <= f_target.
    """
    theta = as_vector(theta0, objective.dim)
    velocity = np.zeros_like(theta)
    epoch_rng = Rng(derive_seed(seed, 1))
    f = objective.value(theta)
    best = f
    step = 0
    error = None

    def record(speed):
        return TraceRecord(step, f, float(np.linalg.norm(velocity)), speed, math.nan, False,
                           F=f, theta_norm=float(np.linalg.norm(theta)))

    trace = [record(0.0)] if trace_every else None
    reason = StopReason.MAX_ITERS
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            if not math.isfinite(f):
                reason, error = StopReason.DIVERGED, f"non-finite loss at step {step}"
                break
            if f_target is not None and f <= f_target:
                reason = StopReason.CONVERGED
                break
            if step >= max_iters:
                break
            g = objective.grad(theta)
            if not np.all(np.isfinite(g)):
                reason, error = StopReason.DIVERGED, f"non-finite gradient at step {step}"
                break
            velocity = hp.mu * velocity - g
            delta = hp.eta * velocity
            theta = theta + delta
            step += 1
            if not np.all(np.isfinite(theta)):
                reason, error = StopReason.DIVERGED, f"non-finite parameters at step {step}"
                break
            if epoch_len and step % epoch_len == 0:
                objective.resample(epoch_rng)
            f = objective.value(theta)
            if f < best:
                best = f
            if trace is not None and step % trace_every == 0:
                trace.append(record(float(np.linalg.norm(delta)) / hp.eta))
    if trace is not None and trace[-1].step != step:
        trace.append(record(math.nan))
    return RunSummary(
        final_theta=theta.copy(),
        final_v=f,
        stop_reason=reason,
        steps_taken=step,
        bounce_count=0,
        seed=seed,
        best_f=best,
        final_f=f,
        optimizer="gdm",
        error=error,
        trace=trace,
    )


OPTIMIZER_NAMES = ("bbi", "mecd", "gdm")
