"""Forced mean curvature flow of radial graphs.

The normal speed is ``F - H``.  For ``e = c + rho x`` this gives
``rho_t = (F(e) - H) / <x, N>``, advanced in harmonic-coefficient space by a
second-order IMEX Runge-Kutta scheme whose implicit part is the
frozen-coefficient linearisation of curvature diffusion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DecompositionError, DomainError, GeometryError
from .geometry import (
    CurvatureData,
    FunctionalValue,
    RadialEmbedding,
    center_graph_split,
    curvature_from_rho,
    evaluate_curvature,
    functional_value,
)
from .harmonics import band_mu
from .monitors import admissibility_report, pinching_ratio

__all__ = [
    "FlowState",
    "StepControl",
    "FlowTrajectory",
    "Termination",
    "EndpointVerdict",
    "EXTINCT",
    "radial_velocity",
    "step",
    "run_flow",
    "round_sphere_oracle",
    "round_sphere_oracle_ode",
    "extinction_time",
    "detect_endpoint",
]

# ARS(2,2,2) coefficients
_GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


class Termination(str, enum.Enum):
    CONVERGED = "converged_to_endpoint"
    T_MAX = "t_max_reached"
    BLOW_UP = "blow_up"
    LEFT_STAR_SHAPED = "left_star_shaped"
    INADMISSIBLE = "inadmissible"


class _Extinct:
    def __repr__(self):
        return "EXTINCT"


EXTINCT = _Extinct()


@dataclass
class StepControl:
    dt: float = 0.01
    cfl_fraction: float = 0.4
    max_dt: float = 0.01
    min_dt: float = 1e-9
    implicit_weight: float = 1.0

    def clamp(self, dt: float) -> float:
        return min(max(dt, self.min_dt), self.max_dt)


class FlowState:
    """A time and an embedding; curvature and diagnostics are derived on demand."""

    def __init__(self, time: float, embedding: RadialEmbedding, curvature: CurvatureData | None = None):
        self.time = float(time)
        self.embedding = embedding
        self._curvature = curvature

    @property
    def curvature(self) -> CurvatureData:
        if self._curvature is None:
            self._curvature = evaluate_curvature(self.embedding, check=False)
        return self._curvature

    def functional(self, F) -> FunctionalValue:
        return functional_value(self.embedding, F, self.curvature)

    def residual(self, F) -> np.ndarray:
        return self.curvature.mean_curvature - F.value(self.embedding.points())

    def sup_residual(self, F) -> float:
        return float(np.abs(self.residual(F)).max())

    def report(self, F, lam: float):
        return admissibility_report(self.embedding, self.curvature, F, lam)


@dataclass
class FlowTrajectory:
    states: list
    termination: Termination
    records: list = field(default_factory=list)
    limit: RadialEmbedding | None = None
    rejected_steps: int = 0
    monotonicity_violations: int = 0

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])


def radial_velocity(basis, rho, center, F, cd: CurvatureData | None = None):
    """``(F(e) - H) / <x, N>`` at the nodes, plus the curvature data used."""
    if cd is None:
        cd = curvature_from_rho(basis, rho)
    x = basis.grid.points
    pts = center + rho[:, None] * x
    xn = cd.radial_component
    return (F.value(pts) - cd.mean_curvature) / xn, cd


def _implicit_symbol(basis, rho, xn, weight):
    mu = band_mu(basis)
    alpha = float(np.max(1.0 / (rho * rho * xn)))
    sym = np.where(basis.degrees >= 2, -alpha * mu, 0.0)
    return weight * sym


def _imex_step(emb: RadialEmbedding, F, dt: float, weight: float, cd0: CurvatureData):
    basis = emb.basis
    c = emb.center_lift
    y = emb.coeffs

    def R(coeffs, cd=None):
        rho = basis.synthesize(coeffs)
        v, _ = radial_velocity(basis, rho, c, F, cd)
        return basis.analyze(v)

    S = _implicit_symbol(basis, emb.rho, cd0.radial_component, weight)
    denom = 1.0 - dt * _GAMMA * S
    r1 = R(y, cd0)
    e1 = r1 - S * y
    y2 = (y + dt * _GAMMA * e1) / denom
    r2 = R(y2)
    e2 = r2 - S * y2
    y3 = (y + dt * (_DELTA * e1 + (1.0 - _DELTA) * e2) + dt * (1.0 - _GAMMA) * S * y2) / denom
    return y3


def _lock_radius(emb: RadialEmbedding, F, iters: int = 3) -> RadialEmbedding:
    """Shift the mean radius so ``H - F`` has no degree-0 content."""
    basis = emb.basis
    w = basis.grid.weights
    area = basis.grid.sphere_area
    cur = emb
    for _ in range(iters):
        cd = curvature_from_rho(basis, cur.rho)
        g = float(w @ (cd.mean_curvature - F.value(cur.points()))) / area
        r = float(np.mean(cur.rho))
        # d(mean H)/dr is about -1/r^2
        shift = g * r * r
        cur = cur.with_rho(cur.rho + shift)
        if abs(shift) < 1e-15 * r:
            break
    return cur


def step(state: FlowState, F, ctl: StepControl, radial_lock: bool = False):
    """One IMEX step with step size ``ctl.dt``; returns the new state."""
    emb = state.embedding
    cd0 = state.curvature
    xn = cd0.radial_component
    if xn.min() <= 0:
        raise GeometryError("embedding left the star-shaped regime")
    y = _imex_step(emb, F, ctl.dt, ctl.implicit_weight, cd0)
    rho = emb.basis.synthesize(y)
    if not np.all(np.isfinite(rho)) or rho.min() <= 0:
        raise GeometryError("radius became non-positive")
    new = RadialEmbedding(emb.torus, emb.center_lift, rho, emb.basis, filtered=True)
    if radial_lock:
        new = _lock_radius(new, F)
    return FlowState(state.time + ctl.dt, new)


def _cfl_dt(cd: CurvatureData, ctl: StepControl) -> float:
    kmax = float(np.abs(cd.principal_curvatures).max())
    return ctl.clamp(ctl.cfl_fraction / max(kmax * kmax, 1e-300))


@dataclass(frozen=True)
class EndpointVerdict:
    converged: bool
    sup_residual: float
    functional_drop: float
    limit: RadialEmbedding | None
    reason: str


def detect_endpoint(window, F, tol: float = 1e-8, t_hold: float = 1.0) -> EndpointVerdict:
    """Converged when the residual is below ``tol`` and the functional is flat over the window."""
    if len(window) < 2 or window[-1].time - window[0].time < t_hold - 1e-12:
        # by the gradient identity the drop over t_hold is at most d*area*res^2*t_hold,
        # which is below tol^2*t_hold once res < tol/sqrt(d*area)
        if len(window) >= 1:
            last = window[-1]
            res = last.sup_residual(F)
            if res < tol / math.sqrt(last.embedding.dimension * last.functional(F).area):
                return EndpointVerdict(True, res, 0.0, window[-1].embedding, "stationary to round-off")
        return EndpointVerdict(False, math.nan, math.nan, None, "window shorter than t_hold")
    res = window[-1].sup_residual(F)
    drop = window[0].functional(F).value - window[-1].functional(F).value
    span = window[-1].time - window[0].time
    if res < tol and drop < tol * tol * span:
        return EndpointVerdict(True, res, drop, window[-1].embedding, "residual and functional settled")
    return EndpointVerdict(False, res, drop, None, f"residual {res:.3g}, functional drop {drop:.3g}")


def _record(state: FlowState, F, dt: float, lam: float | None, with_report: bool) -> dict:
    e = state.embedding
    cd = state.curvature
    fv = state.functional(F)
    res = state.sup_residual(F)
    pinch, _ = pinching_ratio(cd)
    row = {
        "t": state.time,
        "center": e.center_lift.tolist(),
        "rho_min": float(e.rho.min()),
        "rho_mean": float(e.rho.mean()),
        "rho_max": float(e.rho.max()),
        "H_min": float(cd.mean_curvature.min()),
        "H_max": float(cd.mean_curvature.max()),
        "pinch_sup": pinch,
        "min_kappa1": float(cd.principal_curvatures[:, 0].min()),
        "min_Z": math.nan,
        "diameter": math.nan,
        "functional": fv.value,
        "sup_residual": res,
        "dt": dt,
        "star_margin": float(cd.radial_component.min()),
    }
    if with_report and lam is not None:
        rep = admissibility_report(e, cd, F, lam)
        row["min_Z"] = rep.min_Z
        row["diameter"] = rep.diameter
        row["admissible"] = rep.admissible_for_lambda
    return row


def run_flow(
    initial: RadialEmbedding,
    F,
    ctl: StepControl | None = None,
    t_max: float = 10.0,
    tol: float = 1e-8,
    t_hold: float = 1.0,
    detect: bool = True,
    monitor_lambda: float | None = None,
    stop_if_inadmissible: bool = False,
    blowup_curvature: float | None = None,
    star_margin_min: float = 0.05,
    recenter_every: int = 10,
    recenter_margin: float = 0.2,
    keep_every: int = 1,
    radial_lock: bool = False,
    check_monotone: bool = True,
    fixed_dt: bool = False,
    max_steps: int = 10_000_000,
    callback=None,
) -> FlowTrajectory:
    """Integrate from ``initial`` until ``t_max`` or a termination event.

    Accepted steps never increase the functional by more than ``1e-12``
    (relative); offending steps are retried with half the step size down to
    ``ctl.min_dt``.  With ``radial_lock`` the mean radius is re-solved after
    each step so the flow stays on the slow manifold of near-stationary
    spheres; the functional check is then skipped.
    """
    ctl = replace(ctl) if ctl is not None else StepControl()
    state = FlowState(0.0, initial)
    cd = state.curvature
    if cd.radial_component.min() <= 0:
        raise GeometryError("initial embedding is not star-shaped")
    if blowup_curvature is None:
        blowup_curvature = 50.0 * max(1.0, float(np.abs(cd.principal_curvatures).max()))
    with_report = monitor_lambda is not None
    states = [state]
    records = [_record(state, F, 0.0, monitor_lambda, with_report)]
    tail = [state]
    rejected = 0
    violations = 0
    nstep = 0
    fval = records[0]["functional"]
    termination = Termination.T_MAX
    limit = None
    while state.time < t_max - 1e-12 and nstep < max_steps:
        dt = ctl.dt if fixed_dt else _cfl_dt(state.curvature, ctl)
        dt = min(dt, t_max - state.time)
        while True:
            try:
                new = step(state, F, replace(ctl, dt=dt), radial_lock=radial_lock)
            except GeometryError:
                termination = Termination.LEFT_STAR_SHAPED
                new = None
                break
            if radial_lock or not check_monotone:
                break
            fnew = new.functional(F).value
            if fnew <= fval + 1e-12 * max(1.0, abs(fval)):
                break
            if dt / 2 < ctl.min_dt:
                violations += 1
                break
            rejected += 1
            dt /= 2
        if new is None:
            break
        nstep += 1
        state = new
        cdn = state.curvature
        if not np.all(np.isfinite(cdn.principal_curvatures)):
            termination = Termination.BLOW_UP
            states.append(state)
            break
        if float(np.abs(cdn.principal_curvatures).max()) > blowup_curvature:
            termination = Termination.BLOW_UP
            states.append(state)
            records.append(_record(state, F, dt, monitor_lambda, with_report))
            break
        margin = float(cdn.radial_component.min())
        if (recenter_every and nstep % recenter_every == 0) or margin < recenter_margin:
            try:
                split = center_graph_split(state.embedding, 1.0)
                state = FlowState(state.time, split.embedding)
            except DecompositionError:
                pass
            margin = float(state.curvature.radial_component.min())
        if margin < star_margin_min:
            termination = Termination.LEFT_STAR_SHAPED
            states.append(state)
            break
        row = _record(state, F, dt, monitor_lambda, with_report)
        records.append(row)
        fval = row["functional"]
        if callback is not None:
            callback(state, row)
        tail.append(state)
        while len(tail) > 2 and tail[-1].time - tail[1].time >= t_hold:
            tail.pop(0)
        if nstep % keep_every == 0:
            states.append(state)
        if with_report and stop_if_inadmissible and not row.get("admissible", True):
            termination = Termination.INADMISSIBLE
            break
        if detect:
            verdict = detect_endpoint(tail, F, tol, t_hold)
            if verdict.converged:
                termination = Termination.CONVERGED
                limit = verdict.limit
                break
    if states[-1] is not state:
        states.append(state)
    return FlowTrajectory(states, termination, records, limit, rejected, violations)


def _psi(u: float) -> float:
    return u + math.log(abs(u))


def round_sphere_oracle(r0: float, F_const: float, t: float):
    """Radius at time ``t`` of a round sphere flowing by ``r' = F - 1/r``.

    Inverts ``t = (psi(rF - 1) - psi(r0 F - 1)) / F^2`` with
    ``psi(u) = u + log|u|`` on the branch containing ``r0``.
    """
    if not (F_const > 0 and r0 > 0):
        raise DomainError("need positive forcing and radius")
    if t < 0:
        raise DomainError("the oracle runs forward in time")
    u0 = r0 * F_const - 1.0
    if u0 == 0.0:
        return r0
    target = _psi(u0) + F_const**2 * t
    if u0 > 0:
        lo, hi = u0, max(2.0 * u0, 1.0)
        while _psi(hi) < target:
            hi *= 2.0
        u = brentq(lambda v: _psi(v) - target, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    else:
        if target >= -1.0:
            return EXTINCT
        # on (-1, 0) psi rises from -inf at 0- to -1 at -1 as the sphere shrinks
        lo = -1.0
        hi = u0
        u = brentq(lambda v: _psi(v) - target, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=500)
    return (u + 1.0) / F_const


def round_sphere_oracle_ode(r0: float, F_const: float, t: float):
    """Same quantity by high-order integration of ``r' = F - 1/r``."""
    if t == 0 or r0 * F_const == 1.0:
        return r0

    # below 1e-6 r0 the remaining time to extinction is under 1e-12 r0^2
    def hit_zero(_, r):
        return r[0] - 1e-6 * r0

    hit_zero.terminal = True
    sol = solve_ivp(
        lambda _, r: [F_const - 1.0 / r[0]],
        (0.0, t),
        [r0],
        method="DOP853",
        rtol=1e-13,
        atol=1e-15,
        events=hit_zero,
    )
    if sol.status == 1:
        return EXTINCT
    return float(sol.y[0, -1])


def extinction_time(r0: float, F_const: float) -> float:
    """Finite extinction time for ``r0 < 1/F``."""
    u0 = r0 * F_const - 1.0
    if u0 >= 0:
        return math.inf
    return (-1.0 - _psi(u0)) / F_const**2
