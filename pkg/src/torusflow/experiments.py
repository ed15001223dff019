"""Reusable experiment pipelines: the Hopf run and the random admissible flow suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import SolverError
from .flow import FlowTrajectory, StepControl, Termination, run_flow
from .forcing import ForcingTerm, TrigFunction, subcritical_check
from .geometry import RadialEmbedding, center_graph_split, evaluate_curvature
from .harmonics import HarmonicBasis, SphereGrid
from .monitors import noncollapse_lambda, pinching_ratio
from .torus import FlatTorus

__all__ = [
    "random_perturbation",
    "HopfResult",
    "hopf_experiment",
    "FlowCheck",
    "SuiteResult",
    "random_forcing",
    "admissible_flow_suite",
    "gradient_identity_errors",
    "initial_lambda",
    "check_flow",
]


def random_perturbation(basis: HarmonicBasis, rng, amplitude: float, degrees=(2, 4)) -> np.ndarray:
    """Random field with harmonics of the given degree band, sup-normalised to ``amplitude``."""
    lo, hi = degrees
    sel = (basis.degrees >= lo) & (basis.degrees <= hi)
    co = np.zeros(basis.size)
    co[sel] = rng.normal(size=int(sel.sum())) / basis.degrees[sel] ** 2
    vals = basis.synthesize(co)
    return vals * (amplitude / np.abs(vals).max())


def _hausdorff_to_unit(emb: RadialEmbedding) -> float:
    # for a radial graph over the sphere's own center this is exactly sup|rho - 1|
    split = center_graph_split(emb, 1.0)
    return float(np.abs(split.embedding.rho - 1.0).max())


@dataclass
class HopfResult:
    offset: float
    trajectory: FlowTrajectory
    hausdorff: float
    final_pinch: float
    shooting: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.trajectory.termination is Termination.CONVERGED


def hopf_experiment(
    torus: FlatTorus | None = None,
    amplitude: float = 0.1,
    seed: int = 0,
    max_degree: int = 8,
    t_max: float = 20.0,
    horizons=(2.0, 5.0, 10.0, 20.0),
    max_dt: float = 0.05,
    tol: float = 1e-8,
) -> HopfResult:
    """Flow a random perturbation of the unit sphere under ``F = 1``.

    The unit sphere is a saddle: the mean radius is linearly unstable with
    rate 1.  A constant offset ``s`` is added to the perturbed radius and
    tuned by Brent root finding on the final mean radius so the flow lands
    on the stable manifold.  Horizons are lengthened progressively and each
    search is bracketed around the previous root.
    """
    d = 2
    if torus is None:
        torus = FlatTorus.cube(d + 1, 6.0)
    basis = HarmonicBasis(SphereGrid.for_degree(torus.dimension_plus_one - 1, max_degree))
    rng = np.random.default_rng(seed)
    pert = random_perturbation(basis, rng, amplitude)
    center = 0.5 * torus.lattice_basis.sum(axis=1)
    F = ForcingTerm.constant(1.0, torus)
    ctl = StepControl(max_dt=max_dt)

    def embed(s):
        return RadialEmbedding(torus, center, 1.0 + pert + s, basis)

    class _Escaped(Exception):
        pass

    def watch(state, row):
        if abs(row["rho_mean"] - 1.0) > 0.5:
            raise _Escaped(row["rho_mean"] - 1.0)

    def g(s, horizon):
        try:
            tr = run_flow(embed(s), F, ctl, t_max=horizon, detect=False, check_monotone=False, callback=watch)
        except _Escaped as esc:
            val = float(esc.args[0])
        else:
            if tr.termination is not Termination.T_MAX:
                # shrinking flows end in blow-up, growing ones leave the chart
                val = -1.0 if tr.termination is Termination.BLOW_UP else 1.0
            else:
                val = float(tr.final.embedding.rho.mean() - 1.0)
        history.append((horizon, s, val))
        return val

    history = []
    lo, hi = -0.1, 0.1
    if not g(lo, horizons[0]) < 0 < g(hi, horizons[0]):
        raise SolverError("offset bracket does not straddle the stable manifold")
    s1 = 0.0
    for k, horizon in enumerate(horizons):
        if k:
            width = max(1e-12, 10.0 * abs(s1 - prev))
            lo, hi = s1 - width, s1 + width
            while not (g(lo, horizon) < 0 < g(hi, horizon)):
                width *= 4.0
                lo, hi = s1 - width, s1 + width
                if width > 0.2:
                    raise SolverError(f"lost the bracket at horizon {horizon}")
        prev = s1
        s1 = brentq(g, lo, hi, args=(horizon,), xtol=1e-15, rtol=1e-15)
    tr = run_flow(embed(s1), F, ctl, t_max=t_max, detect=True, tol=tol, check_monotone=False)
    emb = tr.limit if tr.limit is not None else tr.final.embedding
    pinch = pinching_ratio(evaluate_curvature(emb, check=False))[0]
    return HopfResult(s1, tr, _hausdorff_to_unit(emb), pinch, history)


@dataclass
class FlowCheck:
    seed: int
    lam: float
    pinch_violations: int
    z_violations: int
    hypothesis_steps: int
    min_Z: float
    pinch_increase: float
    gradient_rel_error: float
    termination: Termination


@dataclass
class SuiteResult:
    flows: list

    @property
    def violations(self) -> int:
        return sum(c.pinch_violations + c.z_violations for c in self.flows)

    @property
    def worst_gradient_error(self) -> float:
        return max(c.gradient_rel_error for c in self.flows)


def random_forcing(torus: FlatTorus, rng, amplitude: float = 5e-4, n_terms: int = 2) -> ForcingTerm:
    """``1 + amplitude * (random trig terms)``: strongly subcritical for small ``amplitude``."""
    terms = []
    for _ in range(n_terms):
        k = rng.integers(-1, 2, size=torus.dimension_plus_one)
        if not k.any():
            k[0] = 1
        terms.append((k.tolist(), amplitude, float(rng.uniform(0, 2 * math.pi))))
    return ForcingTerm(TrigFunction(terms, torus, 1.0))


def gradient_identity_errors(tr: FlowTrajectory, F, d: int) -> np.ndarray:
    """Relative gap between the finite-difference ``dF/dt`` and ``-d * int (H - F)^2 dA``.

    Uses the three-point non-uniform central difference at each interior state.
    """
    t = np.array([r["t"] for r in tr.records])
    fv = np.array([r["functional"] for r in tr.records])
    out = []
    for k in range(1, len(tr.states) - 1):
        h0, h1 = t[k] - t[k - 1], t[k + 1] - t[k]
        num = (-h1 / (h0 * (h0 + h1))) * fv[k - 1] + ((h1 - h0) / (h0 * h1)) * fv[k] + (h0 / (h1 * (h0 + h1))) * fv[k + 1]
        s = tr.states[k]
        cd = s.curvature
        res = s.residual(F)
        pred = -d * float(np.sum(res**2 * cd.area_element * s.embedding.grid.weights))
        out.append(abs(num - pred) / abs(pred))
    return np.array(out)


def initial_lambda(emb: RadialEmbedding, margin: float = 1.01) -> float:
    """``margin * max(pinch, lam_Z)``: the tightest class the surface belongs to, loosened slightly."""
    cd = evaluate_curvature(emb)
    return margin * max(pinching_ratio(cd)[0], noncollapse_lambda(emb, cd))


def check_flow(tr: FlowTrajectory, F, lam: float, seed: int = 0) -> FlowCheck:
    """Tally pinching and non-collapsing violations on steps where the preservation hypothesis holds.

    The hypothesis is ``(lam - 1) lam / (lam + 1) > hess_sup / (c^2 F_-)``
    with ``c`` the current minimum of ``kappa_1``.
    """
    rep = subcritical_check(F)
    lhs = (lam - 1.0) * lam / (lam + 1.0)
    pv = zv = held = 0
    worst_inc = -math.inf
    for prev, row in zip(tr.records[:-1], tr.records[1:]):
        c = row["min_kappa1"]
        if c <= 0 or not lhs > rep.hess_sup / (c * c * rep.f_minus):
            continue
        held += 1
        inc = row["pinch_sup"] - prev["pinch_sup"]
        worst_inc = max(worst_inc, inc)
        if inc > 1e-6 * (row["t"] - prev["t"]) + 1e-12:
            pv += 1
        if row["min_Z"] < -1e-6:
            zv += 1
    d = tr.final.embedding.dimension
    errs = gradient_identity_errors(tr, F, d)
    return FlowCheck(
        seed=seed,
        lam=lam,
        pinch_violations=pv,
        z_violations=zv,
        hypothesis_steps=held,
        min_Z=min(r["min_Z"] for r in tr.records),
        pinch_increase=worst_inc,
        gradient_rel_error=float(errs.max()) if errs.size else 0.0,
        termination=tr.termination,
    )


def admissible_flow_suite(
    n_flows: int = 20,
    seed: int = 0,
    max_degree: int = 12,
    t_max: float = 0.5,
    forcing_amplitude: float = 5e-4,
    shape_amplitude: float = 0.02,
    side: float = 6.0,
    max_dt: float = 0.005,
) -> SuiteResult:
    """Run random admissible subcritical flows in ``T^3`` and tally monitor violations.

    Each flow is monitored at ``lam = 1.01 * max(pinch, lam_Z)`` where ``lam_Z``
    is the smallest constant for which the initial surface is non-collapsed;
    :func:`check_flow` decides which steps count.
    """
    torus = FlatTorus.cube(3, side)
    basis = HarmonicBasis(SphereGrid.for_degree(2, max_degree))
    rng = np.random.default_rng(seed)
    checks = []
    for i in range(n_flows):
        F = random_forcing(torus, rng, forcing_amplitude)
        rep = subcritical_check(F)
        if not rep.subcritical:
            raise SolverError("random forcing is not subcritical")
        center = rng.uniform(0, side, size=3)
        rho = 1.0 + random_perturbation(basis, rng, shape_amplitude)
        emb = RadialEmbedding(torus, center, rho, basis)
        lam = initial_lambda(emb)
        tr = run_flow(emb, F, StepControl(max_dt=max_dt), t_max=t_max, detect=False, monitor_lambda=lam)
        checks.append(check_flow(tr, F, lam, i))
    return SuiteResult(checks)
