"""Small-kappa concentration: stationary spheres near critical points.

For ``F_kappa = (1 - kappa^2 f) / kappa`` a sphere of radius about
``kappa (1 + kappa^2 f(p))`` centred near a critical point ``p`` of ``f``
has prescribed mean curvature ``F_kappa``.  This module finds those spheres
by Gauss-Newton on (non-degree-1 radial coefficients, centre), measures
their Morse index for the area-minus-weighted-volume functional, and fits
the kappa-scaling of the radius gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .forcing import TrigFunction, kappa_forcing
from .geometry import RadialEmbedding, curvature_from_rho, mcf_residual
from .harmonics import HarmonicBasis, SphereGrid
from .morse import CriticalPoint

__all__ = [
    "StationarySphere",
    "solve_stationary_sphere",
    "second_variation_index",
    "EllipticSweep",
    "elliptic_sweep",
    "fit_slope",
    "ParabolicRun",
    "align_time_shift",
    "parabolic_run",
]


def fit_slope(kappas, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(kappas)``."""
    k = np.log(np.asarray(kappas, dtype=float))
    v = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(k, v, 1)[0])


@dataclass
class StationarySphere:
    embedding: RadialEmbedding
    kappa: float
    critical_point: CriticalPoint | None
    residual_sup: float
    iterations: int
    trace: list = field(default_factory=list)

    @property
    def mean_radius(self) -> float:
        g = self.embedding.grid
        return float(self.embedding.rho @ g.weights / g.sphere_area)

    def predicted_radius(self, f: TrigFunction) -> float:
        p = self.critical_point.ambient if self.critical_point is not None else self.embedding.center_lift
        return self.kappa * (1.0 + self.kappa**2 * float(f.value(p)))

    def radius_gap(self, f: TrigFunction) -> float:
        return abs(self.mean_radius - self.predicted_radius(f))


def _residual(basis, F, center, rho):
    """``H - F(center + rho x)`` for a batch of centres ``(..., D)`` and radii ``(..., N)``."""
    cd = curvature_from_rho(basis, rho)
    pts = center[..., None, :] + rho[..., :, None] * basis.grid.points
    return cd.mean_curvature - F.value(pts)


def solve_stationary_sphere(
    f: TrigFunction,
    p,
    kappa: float,
    basis: HarmonicBasis | None = None,
    max_degree: int = 12,
    tol: float = 1e-11,
    max_iter: int = 25,
) -> StationarySphere:
    """Gauss-Newton for ``H = F_kappa`` on a radial graph centred near ``p``.

    The degree-1 part of the radius is pinned to zero and the centre is an
    unknown instead, which removes the translation gauge.
    """
    torus = f.torus
    d = torus.dimension_plus_one - 1
    if basis is None:
        basis = HarmonicBasis(SphereGrid.for_degree(d, max_degree), max_degree)
    F = kappa_forcing(f, kappa)
    crit = p if isinstance(p, CriticalPoint) else None
    center = np.array(crit.ambient if crit is not None else getattr(p, "ambient", p), dtype=float)
    free = basis.not_deg1
    nfree = free.size
    D = d + 1
    coeffs = np.zeros(basis.size)
    coeffs[0] = kappa * (1.0 + kappa**2 * float(f.value(center))) * np.sqrt(basis.grid.sphere_area)
    Yf = basis.Y[:, free]
    eps = 1e-7 * kappa
    trace = []
    for it in range(max_iter + 1):
        rho = basis.synthesize(coeffs)
        r = _residual(basis, F, center, rho)
        sup = float(np.abs(r).max())
        trace.append(sup)
        if sup <= tol:
            break
        if it and sup < 1e2 * tol and sup > 0.5 * trace[-2]:
            break  # at the roundoff floor
        if it == max_iter:
            raise SolverError(f"stationary sphere Newton did not converge (last residual {sup:.3e})")
        # forward-difference Jacobian, all columns in one batch
        n = nfree + D
        rhos = np.broadcast_to(rho, (n, rho.size)).copy()
        rhos[:nfree] += eps * Yf.T
        cens = np.broadcast_to(center, (n, D)).copy()
        cens[nfree:] += eps * np.eye(D)
        J = ((_residual(basis, F, cens, rhos) - r) / eps).T
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        coeffs[free] += step[:nfree]
        center = center + step[nfree:]
        if not np.all(basis.synthesize(coeffs) > 0):
            raise SolverError("Newton step produced a non-positive radius")
    emb = RadialEmbedding(torus, center, basis.synthesize(coeffs), basis, filtered=True)
    _, sup = mcf_residual(emb, F)
    return StationarySphere(emb, kappa, crit, sup, it, trace)


def second_variation_index(sphere: StationarySphere, f: TrigFunction, rel_tol: float = 1e-9) -> tuple:
    """Negative eigenvalue count of the second variation at a stationary sphere.

    For radial variations ``delta rho`` the first variation of
    ``Area - d int F dVol`` is ``d int (H - F) <x, N> delta rho dA``; at a
    critical point the second variation is the form
    ``B(a, b) = int DG[a] b <x, N> dA`` with ``G = H - F``.  It is built on
    the full harmonic basis (centre fixed), symmetrised and diagonalised.
    Returns ``(index, eigenvalues)``.
    """
    e = sphere.embedding
    basis = e.basis
    F = kappa_forcing(f, sphere.kappa)
    rho = e.rho
    center = e.center_lift
    eps = 1e-7 * sphere.kappa
    r0 = _residual(basis, F, center, rho)
    rhos = rho + eps * basis.Y.T
    cens = np.broadcast_to(center, (basis.size, center.size))
    DG = (_residual(basis, F, cens, rhos) - r0) / eps  # (nb, N)
    cd = curvature_from_rho(basis, rho)
    w = basis.grid.weights * cd.area_element * np.einsum("ni,ni->n", cd.normal, basis.grid.points)
    B = DG @ (w[:, None] * basis.Y)
    B = 0.5 * (B + B.T)
    ev = np.linalg.eigvalsh(B)
    cut = rel_tol * np.abs(ev).max()
    return int((ev < -cut).sum()), ev


@dataclass
class EllipticSweep:
    kappas: list
    spheres: dict
    gaps: dict
    slopes: dict
    indices: dict
    expected_indices: dict

    def worst_residual(self) -> float:
        return max(s.residual_sup for s in self.spheres.values())

    def min_slope(self) -> float:
        return min(self.slopes.values())

    def index_ok(self) -> bool:
        return all(self.indices[k] == self.expected_indices[k] for k in self.indices)

    def rows(self) -> list:
        out = []
        for (j, kappa), s in sorted(self.spheres.items()):
            out.append(
                {
                    "point": j,
                    "kappa": kappa,
                    "mean_radius": s.mean_radius,
                    "gap": self.gaps[(j, kappa)],
                    "residual_sup": s.residual_sup,
                    "iterations": s.iterations,
                    "index": self.indices[(j, kappa)],
                    "expected_index": self.expected_indices[(j, kappa)],
                }
            )
        return out


def elliptic_sweep(f: TrigFunction, crit: list, kappas, max_degree: int = 12) -> EllipticSweep:
    """Stationary spheres near every critical point for each kappa."""
    d = f.torus.dimension_plus_one - 1
    basis = HarmonicBasis(SphereGrid.for_degree(d, max_degree), max_degree)
    spheres, gaps, indices, expected = {}, {}, {}, {}
    slopes = {}
    for j, p in enumerate(crit):
        for kappa in kappas:
            s = solve_stationary_sphere(f, p, kappa, basis)
            spheres[(j, kappa)] = s
            gaps[(j, kappa)] = s.radius_gap(f)
            indices[(j, kappa)] = second_variation_index(s, f)[0]
            expected[(j, kappa)] = p.index + 1
        g = [max(gaps[(j, k)], 1e-300) for k in kappas]
        slopes[j] = fit_slope(kappas, g)
    return EllipticSweep(list(kappas), spheres, gaps, slopes, indices, expected)


@dataclass
class ParabolicRun:
    """Centre path of a radially locked flow against the rescaled heteroclinic.

    ``times`` are flow times ``r``; ``base_times`` are ``kappa^2 r + shift``
    with the shift fixed by the orthogonality condition.
    """

    kappa: float
    times: np.ndarray
    centers: np.ndarray
    base_times: np.ndarray
    shift: float
    center_distance: float
    drift_defect: float
    steps: int


def _heteroclinic_interp(gamma):
    from scipy.interpolate import CubicSpline

    return CubicSpline(gamma.times, gamma.points, axis=0)


def align_time_shift(base_t, centers, gamma, bracket: float = 0.05) -> float:
    """Shift ``s`` with ``sum_t <gamma0'(t+s), c(t) - gamma0(t+s)> = 0``."""
    from scipy.optimize import brentq

    sp = _heteroclinic_interp(gamma)
    dsp = sp.derivative()
    w = np.gradient(base_t)

    def g(s):
        t = base_t + s
        return float(np.einsum("t,ti,ti->", w, dsp(t), centers - sp(t)))

    a, b = -bracket, bracket
    ga, gb = g(a), g(b)
    while ga * gb > 0 and b < 1.0:
        a, b = 2 * a, 2 * b
        ga, gb = g(a), g(b)
    if ga * gb > 0:
        raise SolverError("could not bracket the alignment shift")
    return brentq(g, a, b, xtol=1e-15, rtol=1e-14)


def parabolic_run(
    f: TrigFunction,
    gamma,
    kappa: float,
    window=(-0.1, 0.1),
    dt_factor: float = 4.0,
    max_degree: int = 16,
    record_every: int = 1,
) -> ParabolicRun:
    """Flow a sphere started at ``Phi`` of the heteroclinic's point at ``window[0]``.

    The flow runs for ``(window[1] - window[0]) / kappa^2`` in flow time with
    step ``dt_factor * kappa^2`` and the radial lock on; the centre is read
    off by the centre/graph split after every recorded step.
    """
    from .flow import FlowState, StepControl, step
    from .geometry import center_graph_split

    torus = f.torus
    d = torus.dimension_plus_one - 1
    grid = SphereGrid.circle(2 * max_degree + 2) if d == 1 else SphereGrid.for_degree(d, max_degree)
    basis = HarmonicBasis(grid, max_degree)
    F = kappa_forcing(f, kappa)
    sp = _heteroclinic_interp(gamma)
    c0 = sp(window[0])
    start = RadialEmbedding.round(torus, c0, kappa * (1.0 + kappa**2 * float(f.value(c0))), basis)
    state = FlowState(0.0, start)
    dt = dt_factor * kappa**2
    r_end = (window[1] - window[0]) / kappa**2
    nsteps = int(round(r_end / dt))
    ctl = StepControl(dt=dt, max_dt=dt)
    times = [0.0]
    centers = [c0.copy()]
    for n in range(1, nsteps + 1):
        state = step(state, F, ctl, radial_lock=True)
        split = center_graph_split(state.embedding, kappa)
        state = FlowState(state.time, split.embedding)
        if n % record_every == 0:
            times.append(state.time)
            centers.append(split.center)
    times = np.array(times)
    centers = np.array(centers)
    base_nominal = window[0] + kappa**2 * times
    shift = align_time_shift(base_nominal, centers, gamma)
    base_t = base_nominal + shift
    dist = float(np.linalg.norm(centers - sp(base_t), axis=1).max())
    # drop the initial layer where the shape settles onto the slow manifold
    settle = times >= 50.0 * kappa**2
    vel = np.gradient(centers, times, axis=0, edge_order=2)
    defect = np.linalg.norm(vel + kappa**2 * f.gradient(centers), axis=1)
    inner = settle.copy()
    inner[[0, -1]] = False
    return ParabolicRun(kappa, times, centers, base_t, shift, dist, float(defect[inner].max()), nsteps)
