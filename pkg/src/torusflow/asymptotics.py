"""Formal small-kappa solutions along a heteroclinic and their residuals.

A forced flow near a heteroclinic ``gamma`` of ``f`` is written as
``Phi(t, x) = gamma(t) + kappa X(t) + kappa (1 + kappa^2 phi(t, x)) x`` with
``t`` the rescaled time (flow time divided by ``kappa^-2``).  The scaled
residual ``T_kappa Psi_hat`` vanishes exactly on forced flows; its linear
part is ``L`` on the degree-1 band and ``P_kappa`` on the rest, so the
formal recursion and the Newton preconditioner both reduce to ``K`` and
``Q_kappa``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .concentration import ParabolicRun, align_time_shift, fit_slope
from .errors import DichotomyError, GeometryError, SolverError
from .forcing import TrigFunction
from .geometry import curvature_from_rho
from .harmonics import HarmonicBasis, SphereGrid, TimeSpectralField, _fd_dt, solve_Q_kappa
from .morse import Heteroclinic, LinearizedOperator

__all__ = [
    "taylor_H",
    "taylor_N",
    "AsymptoticGrid",
    "psi_eval",
    "scaled_residual",
    "sign_self_test",
    "FormalSolution",
    "build_formal_solution",
    "ResidualReport",
    "residual_order_study",
    "RefinedSolution",
    "newton_refine",
    "compare_to_flow",
]


def _poly_terms(fn, phi, order: int, n_samples: int = 12):
    """Coefficients of ``eps^k`` (k <= order) of ``fn(eps * phi)`` at ``eps = 1``.

    Chebyshev samples in ``eps`` inside the analytic disc, fitted by a
    polynomial of degree ``n_samples - 1``.
    """
    amp = float(np.abs(phi).max())
    if amp == 0.0:
        base = fn(0.0 * phi)
        return [base] + [np.zeros_like(base) for _ in range(order)]
    s = min(1.0, 0.3 / amp)
    j = np.arange(n_samples)
    eps = s * np.cos((2 * j + 1) * math.pi / (2 * n_samples))
    vals = np.stack([fn(e * phi) for e in eps])
    V = np.vander(eps / s, n_samples, increasing=True)
    coef = np.linalg.solve(V, vals.reshape(n_samples, -1)).reshape(vals.shape)
    return [coef[k] / s**k for k in range(order + 1)]


def taylor_H(basis: HarmonicBasis, phi, order: int) -> np.ndarray:
    """Mean curvature of ``x -> (1 + phi(x)) x`` truncated at ``order`` in ``phi``.

    Orders 0 and 1 are ``1`` and ``-(1/d)(d + Delta) phi``; higher orders are
    read off exact evaluations along ``eps * phi``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.min() <= -1.0:
        raise GeometryError("1 + phi must be positive")
    d = basis.dimension
    lin = -(d * phi + basis.laplacian(phi)) / d
    out = np.ones_like(phi)
    if order >= 1:
        out = out + lin
    if order >= 2:
        terms = _poly_terms(lambda p: curvature_from_rho(basis, 1.0 + p).mean_curvature, phi, order)
        for k in range(2, order + 1):
            out = out + terms[k]
    return out


def taylor_N(basis: HarmonicBasis, phi, order: int) -> np.ndarray:
    """Unit normal of ``x -> (1 + phi(x)) x`` truncated at ``order``; order 1 is ``x - grad phi``."""
    phi = np.asarray(phi, dtype=float)
    if phi.min() <= -1.0:
        raise GeometryError("1 + phi must be positive")
    x = basis.grid.points
    out = np.broadcast_to(x, phi.shape + (x.shape[1],)).copy()
    if order >= 1:
        cd = curvature_from_rho(basis, np.ones_like(phi))
        out = out - cd.surface_gradient(phi)
    if order >= 2:
        terms = _poly_terms(lambda p: curvature_from_rho(basis, 1.0 + p).normal, phi, order)
        for k in range(2, order + 1):
            out = out + terms[k]
    return out


@dataclass
class AsymptoticGrid:
    """Heteroclinic, harmonic basis and cached linear solvers for one ``f``."""

    gamma: Heteroclinic
    f: TrigFunction
    basis: HarmonicBasis
    op: LinearizedOperator = field(init=False)

    def __post_init__(self):
        self.op = LinearizedOperator(self.gamma)
        C = self.basis.coordinate_coeffs[:, self.basis.deg1]
        self._to_coeff = C
        self._to_vec = np.linalg.inv(C)

    @classmethod
    def build(cls, gamma: Heteroclinic, f: TrigFunction, max_degree: int = 12) -> "AsymptoticGrid":
        d = f.torus.dimension_plus_one - 1
        grid = SphereGrid.circle(2 * max_degree + 2) if d == 1 else SphereGrid.for_degree(d, max_degree)
        return cls(gamma, f, HarmonicBasis(grid, max_degree))

    @property
    def times(self) -> np.ndarray:
        return self.gamma.times

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    def zero_phi(self) -> TimeSpectralField:
        return TimeSpectralField(self.basis, self.times, np.zeros((self.times.size, self.basis.size)))

    def deg1_vector(self, coeffs) -> np.ndarray:
        return coeffs[..., self.basis.deg1] @ self._to_vec

    def K(self, b) -> np.ndarray:
        return self.op.solve(b)


def psi_eval(kappa: float, X, phi: TimeSpectralField, grid: AsymptoticGrid) -> np.ndarray:
    """``Psi_hat = Psi / kappa`` on the space-time grid, from exact ``H`` and ``N``.

    ``Psi = kappa^2 <D_t Phi, N> + H_unit / kappa - F_kappa(Phi)``; the
    constant ``1/kappa`` parts cancel analytically before evaluation.
    """
    basis = grid.basis
    x = basis.grid.points
    f = grid.f
    X = np.asarray(X, dtype=float)
    pv = phi.values()
    rho = 1.0 + kappa**2 * pv
    if rho.min() <= 0:
        raise GeometryError("radial factor 1 + kappa^2 phi is not positive")
    cd = curvature_from_rho(basis, rho)
    g = grid.gamma.points
    centre = g + kappa * X
    Phi = centre[:, None, :] + kappa * rho[..., None] * x
    dcentre = -f.gradient(g) + kappa * _fd_dt(X, grid.h)
    dphi = _fd_dt(pv, grid.h)
    dPhi = dcentre[:, None, :] + kappa**3 * dphi[..., None] * x
    vel = np.einsum("tni,tni->tn", dPhi, cd.normal)
    return kappa * vel + (cd.mean_curvature - 1.0) / kappa**2 + f.value(Phi)


def scaled_residual(kappa: float, X, phi: TimeSpectralField, grid: AsymptoticGrid):
    """``(coeffs, sup)`` of ``T_kappa Psi_hat``: degree-1 coefficients carry ``kappa^-2``.

    The sup includes the part of ``Psi_hat`` above the band limit.
    """
    basis = grid.basis
    ph = psi_eval(kappa, X, phi, grid)
    c = basis.analyze(ph)
    rest = ph - basis.synthesize(c)
    c[:, basis.deg1] /= kappa**2
    sup = float(np.abs(basis.synthesize(c) + rest).max())
    return c, sup


def _bump(times, dim, rng):
    t0, t1 = times[0], times[-1]
    c = 0.5 * (t0 + t1) + 0.2 * (t1 - t0) * (rng.random() - 0.5)
    w = 0.15 * (t1 - t0)
    s = np.exp(-(((times - c) / w) ** 2))[:, None]
    return s * rng.standard_normal(dim)


def sign_self_test(grid: AsymptoticGrid, kappa: float = 0.02, eps: float = 1e-6, seed: int = 0) -> int:
    """Sign of the Hessian term in the degree-1 linear response of ``Psi``.

    Perturbs ``X`` by ``eps`` times a smooth bump and compares the scaled
    degree-1 response with ``D_t X + s Hess f(gamma) X`` for ``s = +1, -1``.
    Returns the matching ``s``; raises :class:`DichotomyError` when neither
    fits.
    """
    rng = np.random.default_rng(seed)
    n = grid.times.size
    D = grid.gamma.points.shape[1]
    W = _bump(grid.times, D, rng)
    zero = np.zeros((n, D))
    phi = grid.zero_phi()
    c0, _ = scaled_residual(kappa, zero, phi, grid)
    c1, _ = scaled_residual(kappa, eps * W, phi, grid)
    resp = grid.deg1_vector(c1 - c0) / eps
    H = grid.gamma.hessians
    dW = _fd_dt(W, grid.h)
    HW = np.einsum("tij,tj->ti", H, W)
    inner = slice(n // 10, n - n // 10)
    errs = {}
    for s in (1, -1):
        pred = dW + s * HW
        errs[s] = float(np.abs(resp[inner] - pred[inner]).max() / np.abs(pred[inner]).max())
    best = min(errs, key=errs.get)
    if errs[best] > 0.1 or errs[-best] < 0.5:
        raise DichotomyError(f"sign self-test inconclusive: relative errors {errs}")
    return best


@dataclass
class FormalSolution:
    """Order-``m`` truncation: ``X = sum X_i``, ``phi = sum phi_i`` at a fixed ``kappa``.

    The coefficients absorb their powers of ``kappa``; ``residuals[i]`` is the
    sup of ``T_kappa Psi_hat`` after order ``i``.
    """

    order: int
    kappa: float
    grid: AsymptoticGrid
    X_terms: list
    phi_terms: list
    residuals: list
    discarded_deg1: list = field(default_factory=list)

    @property
    def gamma(self) -> Heteroclinic:
        return self.grid.gamma

    @property
    def X(self) -> np.ndarray:
        return np.sum(self.X_terms, axis=0)

    @property
    def phi(self) -> TimeSpectralField:
        return self.grid.zero_phi().with_coeffs(np.sum([p.coeffs for p in self.phi_terms], axis=0))

    def center_path(self) -> np.ndarray:
        return self.gamma.points + self.kappa * self.X

    def to_json(self) -> str:
        return json.dumps(
            {
                "order": self.order,
                "kappa": self.kappa,
                "times": self.grid.times.tolist(),
                "X": [x.tolist() for x in self.X_terms],
                "phi": [p.coeffs.tolist() for p in self.phi_terms],
                "residuals": self.residuals,
            }
        )


def _sweep(kappa, X, phi, grid):
    """One solve of the leading block-diagonal operator against the current residual."""
    c, _ = scaled_residual(kappa, X, phi, grid)
    b = grid.deg1_vector(c)
    g = c.copy()
    dropped = float(np.abs(g[:, grid.basis.deg1]).max())
    g[:, grid.basis.deg1] = 0.0
    dphi = solve_Q_kappa(phi.with_coeffs(g), kappa)
    dX = grid.K(b)
    return -dX, phi.with_coeffs(-dphi.coeffs), dropped


def build_formal_solution(grid: AsymptoticGrid, kappa: float, m: int, check_sign: bool = True) -> FormalSolution:
    """Orders ``0..m`` of the formal recursion.

    Each order solves ``L X_i = -(degree-1 part)`` with ``K`` and
    ``P_kappa phi_i = -(rest)`` with ``Q_kappa``, where the right-hand sides
    are the current full residual: its leading term is the order-``i``
    inhomogeneity, and the remainder only changes the coefficients at higher
    order.
    """
    if check_sign and sign_self_test(grid) != 1:
        raise DichotomyError("linear response has the opposite Hessian sign to L = D_t + Hess f")
    n = grid.times.size
    D = grid.gamma.points.shape[1]
    X = np.zeros((n, D))
    phi = grid.zero_phi()
    Xs, phis, res, dropped = [], [], [], []
    for i in range(m + 1):
        dX, dphi, drop = _sweep(kappa, X, phi, grid)
        if i == 0:
            # along a gradient line the degree-1 residual starts at order kappa
            dX = np.zeros_like(dX)
        Xs.append(dX)
        phis.append(dphi)
        dropped.append(drop)
        X = X + dX
        phi = phi.with_coeffs(phi.coeffs + dphi.coeffs)
        res.append(scaled_residual(kappa, X, phi, grid)[1])
    # phi_0 must solve kappa^4 phi' - phi = -f(gamma) on degree 0
    y0 = 1.0 / math.sqrt(grid.basis.grid.sphere_area)
    p0 = phis[0].coeffs[:, 0] * y0
    check = kappa**4 * _fd_dt(p0, grid.h) - p0 + grid.f.value(grid.gamma.points)
    if np.abs(check).max() > 10.0 * kappa * (1.0 + np.abs(p0).max()):
        raise SolverError("order-0 degree-0 band does not match f along the heteroclinic")
    return FormalSolution(m, kappa, grid, Xs, phis, res, dropped)


@dataclass
class ResidualReport:
    order: int
    kappas: list
    residuals: list
    slope: float

    def rows(self) -> list:
        return [{"kappa": k, "residual": r, "order": self.order} for k, r in zip(self.kappas, self.residuals)]


def residual_order_study(grid: AsymptoticGrid, m: int, kappas) -> ResidualReport:
    """Sup of ``T_kappa Psi_hat`` for the order-``m`` truncation across ``kappas``, with the log-log slope."""
    res = [build_formal_solution(grid, k, m, check_sign=(i == 0)).residuals[-1] for i, k in enumerate(kappas)]
    return ResidualReport(m, list(kappas), res, fit_slope(kappas, res))


@dataclass
class RefinedSolution:
    kappa: float
    X: np.ndarray
    phi: TimeSpectralField
    trace: list
    iterations: int
    residual_sup: float


def newton_refine(formal: FormalSolution, tol: float = 1e-10, max_iter: int = 12) -> RefinedSolution:
    """Newton-Krylov on the discrete (X, phi) unknowns, left-preconditioned.

    The equations are the residual preconditioned by the block-diagonal
    leading operator ``diag(L, P_kappa)`` (inverted with ``K`` and
    ``Q_kappa``), so iterates keep the boundary, ``Ker(L)`` and degree-1
    constraints.  ``trace`` holds the sup of ``T_kappa Psi_hat`` after every
    iteration.
    """
    grid = formal.grid
    kappa = formal.kappa
    n = grid.times.size
    D = grid.gamma.points.shape[1]
    nb = grid.basis.size
    zero = grid.zero_phi()

    free = grid.basis.not_deg1

    def unpack(u):
        X = u[: n * D].reshape(n, D)
        c = np.zeros((n, nb))
        c[:, free] = u[n * D :].reshape(n, free.size)
        return X, zero.with_coeffs(c)

    def pack(X, phi):
        return np.concatenate([X.reshape(-1), phi.coeffs[:, free].reshape(-1)])

    def sup_res(X, phi):
        return scaled_residual(kappa, X, phi, grid)[1]

    def G(u):
        X, phi = unpack(u)
        dX, dphi, _ = _sweep(kappa, X, phi, grid)
        # the part of X outside the range of K keeps the Jacobian invertible
        off = X - grid.K(grid.op.apply(X))
        return pack(off - dX, phi.with_coeffs(-dphi.coeffs))

    u = pack(formal.X, formal.phi)
    trace = [sup_res(*unpack(u))]
    it = 0
    while trace[-1] > tol:
        if it == max_iter or not math.isfinite(trace[-1]) or (it >= 2 and trace[-1] > trace[0]):
            raise SolverError(
                f"Newton refinement stopped at residual {trace[-1]:.3e} after {it} iterations; kappa may be too large"
            )
        g0 = G(u)
        scale = float(np.linalg.norm(u)) + 1.0

        def jv(v, u=u, g0=g0, scale=scale):
            nv = float(np.linalg.norm(v))
            if nv == 0.0:
                return np.zeros_like(v)
            eps = 1e-7 * scale / nv
            return (G(u + eps * v) - g0) / eps

        J = LinearOperator((u.size, u.size), matvec=jv, dtype=float)
        du, info = gmres(J, -g0, rtol=1e-8, restart=30, maxiter=10)
        u = u + du
        it += 1
        trace.append(sup_res(*unpack(u)))
    X, phi = unpack(u)
    return RefinedSolution(kappa, X, phi, trace, it, trace[-1])


@dataclass
class FlowComparison:
    kappa: float
    center_distance: float
    drift_defect: float
    shift: float


def compare_to_flow(solution, run: ParabolicRun) -> FlowComparison:
    """Distance between a simulated centre path and the solution's centre path.

    ``solution`` is a :class:`FormalSolution` or :class:`RefinedSolution`
    built on the same heteroclinic; the time shift comes from the
    orthogonality condition against the heteroclinic's velocity.
    """
    from scipy.interpolate import CubicSpline

    grid = solution.grid if isinstance(solution, FormalSolution) else None
    if grid is None:
        raise TypeError("pass a FormalSolution (refined solutions carry no grid)")
    kappa = run.kappa
    centre = grid.gamma.points + kappa * solution.X
    sp = CubicSpline(grid.times, centre, axis=0)
    nominal = run.base_times - run.shift
    shift = align_time_shift(nominal, run.centers, grid.gamma)
    dist = float(np.linalg.norm(run.centers - sp(nominal + shift), axis=1).max())
    return FlowComparison(kappa, dist, run.drift_defect, shift)
