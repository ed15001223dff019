"""Admissibility diagnostics: pinching, non-collapsing, convexity, diameter,
and the principal-curvature evolution residual."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .forcing import global_bounds
from .geometry import CurvatureData, RadialEmbedding, evaluate_curvature

__all__ = [
    "AdmissibilityReport",
    "EvolutionResidual",
    "pinching_ratio",
    "noncollapse_min_Z",
    "z_local_search",
    "noncollapse_lambda",
    "extrinsic_diameter",
    "admissibility_report",
    "curvature_evolution_residual",
]


def pinching_ratio(cd: CurvatureData):
    """``(sup kappa_d / kappa_1, node)``; ``(nan, node)`` if some ``kappa_1 <= 0``."""
    k = cd.principal_curvatures
    k1 = k[..., 0]
    if k1.min() <= 0:
        return math.nan, int(np.argmin(k1))
    if k.shape[-1] == 1:
        return 1.0, 0
    ratio = k[..., -1] / k1
    i = int(np.argmax(ratio))
    return float(ratio[i]), i


def noncollapse_min_Z(e: RadialEmbedding, cd: CurvatureData, lam: float):
    """Minimum of ``lam kappa_1(x) |e(y)-e(x)|^2 + 2 <e(y)-e(x), N(x)>`` over node pairs."""
    z, i, j = kernels.min_z_scan(e.points(), cd.normal, lam * cd.principal_curvatures[:, 0])
    return float(z), (int(i), int(j))


def noncollapse_lambda(e: RadialEmbedding, cd: CurvatureData) -> float:
    """Smallest ``lam`` with ``min_Z >= 0``: ``max over pairs of -2<d, N(x)> / (kappa_1(x) |d|^2)``."""
    k1 = cd.principal_curvatures[:, 0]
    if k1.min() <= 0:
        return math.inf
    pts = e.points()
    nrm = cd.normal
    best = -math.inf
    for start in range(0, pts.shape[0], 256):
        rows = slice(start, min(start + 256, pts.shape[0]))
        diff = pts[None, :, :] - pts[rows, None, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        dot = np.einsum("ijk,ik->ij", diff, nrm[rows])
        idx = np.arange(rows.start, rows.stop)
        sq[idx - rows.start, idx] = 1.0
        dot[idx - rows.start, idx] = math.inf
        best = max(best, float((-2.0 * dot / (k1[rows, None] * sq)).max()))
    return best


def z_local_search(e: RadialEmbedding, cd: CurvatureData, lam: float, restarts: int = 200, seed: int = 0):
    """Randomised-restart descent over neighbouring node pairs.

    An independent route to the minimum of the two-point function: each
    restart walks to a pair no neighbouring pair improves on.
    """
    rng = np.random.default_rng(seed)
    pts = e.points()
    nrm = cd.normal
    phi = lam * cd.principal_curvatures[:, 0]
    grid = e.grid
    n = grid.size
    nlat, nlon = grid.n_lat, grid.n_lon

    def neighbours(i):
        if grid.dimension == 1:
            return [(i - 1) % n, (i + 1) % n]
        a, b = divmod(i, nlon)
        out = []
        for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)):
            aa = a + da
            bb = (b + db) % nlon
            if aa < 0 or aa >= nlat:
                # across a pole: opposite longitude on the same ring
                aa = a
                bb = (b + nlon // 2) % nlon
            out.append(aa * nlon + bb)
        return out

    def zval(i, j):
        if i == j:
            return math.inf
        diff = pts[j] - pts[i]
        return float(phi[i] * diff @ diff + 2.0 * diff @ nrm[i])

    best = (math.inf, -1, -1)
    for _ in range(restarts):
        i, j = rng.integers(0, n, size=2)
        cur = zval(i, j)
        while True:
            moves = [(zval(a, j), a, j) for a in neighbours(i)] + [(zval(i, b), i, b) for b in neighbours(j)]
            cand = min(moves)
            if cand[0] < cur:
                cur, i, j = cand
            else:
                break
        if cur < best[0]:
            best = (cur, int(i), int(j))
    return best


def extrinsic_diameter(e: RadialEmbedding) -> float:
    return float(kernels.max_pair_distance(e.points()))


@dataclass
class AdmissibilityReport:
    pinch_sup: float
    min_kappa1: float
    c_required: float
    c_separation: float
    diameter: float
    diameter_bound: float
    min_Z: float
    admissible_for_lambda: bool
    c_convex: bool
    diameter_within_bound: bool
    reasons: list = field(default_factory=list)
    min_Z_pair: tuple = (-1, -1)
    pinch_node: int = -1


def admissibility_report(e, cd, F, lam: float, z_tol: float = 1e-6) -> AdmissibilityReport:
    """Assemble the pinching, non-collapsing, convexity and diameter checks for ``E_lam``.

    ``lam = inf`` imposes no pinching or non-collapsing constraint.
    """
    if cd is None:
        cd = evaluate_curvature(e, check=False)
    f_minus = global_bounds(F)[0]
    k1 = float(cd.principal_curvatures[:, 0].min())
    pinch, pnode = pinching_ratio(cd)
    reasons = []
    finite = math.isfinite(lam)
    c_req = f_minus / lam if finite else 0.0
    c_sep = f_minus / lam**2 if finite else 0.0
    diam = extrinsic_diameter(e)
    bound = math.sqrt(lam / f_minus) * math.pi if finite else math.inf
    if finite:
        min_z, pair = noncollapse_min_Z(e, cd, lam)
    else:
        min_z, pair = math.inf, (-1, -1)
    if k1 <= 0:
        reasons.append("kappa1 <= 0")
    if not (pinch <= lam):
        reasons.append(f"pinch_sup {pinch:.6g} > lambda {lam:.6g}")
    if min_z < -z_tol:
        reasons.append(f"min_Z {min_z:.3g} < -{z_tol:g}")
    ok = not reasons
    c_convex = k1 >= c_req
    diam_ok = diam <= bound
    if not c_convex:
        reasons.append(f"min kappa1 {k1:.6g} below c = F_minus/lambda = {c_req:.6g}")
    if not diam_ok:
        reasons.append(f"diameter {diam:.6g} exceeds bound {bound:.6g}")
    return AdmissibilityReport(
        pinch_sup=pinch,
        min_kappa1=k1,
        c_required=c_req,
        c_separation=c_sep,
        diameter=diam,
        diameter_bound=bound,
        min_Z=min_z,
        admissible_for_lambda=ok,
        c_convex=c_convex,
        diameter_within_bound=diam_ok,
        reasons=reasons,
        min_Z_pair=pair,
        pinch_node=pnode,
    )


@dataclass(frozen=True)
class EvolutionResidual:
    sup: float
    tested: int
    excluded: int
    residual: np.ndarray

    def __float__(self):
        return self.sup


def _principal_laplacians(cd: CurvatureData, umbilic_tol: float = 1e-12):
    """Surface gradients and Laplacians of the frame-smoothed principal curvatures.

    The smoothed ``a_k = <A xi_k, xi_k>`` uses a frame parallel at the point,
    so ``Delta a_k = (Delta A)(xi_k, xi_k)``.  On S^2 the eigenvalues are
    ``H -+ sqrt(D)`` with ``D = H^2 - K`` smooth; their Laplacians differ from
    ``(Delta A)_kk`` by the second-order perturbation term
    ``2 sum_i (nabla_i A)_12^2 / (lambda_k - lambda_j)``, and by Codazzi
    ``(nabla_1 A)_12 = xi_2(lambda_1)`` and ``(nabla_2 A)_12 = xi_1(lambda_2)``.
    """
    k = cd.principal_curvatures
    if k.shape[-1] == 1:
        a = k[:, 0]
        return [cd.surface_gradient(a)], [cd.surface_laplacian(a)]
    H = 0.5 * (k[:, 0] + k[:, 1])
    D = (0.5 * (k[:, 1] - k[:, 0])) ** 2
    gH, lH = cd.surface_gradient(H), cd.surface_laplacian(H)
    gD, lD = cd.surface_gradient(D), cd.surface_laplacian(D)
    umb = D <= umbilic_tol
    root = np.sqrt(np.where(umb, 1.0, D))
    grads, laps = [], []
    for sgn in (-1.0, 1.0):
        g = gH + sgn * np.where(umb, 0.0, 1.0 / (2.0 * root))[:, None] * gD
        lap = lH + sgn * np.where(
            umb, 0.0, lD / (2.0 * root) - np.einsum("ni,ni->n", gD, gD) / (4.0 * root**3)
        )
        grads.append(g)
        laps.append(lap)
    xi1 = cd.principal_directions[:, 0, :]
    xi2 = cd.principal_directions[:, 1, :]
    cross = np.einsum("ni,ni->n", xi2, grads[0]) ** 2 + np.einsum("ni,ni->n", xi1, grads[1]) ** 2
    corr = np.where(umb, 0.0, 2.0 * cross / np.where(umb, 1.0, 2.0 * root))
    laps[0] = laps[0] + corr
    laps[1] = laps[1] - corr
    return grads, laps


def curvature_evolution_residual(window, F, gap: float = 1e-3) -> EvolutionResidual:
    """Residual of the principal-curvature evolution identity on three states.

    The radial parametrisation moves points along ``x``; its time derivative
    differs from the normal-parametrisation one by the tangential transport
    ``<grad a, T>`` with ``T = rho_t (x - <x,N> N)``, which is subtracted.
    Nodes whose principal curvatures are closer than ``gap`` are excluded.
    """
    s0, s1, s2 = window
    e0, e1, e2 = s0.embedding, s1.embedding, s2.embedding
    if not (np.allclose(e0.center_lift, e1.center_lift) and np.allclose(e2.center_lift, e1.center_lift)):
        from .geometry import recenter

        e0 = recenter(e0, e1.center_lift)
        e2 = recenter(e2, e1.center_lift)
    t0, t1, t2 = s0.time, s1.time, s2.time
    h0, h1 = t1 - t0, t2 - t1
    # three-point derivative at the middle time for uneven steps
    c0 = -h1 / (h0 * (h0 + h1))
    c1 = (h1 - h0) / (h0 * h1)
    c2 = h0 / (h1 * (h0 + h1))
    cds = [evaluate_curvature(e) for e in (e0, e1, e2)]
    cd = cds[1]
    k = [c.principal_curvatures for c in cds]
    dk = c0 * k[0] + c1 * k[1] + c2 * k[2]
    rho_t = c0 * e0.rho + c1 * e1.rho + c2 * e2.rho
    x = e1.grid.points
    N = cd.normal
    xn = np.einsum("ni,ni->n", x, N)
    tang = rho_t[:, None] * (x - xn[:, None] * N)
    d = e1.dimension
    pts = e1.points()
    Fv = F.value(pts)
    dF = np.einsum("ni,ni->n", F.gradient(pts), N)
    hess = F.hessian(pts)
    a = cd.principal_curvatures
    tr_a2 = np.sum(a * a, axis=1)
    grads, laps = _principal_laplacians(cd)
    res = np.zeros_like(a)
    for kk in range(a.shape[1]):
        xi = cd.principal_directions[:, kk, :]
        d2f = np.einsum("ni,nij,nj->n", xi, hess, xi)
        normal_dt = dk[:, kk] - np.einsum("ni,ni->n", grads[kk], tang)
        rhs = dF * a[:, kk] - a[:, kk] ** 2 * Fv - d2f + a[:, kk] * tr_a2 / d + laps[kk] / d
        res[:, kk] = normal_dt - rhs
    if a.shape[1] > 1:
        ok = (a[:, 1] - a[:, 0]) > gap
    else:
        ok = np.ones(a.shape[0], dtype=bool)
    if not ok.any():
        return EvolutionResidual(math.nan, 0, int(a.shape[0]), res)
    sup = float(np.abs(res[ok]).max())
    return EvolutionResidual(sup, int(ok.sum()), int((~ok).sum()), res)
