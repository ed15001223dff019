"""Star-shaped hyperspheres in flat tori as radial graphs.

An embedding is ``e(x) = c + rho(x) x`` over the unit sphere, with ``c`` a
lifted centre in R^{d+1}.  Derivatives of ``rho`` come from its harmonic
expansion, so geometry is spectrally accurate for smooth surfaces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DecompositionError, GeometryError
from .harmonics import HarmonicBasis, SphereGrid
from .torus import FlatTorus, TorusPoint, min_displacement, wrap

__all__ = [
    "SphereGrid",
    "RadialEmbedding",
    "CurvatureData",
    "FunctionalValue",
    "evaluate_curvature",
    "curvature_from_rho",
    "functional_value",
    "mcf_residual",
    "center_graph_split",
    "recenter",
    "star_margin",
    "save_snapshot",
    "load_snapshot",
    "SNAPSHOT_FORMAT",
]

SNAPSHOT_FORMAT = "torusflow-snapshot/1"
_GAUSS_S, _GAUSS_W = np.polynomial.legendre.leggauss(8)


class RadialEmbedding:
    """A star-shaped sphere ``center + rho(x) x`` on a harmonic basis.

    The stored ``rho`` is the band-limited projection of the supplied values,
    so node values and derivatives come from the same expansion.
    """

    def __init__(self, torus: FlatTorus, center, rho, basis: HarmonicBasis, filtered: bool = False):
        if isinstance(center, TorusPoint):
            lift = center.ambient
        else:
            lift = np.asarray(center, dtype=float).copy()
        if lift.shape != (torus.dimension_plus_one,):
            raise ConfigurationError("center has the wrong dimension")
        if basis.dimension + 1 != torus.dimension_plus_one:
            raise ConfigurationError("sphere dimension does not match the torus")
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (basis.grid.size,):
            raise ConfigurationError("rho must have one value per grid node")
        if not np.all(np.isfinite(rho)):
            raise GeometryError("rho is not finite")
        self.coeffs = basis.analyze(rho)
        self.rho = rho.copy() if filtered else basis.synthesize(self.coeffs)
        if self.rho.min() <= 0:
            raise GeometryError("rho must be positive")
        self.torus = torus
        self.center_lift = lift
        self.basis = basis
        self.rho.setflags(write=False)
        self.center_lift.setflags(write=False)

    @classmethod
    def round(cls, torus, center, radius: float, basis: HarmonicBasis) -> "RadialEmbedding":
        return cls(torus, center, np.full(basis.grid.size, float(radius)), basis)

    @classmethod
    def from_function(cls, torus, center, fn, basis: HarmonicBasis) -> "RadialEmbedding":
        """``fn`` maps unit directions ``(N, d+1)`` to radii."""
        return cls(torus, center, fn(basis.grid.points), basis)

    def with_rho(self, rho) -> "RadialEmbedding":
        return RadialEmbedding(self.torus, self.center_lift, rho, self.basis)

    @property
    def grid(self) -> SphereGrid:
        return self.basis.grid

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @property
    def center(self) -> TorusPoint:
        return wrap(self.center_lift, self.torus)

    def points(self) -> np.ndarray:
        """Lifted node positions ``(N, d+1)``."""
        return self.center_lift + self.rho[:, None] * self.grid.points

    def radius_at(self, directions) -> np.ndarray:
        """Spectral interpolant of ``rho`` at arbitrary unit directions."""
        return self.basis.evaluate(self.coeffs, directions)


@dataclass
class CurvatureData:
    """Per-node curvature quantities (leading batch axes allowed)."""

    normal: np.ndarray
    mean_curvature: np.ndarray
    principal_curvatures: np.ndarray
    shape_operator: np.ndarray
    area_element: np.ndarray
    principal_directions: np.ndarray
    tangents: np.ndarray
    metric_inverse: np.ndarray
    second_derivatives: np.ndarray
    basis: HarmonicBasis

    @property
    def radial_component(self) -> np.ndarray:
        """``<x, N>`` per node."""
        return np.einsum("...ni,ni->...n", self.normal, self.basis.grid.points)

    def surface_gradient(self, field) -> np.ndarray:
        """Ambient tangential gradient ``g^{ij} a_j e_i`` of a node field."""
        da = self._first(field)
        up = np.einsum("...nij,...nj->...ni", self.metric_inverse, da)
        return np.einsum("...nki,...ni->...nk", self.tangents, up)

    def surface_laplacian(self, field) -> np.ndarray:
        """Laplace-Beltrami operator on the embedded surface (negative spectrum)."""
        da = self._first(field)
        dda = self._second(field)
        gi = self.metric_inverse
        # Christoffel symbols Gamma^k_ij = g^{kl} <e_ij, e_l>
        lower = np.einsum("...nxij,...nxl->...nijl", self.second_derivatives, self.tangents)
        gamma = np.einsum("...nkl,...nijl->...nkij", gi, lower)
        hess = dda - np.einsum("...nkij,...nk->...nij", gamma, da)
        return np.einsum("...nij,...nij->...n", gi, hess)

    def _first(self, field):
        b = self.basis
        c = b.analyze(field)
        if b.dimension == 1:
            return b.derivative(c, "t")[..., None]
        return np.stack([b.derivative(c, "t"), b.derivative(c, "p")], axis=-1)

    def _second(self, field):
        b = self.basis
        c = b.analyze(field)
        if b.dimension == 1:
            return b.derivative(c, "tt")[..., None, None]
        tt, tp, pp = b.derivative(c, "tt"), b.derivative(c, "tp"), b.derivative(c, "pp")
        return np.stack([np.stack([tt, tp], -1), np.stack([tp, pp], -1)], -2)


def _eig_sym2(p, q, r):
    """Ascending eigenvalues and orthonormal eigenvectors of [[p, q], [q, r]]."""
    m = 0.5 * (p + r)
    disc = np.sqrt((0.5 * (p - r)) ** 2 + q * q)
    lo, hi = m - disc, m + disc
    # eigenvector of lo: choose the better-conditioned of two candidates
    v1 = np.stack([q, lo - p], axis=-1)
    v2 = np.stack([lo - r, q], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    v = np.where((n1 >= n2)[..., None], v1, v2)
    nv = np.maximum(n1, n2)
    umb = nv < 1e-14 * np.maximum(1.0, np.abs(m))
    v = np.where(umb[..., None], np.array([1.0, 0.0]), v / np.where(umb, 1.0, nv)[..., None])
    w = np.stack([-v[..., 1], v[..., 0]], axis=-1)
    vals = np.stack([lo, hi], axis=-1)
    vecs = np.stack([v, w], axis=-2)  # row k = eigenvector k
    return vals, vecs


def curvature_from_rho(basis: HarmonicBasis, rho) -> CurvatureData:
    """Curvature of ``x -> rho(x) x`` for node fields ``rho`` of shape ``(..., N)``."""
    rho = np.asarray(rho, dtype=float)
    grid = basis.grid
    c = basis.analyze(rho)
    r = basis.synthesize(c)
    x = grid.points
    if basis.dimension == 1:
        rt = basis.derivative(c, "t")
        rtt = basis.derivative(c, "tt")
        xp = np.stack([-x[:, 1], x[:, 0]], axis=1)
        speed = np.sqrt(r * r + rt * rt)
        kappa = (r * r + 2 * rt * rt - r * rtt) / speed**3
        et = rt[..., None] * x + r[..., None] * xp
        ett = (rtt - r)[..., None] * x + 2 * rt[..., None] * xp
        normal = (r[..., None] * x - rt[..., None] * xp) / speed[..., None]
        tangent = et / speed[..., None]
        return CurvatureData(
            normal=normal,
            mean_curvature=kappa,
            principal_curvatures=kappa[..., None],
            shape_operator=kappa[..., None, None],
            area_element=speed,
            principal_directions=tangent[..., None, :],
            tangents=et[..., None],
            metric_inverse=(1.0 / speed**2)[..., None, None],
            second_derivatives=ett[..., None, None],
            basis=basis,
        )

    th, ph = grid.theta, grid.phi
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    zero = np.zeros_like(th)
    xt = np.stack([ct * cp, ct * sp, -st], axis=1)
    xph = np.stack([-st * sp, st * cp, zero], axis=1)
    xpp = np.stack([-st * cp, -st * sp, zero], axis=1)
    xtp = np.stack([-ct * sp, ct * cp, zero], axis=1)
    rt = basis.derivative(c, "t")[..., None]
    rp = basis.derivative(c, "p")[..., None]
    rtt = basis.derivative(c, "tt")[..., None]
    rpp = basis.derivative(c, "pp")[..., None]
    rtp = basis.derivative(c, "tp")[..., None]
    R = r[..., None]
    et = rt * x + R * xt
    ep = rp * x + R * xph
    ett = rtt * x + 2 * rt * xt - R * x
    epp = rpp * x + 2 * rp * xph + R * xpp
    etp = rtp * x + rt * xph + rp * xt + R * xtp
    n = np.cross(et, ep)
    nn = np.linalg.norm(n, axis=-1)
    N = n / nn[..., None]
    g11 = np.einsum("...i,...i->...", et, et)
    g12 = np.einsum("...i,...i->...", et, ep)
    g22 = np.einsum("...i,...i->...", ep, ep)
    h11 = -np.einsum("...i,...i->...", ett, N)
    h12 = -np.einsum("...i,...i->...", etp, N)
    h22 = -np.einsum("...i,...i->...", epp, N)
    # g = C C^T with C lower triangular
    a = np.sqrt(g11)
    b = g12 / a
    cc = np.sqrt(g22 - b * b)
    # S = C^{-1} h C^{-T}; C^{-1} = [[1/a, 0], [-b/(a cc), 1/cc]]
    i11, i21, i22 = 1.0 / a, -b / (a * cc), 1.0 / cc
    s11 = i11 * i11 * h11
    s12 = i11 * (i21 * h11 + i22 * h12)
    s22 = i21 * i21 * h11 + 2 * i21 * i22 * h12 + i22 * i22 * h22
    vals, vecs = _eig_sym2(s11, s12, s22)
    S = np.stack([np.stack([s11, s12], -1), np.stack([s12, s22], -1)], -2)
    # orthonormal frame f = E C^{-T}: f1 = e_t / a, f2 = i21 e_t + i22 e_p
    f1 = et * i11[..., None]
    f2 = et * i21[..., None] + ep * i22[..., None]
    dirs = vecs[..., :, 0, None] * f1[..., None, :] + vecs[..., :, 1, None] * f2[..., None, :]
    det = g11 * g22 - g12 * g12
    ginv = np.stack(
        [np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], -2
    ) / det[..., None, None]
    E = np.stack([et, ep], axis=-1)
    E2 = np.stack([np.stack([ett, etp], -1), np.stack([etp, epp], -1)], -2)
    return CurvatureData(
        normal=N,
        mean_curvature=0.5 * (vals[..., 0] + vals[..., 1]),
        principal_curvatures=vals,
        shape_operator=S,
        area_element=nn / st,
        principal_directions=dirs,
        tangents=E,
        metric_inverse=ginv,
        second_derivatives=E2,
        basis=basis,
    )


def evaluate_curvature(e: RadialEmbedding, check: bool = True) -> CurvatureData:
    """Normals, shape operator, principal and mean curvatures at the nodes."""
    cd = curvature_from_rho(e.basis, e.rho)
    if check:
        if not (np.all(np.isfinite(cd.principal_curvatures)) and np.all(np.isfinite(cd.normal))):
            raise GeometryError("non-finite curvature")
        if cd.radial_component.min() <= 0:
            raise GeometryError("embedding is not star-shaped about its center")
    return cd


def star_margin(cd: CurvatureData) -> float:
    return float(cd.radial_component.min())


@dataclass(frozen=True)
class FunctionalValue:
    area: float
    weighted_volume: float
    value: float


def weighted_volume(e: RadialEmbedding, F) -> float:
    """``sum_w int_0^rho F(c + s x) s^d ds`` with 8-point Gauss in ``s``."""
    d = e.dimension
    x = e.grid.points
    half = 0.5 * e.rho
    s = half[:, None] * (1.0 + _GAUSS_S[None, :])  # (N, 8)
    pts = e.center_lift + s[..., None] * x[:, None, :]
    vals = F.value(pts) * s**d
    ray = half * (vals @ _GAUSS_W)
    return float(ray @ e.grid.weights)


def functional_value(e: RadialEmbedding, F, cd: CurvatureData | None = None) -> FunctionalValue:
    """Area minus ``d`` times the ``F``-weighted enclosed volume."""
    if cd is None:
        cd = evaluate_curvature(e)
    area = float(cd.area_element @ e.grid.weights)
    vol = weighted_volume(e, F)
    return FunctionalValue(area, vol, area - e.dimension * vol)


def mcf_residual(e: RadialEmbedding, F, cd: CurvatureData | None = None):
    """Node field ``H - F(e(x))`` and its sup norm."""
    if cd is None:
        cd = evaluate_curvature(e)
    res = cd.mean_curvature - F.value(e.points())
    return res, float(np.abs(res).max())


def _degree1_vector(basis: HarmonicBasis, rho) -> np.ndarray:
    """``b`` such that the degree-1 part of ``rho`` equals ``<b, x>``."""
    grid = basis.grid
    d = basis.dimension
    return (d + 1) / grid.sphere_area * (grid.points.T @ (grid.weights * rho))


def _displacement(e: RadialEmbedding, new_center) -> np.ndarray:
    if isinstance(new_center, TorusPoint):
        return min_displacement(e.center, new_center, e.torus)
    return np.asarray(new_center, dtype=float) - e.center_lift


def recenter(e: RadialEmbedding, new_center, tol: float = 1e-14, max_iter: int = 80) -> RadialEmbedding:
    """Re-sample the same surface as a radial graph about ``new_center``.

    ``new_center`` is a TorusPoint (reached by the shortest displacement) or a
    lifted ambient vector.  Each node's ray is intersected with the spectral
    interpolant of the old surface by safeguarded regula falsi.
    """
    w = _displacement(e, new_center)
    if not np.any(w):
        return e
    nw = float(np.linalg.norm(w))
    gap = float(e.radius_at((w / nw)[None, :])[0]) - nw
    if gap < 0.1 * float(e.rho.min()):
        raise GeometryError(f"new center is outside or within 10% of the surface (gap {gap:.3g})")
    x = e.grid.points

    def g(s):
        y = w + s[:, None] * x
        ny = np.linalg.norm(y, axis=1)
        return ny - e.radius_at(y / ny[:, None])

    lo = np.zeros(x.shape[0])
    hi = np.full(x.shape[0], float(e.rho.max()) + 2.0 * nw)
    glo = np.full(x.shape[0], -gap)
    # a small positive start keeps the direction of w + s x defined
    lo[:] = 1e-3 * gap
    glo = g(lo)
    ghi = g(hi)
    if np.any(glo >= 0) or np.any(ghi <= 0):
        raise GeometryError("ray casting failed to bracket the surface")
    side = np.zeros(x.shape[0], dtype=int)
    s = lo
    for _ in range(max_iter):
        s = hi - ghi * (hi - lo) / (ghi - glo)
        gs = g(s)
        pos = gs > 0
        # Illinois modification to avoid one-sided stagnation
        hi = np.where(pos, s, hi)
        lo = np.where(pos, lo, s)
        glo = np.where(pos, np.where(side == 1, 0.5 * glo, glo), gs)
        ghi = np.where(pos, gs, np.where(side == -1, 0.5 * ghi, ghi))
        side = np.where(pos, 1, -1)
        if np.abs(gs).max() < tol * max(1.0, float(e.rho.max())):
            break
    else:
        raise GeometryError("ray casting did not converge")
    return RadialEmbedding(e.torus, e.center_lift + w, s, e.basis)


@dataclass(frozen=True)
class CenterSplit:
    center: np.ndarray
    psi: np.ndarray
    embedding: RadialEmbedding
    iterations: int

    def __iter__(self):
        return iter((self.center, self.psi))


def center_graph_split(e: RadialEmbedding, kappa: float, tol: float = 1e-13, max_iter: int = 60) -> CenterSplit:
    """Move the centre until ``rho`` has no degree-1 content.

    Returns the lifted centre and ``psi = rho / kappa - 1``.  Raises
    :class:`DecompositionError` when the degree-1 content is not small
    compared with the mean radius or the iteration fails to contract.
    """
    cur = e
    mean = float(np.mean(e.rho))
    b = _degree1_vector(e.basis, cur.rho)
    if np.linalg.norm(b) >= 0.5 * mean:
        raise DecompositionError("degree-1 content too large for a unique center/graph split")
    prev = math.inf
    for it in range(max_iter):
        nb = float(np.linalg.norm(b))
        if nb <= tol * mean:
            psi = cur.rho / kappa - 1.0
            return CenterSplit(cur.center_lift.copy(), psi, cur, it)
        if nb > 0.5 * prev and nb > 1e3 * tol * mean:
            raise DecompositionError("center iteration is not contracting")
        if nb >= prev:
            # stagnation at round-off level
            psi = cur.rho / kappa - 1.0
            return CenterSplit(cur.center_lift.copy(), psi, cur, it)
        prev = nb
        try:
            cur = recenter(cur, cur.center_lift + b)
        except GeometryError as exc:
            raise DecompositionError(str(exc)) from exc
        b = _degree1_vector(e.basis, cur.rho)
    raise DecompositionError("center iteration did not converge")


def save_snapshot(e: RadialEmbedding, path) -> None:
    """JSON snapshot; ``rho`` is listed in node order (latitude-major on S^2)."""
    doc = {
        "format": SNAPSHOT_FORMAT,
        "torus": e.torus.to_config(),
        "center": e.center_lift.tolist(),
        "grid": dict(e.grid.to_spec(), max_degree=e.basis.max_degree),
        "rho": [float(v) for v in e.rho],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_snapshot(path) -> RadialEmbedding:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ConfigurationError(f"unknown snapshot format {doc.get('format')!r}")
    torus = FlatTorus.from_config(doc["torus"])
    spec = dict(doc["grid"])
    L = spec.pop("max_degree", None)
    basis = HarmonicBasis(SphereGrid.from_spec(spec), L)
    return RadialEmbedding(torus, np.array(doc["center"]), np.array(doc["rho"]), basis, filtered=True)
