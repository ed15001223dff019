"""Spectral analysis on S^1 and S^2.

Real orthonormal bases: Fourier modes on the circle and real spherical
harmonics (normalised associated Legendre functions without the
Condon-Shortley phase) on the 2-sphere.  Each basis function of degree ``m``
is an eigenfunction of the negative-spectrum Laplacian with eigenvalue
``-m(m+d-1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, ContractViolation

__all__ = [
    "SphereGrid",
    "HarmonicBasis",
    "SpectralField",
    "TimeSpectralField",
    "real_harmonics",
    "band_mu",
    "time_derivative_matrix",
    "apply_P_kappa",
    "solve_Q_kappa",
    "holder_norm_kappa",
]


class SphereGrid:
    """Quadrature grid on S^d.

    ``d=1``: ``n`` uniform angles.  ``d=2``: Gauss-Legendre in ``cos(theta)``
    times uniform longitudes, stored latitude-major (node ``i*n_lon + j``).
    """

    def __init__(self, dimension: int, n_lat: int, n_lon: int | None = None):
        if dimension == 1:
            if n_lat < 3:
                raise ConfigurationError("circle grid needs at least 3 nodes")
            n = int(n_lat)
            self.theta = 2.0 * np.pi * np.arange(n) / n
            self.phi = np.zeros(n)
            self.points = np.stack([np.cos(self.theta), np.sin(self.theta)], axis=1)
            self.weights = np.full(n, 2.0 * np.pi / n)
            self.n_lat, self.n_lon = n, 1
        elif dimension == 2:
            if n_lon is None:
                n_lon = 2 * n_lat
            if n_lat < 2 or n_lon < 3:
                raise ConfigurationError("sphere grid too coarse")
            z, wz = np.polynomial.legendre.leggauss(int(n_lat))
            # north to south
            z, wz = z[::-1], wz[::-1]
            lon = 2.0 * np.pi * np.arange(n_lon) / n_lon
            th = np.arccos(z)
            self.theta = np.repeat(th, n_lon)
            self.phi = np.tile(lon, n_lat)
            s = np.sin(self.theta)
            self.points = np.stack(
                [s * np.cos(self.phi), s * np.sin(self.phi), np.cos(self.theta)], axis=1
            )
            self.weights = np.repeat(wz, n_lon) * (2.0 * np.pi / n_lon)
            self.n_lat, self.n_lon = int(n_lat), int(n_lon)
        else:
            raise ConfigurationError("only S^1 and S^2 are supported")
        self.dimension = dimension
        for arr in (self.theta, self.phi, self.points, self.weights):
            arr.setflags(write=False)

    @classmethod
    def circle(cls, n: int = 64) -> "SphereGrid":
        return cls(1, n)

    @classmethod
    def for_degree(cls, dimension: int, max_degree: int) -> "SphereGrid":
        """Smallest grid on which degree <= ``max_degree`` products integrate exactly."""
        if dimension == 1:
            return cls(1, 2 * max_degree + 2)
        return cls(2, max_degree + 1, 2 * max_degree + 2)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def sphere_area(self) -> float:
        return 2.0 * np.pi if self.dimension == 1 else 4.0 * np.pi

    def to_spec(self) -> dict:
        if self.dimension == 1:
            return {"dimension": 1, "n": self.n_lat}
        return {"dimension": 2, "n_lat": self.n_lat, "n_lon": self.n_lon}

    @classmethod
    def from_spec(cls, spec: dict) -> "SphereGrid":
        if spec["dimension"] == 1:
            return cls(1, spec["n"])
        return cls(2, spec["n_lat"], spec["n_lon"])

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and self.to_spec() == other.to_spec()

    def __hash__(self):
        return hash(tuple(sorted(self.to_spec().items())))


def _legendre_table(L: int, theta: np.ndarray):
    """Normalised associated Legendre functions and their theta derivatives.

    Returns arrays indexed ``[l, m, point]``; entries with ``m > l`` are zero.
    """
    z = np.cos(theta)
    s = np.sin(theta)
    P = np.zeros((L + 1, L + 1) + theta.shape)
    P[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, L + 1):
        P[m, m] = math.sqrt((2 * m + 1) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, L):
        P[m + 1, m] = math.sqrt(2 * m + 3) * z * P[m, m]
    for m in range(0, L + 1):
        for l in range(m + 2, L + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            P[l, m] = a * (z * P[l - 1, m] - b * P[l - 2, m])
    return P, z, s


def _legendre_derivs(P, z, s):
    L = P.shape[0] - 1
    dP = np.zeros_like(P)
    inv_s = 1.0 / s
    for l in range(L + 1):
        for m in range(l + 1):
            c = math.sqrt((2 * l + 1) * (l * l - m * m) / (2 * l - 1)) if l > 0 else 0.0
            prev = P[l - 1, m] if l > 0 else 0.0
            dP[l, m] = (l * z * P[l, m] - c * prev) * inv_s
    ddP = np.zeros_like(P)
    cot = z * inv_s
    for l in range(L + 1):
        for m in range(l + 1):
            ddP[l, m] = -cot * dP[l, m] - (l * (l + 1) - m * m * inv_s * inv_s) * P[l, m]
    return dP, ddP


def _basis_index(L: int, dimension: int):
    """Degree and signed order of each basis function, in storage order."""
    deg, order = [], []
    for l in range(L + 1):
        if dimension == 1:
            if l == 0:
                deg.append(0)
                order.append(0)
            else:
                deg += [l, l]
                order += [l, -l]
        else:
            deg.append(l)
            order.append(0)
            for m in range(1, l + 1):
                deg += [l, l]
                order += [m, -m]
    return np.array(deg), np.array(order)


def real_harmonics(dimension: int, L: int, theta, phi=None, derivatives: bool = False):
    """Tabulate the real orthonormal basis at angles.

    Returns ``Y`` of shape ``(npts, nbasis)``, or when ``derivatives`` is set a
    dict with keys ``Y`` and derivative tables (``t``, ``tt`` on the circle;
    ``t``, ``tt``, ``p``, ``pp``, ``tp`` on the sphere, ``t`` = theta,
    ``p`` = phi).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    deg, order = _basis_index(L, dimension)
    if dimension == 1:
        m = np.abs(order)
        ang = theta[:, None] * m[None, :]
        norm = np.where(m == 0, 1.0 / math.sqrt(2 * math.pi), 1.0 / math.sqrt(math.pi))
        cosine = order >= 0
        Y = np.where(cosine, np.cos(ang), np.sin(ang)) * norm
        if not derivatives:
            return Y
        Yt = np.where(cosine, -np.sin(ang), np.cos(ang)) * norm * m
        Ytt = -Y * m * m
        return {"Y": Y, "t": Yt, "tt": Ytt}

    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    P, z, s = _legendre_table(L, theta)
    m = np.abs(order)
    Pl = P[deg, m].T  # (npts, nb)
    ang = phi[:, None] * m[None, :]
    fac = np.where(m == 0, 1.0, math.sqrt(2.0))
    trig = np.where(order >= 0, np.cos(ang), np.sin(ang)) * fac
    Y = Pl * trig
    if not derivatives:
        return Y
    dP, ddP = _legendre_derivs(P, z, s)
    dtrig = np.where(order >= 0, -np.sin(ang), np.cos(ang)) * fac * m
    out = {
        "Y": Y,
        "t": dP[deg, m].T * trig,
        "tt": ddP[deg, m].T * trig,
        "p": Pl * dtrig,
        "pp": -Y * m * m,
        "tp": dP[deg, m].T * dtrig,
    }
    return out


@dataclass(frozen=True)
class SpectralField:
    basis: "HarmonicBasis"
    coeffs: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.basis.synthesize(self.coeffs)

    def degree_norms(self) -> np.ndarray:
        out = np.zeros(self.basis.max_degree + 1)
        np.add.at(out, self.basis.degrees, self.coeffs**2)
        return np.sqrt(out)


class HarmonicBasis:
    """Real orthonormal basis of degree <= ``max_degree`` tabulated on a grid."""

    def __init__(self, grid: SphereGrid, max_degree: int | None = None):
        d = grid.dimension
        if max_degree is None:
            max_degree = (grid.n_lat - 1) // 2 if d == 1 else grid.n_lat - 1
        if d == 1 and 2 * max_degree + 1 > grid.n_lat:
            raise ConfigurationError("too many Fourier modes for the circle grid")
        if d == 2 and (max_degree + 1 > grid.n_lat or 2 * max_degree + 1 > grid.n_lon):
            raise ConfigurationError("degree too high for the sphere grid")
        self.grid = grid
        self.dimension = d
        self.max_degree = int(max_degree)
        self.degrees, self.orders = _basis_index(self.max_degree, d)
        self.eigenvalues = self.degrees * (self.degrees + d - 1)
        self.tables = real_harmonics(d, self.max_degree, grid.theta, grid.phi, derivatives=True)
        self.Y = self.tables["Y"]
        self._analysis = (self.Y * grid.weights[:, None]).T.copy()
        self.deg1 = np.flatnonzero(self.degrees == 1)
        self.not_deg1 = np.flatnonzero(self.degrees != 1)

    @property
    def size(self) -> int:
        return self.degrees.size

    def analyze(self, field) -> np.ndarray:
        """Quadrature coefficients; accepts ``(..., N)`` arrays."""
        return np.asarray(field) @ self._analysis.T

    def synthesize(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.Y.T

    def spectral(self, field) -> SpectralField:
        return SpectralField(self, self.analyze(field))

    def filter(self, field) -> np.ndarray:
        return self.synthesize(self.analyze(field))

    def derivative(self, coeffs, key: str) -> np.ndarray:
        return np.asarray(coeffs) @ self.tables[key].T

    def laplacian(self, field) -> np.ndarray:
        return self.synthesize(-self.eigenvalues * self.analyze(field))

    def project_deg1(self, field):
        """``(Pi field, Pi_perp field)`` for the degree-1 subspace."""
        c = self.analyze(field)
        c1 = np.zeros_like(c)
        c1[..., self.deg1] = c[..., self.deg1]
        p = self.synthesize(c1)
        return p, self.synthesize(c - c1)

    def evaluate(self, coeffs, directions) -> np.ndarray:
        """Evaluate an expansion at arbitrary unit vectors ``(M, d+1)``."""
        u = np.asarray(directions, dtype=float)
        if self.dimension == 1:
            Y = real_harmonics(1, self.max_degree, np.arctan2(u[:, 1], u[:, 0]))
        else:
            th = np.arccos(np.clip(u[:, 2], -1.0, 1.0))
            ph = np.arctan2(u[:, 1], u[:, 0])
            Y = real_harmonics(2, self.max_degree, th, ph)
        return np.asarray(coeffs) @ Y.T

    @cached_property
    def coordinate_coeffs(self) -> np.ndarray:
        """Coefficients of the coordinate functions ``x_i``, shape ``(d+1, nb)``."""
        return self.analyze(self.grid.points.T)


def band_mu(basis: HarmonicBasis) -> np.ndarray:
    """Multiplier of ``-(1/d)(d + Delta)`` on each basis function."""
    d = basis.dimension
    return (basis.eigenvalues - d) / d


@dataclass
class TimeSpectralField:
    """Coefficients ``(n_t, nbasis)`` on a uniform time grid over ``[-T, T]``."""

    basis: HarmonicBasis
    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.times.size, self.basis.size):
            raise ConfigurationError("coefficient array does not match the time grid and basis")
        if not np.all(np.isfinite(self.coeffs)):
            raise ConfigurationError("time field must be finite")

    @property
    def h_t(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def uniform(cls, basis: HarmonicBasis, T: float, n_t: int, coeffs=None):
        times = np.linspace(-T, T, n_t)
        if coeffs is None:
            coeffs = np.zeros((n_t, basis.size))
        return cls(basis, times, coeffs)

    def values(self) -> np.ndarray:
        return self.basis.synthesize(self.coeffs)

    def with_coeffs(self, coeffs) -> "TimeSpectralField":
        return TimeSpectralField(self.basis, self.times, coeffs)


_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FWD0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FWD1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def _derivative_entries(n: int, h: float):
    """Row, column and value triples of the fourth-order derivative matrix."""
    rows, cols, vals = [], [], []

    def put(i, j0, stencil):
        for off, v in enumerate(stencil):
            rows.append(i)
            cols.append(j0 + off)
            vals.append(v / h)

    put(0, 0, _FWD0)
    put(1, 0, _FWD1)
    for i in range(2, n - 2):
        put(i, i - 2, _CENTRAL)
    put(n - 2, n - 5, -_FWD1[::-1])
    put(n - 1, n - 5, -_FWD0[::-1])
    return np.array(rows), np.array(cols), np.array(vals)


def time_derivative_matrix(n: int, h: float) -> np.ndarray:
    """Fourth-order first-derivative matrix on ``n`` uniform nodes.

    Central five-point stencil inside, one-sided fourth-order stencils on the
    two nodes nearest each end.
    """
    if n < 5:
        raise ConfigurationError("need at least 5 time nodes")
    D = np.zeros((n, n))
    r, c, v = _derivative_entries(n, h)
    D[r, c] = v
    return D


def _fd_dt(values: np.ndarray, h: float) -> np.ndarray:
    """Apply the fourth-order derivative along axis 0."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    out = np.empty_like(v)
    out[2 : n - 2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / 12.0
    out[0] = np.tensordot(_FWD0, v[0:5], axes=1)
    out[1] = np.tensordot(_FWD1, v[0:5], axes=1)
    out[n - 2] = -np.tensordot(_FWD1[::-1], v[n - 5 :], axes=1)
    out[n - 1] = -np.tensordot(_FWD0[::-1], v[n - 5 :], axes=1)
    return out / h


def _check_no_deg1(u: TimeSpectralField, what: str, tol: float = 1e-12):
    if u.basis.deg1.size and np.abs(u.coeffs[:, u.basis.deg1]).max(initial=0.0) > tol:
        raise ContractViolation(f"{what} has degree-1 content; the band operator is not invertible there")


def apply_P_kappa(u: TimeSpectralField, kappa: float) -> TimeSpectralField:
    """``kappa^4 u' + mu_m u`` bandwise, for fields without degree-1 content."""
    _check_no_deg1(u, "input")
    mu = band_mu(u.basis)
    out = kappa**4 * _fd_dt(u.coeffs, u.h_t) + u.coeffs * mu
    out[:, u.basis.deg1] = 0.0
    return u.with_coeffs(out)


def solve_Q_kappa(g: TimeSpectralField, kappa: float) -> TimeSpectralField:
    """Bounded inverse of :func:`apply_P_kappa` on the time window.

    The discrete operator is imposed on interior nodes and the two end nodes
    carry the quasi-static values ``g / mu_m``.
    """
    _check_no_deg1(g, "right-hand side")
    basis = g.basis
    mu = band_mu(basis)
    n = g.times.size
    if n < 5:
        raise ConfigurationError("need at least 5 time nodes")
    r, c, v = _derivative_entries(n, g.h_t)
    inner = (r > 0) & (r < n - 1)
    r, c, v = r[inner], c[inner], v[inner] * kappa**4
    out = np.zeros_like(g.coeffs)
    for value in np.unique(mu[basis.not_deg1]):
        cols = np.flatnonzero((mu == value) & (basis.degrees != 1))
        ab = np.zeros((7, n))
        np.add.at(ab, (3 + r - c, c), v)
        ab[3, 1 : n - 1] += value
        ab[3, 0] = 1.0
        ab[3, n - 1] = 1.0
        rhs = g.coeffs[:, cols].copy()
        rhs[0] /= value
        rhs[-1] /= value
        out[:, cols] = solve_banded((3, 3), ab, rhs)
    return g.with_coeffs(out)


def holder_norm_kappa(u, times, k: int, alpha: float, kappa: float) -> float:
    """Discrete ``||u||_{k, alpha, kappa}`` with ``D_s = kappa^4 D_t``.

    ``u`` has time along axis 0; other axes are taken in sup norm.  The Holder
    quotient runs over pairs with ``|s - s'| <= 1``, i.e. ``|t - t'| <= kappa^4``.
    """
    u = np.asarray(u, dtype=float)
    times = np.asarray(times, dtype=float)
    h = float(times[1] - times[0])
    scale = kappa**4
    if h > scale / 4.0:
        warnings.warn(
            f"time step {h:.3g} is coarse relative to kappa^4 = {scale:.3g}; Holder norm is inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    total = 0.0
    cur = u
    for i in range(k + 1):
        if i > 0:
            cur = scale * _fd_dt(cur, h)
        total += float(np.abs(cur).max())
    max_lag = int(math.floor(scale / h + 1e-12))
    quot = 0.0
    for lag in range(1, min(max_lag, cur.shape[0] - 1) + 1):
        ds = lag * h / scale
        diff = np.abs(cur[lag:] - cur[:-lag]).max()
        quot = max(quot, float(diff) / ds**alpha)
    return total + quot
