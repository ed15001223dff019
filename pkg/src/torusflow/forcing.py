"""Trigonometric functions on flat tori, forcing terms and subcriticality.

A :class:`TrigFunction` is a finite sum ``const + sum amp*cos(2*pi*k.c + phase)``
where ``c`` are lattice coordinates and ``k`` integer frequency vectors, so
every term is exactly periodic for the lattice.  Jets are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DomainError, NonPositiveForcingError
from .torus import FlatTorus, TorusPoint

__all__ = [
    "TrigFunction",
    "ForcingTerm",
    "SubcriticalityReport",
    "eval_jets",
    "global_bounds",
    "trig_bounds",
    "phi_controlling",
    "phi_maximizer",
    "pinching_constants",
    "subcritical_check",
    "kappa_forcing",
    "PHI_MAX",
    "T_STAR",
]

TWO_PI = 2.0 * math.pi
T_STAR = 1.0 + math.sqrt(2.0)
PHI_MAX = 3.0 - 2.0 * math.sqrt(2.0)

_GRID_POINTS_CAP = 1 << 21
_CHUNK = 1 << 16


class TrigFunction:
    """Real trigonometric polynomial on a flat torus with exact derivatives."""

    def __init__(self, terms, torus: FlatTorus, constant: float = 0.0):
        self.torus = torus
        dim = torus.dimension_plus_one
        ks, amps, phases = [], [], []
        for term in terms:
            if isinstance(term, dict):
                k, amp, phase = term["k"], term.get("amp", 1.0), term.get("phase", 0.0)
            else:
                k, amp, phase = term
            k = np.asarray(k)
            if k.shape != (dim,) or not np.all(np.equal(np.mod(k, 1), 0)):
                raise ConfigurationError(f"wave vector {k!r} must be {dim} integers")
            ks.append(k.astype(int))
            amps.append(float(amp))
            phases.append(float(phase))
        self.k = np.array(ks, dtype=int).reshape(-1, dim)
        self.amp = np.array(amps, dtype=float)
        self.phase = np.array(phases, dtype=float)
        self.constant = float(constant)
        # ambient angular wave vectors: grad of 2*pi*k.c
        self.k_ambient = TWO_PI * (self.k @ torus._inverse)

    @classmethod
    def from_config(cls, cfg: dict, torus: FlatTorus) -> "TrigFunction":
        return cls(cfg.get("terms", []), torus, cfg.get("constant", 0.0))

    def to_config(self) -> dict:
        return {
            "constant": self.constant,
            "terms": [
                {"k": k.tolist(), "amp": a, "phase": p}
                for k, a, p in zip(self.k, self.amp, self.phase)
            ],
        }

    @classmethod
    def cosine_sum(cls, torus: FlatTorus, amp: float = 1.0) -> "TrigFunction":
        """``sum_i amp*cos(2*pi*c_i)``: the product-cosine Morse fixture."""
        dim = torus.dimension_plus_one
        return cls([(np.eye(dim, dtype=int)[i], amp, 0.0) for i in range(dim)], torus)

    @property
    def is_constant(self) -> bool:
        return not np.any((self.amp != 0) & np.any(self.k != 0, axis=1))

    def _args(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.k_ambient.T + self.phase

    def value(self, x):
        """Value at ambient points ``x`` of shape ``(..., d+1)``."""
        return self.constant + np.cos(self._args(x)) @ self.amp

    def gradient(self, x):
        s = np.sin(self._args(x)) * self.amp
        return -s @ self.k_ambient

    @cached_property
    def _outer(self):
        kk = self.k_ambient
        return (kk[:, :, None] * kk[:, None, :]).reshape(kk.shape[0], kk.shape[1] ** 2)

    def hessian(self, x):
        c = np.cos(self._args(x)) * self.amp
        dim = self.k_ambient.shape[1]
        return -(c @ self._outer).reshape(c.shape[:-1] + (dim, dim))

    def third(self, x):
        s = np.sin(self._args(x)) * self.amp
        kk = self.k_ambient
        return np.einsum("...t,ti,tj,tl->...ijl", s, kk, kk, kk)

    def jets(self, x):
        return self.value(x), self.gradient(x), self.hessian(x)

    def derivative_bound(self, order: int) -> float:
        """Coefficient-sum bound on the operator norm of the ``order``-th derivative."""
        norms = np.linalg.norm(self.k_ambient, axis=1)
        if order == 0:
            return float(np.abs(self.amp).sum() + abs(self.constant))
        return float(np.sum(np.abs(self.amp) * norms**order))

    @cached_property
    def _bounds(self):
        return _scan_bounds(self)

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class ForcingTerm:
    """A forcing term, either ``F = base`` or ``F = (1 - kappa^2 base)/kappa``."""

    base: TrigFunction
    kappa: float | None = None

    @property
    def torus(self) -> FlatTorus:
        return self.base.torus

    @classmethod
    def constant(cls, value: float, torus: FlatTorus) -> "ForcingTerm":
        return cls(TrigFunction([], torus, value))

    @property
    def is_kappa_family(self) -> bool:
        return self.kappa is not None

    @property
    def is_constant(self) -> bool:
        return self.base.is_constant

    def value(self, x):
        f = self.base.value(x)
        if self.kappa is None:
            return f
        return (1.0 - self.kappa**2 * f) / self.kappa

    def gradient(self, x):
        g = self.base.gradient(x)
        return g if self.kappa is None else -self.kappa * g

    def hessian(self, x):
        h = self.base.hessian(x)
        return h if self.kappa is None else -self.kappa * h

    def __call__(self, x):
        return self.value(x)

    def to_config(self) -> dict:
        out = {"function": self.base.to_config()}
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


def _ambient(p, fn) -> np.ndarray:
    if isinstance(p, TorusPoint):
        if p.torus != fn.torus:
            raise ConfigurationError("point and function live on different tori")
        return p.ambient
    return np.asarray(p, dtype=float)


def eval_jets(F, p):
    """Exact ``(value, gradient, hessian)`` of a TrigFunction or ForcingTerm at ``p``."""
    x = _ambient(p, F)
    return F.value(x), F.gradient(x), F.hessian(x)


def _spectral_radius_sym(H: np.ndarray) -> np.ndarray:
    """Largest |eigenvalue| of stacked symmetric 2x2 or 3x3 matrices, in closed form."""
    if H.shape[-1] == 2:
        a, b, c = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
        return np.abs(0.5 * (a + c)) + np.hypot(0.5 * (a - c), b)
    a, b, c = H[..., 0, 0], H[..., 1, 1], H[..., 2, 2]
    u, v, w = H[..., 0, 1], H[..., 0, 2], H[..., 1, 2]
    q = (a + b + c) / 3.0
    a, b, c = a - q, b - q, c - q
    p = np.sqrt((a * a + b * b + c * c + 2.0 * (u * u + v * v + w * w)) / 6.0)
    safe = np.where(p > 0, p, 1.0)
    det = a * (b * c - w * w) - u * (u * c - w * v) + v * (u * w - b * v)
    r = np.clip(0.5 * det / safe**3, -1.0, 1.0)
    ang = np.arccos(r) / 3.0
    top = q + 2.0 * p * np.cos(ang)
    bottom = q + 2.0 * p * np.cos(ang + 2.0 * math.pi / 3.0)
    return np.maximum(np.abs(top), np.abs(bottom))


def _scan_bounds(f: TrigFunction, rtol: float = 1e-5):
    """Certified ``(min, max, sup |D^2 f(xi, xi)|)`` of a trig polynomial.

    The scan uses a uniform lattice-coordinate grid.  At an interior extremum
    the first derivative vanishes, so the nearest grid value is within
    ``M2 h^2 / 2`` of the extremum (``M2`` bounds the second derivative and
    ``h`` the distance to the nearest node).  The same argument applied to
    ``x -> D^2 f(x)(xi*, xi*)`` with ``M4`` widens the Hessian scan.
    """
    if f.is_constant:
        v = f.constant + float(np.sum(f.amp * np.cos(f.phase)))
        return v, v, 0.0
    dim = f.torus.dimension_plus_one
    m0 = f.derivative_bound(0)
    m2 = f.derivative_bound(2)
    m4 = f.derivative_bound(4)
    spread = 0.5 * float(np.linalg.norm(f.torus.lattice_basis, axis=0).sum())
    need = max(
        spread * math.sqrt(0.5 * m2 / (rtol * m0)),
        spread * math.sqrt(0.5 * m4 / (rtol * m2)),
    )
    cap = int(round(_GRID_POINTS_CAP ** (1.0 / dim)))
    n = int(min(max(math.ceil(need), 16), cap))
    h = spread / n
    axis = np.arange(n) / n
    lo, hi, hs = np.inf, -np.inf, 0.0
    total = n**dim
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        coords = np.stack(np.unravel_index(idx, (n,) * dim), axis=-1)
        x = f.torus.to_ambient(axis[coords])
        v = f.value(x)
        lo = min(lo, float(v.min()))
        hi = max(hi, float(v.max()))
        hs = max(hs, float(_spectral_radius_sym(f.hessian(x)).max()))
    w0 = 0.5 * m2 * h * h
    w2 = 0.5 * m4 * h * h
    return lo - w0, hi + w0, hs + w2


def trig_bounds(f: TrigFunction):
    """Certified ``(min, max, hess_sup)`` of a trig polynomial (cached per function)."""
    return f._bounds


def global_bounds(F):
    """Certified ``(F_minus, F_plus, hess_sup)`` of a forcing term.

    Raises :class:`NonPositiveForcingError` when ``F_minus <= 0``.
    """
    if isinstance(F, TrigFunction):
        F = ForcingTerm(F)
    fmin, fmax, fh = trig_bounds(F.base)
    if F.kappa is None:
        lo, hi, hs = fmin, fmax, fh
    else:
        k = F.kappa
        lo = (1.0 - k * k * fmax) / k
        hi = (1.0 - k * k * fmin) / k
        hs = k * fh
    if lo <= 0:
        raise NonPositiveForcingError(f"forcing term is not positive (F_minus bound {lo:.6g})")
    return lo, hi, hs


def phi_controlling(t: float) -> float:
    """``(t - 1) / (t (t + 1))`` on ``t >= 1``."""
    if not t >= 1.0:
        raise DomainError(f"phi is defined for t >= 1, got {t}")
    if math.isinf(t):
        return 0.0
    return (t - 1.0) / (t * (t + 1.0))


def phi_maximizer(tol: float = 1e-13):
    """Locate the maximum of phi by bisection on the sign of its derivative.

    ``phi'(t)`` has the sign of ``-t^2 + 2t + 1``.
    """
    a, b = 1.0, 3.0
    while b - a > tol:
        m = 0.5 * (a + b)
        if -m * m + 2.0 * m + 1.0 > 0:
            a = m
        else:
            b = m
    t = 0.5 * (a + b)
    return t, phi_controlling(t)


def _bisect(g, a, b, tol):
    # tol is relative to the bracket magnitude; Lambda_F can be astronomically large
    ga = g(a)
    while b - a > tol * max(1.0, abs(b)):
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        gm = g(m)
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


def pinching_constants(ratio: float, tol: float = 1e-12):
    """The two solutions ``lambda <= 1+sqrt2 <= Lambda`` of ``phi(t) = ratio``."""
    if not (0.0 <= ratio <= PHI_MAX + 1e-15):
        raise DomainError(f"ratio {ratio} outside [0, 3 - 2 sqrt 2]")
    if ratio == 0.0:
        return 1.0, math.inf
    if ratio >= PHI_MAX:
        return T_STAR, T_STAR

    def g(t):
        return phi_controlling(t) - ratio

    lam = _bisect(g, 1.0, T_STAR, tol)
    hi = 2.0 * T_STAR
    while g(hi) > 0:
        hi *= 2.0
    big = _bisect(g, T_STAR, hi, tol)
    return lam, big


@dataclass(frozen=True)
class SubcriticalityReport:
    f_minus: float
    f_plus: float
    hess_sup: float
    ratio: float
    subcritical: bool
    lambda_F: float
    Lambda_F: float


def subcritical_check(F) -> SubcriticalityReport:
    """Bounds, the ratio ``hess_sup / F_minus^3`` and the pinching constants."""
    lo, hi, hs = global_bounds(F)
    ratio = hs / lo**3
    sub = ratio <= PHI_MAX
    if sub:
        lam, big = pinching_constants(min(ratio, PHI_MAX))
    else:
        lam, big = math.nan, math.nan
    return SubcriticalityReport(lo, hi, hs, ratio, sub, lam, big)


def kappa_forcing(f: TrigFunction, kappa: float) -> ForcingTerm:
    """``F_kappa = (1 - kappa^2 f) / kappa``; requires ``kappa^2 max f < 1``."""
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    _, fmax, _ = trig_bounds(f)
    if kappa * kappa * fmax >= 1.0:
        raise NonPositiveForcingError(
            f"kappa^2 * max f = {kappa * kappa * fmax:.6g} >= 1: F_kappa is not positive"
        )
    return ForcingTerm(f, float(kappa))
