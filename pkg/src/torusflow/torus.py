"""Flat tori R^{d+1}/Gamma for an arbitrary cocompact lattice Gamma.

Points are stored by their lattice coordinates ``c`` with ``raw = B @ c`` where
the columns of ``B`` generate the lattice.  The canonical representative has
every lattice coordinate in ``[0, 1)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, LiftAmbiguityError

__all__ = ["FlatTorus", "TorusPoint", "wrap", "min_displacement", "lift_path"]

_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FlatTorus:
    """Quotient of R^{d+1} by the lattice spanned by the columns of ``lattice_basis``."""

    lattice_basis: np.ndarray
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = np.array(self.lattice_basis, dtype=float)
        if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
            raise ConfigurationError("lattice basis must be a square matrix")
        if basis.shape[0] not in (2, 3):
            raise ConfigurationError("only tori of dimension 2 or 3 are supported")
        if not np.all(np.isfinite(basis)):
            raise ConfigurationError("lattice basis must be finite")
        det = np.linalg.det(basis)
        if abs(det) <= 1e-14 * max(1.0, np.abs(basis).max() ** basis.shape[0]):
            raise ConfigurationError("lattice basis is singular")
        basis.setflags(write=False)
        inv = np.linalg.inv(basis)
        inv.setflags(write=False)
        object.__setattr__(self, "lattice_basis", basis)
        object.__setattr__(self, "_inverse", inv)

    @classmethod
    def cube(cls, dim: int, side: float = 1.0) -> "FlatTorus":
        return cls(side * np.eye(dim))

    @classmethod
    def from_config(cls, rows) -> "FlatTorus":
        """Build from a JSON array of arrays (row-major matrix, generators as columns)."""
        return cls(np.array(rows, dtype=float))

    def to_config(self) -> list:
        return self.lattice_basis.tolist()

    @property
    def dimension_plus_one(self) -> int:
        return self.lattice_basis.shape[0]

    @property
    def dual_basis(self) -> np.ndarray:
        """Columns ``B^{-T} e_i``: gradients of the lattice coordinates."""
        return self._inverse.T

    def to_lattice(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        return raw @ self._inverse.T

    def to_ambient(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return coords @ self.lattice_basis.T

    @cached_property
    def shortest_vector_length(self) -> float:
        n = self.dimension_plus_one
        best = np.inf
        for shift in itertools.product(range(-2, 3), repeat=n):
            if any(shift):
                best = min(best, float(np.linalg.norm(self.lattice_basis @ np.array(shift))))
        return best

    @property
    def injectivity_radius(self) -> float:
        return 0.5 * self.shortest_vector_length

    @cached_property
    def _shifts(self) -> np.ndarray:
        # lexicographic order of integer shifts
        return np.array(list(itertools.product((-1, 0, 1), repeat=self.dimension_plus_one)), dtype=float)

    def __eq__(self, other):
        return isinstance(other, FlatTorus) and np.array_equal(self.lattice_basis, other.lattice_basis)

    def __hash__(self):
        return hash(self.lattice_basis.tobytes())


@dataclass(frozen=True, eq=False)
class TorusPoint:
    """Canonical representative: lattice coordinates in ``[0, 1)``."""

    coords: np.ndarray
    torus: FlatTorus

    @property
    def ambient(self) -> np.ndarray:
        return self.torus.to_ambient(self.coords)

    def __eq__(self, other):
        return (
            isinstance(other, TorusPoint)
            and self.torus == other.torus
            and np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash(self.coords.tobytes())


def _reduce(c: np.ndarray) -> np.ndarray:
    c = c - np.floor(c)
    # floor can leave exactly 1.0 after rounding of tiny negatives
    c[c >= 1.0] -= 1.0
    return c


def wrap(raw, torus: FlatTorus) -> TorusPoint:
    """Reduce an ambient vector to the canonical fundamental-domain representative."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (torus.dimension_plus_one,) or not np.all(np.isfinite(raw)):
        raise ConfigurationError("raw point must be a finite vector of length d+1")
    c = _reduce(torus.to_lattice(raw))
    c.setflags(write=False)
    return TorusPoint(c, torus)


def _as_point(p, torus: FlatTorus) -> TorusPoint:
    if isinstance(p, TorusPoint):
        return p
    return wrap(p, torus)


def min_displacement(p, q, torus: FlatTorus) -> np.ndarray:
    """Shortest ambient ``v`` with ``q = p + v`` modulo the lattice.

    Candidates are the nine (or 27) neighbouring lattice shifts of the reduced
    difference.  Exact ties, up to a relative ``1e-12``, go to the
    lexicographically largest integer shift, so a half-period difference maps
    to ``+1/2`` rather than ``-1/2``.
    """
    p = _as_point(p, torus)
    q = _as_point(q, torus)
    delta = _reduce(np.asarray(q.coords) - np.asarray(p.coords))
    cands = torus.to_ambient(delta[None, :] + torus._shifts)
    lengths = np.einsum("ij,ij->i", cands, cands)
    best = lengths.min()
    tied = np.flatnonzero(lengths <= best + _TIE_TOL * max(best, 1e-300))
    return cands[tied[-1]].copy()


def lift_path(points, torus: FlatTorus) -> np.ndarray:
    """Continuous lift to R^{d+1} of a sequence of torus points.

    The first lifted point is the ambient coordinate of the first input.  Each
    step must be strictly shorter than the injectivity radius (half the
    shortest lattice vector); otherwise the lift is ambiguous.
    """
    pts = [_as_point(p, torus) for p in points]
    if not pts:
        return np.zeros((0, torus.dimension_plus_one))
    out = np.empty((len(pts), torus.dimension_plus_one))
    out[0] = pts[0].ambient
    limit = torus.injectivity_radius
    for i in range(1, len(pts)):
        step = min_displacement(pts[i - 1], pts[i], torus)
        if np.linalg.norm(step) >= limit * (1.0 - 1e-12):
            raise LiftAmbiguityError(
                f"step {i} has length {np.linalg.norm(step):.6g} >= injectivity radius {limit:.6g}"
            )
        out[i] = out[i - 1] + step
    return out
