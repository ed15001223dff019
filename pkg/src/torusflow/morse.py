"""Morse theory of trigonometric functions on flat tori.

Critical points by vectorised Newton, heteroclinic flow lines by shooting
from the lower-dimensional of the two relevant spheres, the linearised
operator ``L = D_t + Hess f(gamma)`` with its left inverse, and the mod-2
chain complex with its homology.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import lu_factor, lu_solve, qr, solve_triangular

from .errors import DichotomyError, NonMorseError, SolverError
from .forcing import TrigFunction
from .harmonics import time_derivative_matrix
from .torus import TorusPoint, min_displacement, wrap

__all__ = [
    "CriticalPoint",
    "Heteroclinic",
    "ChainComplexZ2",
    "find_critical_points",
    "gradient_trajectory",
    "heteroclinic_count",
    "build_heteroclinic",
    "LinearizedOperator",
    "linearized_solve",
    "fredholm_index_check",
    "gf2_rank",
    "assemble_complex",
    "concentrated_complex",
    "homology_ranks",
]


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    location: TorusPoint
    hessian: np.ndarray
    index: int
    gradient_norm: float
    value: float

    @property
    def ambient(self) -> np.ndarray:
        return self.location.ambient

    def eigen(self):
        return np.linalg.eigh(self.hessian)

    def __repr__(self):
        c = np.round(self.location.coords, 6).tolist()
        return f"CriticalPoint(coords={c}, index={self.index}, value={self.value:.6g})"


def find_critical_points(
    f: TrigFunction,
    seeds_per_axis: int = 32,
    grad_tol: float = 1e-10,
    dedup: float = 1e-6,
    nondegeneracy: float = 1e-6,
    max_iter: int = 60,
) -> list:
    """All critical points reached by Newton from a uniform seed grid.

    Raises :class:`NonMorseError` when a root has a Hessian eigenvalue below
    ``nondegeneracy`` times the second-derivative scale of ``f``.
    """
    torus = f.torus
    dim = torus.dimension_plus_one
    scale = max(f.derivative_bound(2), 1e-300)
    if f.is_constant:
        raise NonMorseError("constant function: every point is a degenerate critical point")
    axis = (np.arange(seeds_per_axis) + 0.25) / seeds_per_axis
    seeds = np.array(list(itertools.product(axis, repeat=dim)))
    x = torus.to_ambient(seeds)
    alive = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        g = f.gradient(x)
        H = f.hessian(x)
        ok = np.abs(np.linalg.det(H)) > 1e-14 * scale**dim
        alive &= ok
        step = np.zeros_like(x)
        step[alive] = np.linalg.solve(H[alive], g[alive][..., None])[..., 0]
        # damp long steps
        norm = np.linalg.norm(step, axis=1)
        cap = 0.25 * torus.injectivity_radius
        step *= np.minimum(1.0, cap / np.maximum(norm, 1e-300))[:, None]
        x = x - step
        if np.all(np.linalg.norm(f.gradient(x[alive]), axis=1) < 1e-3 * grad_tol):
            break
    g = np.linalg.norm(f.gradient(x), axis=1)
    roots = x[alive & (g <= grad_tol)]
    found: list = []
    for r in roots:
        p = wrap(r, torus)
        if any(np.linalg.norm(min_displacement(p, q.location, torus)) < dedup for q in found):
            continue
        amb = p.ambient
        H = f.hessian(amb)
        ev = np.linalg.eigvalsh(H)
        if np.abs(ev).min() < nondegeneracy * scale:
            raise NonMorseError(f"degenerate critical point at {p.coords}")
        found.append(
            CriticalPoint(
                p,
                H,
                int((ev < 0).sum()),
                float(np.linalg.norm(f.gradient(amb))),
                float(f.value(amb)),
            )
        )
    if len(found) < 2**dim:
        # Morse inequalities: at least sum of Betti numbers = 2^(d+1) critical points
        raise NonMorseError(
            f"found {len(found)} nondegenerate critical points, fewer than the {2**dim} "
            "any Morse function on this torus has: degenerate or missed"
        )
    found.sort(key=lambda c: (-c.index, -c.value, tuple(c.location.coords)))
    return found


@dataclass
class GradientPath:
    times: np.ndarray
    points: np.ndarray
    values: np.ndarray


def gradient_trajectory(start, f: TrigFunction, t_span, rtol: float = 1e-10, atol: float = 1e-12, n_out: int = 201):
    """Integrate ``gamma' = -grad f(gamma)`` with an adaptive eighth-order method."""
    x0 = start.ambient if isinstance(start, TorusPoint) else np.asarray(start, dtype=float)
    t_eval = np.linspace(t_span[0], t_span[1], n_out)
    sol = solve_ivp(
        lambda _, y: -f.gradient(y), t_span, x0, method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval
    )
    if not sol.success:
        raise SolverError(sol.message)
    pts = sol.y.T
    return GradientPath(sol.t, pts, f.value(pts))


@dataclass
class Heteroclinic:
    """A flow line from ``source`` to ``target`` sampled on a uniform time grid.

    ``t = 0`` sits at the level ``(f(source) + f(target)) / 2``; ``points`` is
    a continuous lift.
    """

    source: CriticalPoint
    target: CriticalPoint
    times: np.ndarray
    points: np.ndarray
    f: TrigFunction
    glue_gap: float = 0.0

    @property
    def velocity(self) -> np.ndarray:
        return -self.f.gradient(self.points)

    @property
    def hessians(self) -> np.ndarray:
        return self.f.hessian(self.points)

    def flow_residual(self) -> float:
        D = time_derivative_matrix(self.times.size, self.times[1] - self.times[0])
        return float(np.abs(D @ self.points + self.f.gradient(self.points)).max())

    def source_lift(self) -> np.ndarray:
        return self.points[0] + min_displacement(wrap(self.points[0], self.f.torus), self.source.location, self.f.torus)

    def target_lift(self) -> np.ndarray:
        return self.points[-1] + min_displacement(wrap(self.points[-1], self.f.torus), self.target.location, self.f.torus)


def _sphere_directions(vecs: np.ndarray, n_dirs: int) -> tuple:
    """Unit directions on the sphere spanned by the columns of ``vecs`` (S^0 or S^1)."""
    k = vecs.shape[1]
    if k == 1:
        return np.stack([vecs[:, 0], -vecs[:, 0]]), np.array([0.0, math.pi])
    if k == 2:
        ang = 2.0 * math.pi * np.arange(n_dirs) / n_dirs
        return np.cos(ang)[:, None] * vecs[:, 0] + np.sin(ang)[:, None] * vecs[:, 1], ang
    raise NonMorseError("shooting sphere of dimension >= 2 is not supported")


def _arcs(mask: np.ndarray) -> list:
    """Maximal circular runs of True in ``mask`` as (start, length)."""
    n = mask.size
    if mask.all():
        return [(0, n)]
    if not mask.any():
        return []
    shift = int(np.argmin(mask))  # a False entry
    m = np.roll(mask, -shift)
    out = []
    i = 0
    while i < n:
        if m[i]:
            j = i
            while j < n and m[j]:
                j += 1
            out.append(((i + shift) % n, j - i))
            i = j
        else:
            i += 1
    return out


def heteroclinic_count(
    p: CriticalPoint,
    q: CriticalPoint,
    f: TrigFunction,
    delta: float = 1e-4,
    n_dirs: int = 4096,
    basin: float = 0.05,
    build: bool = True,
    n_t: int = 801,
):
    """Count flow lines from ``p`` to ``q`` (index difference one) modulo two.

    Shoots from the smaller of the unstable sphere of ``p`` and the stable
    sphere of ``q`` (the latter with the time-reversed flow), records which
    directions pass within ``basin`` of the other end, and counts connected
    arcs of such directions.
    """
    if p.index - q.index != 1:
        raise ValueError("heteroclinic counting needs index(p) - index(q) = 1")
    torus = f.torus
    dim = torus.dimension_plus_one
    ev_p, V_p = p.eigen()
    ev_q, V_q = q.eigen()
    unstable_p = V_p[:, ev_p < 0]
    stable_q = V_q[:, ev_q > 0]
    forward = unstable_p.shape[1] <= stable_q.shape[1]
    if forward:
        base, vecs, goal, sign = p, unstable_p, q, -1.0
    else:
        base, vecs, goal, sign = q, stable_q, p, 1.0
    dirs, _ = _sphere_directions(vecs, n_dirs)
    x = base.ambient + delta * dirs
    goal_amb = goal.ambient
    f_goal = goal.value
    margin = 0.5 * abs(p.value - q.value)
    arrived = np.zeros(len(x), dtype=bool)
    lifts = goal_amb + torus.to_ambient(np.array(list(itertools.product((-1, 0, 1), repeat=dim))))

    def dist_goal(y):
        d = np.linalg.norm(y[:, None, :] - lifts[None, :, :], axis=2)
        return d.min(axis=1)

    m2 = f.derivative_bound(2)
    h = 0.2 / m2
    grad_floor = 1e-3 * m2 * basin
    drop = p.value - q.value
    rhs = lambda y: sign * f.gradient(y)  # noqa: E731
    t_needed = 4.0 * (math.log(max(1.0, 1.0 / delta)) + 10.0) / min(np.abs(ev_p).min(), np.abs(ev_q).min())
    active = np.arange(len(x))
    y = x.copy()
    for _ in range(int(math.ceil(t_needed / h))):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        hit = dist_goal(y) < basin
        arrived[active[hit]] = True
        vals = f.value(y)
        past = (vals < f_goal - margin) if sign < 0 else (vals > f_goal + margin)
        # stalled next to some other critical point
        moved = np.abs(vals - base.value) > 0.05 * drop
        stalled = moved & (np.linalg.norm(rhs(y), axis=1) < grad_floor)
        keep = ~(hit | past | stalled)
        active, y = active[keep], y[keep]
        if active.size == 0:
            break
    arcs = _arcs(arrived) if len(dirs) > 2 else [(i, 1) for i in np.flatnonzero(arrived)]
    if len(dirs) > 2 and arcs and arcs[0][1] == len(dirs):
        raise NonMorseError("arrival set covers the whole shooting sphere; pair is not Morse-Smale")
    reps = []
    if build:
        for start, length in arcs:
            if len(dirs) > 2:
                ang = 2.0 * math.pi * (start + 0.5 * (length - 1)) / len(dirs)
                v = math.cos(ang) * vecs[:, 0] + math.sin(ang) * vecs[:, 1]
            else:
                v = dirs[start]
            reps.append(build_heteroclinic(p, q, f, v, from_source=forward, n_t=n_t))
    return len(arcs) % 2, reps, len(arcs)


def _half_path(start_pt, v, sign, f, level, delta):
    """Integrate from ``start_pt + delta v`` until ``f`` reaches ``level``."""
    x0 = start_pt + delta * v

    def ev(_, y):
        return f.value(y) - level

    ev.terminal = True
    sol = solve_ivp(
        lambda _, y: sign * f.gradient(y),
        (0.0, 1e4),
        x0,
        method="DOP853",
        rtol=1e-13,
        atol=1e-15,
        events=ev,
        dense_output=True,
    )
    if sol.status != 1:
        raise SolverError("half path did not reach the gluing level")
    return sol


def build_heteroclinic(
    p: CriticalPoint,
    q: CriticalPoint,
    f: TrigFunction,
    direction,
    from_source: bool = True,
    n_t: int = 801,
    grad_tol: float = 1e-8,
    delta: float = 1e-11,
) -> Heteroclinic:
    """Accurate flow line on a uniform time grid with small gradient at both ends.

    Two half-orbits are integrated towards the middle level: forward from the
    unstable manifold of ``p`` and backward from the stable manifold of
    ``q``, each in the direction where it is stable.  ``direction`` fixes one
    end; the other end's direction is read off a preliminary shot.
    """
    torus = f.torus
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    mid = 0.5 * (p.value + q.value)
    ev_p, V_p = p.eigen()
    ev_q, V_q = q.eigen()
    Pu = V_p[:, ev_p < 0] @ V_p[:, ev_p < 0].T
    Ps = V_q[:, ev_q > 0] @ V_q[:, ev_q > 0].T
    if from_source:
        vp = Pu @ direction
        vp /= np.linalg.norm(vp)
        pre = _half_path(p.ambient, vp, -1.0, f, q.value + 0.02 * (p.value - q.value), 1e-6)
        end = pre.y[:, -1]
        q_lift = end + min_displacement(wrap(end, torus), q.location, torus)
        vq = Ps @ (end - q_lift)
        vq /= np.linalg.norm(vq)
        p_lift = p.ambient
    else:
        vq = Ps @ direction
        vq /= np.linalg.norm(vq)
        pre = _half_path(q.ambient, vq, 1.0, f, p.value - 0.02 * (p.value - q.value), 1e-6)
        end = pre.y[:, -1]
        p_lift = end + min_displacement(wrap(end, torus), p.location, torus)
        vp = Pu @ (end - p_lift)
        vp /= np.linalg.norm(vp)
        q_lift = q.ambient
    up = _half_path(p_lift, vp, -1.0, f, mid, delta)
    down = _half_path(q_lift, vq, 1.0, f, mid, delta)
    x_up = up.y[:, -1]
    x_down = down.y[:, -1]
    shift = x_up - x_down
    # place the two halves in the same lift
    cell = torus.to_lattice(shift)
    shift_lat = torus.to_ambient(np.round(cell))
    gap = float(np.linalg.norm(shift - shift_lat))
    q_lift = q_lift + shift_lat
    t_up = up.t[-1]
    t_down = down.t[-1]
    lam_p = float(np.abs(ev_p[ev_p < 0]).min())
    lam_q = float(np.abs(ev_q[ev_q > 0]).min())
    # extend each half linearly until the gradient is below grad_tol
    g_scale_p = float(np.abs(ev_p).max())
    g_scale_q = float(np.abs(ev_q).max())
    ext_p = max(0.0, math.log(g_scale_p * delta / grad_tol) / lam_p) if g_scale_p * delta > grad_tol else 0.0
    ext_q = max(0.0, math.log(g_scale_q * delta / grad_tol) / lam_q) if g_scale_q * delta > grad_tol else 0.0
    T = max(t_up + ext_p, t_down + ext_q) + 0.1 / min(lam_p, lam_q)
    times = np.linspace(-T, T, n_t)
    pts = np.empty((n_t, torus.dimension_plus_one))
    for i, t in enumerate(times):
        if t <= 0:
            s = t + t_up
            if s >= 0:
                pts[i] = up.sol(s)
            else:
                pts[i] = _linear_tail(p_lift, V_p, ev_p, up.y[:, 0] - p_lift, s)
        else:
            s = t_down - t
            if s >= 0:
                pts[i] = down.sol(s) + shift_lat
            else:
                pts[i] = _linear_tail(q_lift, V_q, ev_q, down.y[:, 0] - (q_lift - shift_lat), -s, backward=True)
    return Heteroclinic(p, q, times, pts, f, gap)


def _linear_tail(center, V, ev, offset, s, backward=False):
    """Linearised flow near a critical point, ``s`` is elapsed time (negative before start)."""
    coeff = V.T @ offset
    rate = ev if backward else -ev
    return center + V @ (coeff * np.exp(rate * s))


class LinearizedOperator:
    """``L u = u' + Hess f(gamma(t)) u`` on the heteroclinic's time grid.

    Boundary rows impose ``P_+(H_p) u(-T) = P_+(H_p) H_p^-1 g(-T)`` and the
    matching condition with ``P_-(H_q)`` at ``T``: bounded solutions approach
    the quasi-static value ``H^-1 g`` and only the decaying directions are
    free at each end.
    """

    def __init__(self, gamma: Heteroclinic):
        self.gamma = gamma
        self.times = gamma.times
        self.n = gamma.times.size
        self.dim = gamma.points.shape[1]
        h = gamma.times[1] - gamma.times[0]
        self.h = h
        n, D = self.n, self.dim
        Dt = time_derivative_matrix(n, h)
        H = gamma.hessians
        A = np.kron(Dt, np.eye(D))
        for i in range(n):
            A[i * D : (i + 1) * D, i * D : (i + 1) * D] += H[i]
        self.node_matrix = A
        ev_p, V_p = gamma.source.eigen()
        ev_q, V_q = gamma.target.eigen()
        rows = []
        for k in np.flatnonzero(ev_p > 0):
            r = np.zeros(n * D)
            r[0:D] = V_p[:, k]
            rows.append(r)
        for k in np.flatnonzero(ev_q < 0):
            r = np.zeros(n * D)
            r[(n - 1) * D :] = V_q[:, k]
            rows.append(r)
        self.boundary_rows = np.array(rows).reshape(-1, n * D)
        vel = gamma.velocity
        self.kernel_guess = vel / math.sqrt(self._inner(vel, vel))
        self._lu = None
        self._qr = None

    def _inner(self, u, v):
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return float(np.einsum("t,ti,ti->", w, u, v))

    def apply(self, u) -> np.ndarray:
        return (self.node_matrix @ np.asarray(u).reshape(-1)).reshape(self.n, self.dim)

    def _ortho_row(self):
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return (w[:, None] * self.kernel_guess).reshape(-1)

    def _boundary_values(self, rhs) -> np.ndarray:
        """Quasi-static end values: the bounded solution tends to ``H^-1 rhs`` at each end."""
        g = np.asarray(rhs, dtype=float).reshape(self.n, self.dim)
        ev_p, V_p = self.gamma.source.eigen()
        ev_q, V_q = self.gamma.target.eigen()
        start = np.linalg.solve(self.gamma.source.hessian, g[0])
        end = np.linalg.solve(self.gamma.target.hessian, g[-1])
        return np.concatenate([V_p[:, ev_p > 0].T @ start, V_q[:, ev_q < 0].T @ end])

    def kernel(self, rel_tol: float = 1e-6):
        """Singular vectors of the boundary-closed operator below ``rel_tol`` of the largest."""
        M = np.vstack([self.node_matrix, self.boundary_rows])
        _, s, Vt = np.linalg.svd(M, full_matrices=False)
        small = s < rel_tol * s[0]
        return Vt[small].reshape(-1, self.n, self.dim), s

    def solve(self, rhs, square: bool = False) -> np.ndarray:
        """Solution orthogonal to ``gamma'`` of ``L u = rhs`` (least squares).

        ``square`` drops the last node's equations so the system with the
        boundary and phase rows is square; this is the variant used inside
        Newton iterations.
        """
        n, D = self.n, self.dim
        g = np.asarray(rhs, dtype=float).reshape(-1)
        nodes = self.node_matrix
        if square:
            nodes = nodes[: (n - 1) * D]
            g = g[: (n - 1) * D]
        M = np.vstack([nodes, self.boundary_rows, self._ortho_row()[None, :]])
        b = np.concatenate([g, self._boundary_values(rhs), [0.0]])
        if square:
            if self._lu is None:
                self._lu = lu_factor(M)
            u = lu_solve(self._lu, b)
        else:
            if self._qr is None:
                self._qr = qr(M, mode="economic")
            Q, R = self._qr
            u = solve_triangular(R, Q.T @ b)
        return u.reshape(n, D)


def linearized_solve(gamma: Heteroclinic, rhs, expected_kernel: int | None = None, op: LinearizedOperator | None = None):
    """Apply the left inverse ``K`` of ``L`` along ``gamma``.

    Raises :class:`DichotomyError` when the discrete kernel dimension differs
    from ``expected_kernel`` (by default the index difference).
    """
    op = op or LinearizedOperator(gamma)
    if expected_kernel is None:
        expected_kernel = gamma.source.index - gamma.target.index
    ker, _ = op.kernel()
    if ker.shape[0] != expected_kernel:
        raise DichotomyError(f"discrete kernel has dimension {ker.shape[0]}, expected {expected_kernel}")
    return op.solve(rhs)


def fredholm_index_check(gamma) -> int:
    """Spectral flow of ``Hess f`` along the path: net count of eigenvalues turning positive."""
    if isinstance(gamma, Heteroclinic):
        H = gamma.hessians
    else:
        H = np.asarray(gamma)
    neg = (np.linalg.eigvalsh(H) < 0).sum(axis=1)
    return int(neg[0] - neg[-1])


def gf2_rank(mat) -> int:
    """Rank over GF(2) by Gaussian elimination."""
    m = (np.asarray(mat, dtype=np.int64) & 1).astype(np.uint8)
    rows, cols = m.shape if m.ndim == 2 else (0, 0)
    rank = 0
    for c in range(cols):
        piv = None
        for r in range(rank, rows):
            if m[r, c]:
                piv = r
                break
        if piv is None:
            continue
        m[[rank, piv]] = m[[piv, rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


@dataclass
class ChainComplexZ2:
    """Generators by grade and boundary matrices ``d_k : C_k -> C_{k-1}`` over Z/2."""

    generators: dict
    boundaries: dict
    provenance: str = "base_morse"
    kappa: float | None = None
    counts: dict = field(default_factory=dict)

    @property
    def grades(self) -> list:
        return sorted(self.generators)

    def boundary_squared_vanishes(self) -> bool:
        for k, d in self.boundaries.items():
            nxt = self.boundaries.get(k - 1)
            if nxt is not None and d.size and nxt.size:
                if np.any((nxt.astype(np.int64) @ d.astype(np.int64)) % 2):
                    return False
        return True

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "kappa": self.kappa,
            "generators": {
                str(k): [{"coords": g.location.coords.tolist(), "index": g.index} for g in v]
                for k, v in self.generators.items()
            },
            "boundaries": {str(k): d.astype(int).tolist() for k, d in self.boundaries.items()},
        }


def assemble_complex(f: TrigFunction, crit: list | None = None, **count_kw) -> ChainComplexZ2:
    """Morse complex of ``f`` with boundary coefficients the mod-2 flow-line counts."""
    if crit is None:
        crit = find_critical_points(f)
    dim = f.torus.dimension_plus_one
    gens = {k: [c for c in crit if c.index == k] for k in range(dim + 1)}
    bounds = {}
    counts = {}
    for k in range(1, dim + 1):
        d = np.zeros((len(gens[k - 1]), len(gens[k])), dtype=np.uint8)
        for j, p in enumerate(gens[k]):
            for i, q in enumerate(gens[k - 1]):
                c2, _, raw = heteroclinic_count(p, q, f, build=False, **count_kw)
                d[i, j] = c2
                counts[(k, j, i)] = raw
        bounds[k] = d
    cx = ChainComplexZ2(gens, bounds, counts=counts)
    if not cx.boundary_squared_vanishes():
        raise NonMorseError("boundary operator does not square to zero: a flow line was missed or spurious")
    return cx


def concentrated_complex(base: ChainComplexZ2, kappa: float, sphere_indices: dict | None = None) -> ChainComplexZ2:
    """Complex of concentrated spheres: each generator moves to its sphere's index.

    ``sphere_indices`` maps ``(grade, position)`` of a base generator to the
    measured index of its stationary sphere (by default index + 1).  The
    boundary is inherited from the base complex.
    """
    gens: dict = {}
    moved = {}
    for k, lst in base.generators.items():
        for j, g in enumerate(lst):
            new = sphere_indices.get((k, j), k + 1) if sphere_indices else k + 1
            if new != k + 1:
                raise DichotomyError(f"sphere index {new} at generator {(k, j)} is not the base index plus one")
            gens.setdefault(new, []).append(g)
            moved[(k, j)] = (new, len(gens[new]) - 1)
    top = max(base.generators) + 1
    for k in range(0, top + 1):
        gens.setdefault(k, [])
    bounds = {}
    for k, d in base.boundaries.items():
        bounds[k + 1] = d.copy()
    bounds[1] = np.zeros((0, len(gens[1])), dtype=np.uint8)
    cx = ChainComplexZ2(dict(sorted(gens.items())), bounds, "concentrated", kappa)
    if not cx.boundary_squared_vanishes():
        raise NonMorseError("boundary operator does not square to zero")
    return cx


def homology_ranks(cx: ChainComplexZ2) -> dict:
    """``dim H_k = dim C_k - rank d_k - rank d_{k+1}`` over Z/2."""
    out = {}
    for k in cx.grades:
        n = len(cx.generators[k])
        dk = cx.boundaries.get(k)
        dk1 = cx.boundaries.get(k + 1)
        r_k = gf2_rank(dk) if dk is not None and dk.size else 0
        r_k1 = gf2_rank(dk1) if dk1 is not None and dk1.size else 0
        out[k] = n - r_k - r_k1
    return out
