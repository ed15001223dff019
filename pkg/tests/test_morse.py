import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusflow.errors import DichotomyError, NonMorseError
from torusflow.forcing import TrigFunction
from torusflow.harmonics import _fd_dt
from torusflow.morse import (
    ChainComplexZ2,
    LinearizedOperator,
    build_heteroclinic,
    concentrated_complex,
    find_critical_points,
    fredholm_index_check,
    gf2_rank,
    gradient_trajectory,
    heteroclinic_count,
    homology_ranks,
    linearized_solve,
)


def test_critical_points_of_cosine_fixtures(crit2, crit3):
    assert sorted(c.index for c in crit2) == [0, 1, 1, 2]
    assert sorted(c.index for c in crit3) == [0, 1, 1, 1, 2, 2, 2, 3]
    for c in crit2 + crit3:
        assert c.gradient_norm <= 1e-10
        # critical points of sum cos(2 pi c_i) sit on the half-lattice
        np.testing.assert_allclose(2 * c.location.coords, np.round(2 * c.location.coords), atol=1e-9)
        assert c.index == int(np.sum(np.round(2 * c.location.coords) % 2 == 0))


def test_constant_is_not_morse(t2):
    with pytest.raises(NonMorseError):
        find_critical_points(TrigFunction([], t2, 1.0))


def test_degenerate_critical_point(t2):
    # cos(2 pi x) alone is degenerate in y
    with pytest.raises(NonMorseError):
        find_critical_points(TrigFunction([([1, 0], 1.0, 0.0)], t2))


def test_flow_line_counts_on_torus(cos2, crit2):
    top = crit2[0]
    for q in crit2[1:3]:
        c2, reps, raw = heteroclinic_count(top, q, cos2, build=False)
        assert raw == 2 and c2 == 0
    with pytest.raises(ValueError):
        heteroclinic_count(top, crit2[3], cos2, build=False)


def test_gradient_trajectory_descends(cos2):
    path = gradient_trajectory([0.1, 0.2], cos2, (0.0, 2.0))
    assert np.all(np.diff(path.values) <= 1e-12)
    assert path.values[-1] == pytest.approx(-2.0, abs=1e-6)


def test_heteroclinic_is_a_flow_line(heteroclinic2):
    g = heteroclinic2
    assert g.flow_residual() <= 1e-4
    assert np.linalg.norm(g.f.gradient(g.points[0])) <= 1e-6
    assert np.linalg.norm(g.f.gradient(g.points[-1])) <= 1e-6
    np.testing.assert_allclose(g.source_lift(), g.points[0], atol=1e-5)
    np.testing.assert_allclose(g.target_lift(), g.points[-1], atol=1e-5)


@pytest.fixture(scope="module")
def op(heteroclinic2):
    return LinearizedOperator(heteroclinic2)


def test_velocity_spans_kernel(op, heteroclinic2):
    ker, s = op.kernel()
    assert ker.shape[0] == 1
    cos = abs(op._inner(ker[0], op.kernel_guess)) / math.sqrt(op._inner(ker[0], ker[0]))
    assert cos == pytest.approx(1.0, abs=1e-6)


def test_discrete_L_annihilates_velocity(cos2, crit2, heteroclinic2):
    g = heteroclinic2
    direction = g.points[1] - g.points[0]
    errs = []
    for n in (801, 1601, 6401):
        h = build_heteroclinic(crit2[0], crit2[1], cos2, direction, n_t=n)
        v = h.velocity
        r = _fd_dt(v, h.times[1] - h.times[0]) + np.einsum("tij,tj->ti", h.hessians, v)
        errs.append(np.abs(r).max())
    assert errs[-1] <= 1e-6
    assert math.log2(errs[0] / errs[1]) >= 3.5


def test_manufactured_solution(op, heteroclinic2):
    t = heteroclinic2.times
    rng = np.random.default_rng(4)
    u = np.exp(-((t - 0.05) / 0.1) ** 2)[:, None] * rng.standard_normal(2)
    u = u - op._inner(u, op.kernel_guess) * op.kernel_guess
    sol = linearized_solve(heteroclinic2, op.apply(u), op=op)
    assert np.abs(sol - u).max() <= 1e-6
    assert abs(op._inner(sol, op.kernel_guess)) <= 1e-12


def test_solution_for_kernel_rhs_is_orthogonal(op, heteroclinic2):
    sol = op.solve(heteroclinic2.velocity)
    assert abs(op._inner(sol, op.kernel_guess)) <= 1e-10


def test_quasi_static_ends(op, heteroclinic2):
    c = np.array([1.0, 2.0])
    sol = op.solve(np.tile(c, (heteroclinic2.times.size, 1)))
    g = heteroclinic2
    np.testing.assert_allclose(sol[0], np.linalg.solve(g.source.hessian, c), rtol=1e-3)
    np.testing.assert_allclose(sol[-1], np.linalg.solve(g.target.hessian, c), rtol=1e-3)


def test_kernel_dimension_mismatch(op, heteroclinic2):
    with pytest.raises(DichotomyError):
        linearized_solve(heteroclinic2, np.zeros_like(heteroclinic2.points), expected_kernel=2, op=op)


def test_spectral_flow(heteroclinic2):
    assert fredholm_index_check(heteroclinic2) == 1
    assert fredholm_index_check([np.diag([-1.0, -1.0, 1.0]), np.diag([-1.0, 1.0, 1.0])]) == 1


def test_gf2_rank_examples():
    assert gf2_rank(np.array([[1, 1], [1, 1]])) == 1
    assert gf2_rank(np.eye(3, dtype=int)) == 3
    assert gf2_rank(np.array([[2, 0], [0, 0]])) == 0
    assert gf2_rank(np.zeros((0, 3))) == 0


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_gf2_rank_bounds_and_transpose(r, c, seed):
    m = np.random.default_rng(seed).integers(0, 2, size=(r, c))
    k = gf2_rank(m)
    assert k == gf2_rank(m.T) and k <= min(r, c)
    # rank over Z/2 never exceeds the rational rank
    assert k <= np.linalg.matrix_rank(m.astype(float)) or np.linalg.matrix_rank(m.astype(float)) >= k


def test_circle_complex_ranks():
    cx = ChainComplexZ2({0: ["a", "b"], 1: ["c", "d"]}, {1: np.array([[1, 1], [1, 1]], dtype=np.uint8)})
    assert cx.boundary_squared_vanishes()
    assert homology_ranks(cx) == {0: 1, 1: 1}


def test_nonvanishing_boundary_square_detected():
    cx = ChainComplexZ2(
        {0: ["a"], 1: ["b"], 2: ["c"]},
        {1: np.array([[1]], dtype=np.uint8), 2: np.array([[1]], dtype=np.uint8)},
    )
    assert not cx.boundary_squared_vanishes()


def test_base_homology_t3(complex3):
    assert complex3.boundary_squared_vanishes()
    assert homology_ranks(complex3) == {0: 1, 1: 3, 2: 3, 3: 1}
    assert all(raw % 2 == 0 for raw in complex3.counts.values())


def test_concentrated_complex_shifts_grades(complex3):
    cx = concentrated_complex(complex3, 0.05)
    assert cx.provenance == "concentrated" and cx.kappa == 0.05
    assert homology_ranks(cx) == {0: 0, 1: 1, 2: 3, 3: 3, 4: 1}
    with pytest.raises(DichotomyError):
        concentrated_complex(complex3, 0.05, {(0, 0): 0})


def test_counts_stable_under_refined_shooting(cos2, crit2):
    for p, q in ((crit2[0], crit2[1]), (crit2[2], crit2[3])):
        coarse = heteroclinic_count(p, q, cos2, build=False)[2]
        fine = heteroclinic_count(p, q, cos2, build=False, n_dirs=8192, delta=5e-5)[2]
        assert coarse == fine == 2


def test_path_from_critical_point_is_constant(cos2, crit2):
    path = gradient_trajectory(crit2[3].ambient, cos2, (0.0, 1.0))
    np.testing.assert_allclose(path.points, np.broadcast_to(crit2[3].ambient, path.points.shape), atol=1e-12)


def test_saddle_to_minimum_spectral_flow(cos2, crit2):
    _, reps, raw = heteroclinic_count(crit2[1], crit2[3], cos2)
    assert raw == 2
    assert fredholm_index_check(reps[0]) == 1
