import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusflow.errors import DecompositionError, GeometryError
from torusflow.forcing import ForcingTerm, TrigFunction
from torusflow.geometry import (
    RadialEmbedding,
    center_graph_split,
    evaluate_curvature,
    functional_value,
    load_snapshot,
    mcf_residual,
    recenter,
    save_snapshot,
)
from torusflow.harmonics import HarmonicBasis, SphereGrid
from torusflow.torus import FlatTorus

T2 = FlatTorus.cube(2, 10.0)
T3 = FlatTorus.cube(3, 10.0)
C2 = np.array([5.0, 5.0])
C3 = np.array([5.0, 5.0, 5.0])


def basis(d, L):
    return HarmonicBasis(SphereGrid.for_degree(d, L))


def ellipse(a, b):
    return lambda x: a * b / np.sqrt(b**2 * x[:, 0] ** 2 + a**2 * x[:, 1] ** 2)


def spheroid(a, c):
    return lambda x: 1.0 / np.sqrt((x[:, 0] ** 2 + x[:, 1] ** 2) / a**2 + x[:, 2] ** 2 / c**2)


def off_center(R, w):
    """Radius about the origin of the sphere of radius ``R`` centred at ``w``."""
    w = np.asarray(w, dtype=float)

    def rho(x):
        p = x @ w
        return p + np.sqrt(R * R - w @ w + p * p)

    return rho


@pytest.mark.parametrize("d,R", [(1, 1.0), (2, 1.0), (2, 2.5)])
def test_round_sphere_curvature(d, R):
    b = basis(d, 8)
    e = RadialEmbedding.round(T3 if d == 2 else T2, C3 if d == 2 else C2, R, b)
    cd = evaluate_curvature(e)
    np.testing.assert_allclose(cd.principal_curvatures, 1.0 / R, atol=1e-12)
    np.testing.assert_allclose(cd.mean_curvature, 1.0 / R, atol=1e-12)
    np.testing.assert_allclose(cd.normal, b.grid.points, atol=1e-12)


def test_ellipse_vertex_curvature():
    b = basis(1, 127)
    assert b.grid.size == 256
    e = RadialEmbedding.from_function(T2, C2, ellipse(2.0, 1.0), b)
    k = evaluate_curvature(e).mean_curvature
    assert k.max() == pytest.approx(2.0, abs=1e-6)
    assert int(np.argmax(k)) in (0, 128)
    # closed form a b / (a^2 sin^2 t + b^2 cos^2 t)^{3/2} in the parametric angle t
    x = e.points() - C2
    t = np.arctan2(x[:, 1] / 1.0, x[:, 0] / 2.0)
    exact = 2.0 / (4.0 * np.sin(t) ** 2 + np.cos(t) ** 2) ** 1.5
    np.testing.assert_allclose(k, exact, atol=1e-6)


def test_curvature_converges_fast():
    errs = []
    for L in (16, 32):
        b = basis(1, L)
        e = RadialEmbedding.from_function(T2, C2, ellipse(1.5, 1.0), b)
        x = e.points() - C2
        t = np.arctan2(x[:, 1], x[:, 0] / 1.5)
        exact = 1.5 / (2.25 * np.sin(t) ** 2 + np.cos(t) ** 2) ** 1.5
        errs.append(np.abs(evaluate_curvature(e).mean_curvature - exact).max())
    assert errs[0] / errs[1] >= 2**4


def test_spheroid_principal_curvatures():
    a, c = 1.0, 2.0
    b = basis(2, 48)
    e = RadialEmbedding.from_function(T3, C3, spheroid(a, c), b)
    cd = evaluate_curvature(e)
    x = e.points() - C3
    cu = np.clip(x[:, 2] / c, -1, 1)
    su2 = 1.0 - cu**2
    q = a * a * cu**2 + c * c * su2
    km = a * c / q**1.5
    kp = c / (a * np.sqrt(q))
    exact = np.sort(np.stack([km, kp], 1), axis=1)
    np.testing.assert_allclose(cd.principal_curvatures, exact, atol=1e-6)


@given(st.integers(0, 2**31 - 1))
def test_curvature_data_invariants(seed):
    b = basis(2, 8)
    rng = np.random.default_rng(seed)
    c = np.zeros(b.size)
    c[0] = math.sqrt(4 * math.pi)
    c[4:] = 0.03 * rng.standard_normal(b.size - 4)
    e = RadialEmbedding(T3, C3, b.synthesize(c), b)
    cd = evaluate_curvature(e)
    np.testing.assert_allclose(np.linalg.norm(cd.normal, axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(cd.mean_curvature, cd.principal_curvatures.mean(axis=1), atol=1e-10)
    np.testing.assert_allclose(np.trace(cd.shape_operator, axis1=-2, axis2=-1), 2 * cd.mean_curvature, atol=1e-10)
    assert cd.radial_component.min() > 0


def test_nonpositive_radius_rejected():
    b = basis(1, 24)
    with pytest.raises(GeometryError):
        RadialEmbedding.from_function(T2, C2, lambda x: x[:, 0], b)
    with pytest.raises(GeometryError):
        RadialEmbedding(T2, C2, np.full(b.grid.size, np.nan), b)


def test_functional_values():
    F3 = ForcingTerm.constant(1.0, T3)
    F2 = ForcingTerm.constant(1.0, T2)
    v = functional_value(RadialEmbedding.round(T3, C3, 1.0, basis(2, 6)), F3)
    assert v.area == pytest.approx(4 * math.pi, rel=1e-12)
    assert v.weighted_volume == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert v.value == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert functional_value(RadialEmbedding.round(T2, C2, 1.0, basis(1, 6)), F2).value == pytest.approx(math.pi, rel=1e-12)
    assert functional_value(RadialEmbedding.round(T2, C2, 2.0, basis(1, 6)), F2).value == pytest.approx(0.0, abs=1e-12)


def test_mcf_residual_round():
    F = ForcingTerm.constant(1.0, T3)
    b = basis(2, 6)
    res, sup = mcf_residual(RadialEmbedding.round(T3, C3, 1.0, b), F)
    assert sup <= 1e-12
    res, _ = mcf_residual(RadialEmbedding.round(T3, C3, 2.0, b), F)
    np.testing.assert_allclose(res, -0.5, atol=1e-12)


def test_first_variation_is_L2_gradient():
    b = basis(2, 10)
    torus = FlatTorus.cube(3, 4.0)
    F = ForcingTerm(TrigFunction([([1, 0, 0], 0.3, 0.0), ([0, 1, 1], 0.2, 0.5)], torus, 1.0))
    rng = np.random.default_rng(2)
    c = np.zeros(b.size)
    c[0] = 0.8 * math.sqrt(4 * math.pi)
    c[4:16] = 0.05 * rng.standard_normal(12)
    e = RadialEmbedding(torus, [2.0, 2.0, 2.0], b.synthesize(c), b)
    v = b.synthesize(np.r_[rng.standard_normal(10), np.zeros(b.size - 10)])
    h = 1e-4
    fd = (functional_value(e.with_rho(e.rho + h * v), F).value - functional_value(e.with_rho(e.rho - h * v), F).value) / (2 * h)
    cd = evaluate_curvature(e)
    res, _ = mcf_residual(e, F, cd)
    normal_speed = v * cd.radial_component
    exact = 2 * float((res * normal_speed * cd.area_element) @ b.grid.weights)
    assert fd == pytest.approx(exact, rel=1e-2)


def test_split_of_round_sphere():
    b = basis(2, 8)
    kappa = 0.1
    e = RadialEmbedding.round(T3, C3, 0.12, b)
    center, psi = center_graph_split(e, kappa)
    np.testing.assert_allclose(center, C3, atol=1e-15)
    np.testing.assert_allclose(psi, 0.12 / kappa - 1.0, atol=1e-12)


def test_split_recovers_translate():
    b = basis(2, 12)
    kappa = 0.1
    w = 0.01 * kappa * np.array([0.6, -0.8, 0.0])
    e = RadialEmbedding.from_function(T3, C3, off_center(kappa, w), b)
    center, psi = center_graph_split(e, kappa)
    np.testing.assert_allclose(center, C3 + w, atol=1e-8)
    np.testing.assert_allclose(psi, 0.0, atol=1e-8)


def test_split_rejects_large_degree_one():
    b = basis(2, 12)
    e = RadialEmbedding.from_function(T3, C3, off_center(1.0, [0.5, 0.0, 0.0]), b)
    with pytest.raises(DecompositionError):
        center_graph_split(e, 1.0)


def test_recenter_same_center():
    b = basis(2, 8)
    e = RadialEmbedding.from_function(T3, C3, spheroid(1.0, 1.3), b)
    np.testing.assert_allclose(recenter(e, C3).rho, e.rho, atol=1e-12)


def test_recenter_round_sphere_off_center():
    b = basis(2, 16)
    R = 1.5
    e = RadialEmbedding.round(T3, C3, R, b)
    w = 0.1 * R * np.array([0.0, 0.6, 0.8])
    moved = recenter(e, C3 + w)
    np.testing.assert_allclose(moved.rho, off_center(R, -w)(b.grid.points), atol=1e-8)


def test_recenter_preserves_area():
    b = basis(2, 24)
    e = RadialEmbedding.from_function(T3, C3, spheroid(1.0, 1.3), b)
    F = ForcingTerm.constant(1.0, T3)
    moved = recenter(e, C3 + np.array([0.05, -0.03, 0.1]))
    assert functional_value(moved, F).area == pytest.approx(functional_value(e, F).area, rel=1e-8)


def test_recenter_on_surface_fails():
    b = basis(2, 8)
    e = RadialEmbedding.round(T3, C3, 1.0, b)
    with pytest.raises(GeometryError):
        recenter(e, C3 + np.array([1.0, 0.0, 0.0]))


def test_snapshot_round_trip(tmp_path):
    b = basis(2, 8)
    e = RadialEmbedding.from_function(T3, C3 + 0.25, spheroid(1.0, 1.2), b)
    path = tmp_path / "snap.json"
    save_snapshot(e, path)
    back = load_snapshot(path)
    assert back.torus == e.torus and back.grid == e.grid
    np.testing.assert_array_equal(back.center_lift, e.center_lift)
    np.testing.assert_allclose(back.rho, e.rho, atol=1e-15)
