import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from torusflow.errors import DomainError, NonPositiveForcingError
from torusflow.forcing import (
    PHI_MAX,
    T_STAR,
    ForcingTerm,
    TrigFunction,
    eval_jets,
    global_bounds,
    kappa_forcing,
    phi_controlling,
    phi_maximizer,
    pinching_constants,
    subcritical_check,
    trig_bounds,
)
from torusflow.torus import FlatTorus, wrap

FOUR_PI2 = 4.0 * math.pi**2


def fd_jets(fn, x, h=1e-5):
    """Central differences of value and gradient."""
    x = np.asarray(x, dtype=float)
    n = x.size
    g = np.zeros(n)
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        g[i] = (fn.value(x + e) - fn.value(x - e)) / (2 * h)
        H[i] = (fn.gradient(x + e) - fn.gradient(x - e)) / (2 * h)
    return g, H


def test_cosine_jets_at_maximum(cos2):
    v, g, H = eval_jets(cos2, wrap([0.0, 0.0], cos2.torus))
    assert v == pytest.approx(2.0)
    np.testing.assert_allclose(g, 0.0, atol=1e-12)
    np.testing.assert_allclose(H, -FOUR_PI2 * np.eye(2), rtol=1e-12)


def test_cosine_jets_at_quarter(cos2):
    x = np.array([0.25, 0.0])
    v, g, H = eval_jets(cos2, x)
    assert v == pytest.approx(1.0)
    np.testing.assert_allclose(g, [-2 * math.pi, 0.0], atol=1e-12)
    np.testing.assert_allclose(H, np.diag([0.0, -FOUR_PI2]), atol=1e-10)
    gfd, Hfd = fd_jets(cos2, x)
    np.testing.assert_allclose(g, gfd, atol=1e-6)
    np.testing.assert_allclose(H, Hfd, atol=1e-5)


def test_kappa_family_of_zero(t2):
    F = kappa_forcing(TrigFunction([], t2), 0.1)
    assert F.value(np.zeros(2)) == pytest.approx(10.0)
    assert kappa_forcing(TrigFunction([], t2), 0.5).value(np.zeros(2)) == pytest.approx(2.0)


def test_kappa_family_needs_positive(cos2):
    with pytest.raises(NonPositiveForcingError):
        kappa_forcing(cos2, 0.8)
    with pytest.raises(DomainError):
        kappa_forcing(cos2, 0.0)


def test_bounds_of_constant(t3):
    assert global_bounds(ForcingTerm.constant(1.0, t3)) == (1.0, 1.0, 0.0)


def test_bounds_of_kappa_family(cos2):
    lo, hi, hs = global_bounds(kappa_forcing(cos2, 0.1))
    assert lo <= 9.8 and lo == pytest.approx(9.8, rel=1e-5)
    assert hi >= 10.2 and hi == pytest.approx(10.2, rel=1e-5)
    assert hs >= 0.1 * FOUR_PI2 and hs == pytest.approx(0.1 * FOUR_PI2, rel=1e-4)


def test_negative_forcing_rejected(cos2):
    with pytest.raises(NonPositiveForcingError):
        global_bounds(ForcingTerm(cos2))


def test_bounds_enclose_dense_sampling():
    torus = FlatTorus(np.array([[1.0, 0.2], [0.0, 1.3]]))
    f = TrigFunction([([1, 2], 0.3, 0.4), ([0, 1], -0.5, 1.0)], torus)
    lo, hi, hs = trig_bounds(f)
    s = (np.arange(400) + 0.5) / 400
    c = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
    x = torus.to_ambient(c)
    vals = f.value(x)
    rad = np.abs(np.linalg.eigvalsh(f.hessian(x))).max()
    assert lo <= vals.min() and hi >= vals.max()
    assert hs >= rad
    assert vals.min() - lo < 1e-4 and hi - vals.max() < 1e-4 and hs - rad < 1e-3 * rad


def test_phi_values():
    assert phi_controlling(1.0) == 0.0
    assert phi_controlling(2.0) == pytest.approx(1 / 6)
    assert phi_controlling(1 + math.sqrt(2)) == pytest.approx(3 - 2 * math.sqrt(2))
    assert phi_controlling(math.inf) == 0.0
    with pytest.raises(DomainError):
        phi_controlling(0.5)


def test_phi_maximizer():
    t, v = phi_maximizer()
    assert abs(t - (1 + math.sqrt(2))) <= 1e-10
    assert abs(v - (3 - 2 * math.sqrt(2))) <= 1e-10


def test_pinching_constants_examples():
    assert pinching_constants(0.0) == (1.0, math.inf)
    assert pinching_constants(PHI_MAX) == (T_STAR, T_STAR)
    lam, big = pinching_constants(1 / 6)
    assert lam == pytest.approx(2.0, abs=1e-9)
    assert big == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(DomainError):
        pinching_constants(0.2)


def test_subcritical_constant(t3):
    rep = subcritical_check(ForcingTerm.constant(1.0, t3))
    assert rep.subcritical and rep.ratio == 0.0
    assert rep.lambda_F == 1.0 and rep.Lambda_F == math.inf


def test_subcritical_threshold_in_kappa(cos2):
    # closed-form ratio kappa * 4 pi^2 / (1/kappa - 2 kappa)^3 crosses 3 - 2 sqrt 2 here
    k = brentq(lambda k: k * FOUR_PI2 / (1 / k - 2 * k) ** 3 - PHI_MAX, 0.01, 0.6)
    assert k == pytest.approx(0.235151, abs=1e-6)
    assert subcritical_check(kappa_forcing(cos2, 0.97 * k)).subcritical
    assert not subcritical_check(kappa_forcing(cos2, 1.03 * k)).subcritical


def test_config_round_trip(t3):
    f = TrigFunction([([1, 0, -1], 0.2, 0.3)], t3, constant=1.5)
    g = TrigFunction.from_config(f.to_config(), t3)
    x = np.random.default_rng(0).random((10, 3))
    np.testing.assert_array_equal(f.value(x), g.value(x))


@given(st.floats(0.0, PHI_MAX * (1 - 1e-9)))
def test_pinching_constants_invert_phi(r):
    lam, big = pinching_constants(r)
    assert 1.0 <= lam <= T_STAR <= big
    assert phi_controlling(lam) == pytest.approx(r, abs=1e-11)
    if math.isfinite(big):
        assert phi_controlling(big) == pytest.approx(r, rel=1e-9, abs=1e-12)


@given(st.floats(0.0, PHI_MAX * 0.999), st.floats(0.0, PHI_MAX * 0.999))
def test_pinching_constants_monotone(a, b):
    a, b = sorted((a, b))
    la, Ba = pinching_constants(a)
    lb, Bb = pinching_constants(b)
    assert la <= lb + 1e-12
    assert Ba >= Bb * (1 - 1e-9)


@given(
    st.lists(
        st.tuples(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2), st.floats(-1, 1), st.floats(0, 6.3)),
        min_size=1,
        max_size=4,
    ),
    st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
)
def test_jets_match_finite_differences(terms, x):
    torus = FlatTorus(np.array([[1.0, 0.1, 0.0], [0.0, 1.2, 0.0], [0.0, 0.3, 0.9]]))
    f = TrigFunction([((a, b, c), amp, ph) for a, b, c, amp, ph in terms], torus)
    x = np.array(x)
    g, H = f.gradient(x), f.hessian(x)
    gfd, Hfd = fd_jets(f, x)
    scale = 1.0 + f.derivative_bound(3)
    np.testing.assert_allclose(g, gfd, atol=1e-8 * scale * 100)
    np.testing.assert_allclose(H, Hfd, atol=1e-8 * scale * 100)
    np.testing.assert_allclose(H, H.T, atol=1e-12 * scale)
