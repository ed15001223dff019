"""Acceptance criteria A1 to A13; each test records one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from torusflow.asymptotics import residual_order_study
from torusflow.concentration import elliptic_sweep, fit_slope, parabolic_run, second_variation_index, solve_stationary_sphere
from torusflow.experiments import admissible_flow_suite, hopf_experiment, random_perturbation
from torusflow.flow import StepControl, Termination, run_flow
from torusflow.forcing import ForcingTerm, phi_maximizer, pinching_constants
from torusflow.geometry import RadialEmbedding, evaluate_curvature
from torusflow.harmonics import HarmonicBasis, SphereGrid, TimeSpectralField, apply_P_kappa, solve_Q_kappa
from torusflow.kernels import min_z_scan_py
from torusflow.monitors import noncollapse_lambda, noncollapse_min_Z
from torusflow.morse import (
    LinearizedOperator,
    assemble_complex,
    concentrated_complex,
    homology_ranks,
    linearized_solve,
)
from torusflow.runner import run_experiment
from torusflow.torus import FlatTorus


def _basis(d, L):
    return HarmonicBasis(SphereGrid.for_degree(d, L))


def test_A1_round_sphere_oracle(tmp_path, verdict):
    errs = {}
    start = time.perf_counter()
    for d in (1, 2):
        cfg = {"kind": "oracle", "torus": {"dimension": d + 1, "side": 10.0}}
        man = run_experiment(cfg, str(tmp_path / f"d{d}"))
        errs[d] = man.metrics["max_rel_error"]
    wall = time.perf_counter() - start
    ok = max(errs.values()) <= 1e-3 and wall < 60.0
    assert verdict("A1", ok, f"max relative radius error {errs} over t in [0, 1+ln2] (<= 1e-3), {wall:.1f} s")


def test_A2_extinction(verdict):
    torus = FlatTorus.cube(3, 10.0)
    e = RadialEmbedding.round(torus, [5.0, 5.0, 5.0], 0.5, _basis(2, 8))
    tr = run_flow(e, ForcingTerm.constant(1.0, torus), StepControl(max_dt=0.01, cfl_fraction=0.1), t_max=1.0, detect=False)
    gap = abs(tr.final.time - 0.19315)
    ok = tr.termination is Termination.BLOW_UP and gap <= 1e-3
    assert verdict("A2", ok, f"{tr.termination.value} at t = {tr.final.time:.5f} (0.19315 +- 1e-3)")


def test_A3_stationarity(verdict):
    torus = FlatTorus.cube(3, 10.0)
    e = RadialEmbedding.round(torus, [5.0, 5.0, 5.0], 1.0, _basis(2, 8))
    tr = run_flow(e, ForcingTerm.constant(1.0, torus), StepControl(max_dt=0.05), t_max=10.0, detect=False)
    dev = float(np.abs(tr.final.embedding.rho - 1.0).max())
    ok = tr.final.time >= 10.0 - 1e-12 and dev <= 1e-9
    assert verdict("A3", ok, f"sup|rho - 1| = {dev:.2e} at t = {tr.final.time:g} (<= 1e-9)")


@pytest.mark.slow
def test_A4_hopf(verdict):
    res = hopf_experiment()
    ok = res.converged and res.hausdorff <= 1e-3 and res.final_pinch <= 1.0 + 1e-3
    detail = (
        f"termination {res.trajectory.termination.value} at t = {res.trajectory.final.time:.2f}, "
        f"Hausdorff {res.hausdorff:.2e} (<= 1e-3), final pinch {res.final_pinch:.6f} (<= 1.001)"
    )
    assert verdict("A4", ok and res.trajectory.final.time <= 20.0, detail)


def test_A5_subcriticality_constants(verdict):
    t, v = phi_maximizer()
    lam, big = pinching_constants(1.0 / 6.0)
    # oracle: phi(t) = 1/6 is t^2 - 5t + 6 = 0
    disc = math.sqrt(25.0 - 24.0)
    roots = ((5.0 - disc) / 2.0, (5.0 + disc) / 2.0)
    e1 = max(abs(t - (1.0 + math.sqrt(2.0))), abs(v - (3.0 - 2.0 * math.sqrt(2.0))))
    e2 = max(abs(lam - roots[0]), abs(big - roots[1]))
    ok = e1 <= 1e-10 and e2 <= 1e-9
    assert verdict("A5", ok, f"maximizer error {e1:.1e} (<= 1e-10), pinching constants error {e2:.1e} (<= 1e-9)")


@pytest.fixture(scope="module")
def flow_suite():
    return admissible_flow_suite(n_flows=20)


@pytest.mark.slow
def test_A6_monotonicity(flow_suite, verdict):
    held = sum(c.hypothesis_steps for c in flow_suite.flows)
    min_z = min(c.min_Z for c in flow_suite.flows)
    ok = len(flow_suite.flows) == 20 and flow_suite.violations == 0 and held > 0
    detail = f"{flow_suite.violations} violations over 20 flows, {held} steps under the hypothesis, min Z {min_z:.2e}"
    assert verdict("A6", ok, detail)


@pytest.mark.slow
def test_A7_gradient_structure(flow_suite, verdict):
    worst = flow_suite.worst_gradient_error
    assert verdict("A7", worst <= 0.02, f"worst relative gap in dF/dt {worst:.2e} (<= 2e-2)")


def test_A8_base_morse_homology(cos2, crit2, cos3, complex3, verdict):
    cx2 = assemble_complex(cos2, crit2)
    indices = sorted(c.index for c in crit2)
    even = all(raw % 2 == 0 for raw in cx2.counts.values())
    r2 = homology_ranks(cx2)
    r3 = homology_ranks(complex3)
    ok = (
        len(crit2) == 4
        and indices == [0, 1, 1, 2]
        and even
        and cx2.boundary_squared_vanishes()
        and complex3.boundary_squared_vanishes()
        and [r2[k] for k in range(3)] == [1, 2, 1]
        and [r3[k] for k in range(4)] == [1, 3, 3, 1]
        and sum(r2.values()) == 4
        and sum(r3.values()) == 8
    )
    detail = f"T2 indices {indices}, counts even {even}, ranks {r2}; T3 ranks {r3}"
    assert verdict("A8", ok, detail)


@pytest.mark.slow
def test_A9_elliptic_concentration(cos3, crit3, verdict):
    sw = elliptic_sweep(cos3, crit3, [0.2, 0.1, 0.05], max_degree=12)
    ok = len(crit3) == 8 and sw.worst_residual() <= 1e-10 and sw.min_slope() >= 2.7 and sw.index_ok()
    detail = f"worst residual {sw.worst_residual():.1e} (<= 1e-10), min gap slope {sw.min_slope():.2f} (>= 2.7), indices ok {sw.index_ok()}"
    assert verdict("A9", ok, detail)


@pytest.mark.slow
def test_A10_parabolic_concentration(cos2, heteroclinic2, verdict):
    kappas = [0.2, 0.1, 0.05]
    runs = [parabolic_run(cos2, heteroclinic2, k, window=(-0.1, 0.1)) for k in kappas]
    cs = fit_slope(kappas, [r.center_distance for r in runs])
    ds = fit_slope(kappas, [r.drift_defect for r in runs])
    detail = (
        f"centre distance slope {cs:.2f} (>= 2.7), drift defect slope {ds:.2f} (>= 2.7), "
        f"distances {[f'{r.center_distance:.2e}' for r in runs]}"
    )
    assert verdict("A10", cs >= 2.7 and ds >= 2.7, detail)


def test_A11_formal_residual_order(asym_grid, verdict):
    kappas = [0.2, 0.1, 0.05, 0.025]
    slopes = {m: residual_order_study(asym_grid, m, kappas).slope for m in (0, 1, 2)}
    ok = all(s >= m + 0.7 for m, s in slopes.items())
    assert verdict("A11", ok, "slopes " + ", ".join(f"m={m}: {s:.2f} (>= {m + 0.7:.1f})" for m, s in slopes.items()))


@pytest.mark.slow
def test_A12_concentrated_homology(cos3, complex3, verdict):
    kappa = 0.05
    measured = {}
    for k, lst in complex3.generators.items():
        for j, p in enumerate(lst):
            measured[(k, j)] = second_variation_index(solve_stationary_sphere(cos3, p, kappa), cos3)[0]
    cx = concentrated_complex(complex3, kappa, measured)
    ranks = homology_ranks(cx)
    occupied = sorted(k for k, g in cx.generators.items() if g)
    ok = (
        occupied == [1, 2, 3, 4]
        and [ranks[k] for k in range(1, 5)] == [1, 3, 3, 1]
        and ranks.get(0, 0) == 0
        and cx.boundary_squared_vanishes()
        and sum(ranks.values()) == 8
    )
    assert verdict("A12", ok, f"generators in grades {occupied}, ranks {ranks}, total {sum(ranks.values())} (8)")


def _brute_min_z(e, cd, lam):
    p = e.points()
    k1 = cd.principal_curvatures[:, 0]
    best = math.inf
    for i in range(p.shape[0]):
        diff = p - p[i]
        z = lam * k1[i] * np.einsum("ij,ij->i", diff, diff) + 2.0 * diff @ cd.normal[i]
        z[i] = math.inf
        best = min(best, float(z.min()))
    return best


def test_A13_operator_unit_suite(heteroclinic2, verdict):
    rng = np.random.default_rng(13)
    # analyze/synthesize round trip
    rt = 0.0
    for d in (1, 2):
        b = _basis(d, 16)
        c = rng.standard_normal(b.size)
        rt = max(rt, float(np.abs(b.analyze(b.synthesize(c)) - c).max()))
    # Q_kappa inverts P_kappa on compactly supported fields
    b2 = _basis(2, 6)
    u = TimeSpectralField.uniform(b2, 1.0, 801)
    bump = np.exp(-((u.times - 0.1) / 0.15) ** 2)
    c = rng.standard_normal(b2.size)[None, :] * bump[:, None]
    c[:, b2.deg1] = 0.0
    qp = 0.0
    for kappa in (0.2, 0.5):
        back = solve_Q_kappa(apply_P_kappa(u.with_coeffs(c), kappa), kappa)
        qp = max(qp, float(np.abs(back.coeffs - c)[1:-1].max()))
    # manufactured solutions of L u = b
    op = LinearizedOperator(heteroclinic2)
    t = heteroclinic2.times
    ms = 0.0
    for k in range(3):
        w = np.exp(-((t - 0.05 * k) / 0.1) ** 2)[:, None] * rng.standard_normal(2)
        w = w - op._inner(w, op.kernel_guess) * op.kernel_guess
        ms = max(ms, float(np.abs(linearized_solve(heteroclinic2, op.apply(w), op=op) - w).max()))
    # Z-scan vs brute force
    torus = FlatTorus.cube(3, 6.0)
    b10 = _basis(2, 10)
    zerr = 0.0
    for seed in range(20):
        e = RadialEmbedding(torus, [3.0, 3.0, 3.0], 1 + random_perturbation(b10, np.random.default_rng(seed), 0.05), b10)
        cd = evaluate_curvature(e)
        lam = 1.01 * noncollapse_lambda(e, cd)
        z, _ = noncollapse_min_Z(e, cd, lam)
        zp = min_z_scan_py(e.points(), cd.normal, lam * cd.principal_curvatures[:, 0])[0]
        zerr = max(zerr, abs(z - _brute_min_z(e, cd, lam)), abs(z - zp))
    ok = rt <= 1e-10 and qp <= 1e-8 and ms <= 1e-6 and zerr <= 1e-12
    detail = f"round trip {rt:.1e} (<= 1e-10), Q.P {qp:.1e} (<= 1e-8), manufactured {ms:.1e} (<= 1e-6), Z-scan gap {zerr:.1e} on 20 fixtures"
    assert verdict("A13", ok, detail)
