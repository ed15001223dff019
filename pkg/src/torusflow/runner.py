"""Experiment orchestration: one pipeline per kind, one run directory per run."""

from __future__ import annotations

import math
import os
import time

import numpy as np

from . import __version__
from .config import ExperimentConfig, resolve
from .errors import ConfigurationError, TorusflowError
from .io import RunManifest, config_digest, flow_columns, flow_rows, write_csv, write_json, write_manifest

__all__ = ["run_experiment", "PIPELINES"]


def _check(value, threshold, ok: bool) -> dict:
    return {"value": value, "threshold": threshold, "passed": bool(ok)}


def _center(cfg: ExperimentConfig, torus):
    c = cfg.section("initial").get("center")
    if c is None:
        return 0.5 * torus.lattice_basis.sum(axis=1)
    c = np.asarray(c, dtype=float)
    if c.shape != (torus.dimension_plus_one,):
        raise ConfigurationError("initial.center has the wrong length")
    return c


def _basis(d: int, L: int):
    from .harmonics import HarmonicBasis, SphereGrid

    return HarmonicBasis(SphereGrid.for_degree(d, L))


def _oracle(cfg: ExperimentConfig, out: str):
    from .flow import EXTINCT, StepControl, Termination, extinction_time, round_sphere_oracle, run_flow
    from .forcing import ForcingTerm
    from .geometry import RadialEmbedding

    fn = cfg.function()
    if not fn.is_constant:
        raise ConfigurationError("the oracle experiment needs a constant forcing")
    torus = fn.torus
    fc = float(fn.value(np.zeros(torus.dimension_plus_one)))
    d = torus.dimension_plus_one - 1
    ini, tm = cfg.section("initial"), cfg.section("time")
    r0 = float(ini["radius"])
    basis = _basis(d, int(cfg.section("grid")["max_degree"]))
    F = ForcingTerm.constant(fc, torus)
    emb = RadialEmbedding.round(torus, _center(cfg, torus), r0, basis)
    ctl = StepControl(max_dt=tm["max_dt"], cfl_fraction=tm["cfl"])
    tr = run_flow(emb, F, ctl, t_max=tm["t_max"], detect=False, recenter_every=0)
    rows, errs = [], []
    for rec in tr.records:
        r = round_sphere_oracle(r0, fc, rec["t"])
        if r is EXTINCT:
            break
        err = abs(rec["rho_mean"] - r) / r
        rows.append([rec["t"], rec["rho_mean"], r, err])
        errs.append(err)
    files = [
        write_csv(os.path.join(out, "radius_vs_t.csv"), ["t", "radius", "oracle", "rel_error"], rows),
        write_csv(os.path.join(out, "timeseries.csv"), flow_columns(d), flow_rows(tr.records, d)),
    ]
    t_ext = extinction_time(r0, fc)
    metrics = {"max_rel_error": max(errs), "termination": tr.termination.value, "final_time": tr.final.time}
    checks = {}
    if math.isfinite(t_ext):
        metrics["extinction_time"] = t_ext
        gap = abs(tr.final.time - t_ext)
        ok = tr.termination is Termination.BLOW_UP and gap <= cfg.raw["checks"].get("extinction_tol", 1e-3)
        checks["extinction_time"] = _check(gap, cfg.raw["checks"].get("extinction_tol", 1e-3), ok)
    else:
        lim = cfg.raw["checks"]["max_rel_error"]
        checks["max_rel_error"] = _check(max(errs), lim, max(errs) <= lim)
    return tr.termination.value, metrics, checks, files


def _flow(cfg: ExperimentConfig, out: str):
    from .experiments import check_flow, initial_lambda, random_perturbation
    from .flow import StepControl, run_flow
    from .forcing import ForcingTerm
    from .geometry import RadialEmbedding, save_snapshot

    fn = cfg.function()
    torus = fn.torus
    d = torus.dimension_plus_one - 1
    F = ForcingTerm(fn)
    ini, tm, tol = cfg.section("initial"), cfg.section("time"), cfg.section("tolerances")
    basis = _basis(d, int(cfg.section("grid")["max_degree"]))
    rng = np.random.default_rng(cfg.seed)
    rho = np.full(basis.grid.size, float(ini["radius"]))
    if ini["perturbation"] > 0:
        rho *= 1.0 + random_perturbation(basis, rng, ini["perturbation"])
    emb = RadialEmbedding(torus, _center(cfg, torus), rho, basis)
    lam = initial_lambda(emb, tol["lambda_margin"])
    ctl = StepControl(max_dt=tm["max_dt"], cfl_fraction=tm["cfl"])
    tr = run_flow(
        emb,
        F,
        ctl,
        t_max=tm["t_max"],
        tol=tol["endpoint"],
        t_hold=tol["t_hold"],
        monitor_lambda=lam,
        keep_every=tm["keep_every"],
    )
    chk = check_flow(tr, F, lam, cfg.seed)
    t = [r["t"] for r in tr.records]
    files = [
        write_csv(os.path.join(out, "timeseries.csv"), flow_columns(d), flow_rows(tr.records, d)),
        write_csv(os.path.join(out, "pinch_vs_t.csv"), ["t", "pinch_sup"], [[a, r["pinch_sup"]] for a, r in zip(t, tr.records)]),
        write_csv(os.path.join(out, "min_Z_vs_t.csv"), ["t", "min_Z"], [[a, r["min_Z"]] for a, r in zip(t, tr.records)]),
        write_csv(os.path.join(out, "functional_vs_t.csv"), ["t", "functional"], [[a, r["functional"]] for a, r in zip(t, tr.records)]),
    ]
    snap = os.path.join(out, "final_snapshot.json")
    save_snapshot(tr.final.embedding, snap)
    files.append(snap)
    viol = chk.pinch_violations + chk.z_violations + tr.monotonicity_violations
    metrics = {
        "lambda": lam,
        "termination": tr.termination.value,
        "final_time": tr.final.time,
        "final_pinch": tr.records[-1]["pinch_sup"],
        "min_Z": chk.min_Z,
        "gradient_identity_rel_error": chk.gradient_rel_error,
        "hypothesis_steps": chk.hypothesis_steps,
    }
    lim = cfg.raw["checks"]["monotonicity_violations"]
    checks = {"monotonicity_violations": _check(viol, lim, viol <= lim)}
    if "gradient_rel_error" in cfg.raw["checks"]:
        g = cfg.raw["checks"]["gradient_rel_error"]
        checks["gradient_rel_error"] = _check(chk.gradient_rel_error, g, chk.gradient_rel_error <= g)
    return tr.termination.value, metrics, checks, files


def _hopf(cfg: ExperimentConfig, out: str):
    from .experiments import hopf_experiment

    tm = cfg.section("time")
    res = hopf_experiment(
        cfg.torus(),
        amplitude=cfg.section("initial")["perturbation"],
        seed=cfg.seed,
        max_degree=int(cfg.section("grid")["max_degree"]),
        t_max=tm["t_max"],
        max_dt=tm["max_dt"],
        tol=cfg.section("tolerances")["endpoint"],
    )
    tr = res.trajectory
    d = tr.final.embedding.dimension
    files = [
        write_csv(os.path.join(out, "timeseries.csv"), flow_columns(d), flow_rows(tr.records, d)),
        write_csv(os.path.join(out, "shooting.csv"), ["horizon", "offset", "mean_radius_gap"], res.shooting),
    ]
    ch = cfg.raw["checks"]
    metrics = {
        "offset": res.offset,
        "termination": tr.termination.value,
        "final_time": tr.final.time,
        "hausdorff": res.hausdorff,
        "final_pinch": res.final_pinch,
    }
    checks = {
        "converged": _check(tr.termination.value, "converged_to_endpoint", res.converged),
        "hausdorff": _check(res.hausdorff, ch["hausdorff"], res.hausdorff <= ch["hausdorff"]),
        "pinch": _check(res.final_pinch - 1.0, ch["pinch_excess"], res.final_pinch <= 1.0 + ch["pinch_excess"]),
    }
    return tr.termination.value, metrics, checks, files


def _crit_rows(crit):
    dim = crit[0].location.coords.size if crit else 0
    header = ["index", "value", "gradient_norm"] + [f"c_{i}" for i in range(dim)]
    rows = [[c.index, c.value, c.gradient_norm] + c.location.coords.tolist() for c in crit]
    return header, rows


def _morse(cfg: ExperimentConfig, out: str):
    from .morse import assemble_complex, find_critical_points, homology_ranks

    f = cfg.function()
    opt = cfg.section("options")
    crit = find_critical_points(f)
    cx = assemble_complex(f, crit, n_dirs=int(opt["n_dirs"]), delta=float(opt["delta"]))
    ranks = homology_ranks(cx)
    dim = f.torus.dimension_plus_one
    header, rows = _crit_rows(crit)
    files = [
        write_csv(os.path.join(out, "critical_points.csv"), header, rows),
        write_json(os.path.join(out, "complex.json"), cx.to_json()),
        write_csv(
            os.path.join(out, "flow_line_counts.csv"),
            ["grade", "source", "target", "raw_count", "mod2"],
            [[k, j, i, raw, raw % 2] for (k, j, i), raw in sorted(cx.counts.items())],
        ),
    ]
    total = sum(ranks.values())
    metrics = {"critical_points": len(crit), "ranks": [ranks[k] for k in sorted(ranks)], "total_rank": total}
    checks = {
        "boundary_squared": _check(0, 0, cx.boundary_squared_vanishes()),
        "total_rank": _check(total, 2**dim, total == 2**dim),
    }
    return "ok", metrics, checks, files


def _elliptic(cfg: ExperimentConfig, out: str):
    from .concentration import elliptic_sweep
    from .morse import find_critical_points

    f = cfg.function()
    crit = find_critical_points(f)
    kappas = cfg.kappas()
    sweep = elliptic_sweep(f, crit, kappas, max_degree=int(cfg.section("grid")["max_degree"]))
    rows = sweep.rows()
    keys = ["point", "kappa", "mean_radius", "gap", "residual_sup", "iterations", "index", "expected_index"]
    loglog = []
    for k in kappas:
        sel = [r for r in rows if r["kappa"] == k]
        loglog.append([k, max(r["gap"] for r in sel), max(r["residual_sup"] for r in sel)])
    files = [
        write_csv(os.path.join(out, "stationary_spheres.csv"), keys, [[r[k] for k in keys] for r in rows]),
        write_csv(os.path.join(out, "residual_vs_kappa.csv"), ["kappa", "max_radius_gap", "max_residual"], loglog),
    ]
    ch = cfg.raw["checks"]
    metrics = {"worst_residual": sweep.worst_residual(), "min_slope": sweep.min_slope(), "slopes": sweep.slopes}
    checks = {
        "residual": _check(sweep.worst_residual(), ch["residual"], sweep.worst_residual() <= ch["residual"]),
        "min_slope": _check(sweep.min_slope(), ch["min_slope"], sweep.min_slope() >= ch["min_slope"]),
        "index": _check(0, 0, sweep.index_ok()),
    }
    return "ok", metrics, checks, files


def _heteroclinic(cfg: ExperimentConfig, f, n_t: int = 801):
    from .morse import find_critical_points, heteroclinic_count

    opt = cfg.section("options")
    crit = find_critical_points(f)
    p, q = crit[int(opt["source"])], crit[int(opt["target"])]
    _, reps, _ = heteroclinic_count(p, q, f, n_t=n_t)
    if not reps:
        raise TorusflowError("no flow line between the chosen critical points")
    return reps[0]


def _parabolic(cfg: ExperimentConfig, out: str):
    from .concentration import fit_slope, parabolic_run

    f = cfg.function()
    gamma = _heteroclinic(cfg, f)
    tm = cfg.section("time")
    kappas = cfg.kappas()
    rows, files = [], []
    for k in kappas:
        run = parabolic_run(f, gamma, k, window=tuple(tm["window"]), dt_factor=tm["dt_factor"], max_degree=int(cfg.section("grid")["max_degree"]))
        rows.append([k, run.center_distance, run.drift_defect, run.shift, run.steps])
        sub = os.path.join(out, "kappa-" + config_digest({"kind": cfg.kind, "kappa": k}, 8))
        os.makedirs(sub, exist_ok=True)
        dim = run.centers.shape[1]
        files.append(
            write_csv(
                os.path.join(sub, "center_path.csv"),
                ["r", "base_time"] + [f"center_{i}" for i in range(dim)],
                [[a, b] + c.tolist() for a, b, c in zip(run.times, run.base_times, run.centers)],
            )
        )
    files.append(write_csv(os.path.join(out, "residual_vs_kappa.csv"), ["kappa", "center_distance", "drift_defect", "shift", "steps"], rows))
    cs = fit_slope(kappas, [r[1] for r in rows]) if len(kappas) > 1 else math.nan
    ds = fit_slope(kappas, [r[2] for r in rows]) if len(kappas) > 1 else math.nan
    ch = cfg.raw["checks"]
    metrics = {"center_slope": cs, "drift_slope": ds}
    checks = {
        "center_slope": _check(cs, ch["center_slope"], cs >= ch["center_slope"]),
        "drift_slope": _check(ds, ch["drift_slope"], ds >= ch["drift_slope"]),
    }
    return "ok", metrics, checks, files


def _asymptotics(cfg: ExperimentConfig, out: str):
    from .asymptotics import AsymptoticGrid, residual_order_study

    f = cfg.function()
    grid_cfg = cfg.section("grid")
    gamma = _heteroclinic(cfg, f, int(grid_cfg["time_nodes"]))
    grid = AsymptoticGrid.build(gamma, f, max_degree=int(grid_cfg["max_degree"]))
    kappas = cfg.kappas()
    orders = [int(m) for m in cfg.section("options")["orders"]]
    reports = [residual_order_study(grid, m, kappas) for m in orders]
    header = ["kappa"] + [f"order_{m}" for m in orders]
    rows = [[k] + [rep.residuals[i] for rep in reports] for i, k in enumerate(kappas)]
    files = [write_csv(os.path.join(out, "residual_vs_kappa.csv"), header, rows)]
    margin = cfg.raw["checks"]["slope_margin"]
    metrics = {f"slope_order_{rep.order}": rep.slope for rep in reports}
    checks = {
        f"order_{rep.order}": _check(rep.slope, rep.order + margin, rep.slope >= rep.order + margin) for rep in reports
    }
    return "ok", metrics, checks, files


def _homology(cfg: ExperimentConfig, out: str):
    from .concentration import second_variation_index, solve_stationary_sphere
    from .morse import assemble_complex, concentrated_complex, find_critical_points, homology_ranks

    f = cfg.function()
    opt = cfg.section("options")
    kappa = cfg.kappas()[0]
    crit = find_critical_points(f)
    base = assemble_complex(f, crit, n_dirs=int(opt["n_dirs"]), delta=float(opt["delta"]))
    measured = {}
    for k, lst in base.generators.items():
        for j, p in enumerate(lst):
            sphere = solve_stationary_sphere(f, p, kappa)
            measured[(k, j)] = second_variation_index(sphere, f)[0]
    cx = concentrated_complex(base, kappa, measured)
    ranks = homology_ranks(cx)
    top = max(ranks)
    ranks_list = [ranks.get(k, 0) for k in range(top + 1)]
    total = sum(ranks_list)
    dim = f.torus.dimension_plus_one
    files = [
        write_json(os.path.join(out, "concentrated_complex.json"), cx.to_json()),
        write_csv(os.path.join(out, "ranks.csv"), ["grade", "rank"], [[k, r] for k, r in enumerate(ranks_list)]),
    ]
    metrics = {"ranks": ranks_list, "total_rank": total, "kappa": kappa}
    checks = {
        "boundary_squared": _check(0, 0, cx.boundary_squared_vanishes()),
        "grade_zero_empty": _check(ranks_list[0], 0, ranks_list[0] == 0),
        "total_rank": _check(total, 2**dim, total == 2**dim),
    }
    return "ok", metrics, checks, files


PIPELINES = {
    "oracle": _oracle,
    "flow": _flow,
    "hopf": _hopf,
    "morse": _morse,
    "concentrate-elliptic": _elliptic,
    "concentrate-parabolic": _parabolic,
    "asymptotics": _asymptotics,
    "homology": _homology,
}


def run_experiment(config, outdir: str | None = None) -> RunManifest:
    """Run one experiment and write its directory; the manifest is always written.

    Pipeline errors are recorded in the manifest with status ``error`` and
    re-raised.
    """
    raw = resolve(config.raw if isinstance(config, ExperimentConfig) else config)
    cfg = ExperimentConfig(raw)
    if outdir is None:
        outdir = raw.get("output") or os.path.join("runs", f"{cfg.kind}-{config_digest(raw)}")
    os.makedirs(outdir, exist_ok=True)
    write_json(os.path.join(outdir, "resolved_config.json"), raw)
    t0 = time.perf_counter()
    try:
        status, metrics, checks, files = PIPELINES[cfg.kind](cfg, outdir)
    except TorusflowError as exc:
        man = RunManifest(raw, __version__, time.perf_counter() - t0, "error", [], {"error": str(exc)},
                          {"pipeline": _check(type(exc).__name__, "no error", False)})
        write_manifest(outdir, man)
        raise
    files = [os.path.relpath(p, outdir) for p in files] + ["resolved_config.json", "manifest.json"]
    man = RunManifest(raw, __version__, time.perf_counter() - t0, status, files, metrics, checks)
    write_manifest(outdir, man)
    return man
