"""ε-sweep runner: solve, interpolate, diagnose and check.

:func:`run_sweep` works on in-memory objects and is what the acceptance
tests call; :func:`run_experiment` adds config handling and report files
for the command line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis
from .config import CHECKS, resolve
from .errors import ConfigError, EntropicError, ProblemTooLarge
from .marginals import build_marginal
from .ot_baseline import LP_LIMIT, solve_w2_exact
from .schrodinger import (
    interpolate,
    solve_schrodinger_system,
    uniform_time_grid,
)
from .serialize import atomic_write_text
from .space import build_torus_grid, build_weighted_graph

SWEEP_COLUMNS = (
    "epsilon",
    "V1",
    "V2",
    "V3",
    "V4",
    "dens_sup",
    "lip_phi",
    "lip_psi",
    "lap_floor",
    "kinetic",
    "accel_L1",
    "eps_cost_gap",
    "hopflax_defect",
    "second_order_gap",
)
PATH_COLUMNS = ("t", "H", "H1_a", "H1_b", "H2_a", "H2_b", "H2_fd", "res_phi", "res_psi", "res_cont", "res_theta")

TREND_SLACK = 1.05  # a halving of ε may raise a vanishing quantity by at most 5%
BOUND_GROWTH = 2.0
EVOLUTION_BAND = (3.5, 4.5)
ROUNDOFF = 1e-12
EVOLUTION_FLOOR = 1e-10


@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skipped"
    detail: str = ""
    values: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    epsilons: list
    solutions: list
    paths: list
    failures: dict
    diagnostics: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    limits: list = field(default_factory=list)
    second_order: list = field(default_factory=list)
    lp: object = None
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures and all(c.status != "fail" for c in self.checks)

    def sweep_rows(self):
        """Rows of the per-sweep table, one per converged ε."""
        rows = []
        lim = {r["epsilon"]: r for r in self.limits}
        so = {s.epsilon: s for s in self.second_order}
        for diag, b in zip(self.diagnostics, self.bounds):
            eps = diag.epsilon
            v = diag.vanishing
            row = dict.fromkeys(SWEEP_COLUMNS, math.nan)
            row.update(epsilon=eps, V1=v.V1, V2=v.V2, V3=v.V3, V4=v.V4)
            for key in ("dens_sup", "lip_phi", "lip_psi", "lap_floor", "kinetic"):
                row[key] = b[key]
            if eps in lim:
                row["eps_cost_gap"] = lim[eps]["eps_cost_gap"]
                row["hopflax_defect"] = lim[eps]["hopflax_defect"]
            if eps in so:
                row["accel_L1"] = so[eps].accel_L1
                row["second_order_gap"] = float(np.max(so[eps].hessian_gap[so[eps].window]))
            rows.append(row)
        return rows


def test_function(space, mode=1):
    """Smooth test function ``cos(2π k x₀ / L₀)`` along the first axis."""
    L = space.side_lengths[0]
    return np.cos(2.0 * np.pi * mode * space.coordinates[:, 0] / L)


def _solve_one(space, rho0, rho1, eps, steps, tol, max_iter):
    sol = solve_schrodinger_system(space, rho0, rho1, eps, tol=tol, max_iter=max_iter)
    return sol, interpolate(space, sol, uniform_time_grid(steps), floor_mode=_needs_floor(sol))


def _needs_floor(sol):
    return bool(np.any(sol.rho0 <= 0) or np.any(sol.rho1 <= 0))


def _trend_ok(values, slack=TREND_SLACK):
    vals = [abs(v) for v in values]
    return all(b <= slack * a + ROUNDOFF for a, b in zip(vals, vals[1:]))


def run_sweep(
    space,
    rho0,
    rho1,
    epsilons,
    steps=200,
    delta=analysis.DEFAULT_DELTA,
    tol=1e-10,
    max_iter=100_000,
    checks=CHECKS,
    lp=True,
    basis_size=analysis.DEFAULT_BASIS,
    test_mode=1,
    threads=1,
):
    """Run the full pipeline over ``epsilons`` and evaluate ``checks``.

    Solver failures are recorded in ``result.failures`` keyed by ε; the
    remaining members of the sweep are still analysed.
    """
    epsilons = [float(e) for e in epsilons]
    rho0 = np.asarray(rho0, dtype=float)
    rho1 = np.asarray(rho1, dtype=float)

    def job(eps):
        try:
            return _solve_one(space, rho0, rho1, eps, steps, tol, max_iter)
        except EntropicError as exc:
            return exc

    if threads > 1 and len(epsilons) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, epsilons))
    else:
        outcomes = [job(e) for e in epsilons]

    res = SweepResult(epsilons=epsilons, solutions=[], paths=[], failures={})
    for eps, out in zip(epsilons, outcomes):
        if isinstance(out, EntropicError):
            res.failures[eps] = f"{out.code}: {out}"
        else:
            res.solutions.append(out[0])
            res.paths.append(out[1])

    checks = tuple(checks)
    runners = {
        "solver": _check_solver,
        "path": _check_path,
        "evolution": _check_evolution,
        "entropy": _check_entropy,
        "vanishing": _check_vanishing,
        "bounds": _check_bounds,
        "limits": _check_limits,
        "second_order": _check_second_order,
    }
    ctx = {"space": space, "delta": delta, "lp": lp, "basis_size": basis_size, "test_mode": test_mode}
    if res.paths:
        try:
            res.diagnostics = [analysis.diagnose_path(space, p, delta, basis_size) for p in res.paths]
            res.bounds = analysis.bounds_report(space, res.paths, delta)
        except EntropicError as exc:
            res.checks.append(CheckResult("diagnostics", "fail", f"{exc.code}: {exc}"))
            return res
    for name in CHECKS:
        if name not in checks:
            continue
        if not res.paths:
            res.checks.append(CheckResult(name, "skipped", "no converged ε"))
            continue
        try:
            res.checks.append(runners[name](res, ctx))
        except EntropicError as exc:
            res.checks.append(CheckResult(name, "fail", f"{exc.code}: {exc}"))
    if res.failures:
        res.checks.append(CheckResult("convergence", "fail", "; ".join(f"ε={k!r}: {v}" for k, v in res.failures.items())))
    return res


def _check_solver(res, ctx):
    worst_m = max(s.marginal_residual for s in res.solutions)
    worst_n = max(s.normalization_residual for s in res.solutions)
    tol = max(s.tol for s in res.solutions)
    ok = worst_m < tol and worst_n < 1e-10
    return CheckResult(
        "solver", "pass" if ok else "fail",
        f"marginal residual {worst_m:.3e} (tol {tol:.1e}), normalization {worst_n:.3e}",
        {"marginal_residual": worst_m, "normalization_residual": worst_n,
         "iterations": [s.iterations for s in res.solutions]},
    )


def _check_path(res, ctx):
    m = ctx["space"].measure
    mass = max(float(np.max(np.abs(p.rho @ m - 1.0))) for p in res.paths)
    ok = mass < 1e-10
    return CheckResult("path", "pass" if ok else "fail", f"mass defect {mass:.3e}", {"mass_defect": mass})


def _check_evolution(res, ctx):
    space, delta = ctx["space"], ctx["delta"]
    ratios = {}
    ok = True
    for sol, coarse in zip(res.solutions, res.paths):
        # refine the configured grid rather than coarsen it, so the ratio
        # speaks for the resolution that was asked for
        p = interpolate(space, sol, uniform_time_grid(2 * (coarse.times.size - 1)), floor_mode=_needs_floor(sol))
        fine_h, coarse_h = analysis.hjb_residuals(space, p), analysis.hjb_residuals(space, coarse)
        fine_c = analysis.continuity_residual(space, p, ctx["basis_size"])
        coarse_c = analysis.continuity_residual(space, coarse, ctx["basis_size"])
        fine_t, coarse_t = analysis.theta_residual(space, p), analysis.theta_residual(space, coarse)
        pairs = {
            "phi": (coarse_h.phi_time, fine_h.phi_time),
            "psi": (coarse_h.psi_time, fine_h.psi_time),
            "continuity": (coarse_c.weak_time, fine_c.weak_time),
            "theta": (coarse_t.time, fine_t.time),
        }
        row = {}
        for key, (c, f) in pairs.items():
            if float(np.max(np.abs(c))) < EVOLUTION_FLOOR:
                row[key] = math.nan  # nothing above round-off to refine
                continue
            r = analysis.refinement_ratio(coarse_h.times, c, fine_h.times, f, delta)
            row[key] = r
            if np.isfinite(r) and not EVOLUTION_BAND[0] <= r <= EVOLUTION_BAND[1]:
                ok = False
        ratios[repr(p.epsilon)] = row
    return CheckResult("evolution", "pass" if ok else "fail",
                       f"time-refinement ratios must lie in {EVOLUTION_BAND}", ratios)


def _check_entropy(res, ctx):
    worst = 0.0
    for d in res.diagnostics:
        e = d.entropy
        worst = max(worst, float(np.max(np.abs(e.H2_a - e.H2_b) / (1.0 + np.abs(e.H2_a)))))
    ok = worst <= 1e-9
    return CheckResult("entropy", "pass" if ok else "fail",
                       f"second-derivative forms differ by {worst:.3e} (relative)", {"H2_form_gap": worst})


def _check_vanishing(res, ctx):
    vals = {k: [getattr(d.vanishing, k) for d in res.diagnostics] for k in ("V1", "V2", "V3", "V4")}
    bad = [k for k, v in vals.items() if not _trend_ok(v)]
    return CheckResult("vanishing", "fail" if bad else "pass",
                       f"non-decreasing: {', '.join(bad)}" if bad else "V1..V4 do not grow along the sweep", vals)


def _check_bounds(res, ctx):
    keys = ("dens_sup", "lip_phi", "lip_psi", "lap_floor", "kinetic", "blap")
    vals = {k: [abs(b[k]) for b in res.bounds] for k in keys}
    bad = [k for k, v in vals.items() if any(b > BOUND_GROWTH * a + ROUNDOFF for a, b in zip(v, v[1:]))]
    return CheckResult("bounds", "fail" if bad else "pass",
                       f"grew more than {BOUND_GROWTH}x: {', '.join(bad)}" if bad else "trackers uniformly bounded",
                       vals)


def _check_limits(res, ctx):
    space = ctx["space"]
    if not ctx["lp"]:
        return CheckResult("limits", "skipped", "LP oracle disabled")
    if space.n > LP_LIMIT:
        return CheckResult("limits", "skipped", f"{space.n} nodes exceed the LP limit {LP_LIMIT}")
    sol = res.solutions[0]
    try:
        res.lp = solve_w2_exact(space, sol.rho0, sol.rho1)
        res.limits = analysis.limit_checks(space, res.paths, res.solutions, res.lp, ctx["delta"])
    except ProblemTooLarge as exc:
        return CheckResult("limits", "skipped", str(exc))
    vals = {k: [r[k] for r in res.limits] for k in ("eps_cost_gap", "hopflax_defect", "concavity_defect")}
    bad = [k for k in ("eps_cost_gap", "hopflax_defect") if not _trend_ok(vals[k])]
    vals["half_w2"] = 0.5 * res.lp.w2_squared
    vals["lp_duality_gap"] = res.lp.duality_gap
    return CheckResult("limits", "fail" if bad else "pass",
                       f"growing defects: {', '.join(bad)}" if bad else "limit defects do not grow", vals)


def _check_second_order(res, ctx):
    space = ctx["space"]
    if not space.is_grid:
        return CheckResult("second_order", "skipped", "needs a torus grid")
    h = test_function(space, ctx["test_mode"])
    res.second_order = analysis.second_order_check(space, res.paths, h, ctx["delta"])
    worst = max(float(np.max(s.relative_defect[s.window])) for s in res.second_order)
    l1 = [s.accel_L1 for s in res.second_order]
    ok = worst <= 1e-2 and _trend_ok(l1)
    return CheckResult("second_order", "pass" if ok else "fail",
                       f"relative defect {worst:.3e} (limit 1e-2); acceleration L1 trend",
                       {"relative_defect": worst, "accel_L1": l1})


# ---------------------------------------------------------------------------
# config-driven runs


def build_space(cfg, base_dir="."):
    sp = cfg["space"]
    if sp["kind"] == "torus":
        return build_torus_grid(sp["dims"], sp["resolution"], sp["side_lengths"])
    base = Path(base_dir)
    edges = []
    with _resolve(base, sp["edges"]).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                edges.append(tuple(float(x) for x in row[:4]))
            except ValueError:
                continue  # header
    measure = None
    if "measure" in sp:
        measure = np.loadtxt(_resolve(base, sp["measure"]), delimiter=",", ndmin=1)
    return build_weighted_graph(sp["nodes"], edges, measure)


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def format_float(x):
    """Shortest round-trip text for a float."""
    return repr(float(x))


def csv_text(columns, rows, timestamp):
    buf = io.StringIO()
    buf.write(f"# generated {timestamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(row[c]) for c in columns])
    return buf.getvalue()


def path_rows(diag):
    table = diag.table()
    return [{c: table[c][k] for c in PATH_COLUMNS} for k in range(len(table["t"]))]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_experiment(cfg_text, table, out_dir=None, threads=1, seed=0, base_dir="."):
    """Run a configuration and write ``report.json``, ``sweep.csv`` and
    ``path_<eps>.csv`` into the output directory.

    Returns ``(result, out_path)``.  Raises :class:`ConfigError` for
    invalid configurations.
    """
    cfg = resolve(table)
    out = Path(out_dir) if out_dir is not None else _resolve(Path(base_dir), cfg["output"]["dir"])
    try:
        space = build_space(cfg, base_dir)
        rho0 = build_marginal(space, cfg["marginals"]["rho0"], seed=seed, base_dir=base_dir)
        rho1 = build_marginal(space, cfg["marginals"]["rho1"], seed=seed + 1, base_dir=base_dir)
    except (EntropicError, OSError) as exc:
        raise ConfigError(f"cannot set up the experiment: {exc}") from exc
    sw, ch, sol = cfg["sweep"], cfg["checks"], cfg["solver"]
    res = run_sweep(
        space, rho0, rho1, sw["epsilons"], steps=sw["steps"], delta=sw["delta"],
        tol=sol["tol"], max_iter=sol["max_iter"], checks=ch["enabled"], lp=ch["lp"],
        basis_size=ch["basis_size"], test_mode=ch["test_mode"], threads=threads,
    )

    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "sweep.csv", csv_text(SWEEP_COLUMNS, res.sweep_rows(), stamp))
    for diag in res.diagnostics:
        atomic_write_text(out / f"path_{diag.epsilon!r}.csv", csv_text(PATH_COLUMNS, path_rows(diag), stamp))

    report = {
        "generated": stamp,
        "status": "pass" if res.passed else "fail",
        "config_text": cfg_text,
        "config": cfg,
        "seed": seed,
        "space": {"kind": space.kind, "n": space.n, "diameter": space.diameter,
                  "resolution": space.resolution, "side_lengths": space.side_lengths},
        "solutions": [
            {"epsilon": s.epsilon, "iterations": s.iterations, "marginal_residual": s.marginal_residual,
             "normalization_residual": s.normalization_residual, "log_domain": s.log_domain, "tol": s.tol}
            for s in res.solutions
        ],
        "failures": {repr(k): v for k, v in res.failures.items()},
        "sweep": res.sweep_rows(),
        "bounds": res.bounds,
        "limits": res.limits,
        "second_order": [
            {"epsilon": s.epsilon, "accel_L1": s.accel_L1,
             "max_relative_defect": float(np.max(s.relative_defect[s.window])),
             "max_hessian_gap": float(np.max(s.hessian_gap[s.window]))}
            for s in res.second_order
        ],
        "lp": None if res.lp is None else {"w2_squared": res.lp.w2_squared, "duality_gap": res.lp.duality_gap,
                                           "iterations": res.lp.iterations},
        "checks": [{"name": c.name, "status": c.status, "detail": c.detail, "values": c.values} for c in res.checks],
    }
    atomic_write_text(out / "report.json", json.dumps(_jsonable(report), indent=2, allow_nan=False) + "\n")
    return res, out
