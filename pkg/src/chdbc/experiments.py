"""Experiment drivers and report emission."""
from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import diagnostics as dg
from .config import ExperimentPlan, config_summary, emit_config
from .fieldio import config_hash, state_to_csv
from .graphs import MonotoneGraph
from .grid import Grid
from .stepper import (InitialDatum, ProblemConfig, SourceSpec, StepError, initial_rates,
                      run)

MASS_TOL = 1e-11
ENERGY_TOL = 1e-8
INITIAL_RATE_TOL = 1e-9


class ExperimentError(RuntimeError):
    """A member run failed; ``label`` names the sweep value."""

    def __init__(self, label: str, cause: Exception):
        super().__init__(f"run {label} failed: {cause}")
        self.label = label
        self.cause = cause


@dataclass
class RunResult:
    label: str
    params: dict
    config_text: str
    diagnostics_csv: str
    final_state_csv: str
    final_norms: dict
    max_mass_residual: float
    max_energy_slack: float
    energy_tolerance: float
    initial_rate_residual: float
    u_history: list = field(default_factory=list, repr=False)
    times: list = field(default_factory=list, repr=False)


@dataclass
class SweepReport:
    """Aggregated outcome of one experiment.

    ``differences`` are successive ``max_t ||u_a - u_b||_H`` between
    neighbouring values; ``order`` is the least-squares slope of
    ``log(difference)`` against ``log(value)`` with ``order_residual`` its
    RMS misfit.  ``checks`` maps each asserted invariant to pass/fail.
    """

    kind: str
    parameter: str
    values: list
    runs: list
    differences: list = field(default_factory=list)
    order: Optional[float] = None
    order_residual: Optional[float] = None
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    base_config: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        return _clean({
            "kind": self.kind,
            "parameter": self.parameter,
            "values": list(self.values),
            "runs": [r.label for r in self.runs],
            "final_norms": [r.final_norms for r in self.runs],
            "differences": list(self.differences),
            "order": self.order,
            "order_residual": self.order_residual,
            "checks": dict(self.checks),
            "passed": self.passed,
            "details": self.details,
            "config_hash": config_hash(self.base_config) if self.base_config else None,
        })


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# -----------------------------------------------------------------------------
# single runs
# -----------------------------------------------------------------------------

def _energy_tolerance(cfg: ProblemConfig, e0: float) -> float:
    return ENERGY_TOL * max(1.0, e0)


def execute(cfg: ProblemConfig, label: str, params: dict, u0=None) -> RunResult:
    """Run one simulation with its own diagnostics sink."""
    sink = dg.DiagnosticsSink(cfg)
    try:
        traj = run(cfg, u0=u0, hooks=sink)
        rates = initial_rates(cfg, traj[0].u)
    except (StepError, RuntimeError, ValueError) as exc:
        raise ExperimentError(label, exc) from exc
    e0 = sink.initial_energy
    return RunResult(
        label=label, params=params, config_text=emit_config(cfg),
        diagnostics_csv=sink.to_csv(),
        final_state_csv=state_to_csv(cfg.grid, traj[-1]),
        final_norms=dg.norm_suite(traj[-1], cfg),
        max_mass_residual=sink.max_mass_residual(),
        max_energy_slack=sink.max_energy_residual(),
        energy_tolerance=_energy_tolerance(cfg, e0),
        initial_rate_residual=rates.residual,
        u_history=[s.u for s in traj], times=[s.t for s in traj],
    ), traj


def _map(fn: Callable, items: Sequence, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _c0h(grid: Grid, hist_a, hist_b) -> float:
    return max(grid.norm(a - b) for a, b in zip(hist_a, hist_b))


def _fit_order(x: Sequence[float], y: Sequence[float]):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.any(y <= 0):
        return None, None
    A = np.stack([np.ones_like(x), np.log(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - np.log(y)) ** 2)))
    return float(coef[1]), res


def _strictly_decreasing(seq) -> bool:
    return all(b < a for a, b in zip(seq, seq[1:]))


def _run_checks(runs: Sequence[RunResult]) -> dict:
    return {
        "mass_identity": all(r.max_mass_residual <= MASS_TOL for r in runs),
        "energy_inequality": all(r.max_energy_slack <= r.energy_tolerance for r in runs),
        "initial_rates": all(r.initial_rate_residual <= INITIAL_RATE_TOL for r in runs),
    }


# -----------------------------------------------------------------------------
# drivers
# -----------------------------------------------------------------------------

def run_single(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    cfg = plan.base
    res, _ = execute(cfg, "run_000", {})
    return SweepReport(kind="run", parameter="", values=[], runs=[res],
                       checks=_run_checks([res]),
                       details={"max_mass_residual": res.max_mass_residual,
                                "max_energy_slack": res.max_energy_slack,
                                "energy_tolerance": res.energy_tolerance},
                       base_config=emit_config(cfg, plan))


def _sweep(plan: ExperimentPlan, parameter: str, threads: int, make_cfg) -> tuple:
    values = list(plan.values)

    def one(item):
        k, val = item
        cfg = make_cfg(val)
        res, traj = execute(cfg, f"run_{k:03d}", {parameter: val})
        return res, dg.estimate_suite(cfg, traj), cfg

    out = _map(one, list(enumerate(values)), threads)
    runs = [o[0] for o in out]
    suites = [o[1] for o in out]
    grid = plan.base.grid
    diffs = [_c0h(grid, a.u_history, b.u_history) for a, b in zip(runs, runs[1:])]
    order, ores = _fit_order(values[:-1], diffs) if diffs else (None, None)
    return values, runs, suites, diffs, order, ores, [o[2] for o in out]


def sweep_lambda(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    """Successive differences in ``lam`` and lam-uniform estimate suite."""
    values, runs, suites, diffs, order, ores, _ = _sweep(
        plan, "lambda", threads, lambda v: plan.base.with_(lam=v))
    checks = _run_checks(runs)
    checks["differences_decreasing"] = _strictly_decreasing(diffs) and len(diffs) > 0
    bounded = {}
    if suites:
        for key in suites[0]:
            ref = suites[0][key]
            bounded[key] = max(s[key] for s in suites) <= 2.0 * ref + 1e-14
        checks["estimates_bounded"] = all(bounded.values())
    return SweepReport(kind="sweep-lambda", parameter="lambda", values=values, runs=runs,
                       differences=diffs, order=order, order_residual=ores, checks=checks,
                       details={"estimate_suites": suites, "estimates_bounded": bounded},
                       base_config=emit_config(plan.base, plan))


def sweep_epsilon(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    """Boundary-diffusion limit with elliptically smoothed initial data."""
    base = plan.base.with_(initial=InitialDatum(
        mean=plan.base.initial.mean, amplitude=plan.base.initial.amplitude,
        kx=plan.base.initial.kx, ky=plan.base.initial.ky, smooth=True))
    values, runs, suites, diffs, order, ores, cfgs = _sweep(
        plan, "epsilon", threads, lambda v: base.with_(epsilon=v))
    grid = base.grid
    eps_v = []
    for cfg, r in zip(cfgs, runs):
        eps_v.append(max(cfg.epsilon * (grid.boundary_inner(grid.trace(u), grid.trace(u))
                                        + grid.boundary_dirichlet_form(grid.trace(u), grid.trace(u)))
                         for u in r.u_history))
    checks = _run_checks(runs)
    checks["eps_v_decreasing"] = _strictly_decreasing(eps_v)
    checks["differences_decreasing"] = _strictly_decreasing(diffs) and len(diffs) > 0
    return SweepReport(kind="sweep-eps", parameter="epsilon", values=values, runs=runs,
                       differences=diffs, order=order, order_residual=ores, checks=checks,
                       details={"eps_v_VG2_Linf": eps_v},
                       base_config=emit_config(base, plan))


def perturbation(plan: ExperimentPlan, amplitude: float) -> np.ndarray:
    """Mean-free perturbation ``amplitude * (cos(2 pi mode x) + noise * smooth random field)``."""
    grid = plan.base.grid
    X, _ = grid.mesh
    p = np.cos(2 * np.pi * plan.mode * X)
    if plan.noise > 0:
        rng = np.random.default_rng(plan.seed)
        raw = grid.helmholtz_neumann_solve(1.0, rng.standard_normal(grid.shape) * 50.0)
        raw -= grid.mean(raw)
        p = p + plan.noise * raw / max(float(np.max(np.abs(raw))), 1e-300)
    return amplitude * p


def stability(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    """Two-trajectory difference functionals for perturbations ``delta`` and ``delta/2``."""
    cfg = plan.base
    u0 = cfg.initial.evaluate(cfg.grid, cfg.epsilon)
    deltas = [plan.delta, plan.delta / 2.0]
    items = [("run_000", 0.0), ("run_001", deltas[0]), ("run_002", deltas[1])]

    def one(item):
        label, d = item
        res, traj = execute(cfg, label, {"delta": d}, u0=u0 + perturbation(plan, d))
        return res, traj

    out = _map(one, items, threads)
    runs = [o[0] for o in out]
    base_traj = out[0][1]
    recs = [dg.stability_pair(cfg, base_traj, out[k][1]) for k in (1, 2)]
    finals = [r[-1].grad_diff for r in recs]
    ratio = finals[0] / finals[1] if finals[1] > 0 else math.inf
    K, L, fres = dg.fit_gronwall(recs[0])
    mean_drift = max(abs(cfg.grid.mean(a.u - b.u)) for a, b in zip(base_traj, out[1][1]))
    checks = _run_checks(runs)
    checks["quadratic_scaling"] = 3.5 <= ratio <= 4.5
    checks["gronwall_finite"] = math.isfinite(L) and math.isfinite(K)
    checks["mean_free_difference"] = mean_drift <= 1e-11
    series = [{"t": r.t, "grad_diff": r.grad_diff, "bnd_grad_diff": r.bnd_grad_diff,
               "rate_diff": r.rate_diff, "mu_grad_diff": r.mu_grad_diff} for r in recs[0]]
    return SweepReport(kind="stability", parameter="delta", values=deltas, runs=runs,
                       checks=checks,
                       details={"final_grad_diff": finals, "ratio": ratio,
                                "gronwall_K": K, "gronwall_L": L, "gronwall_fit_residual": fres,
                                "max_mean_difference": mean_drift, "records": series},
                       base_config=emit_config(cfg, plan))


# -----------------------------------------------------------------------------
# manufactured solution
# -----------------------------------------------------------------------------

def mms_config(plan_or_cfg, n: int, tau: float, t_final: float) -> ProblemConfig:
    """Forced linear problem whose exact solution is
    ``exp(-t) cos(2 pi x) cos(pi y)``.

    With linear viscosity slopes ``a`` (bulk) and ``b`` (boundary), zero
    potentials and no perturbation, the chemical potential is
    ``u/(lam + 5 pi^2)``, the normal derivative vanishes and the sources are
    multiples of the solution and of its trace.
    """
    base = plan_or_cfg.base if isinstance(plan_or_cfg, ExperimentPlan) else plan_or_cfg
    lam, eps = base.lam, base.epsilon
    a = base.alpha.coef
    b = base.alpha_g.coef
    p2 = np.pi**2
    c_in = 5 * p2 - a / (1 + lam * a) - 1.0 / (lam + 5 * p2)
    c_bd = -lam - b / (1 + lam * b) + 4 * p2 * eps
    return base.with_(
        tau=tau, t_final=t_final, grid=Grid(n, n + 1),
        alpha=MonotoneGraph.linear(a), alpha_g=MonotoneGraph.linear(b),
        beta=MonotoneGraph.zero(), beta_g=MonotoneGraph.zero(), c_dom=1.0,
        pi_slope=0.0, pi_g_slope=0.0, strong_regime=False,
        source=SourceSpec("mode", amplitude=c_in, kx=1, ky=1, decay=1.0),
        source_g=SourceSpec("mode", amplitude=c_bd, kx=1, ky=1, decay=1.0),
        initial=InitialDatum(mean=0.0, amplitude=1.0, kx=1, ky=1, smooth=False),
    )


def mms_exact(grid: Grid, t: float) -> np.ndarray:
    X, Y = grid.mesh
    return math.exp(-t) * np.cos(2 * np.pi * X) * np.cos(np.pi * Y)


def mms(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    """Temporal order by successive differences on a fixed grid, spatial
    order by errors against the exact solution at a small step."""
    T = plan.mms_t_final
    t_items = [(tau, plan.mms_time_grid) for tau in plan.mms_taus]
    s_items = [(plan.mms_space_tau, n) for n in plan.mms_grids]

    def one(item):
        k, (tau, n) = item
        cfg = mms_config(plan, n, tau, T)
        res, traj = execute(cfg, f"run_{k:03d}", {"tau": tau, "n": n})
        err = max(cfg.grid.norm(s.u - mms_exact(cfg.grid, s.t)) for s in traj)
        return res, traj[-1].u, err

    out = _map(one, list(enumerate(t_items + s_items)), threads)
    t_out, s_out = out[:len(t_items)], out[len(t_items):]
    grid_t = Grid(plan.mms_time_grid, plan.mms_time_grid + 1)
    t_diffs = [grid_t.norm(a[1] - b[1]) for a, b in zip(t_out, t_out[1:])]
    t_orders = [math.log2(a / b) for a, b in zip(t_diffs, t_diffs[1:])]
    t_order, t_res = _fit_order(plan.mms_taus[:-1], t_diffs)
    s_errs = [o[2] for o in s_out]
    hs = [1.0 / n for n in plan.mms_grids]
    s_orders = [math.log2(a / b) for a, b in zip(s_errs, s_errs[1:])]
    s_order, s_res = _fit_order(hs, s_errs)
    runs = [o[0] for o in out]
    checks = _run_checks(runs)
    checks["temporal_order"] = t_order is not None and abs(t_order - 1.0) <= 0.15
    checks["spatial_order"] = s_order is not None and abs(s_order - 2.0) <= 0.2
    return SweepReport(kind="mms", parameter="tau,h", values=list(plan.mms_taus) + hs, runs=runs,
                       differences=t_diffs, order=t_order, order_residual=t_res, checks=checks,
                       details={"temporal_differences": t_diffs, "temporal_local_orders": t_orders,
                                "temporal_order": t_order, "temporal_fit_residual": t_res,
                                "time_errors_vs_exact": [o[2] for o in t_out],
                                "spatial_errors": s_errs, "spatial_local_orders": s_orders,
                                "spatial_order": s_order, "spatial_fit_residual": s_res},
                       base_config=emit_config(plan.base, plan))


DRIVERS = {
    "run": run_single,
    "sweep-lambda": sweep_lambda,
    "sweep-eps": sweep_epsilon,
    "stability": stability,
    "mms": mms,
}


def run_experiment(plan: ExperimentPlan, threads: int = 1) -> SweepReport:
    """Execute ``plan``; member runs go to ``threads`` workers."""
    return DRIVERS[plan.kind](plan, threads=threads)


# -----------------------------------------------------------------------------
# emission
# -----------------------------------------------------------------------------

_RUN_FILE = re.compile(r"^run_\d{3}_(diagnostics|final_state)\.csv$")


def emit_report(report: SweepReport, directory) -> list:
    """Write ``summary.json``, per-run CSVs and ``manifest.json`` into ``directory``.

    Stale per-run CSVs from an earlier, larger report are removed so the
    directory always matches the manifest.  Returns the written paths.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for r in report.runs:
            files[f"{r.label}_diagnostics.csv"] = r.diagnostics_csv
            files[f"{r.label}_final_state.csv"] = r.final_state_csv
        files["summary.json"] = json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
        manifest = {
            "kind": report.kind,
            "runs": [{"label": r.label, "params": _clean(r.params),
                      "diagnostics": f"{r.label}_diagnostics.csv",
                      "final_state": f"{r.label}_final_state.csv"} for r in report.runs],
            "files": sorted([*files, "manifest.json"]),
            "config_hash": config_hash(report.base_config) if report.base_config else None,
        }
        files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        for old in directory.iterdir():
            if _RUN_FILE.match(old.name) and old.name not in files:
                old.unlink()
        written = []
        for name in sorted(files):
            path = directory / name
            path.write_text(files[name])
            written.append(path)
        return written
    except OSError as exc:
        raise OSError(f"could not write report to {exc.filename or directory}: {exc.strerror}") from exc
