"""Acceptance criteria 1-10.

Each test prints one ``criterion N PASS|FAIL`` line (also collected into the
terminal summary) and then asserts.  Runtimes are desk scale: grids at most
64x65, final times at most 0.1.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from chdbc import diagnostics as dg
from chdbc.config import parse_plan
from chdbc.experiments import run_experiment
from chdbc.graphs import (MonotoneGraph, moreau_envelope, resolvent, yosida)
from chdbc.grid import Grid
from chdbc.stepper import InitialDatum, ProblemConfig, SourceSpec, initial_rates, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BUILTIN_GRAPHS = [
    MonotoneGraph.linear(1.0),
    MonotoneGraph.linear(3.0),
    MonotoneGraph.sign(),
    MonotoneGraph.positive_part(2.0),
    MonotoneGraph.polynomial(3, 1.0),
    MonotoneGraph.polynomial(5, 2.0),
    MonotoneGraph.logarithmic(1.0),
    MonotoneGraph.zero(),
]


def _kinks(g: MonotoneGraph, lam: float):
    """Points where the Yosida map is not differentiable."""
    if g.kind.value == "sign":
        return [-lam, lam]
    if g.kind.value == "pos":
        return [0.0]
    return []


# -- 1 ----------------------------------------------------------------------

def test_criterion_01_graph_suite(acceptance_line):
    rng = np.random.default_rng(101)
    h = 1e-3
    worst = {"nonexpansive": -math.inf, "inclusion": 0.0, "section_bound": -math.inf,
             "fd_ratio": 0.0}
    failures = []
    for g in BUILTIN_GRAPHS:
        for lam in (1.0, 0.1, 0.01):
            r = rng.uniform(-4.0, 4.0, 1000)
            J = resolvent(g, lam, r)
            Y = yosida(g, lam, r)
            i, j = rng.integers(0, r.size, (2, 1000))
            ne = float(np.max(np.abs(J[i] - J[j]) - np.abs(r[i] - r[j])))
            inc = float(np.max(g.graph_distance(J, Y)))
            lo, hi = g.domain
            inside = (r > lo) & (r < hi)
            sb = float(np.max(np.abs(Y[inside]) - np.abs(g.minimal_section(r[inside]))))
            ok_fd = np.ones_like(r, dtype=bool)
            for k in _kinks(g, lam):
                ok_fd &= np.abs(r - k) > 2 * h

            def fd(step):
                return (moreau_envelope(g, lam, r + step) - moreau_envelope(g, lam, r - step)) / (2 * step)

            e1 = np.abs(fd(h) - Y)[ok_fd]
            e2 = np.abs(fd(h / 2) - Y)[ok_fd]
            # second order: halving the step divides the error by ~4, up to the
            # cancellation error of differencing values of size |envelope|
            floor = 1e-12 + 64 * np.finfo(float).eps * np.abs(moreau_envelope(g, lam, r))[ok_fd] / h
            fd_ok = bool(np.all(e2 <= 0.3 * e1 + floor))
            worst["nonexpansive"] = max(worst["nonexpansive"], ne)
            worst["inclusion"] = max(worst["inclusion"], inc)
            worst["section_bound"] = max(worst["section_bound"], sb)
            big = e1 > 1e-8
            if big.any():
                worst["fd_ratio"] = max(worst["fd_ratio"], float(np.max(e2[big] / e1[big])))
            if ne > 1e-12 or inc > 1e-10 or sb > 1e-12 or not fd_ok:
                failures.append(f"{g.label()} lam={lam}")
    passed = not failures
    acceptance_line(1, passed, "graph suite",
                    f"max(|dJ|-|dr|)={worst['nonexpansive']:.1e}, max inclusion dist="
                    f"{worst['inclusion']:.1e}, max(|yosida|-|section|)={worst['section_bound']:.1e}, "
                    f"worst FD error ratio on halving={worst['fd_ratio']:.3f}"
                    + (f"; failing: {failures}" if failures else ""))
    assert passed


# -- 2 ----------------------------------------------------------------------

def _eig_errors(n):
    g = Grid(n, n + 1)
    X, Y = g.mesh
    fy = np.cos(np.pi * Y)
    fx = np.cos(2 * np.pi * X)
    v = np.cos(2 * np.pi * g.x)[None, :] * np.ones((2, 1))
    return (
        float(np.max(np.abs(g.laplacian_neumann(fy) + np.pi**2 * fy))),
        float(np.max(np.abs(g.laplacian_neumann(fx) + 4 * np.pi**2 * fx))),
        float(np.max(np.abs(g.laplace_beltrami(v) + 4 * np.pi**2 * v))),
        float(np.max(np.abs(g.helmholtz_neumann_solve(1.0, fy) - fy / (1 + np.pi**2)))),
        float(np.max(np.abs(g.neumann_inverse_laplacian(fy) - fy / np.pi**2))),
    )


def test_criterion_02_operator_suite(acceptance_line):
    rng = np.random.default_rng(202)
    g = Grid()
    adj = 0.0
    for _ in range(20):
        a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        lhs = g.inner(g.laplacian_neumann(a), b)
        rhs = g.inner(a, g.laplacian_neumann(b))
        adj = max(adj, abs(lhs - rhs) / max(abs(lhs), 1e-300))

    errs = np.array([_eig_errors(n) for n in (16, 32, 64)])
    orders = np.log2(errs[:-1] / errs[1:])
    min_order = float(orders.min())

    mean_err = 0.0
    for lam in (1.0, 0.1, 0.01):
        f = rng.standard_normal(g.shape) + 0.3
        y = g.helmholtz_neumann_solve(lam, f)
        mean_err = max(mean_err, abs(g.mean(y) - g.mean(f) / lam))

    K = g.stiffness
    nid = 0.0
    for _ in range(100):
        f = rng.standard_normal(g.shape)
        f -= g.mean(f)
        phi = rng.standard_normal(g.shape)
        w = g.neumann_inverse_laplacian(f)
        a = g.dirichlet_form(w, phi)
        b = g.inner(f, phi)
        nid = max(nid, abs(a - b) / max(abs(b), 1e-300))
    assert np.isclose(float(w.ravel() @ (K @ phi.ravel())), g.dirichlet_form(w, phi), rtol=1e-12)

    passed = adj <= 1e-10 and min_order >= 1.8 and mean_err <= 1e-11 and nid <= 1e-8
    acceptance_line(2, passed, "operator suite",
                    f"adjointness rel={adj:.1e}, min observed eigen order={min_order:.3f}, "
                    f"mean identity err={mean_err:.1e}, inverse-Laplacian identity rel={nid:.1e}")
    assert passed


# -- 3 ----------------------------------------------------------------------

def _ci_configs():
    base = ProblemConfig()
    return {
        "default": base,
        "gradient_flow": base.with_(t_final=0.1),
        "forced_cubic_pi": base.with_(
            pi_kind="cubic", pi_slope=-1.0, pi_g_slope=-0.5,
            source=SourceSpec("mode", amplitude=2.0, kx=1, ky=1, freq=3.0),
            source_g=SourceSpec("constant", value=0.5)),
        "log_potential": base.with_(beta=MonotoneGraph.logarithmic(0.5),
                                    beta_g=MonotoneGraph.logarithmic(0.5), pi_slope=-1.0,
                                    initial=InitialDatum(mean=0.1, amplitude=0.3)),
        "sign_viscosity": base.with_(alpha=MonotoneGraph.sign(), strong_regime=True,
                                     source=SourceSpec("mode", amplitude=1.0, kx=2, ky=1)),
    }


@pytest.fixture(scope="module")
def ci_runs():
    out = {}
    for name, cfg in _ci_configs().items():
        sink = dg.DiagnosticsSink(cfg)
        traj = run(cfg, hooks=sink)
        out[name] = (cfg, sink, traj)
    return out


def test_criterion_03_mass_identity(ci_runs, acceptance_line):
    worst = {name: sink.max_mass_residual() for name, (_, sink, _) in ci_runs.items()}
    steps = sum(len(s.records) for _, s, _ in ci_runs.values())
    passed = all(v <= 1e-11 for v in worst.values())
    acceptance_line(3, passed, "mass identity",
                    f"{steps} steps over {len(worst)} runs, max |residual|={max(worst.values()):.1e}")
    assert passed


# -- 4 ----------------------------------------------------------------------

def test_criterion_04_energy_inequality(acceptance_line):
    cfg = parse_plan((CONFIGS / "gradient_flow.cfg").read_text()).base
    assert cfg.beta.kind.value == "poly" and cfg.alpha.kind.value == "linear"
    assert cfg.source.kind == "zero" and cfg.pi_slope == 0.0
    sink = dg.DiagnosticsSink(cfg)
    run(cfg, hooks=sink)
    tol = 1e-8 * max(1.0, sink.initial_energy)
    slack = sink.max_energy_residual()
    passed = slack <= tol
    acceptance_line(4, passed, "energy inequality",
                    f"{len(sink.records)} steps, max(E_n+1 - E_n + tau D) = {slack:.2e} "
                    f"<= {tol:.1e} (E0={sink.initial_energy:.4f})")
    assert passed


# -- 5 ----------------------------------------------------------------------

def _a_lambda(g: Grid, cfg: ProblemConfig, lam: float, x, y):
    return (lam * x + yosida(cfg.alpha, lam, x) + g.helmholtz_neumann_solve(lam, x),
            lam * y + yosida(cfg.alpha_g, lam, y))


def test_criterion_05_regularized_operator(acceptance_line):
    cfg = ProblemConfig()
    g = cfg.grid
    rng = np.random.default_rng(505)
    worst_i, worst_ii = -math.inf, -math.inf
    for lam in (0.1, 0.01):
        const = lam + 1 / lam + 1 / math.sqrt(lam)
        for _ in range(100):
            scale = 10 ** rng.uniform(-2, 1)
            x = scale * rng.standard_normal(g.shape)
            y = scale * rng.standard_normal(g.bshape)
            ax, ay = _a_lambda(g, cfg, lam, x, y)
            pair = g.inner(ax, x) + g.boundary_inner(ay, y)
            nrm2 = g.inner(x, x) + g.boundary_inner(y, y)
            worst_i = max(worst_i, lam * nrm2 - pair)
            an = math.sqrt(g.inner(ax, ax) + g.boundary_inner(ay, ay))
            worst_ii = max(worst_ii, an - const * math.sqrt(nrm2))
    passed = worst_i <= 1e-9 and worst_ii <= 1e-9
    acceptance_line(5, passed, "regularized operator properties",
                    f"max(lam|z|^2 - <A z, z>)={worst_i:.2e}, "
                    f"max(|A z| - C|z|)={worst_ii:.2e} on 200 random pairs")
    assert passed


# -- 6..9 -------------------------------------------------------------------

def test_criterion_06_lambda_sweep(acceptance_line):
    rep = run_experiment(parse_plan("", kind="sweep-lambda"))
    d = rep.differences
    passed = rep.checks["differences_decreasing"] and rep.checks["estimates_bounded"] and len(d) == 4
    acceptance_line(6, passed, "lambda sweep",
                    f"lambda={list(rep.values)}, differences=[{', '.join(f'{v:.3e}' for v in d)}], "
                    f"fitted order={rep.order:.2f} (fit residual {rep.order_residual:.2f}), "
                    f"estimates within 2x: {rep.checks['estimates_bounded']}")
    assert passed


def test_criterion_07_epsilon_sweep(acceptance_line):
    plan = parse_plan((CONFIGS / "sweep_eps.cfg").read_text())
    rep = run_experiment(plan)
    ev = rep.details["eps_v_VG2_Linf"]
    d = rep.differences
    passed = rep.checks["eps_v_decreasing"] and rep.checks["differences_decreasing"] and len(d) == 4
    acceptance_line(7, passed, "epsilon sweep",
                    f"eps={list(rep.values)}, eps|v|^2=[{', '.join(f'{v:.3e}' for v in ev)}], "
                    f"differences=[{', '.join(f'{v:.3e}' for v in d)}]")
    assert passed


def test_criterion_08_stability(acceptance_line):
    rep = run_experiment(parse_plan((CONFIGS / "stability.cfg").read_text()))
    det = rep.details
    passed = rep.checks["quadratic_scaling"] and rep.checks["gronwall_finite"]
    acceptance_line(8, passed, "continuous dependence",
                    f"grad_diff ratio delta/(delta/2)={det['ratio']:.4f}, Gronwall K={det['gronwall_K']:.3f}, "
                    f"L={det['gronwall_L']:.3f}, mean difference={det['max_mean_difference']:.1e}")
    assert passed


def test_criterion_09_manufactured_solution(acceptance_line):
    rep = run_experiment(parse_plan((CONFIGS / "mms.cfg").read_text()))
    det = rep.details
    passed = rep.checks["temporal_order"] and rep.checks["spatial_order"]
    acceptance_line(9, passed, "manufactured solution orders",
                    f"temporal order={det['temporal_order']:.3f} (local "
                    f"{[round(v, 3) for v in det['temporal_local_orders']]}), spatial order="
                    f"{det['spatial_order']:.3f} (local {[round(v, 3) for v in det['spatial_local_orders']]})")
    assert passed


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_initial_rates(acceptance_line):
    residuals = {}
    for name, cfg in _ci_configs().items():
        u0 = cfg.initial.evaluate(cfg.grid, cfg.epsilon)
        residuals[name] = initial_rates(cfg, u0).residual
    bounds = []
    for lam in (0.1, 0.05, 0.025):
        cfg = ProblemConfig(lam=lam)
        bounds.append(initial_rates(cfg, cfg.initial.evaluate(cfg.grid, cfg.epsilon)).bound)
    spread = max(bounds) / min(bounds)
    passed = max(residuals.values()) <= 1e-9 and spread <= 2.0
    acceptance_line(10, passed, "initial-rate solve",
                    f"max residual={max(residuals.values()):.1e} over {len(residuals)} configs, "
                    f"bound over lambda={[round(b, 4) for b in bounds]} (spread {spread:.3f}x)")
    assert passed
