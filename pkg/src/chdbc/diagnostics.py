"""Invariants and estimates evaluated along discrete trajectories."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .graphs import moreau_envelope, yosida
from .stepper import ProblemConfig, State, _truncated_pi, sources_at


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    mass_residual: float
    energy: float
    dissipation: float
    source_work: float
    energy_residual: float
    mu_mean: float
    norms: dict = field(default_factory=dict)

    def flat(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "norms"}
        for k in sorted(self.norms):
            out[f"norms.{k}"] = self.norms[k]
        return out


def energy(cfg: ProblemConfig, s: State) -> float:
    """Discrete free energy of ``s`` with Moreau-regularized potentials."""
    grid, lam = cfg.grid, cfg.lam
    return (0.5 * grid.dirichlet_form(s.u, s.u)
            + 0.5 * lam * grid.inner(s.u, s.u)
            + 0.5 * cfg.epsilon * grid.boundary_dirichlet_form(s.v, s.v)
            + float(np.sum(grid.weights * moreau_envelope(cfg.beta, lam, s.u)))
            + float(np.sum(moreau_envelope(cfg.beta_g, cfg.lam_g, s.v))) * grid.hx)


def dissipation(cfg: ProblemConfig, s: State) -> float:
    grid, lam = cfg.grid, cfg.lam
    return (lam * grid.inner(s.mu, s.mu) + grid.dirichlet_form(s.mu, s.mu)
            + lam * grid.inner(s.w, s.w) + grid.inner(s.eta, s.w)
            + lam * grid.boundary_inner(s.w_g, s.w_g) + grid.boundary_inner(s.eta_g, s.w_g))


def source_work(cfg: ProblemConfig, s: State) -> float:
    grid, lam = cfg.grid, cfg.lam
    g, gg = sources_at(cfg, s.t)
    tp, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_slope, s.u)
    tpg, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_g_slope, s.v)
    return grid.inner(g - tp, s.w) + grid.boundary_inner(gg - tpg, s.w_g)


def norm_suite(s: State, cfg: ProblemConfig) -> dict:
    """Named norms of a state; every entry is a nonnegative float."""
    grid, eps = cfg.grid, cfg.epsilon
    grad_v2 = grid.boundary_dirichlet_form(s.v, s.v)
    v_vg2 = grid.boundary_inner(s.v, s.v) + grad_v2
    return {
        "u_H": grid.norm(s.u),
        "u_V": grid.v_norm(s.u),
        "grad_u": math.sqrt(max(grid.dirichlet_form(s.u, s.u), 0.0)),
        "lap_u_H": grid.norm(grid.laplacian(s.u)),
        "v_H": grid.boundary_norm(s.v),
        "sqrt_eps_grad_v": math.sqrt(eps * grad_v2),
        "eps_v_VG2": eps * v_vg2,
        "mu_H": grid.norm(s.mu),
        "grad_mu": math.sqrt(max(grid.dirichlet_form(s.mu, s.mu), 0.0)),
        "w_H": grid.norm(s.w),
        "w_g_H": grid.boundary_norm(s.w_g),
        "eta_H": grid.norm(s.eta),
        "eta_g_H": grid.boundary_norm(s.eta_g),
        "xi_H": grid.norm(s.xi),
        "xi_g_H": grid.boundary_norm(s.xi_g),
        "beta_envelope": float(np.sum(grid.weights * moreau_envelope(cfg.beta, cfg.lam, s.u))),
    }


def record(cfg: ProblemConfig, prev: State, nxt: State) -> DiagnosticsRecord:
    """Energy ledger, mass balance and norms for the step ``prev -> nxt``."""
    grid = cfg.grid
    e_prev, e_next = energy(cfg, prev), energy(cfg, nxt)
    d = dissipation(cfg, nxt)
    sw = source_work(cfg, nxt)
    mass = grid.mean(nxt.u)
    return DiagnosticsRecord(
        t=nxt.t,
        mass=mass,
        mass_residual=mass - grid.mean(prev.u) + cfg.tau * cfg.lam * grid.mean(nxt.mu),
        energy=e_next,
        dissipation=d,
        source_work=sw,
        energy_residual=e_next - e_prev + cfg.tau * d - cfg.tau * sw,
        mu_mean=grid.mean(nxt.mu),
        norms=norm_suite(nxt, cfg),
    )


class DiagnosticsSink:
    """Per-run collector usable as the ``hooks`` argument of ``stepper.run``.

    Each run must own its sink; merge finished sinks afterwards.
    """

    def __init__(self, cfg: ProblemConfig):
        self.cfg = cfg
        self.records: list = []
        self.initial_energy: Optional[float] = None
        self.initial_norms: dict = {}

    def start(self, state: State):
        self.initial_energy = energy(self.cfg, state)
        self.initial_norms = norm_suite(state, self.cfg)

    def step(self, index: int, prev: State, nxt: State):
        self.records.append(record(self.cfg, prev, nxt))

    def max_mass_residual(self) -> float:
        return max((abs(r.mass_residual) for r in self.records), default=0.0)

    def max_energy_residual(self) -> float:
        return max((r.energy_residual for r in self.records), default=-math.inf)

    def to_csv(self) -> str:
        return records_to_csv(self.records)


def records_to_csv(records: Sequence[DiagnosticsRecord]) -> str:
    out = io.StringIO()
    if not records:
        out.write(",".join(f.name for f in fields(DiagnosticsRecord) if f.name != "norms") + "\n")
        return out.getvalue()
    rows = [r.flat() for r in records]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(rows[0]))
    for row in rows:
        writer.writerow(["%.17g" % v for v in row.values()])
    return out.getvalue()


# -----------------------------------------------------------------------------
# mean of the chemical potential
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class SecondEstimate:
    """``|mean(mu)|`` with the lower-bound certificate
    ``k0p * int|beta_lam(u)| - k0pp * |Omega|``."""

    mu_mean_abs: float
    certificate: float
    k0p: float
    k0pp: float
    probe_range: tuple


def second_estimate_probe(cfg: ProblemConfig, s: State, u0_mean: float) -> SecondEstimate:
    """Probe ``beta_lam(r)(r - m) >= k0p|beta_lam(r)| - k0pp`` around the initial mean ``m``.

    ``k0p`` ranges over ``delta_max * 2**-k`` with ``delta_max`` half the
    distance from ``m`` to the boundary of the domain of the boundary
    potential (capped at 1).  For each candidate the smallest valid ``k0pp``
    is found on the probe set and the nodal values of ``u``; the pair giving
    the largest certificate is reported.
    """
    lo, hi = cfg.beta_g.domain
    m = float(u0_mean)
    if not (lo < m < hi):
        raise ValueError(f"initial mean {m} is not in the interior of the domain of "
                         f"{cfg.beta_g.label()} ({lo}, {hi})")
    dmax = min(1.0, 0.5 * min(m - lo, hi - m))
    blo, bhi = cfg.beta.domain
    if math.isinf(bhi):
        probes = np.linspace(-10.0, 10.0, 4001)
    else:
        probes = np.linspace(blo, bhi, 4003)[1:-1]
    r = np.concatenate([probes, s.u.ravel()])
    b = np.asarray(yosida(cfg.beta, cfg.lam, r))
    bu = np.asarray(yosida(cfg.beta, cfg.lam, s.u))
    int_abs = float(np.sum(cfg.grid.weights * np.abs(bu)))
    best = None
    for k in range(40):
        d = dmax * 2.0 ** (-k)
        kpp = float(max(np.max(d * np.abs(b) - b * (r - m)), 0.0))
        cert = d * int_abs - kpp * cfg.grid.area
        if best is None or cert > best[0]:
            best = (cert, d, kpp)
    cert, d, kpp = best
    return SecondEstimate(abs(cfg.grid.mean(s.mu)), cert, d, kpp,
                          (float(probes[0]), float(probes[-1])))


# -----------------------------------------------------------------------------
# continuous dependence
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityRecord:
    t: float
    grad_diff: float
    bnd_grad_diff: float
    rate_diff: float
    mu_grad_diff: float


def stability_pair(cfg: ProblemConfig, traj1: Sequence[State], traj2: Sequence[State]) -> list:
    """Difference functionals between two trajectories of the same problem."""
    if len(traj1) != len(traj2):
        raise ValueError(f"trajectories differ in length ({len(traj1)} vs {len(traj2)})")
    grid = cfg.grid
    out = []
    rate_acc = 0.0
    mu_acc = 0.0
    for k, (a, b) in enumerate(zip(traj1, traj2)):
        if a.u.shape != grid.shape or b.u.shape != grid.shape:
            raise ValueError("trajectory grid does not match the configuration")
        if abs(a.t - b.t) > 1e-12 * max(1.0, abs(a.t)):
            raise ValueError(f"time levels differ at index {k}: {a.t} vs {b.t}")
        du = a.u - b.u
        dv = a.v - b.v
        if k > 0:
            dw = a.w_g - b.w_g
            dmu = a.mu - b.mu
            rate_acc += cfg.tau * grid.boundary_inner(dw, dw)
            mu_acc += cfg.tau * grid.dirichlet_form(dmu, dmu)
        out.append(StabilityRecord(
            t=a.t,
            grad_diff=max(grid.dirichlet_form(du, du), 0.0),
            bnd_grad_diff=cfg.epsilon * max(grid.boundary_dirichlet_form(dv, dv), 0.0),
            rate_diff=rate_acc,
            mu_grad_diff=mu_acc,
        ))
    return out


def fit_gronwall(records: Sequence[StabilityRecord]):
    """Fit ``grad_diff(t) <= K * grad_diff(0) * exp(L t)``.

    ``L`` and ``log K`` come from least squares on ``log(grad_diff/grad_diff(0))``;
    ``K`` is then raised until the bound holds at every record.  Returns
    ``(K, L, fit_residual)``.
    """
    t = np.array([r.t for r in records])
    gd = np.array([r.grad_diff for r in records])
    if gd.size == 0 or gd[0] <= 0.0:
        if np.all(gd == 0.0):
            return 1.0, 0.0, 0.0
        raise ValueError("initial grad_diff is zero but later values are not")
    y = np.log(np.maximum(gd, 1e-300) / gd[0])
    A = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    logk, L = float(coef[0]), float(coef[1])
    fit_res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    logk = max(logk, float(np.max(y - L * t)))
    return float(math.exp(logk)), L, fit_res


def estimate_suite(cfg: ProblemConfig, traj: Sequence[State]) -> dict:
    """Trajectory-level norms whose size should not grow as ``lam`` decreases."""
    grid = cfg.grid
    grad_u = max(math.sqrt(max(grid.dirichlet_form(s.u, s.u), 0.0)) for s in traj)
    v_vg = max(math.sqrt(cfg.epsilon * (grid.boundary_inner(s.v, s.v)
                                        + grid.boundary_dirichlet_form(s.v, s.v))) for s in traj)
    grad_mu = math.sqrt(sum(cfg.tau * grid.dirichlet_form(s.mu, s.mu) for s in traj[1:]))
    env = max(float(np.sum(grid.weights * moreau_envelope(cfg.beta, cfg.lam, s.u))) for s in traj)
    return {"grad_u_Linf_H": grad_u, "sqrt_eps_v_Linf_VG": v_vg,
            "grad_mu_L2_H": grad_mu, "beta_envelope_Linf": env}
