"""Implicit time stepping of the regularized doubly nonlinear system.

Each backward-Euler step solves for the next order parameter ``u`` (whose
trace is the boundary field ``v``) and chemical potential ``mu``:

* ``w + lam*mu - Lap_n mu = 0`` with ``w = (u - u_prev)/tau``,
* ``mu = lam*w + alpha_lam(w) + lam*u - Lap u + beta_lam(u) + T(pi(u)) - g``,
* on the boundary,
  ``lam*w_g + alpha_g,lam(w_g) + d_n u - eps*Lap_G v + beta_g,c*lam(v) + T(pi_g(v)) = g_g``.

The second and third equations are imposed in weak form: the stiffness form
replaces ``-Lap u`` and the boundary equation enters through the boundary
rows, so the normal flux ``d_n u`` is the variational one.  At a converged
step the strong residual of the second equation vanishes on interior rows
and the boundary residual carries the discrete flux.

The nonlinear system is solved by semismooth Newton with a backtracking line
search.  If that fails, a fixed point that freezes the Lipschitz perturbation
and re-solves the remaining monotone problem takes over.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graphs import (GraphAssumptionReport, GraphDomainError, MonotoneGraph,
                     moreau_envelope, truncate, truncate_derivative, yosida,
                     yosida_derivative)
from .grid import Grid

NEWTON_TOL = 1e-10
ACCEPT_TOL = 1e-9
NEWTON_MAXIT = 50
FIXED_POINT_MAXIT = 200


class ConvergenceError(RuntimeError):
    """Both nonlinear solvers failed; ``trace`` lists residual norms per iteration."""

    def __init__(self, message: str, residual: float, trace: list):
        super().__init__(f"{message}: final residual {residual:.3e}")
        self.residual = residual
        self.trace = list(trace)


class StepError(RuntimeError):
    def __init__(self, index: int, t: float, cause: Exception):
        super().__init__(f"step {index} (t={t:.6g}) failed: {cause}")
        self.index = index
        self.t = t
        self.cause = cause


# -----------------------------------------------------------------------------
# configuration
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """Separable source ``amp * exp(-decay t) * cos(freq t) * cos(2 pi kx x) * cos(pi ky y)``.

    ``kind`` is ``zero``, ``constant`` (uses ``value``) or ``mode``.  The
    boundary version of a mode source evaluates the same formula on the rows
    ``y = 0`` and ``y = 1``.
    """

    kind: str = "zero"
    value: float = 0.0
    amplitude: float = 0.0
    kx: int = 0
    ky: int = 0
    freq: float = 0.0
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "mode"):
            raise ValueError(f"unknown source kind {self.kind!r}")

    def _time_factor(self, t: float) -> float:
        return self.amplitude * math.exp(-self.decay * t) * math.cos(self.freq * t)

    def interior(self, grid: Grid, t: float) -> np.ndarray:
        if self.kind == "zero":
            return grid.zeros()
        if self.kind == "constant":
            return np.full(grid.shape, float(self.value))
        X, Y = grid.mesh
        return self._time_factor(t) * np.cos(2 * np.pi * self.kx * X) * np.cos(np.pi * self.ky * Y)

    def boundary(self, grid: Grid, t: float) -> np.ndarray:
        if self.kind == "zero":
            return grid.bzeros()
        if self.kind == "constant":
            return np.full(grid.bshape, float(self.value))
        cx = np.cos(2 * np.pi * self.kx * grid.x)
        cy = np.cos(np.pi * self.ky * np.array([0.0, 1.0]))
        return self._time_factor(t) * cy[:, None] * cx[None, :]


@dataclass(frozen=True)
class InitialDatum:
    """``mean + amplitude * cos(2 pi kx x) * cos(pi ky y)``, optionally smoothed
    by the elliptic problem ``u - sqrt(eps) Lap_n u = u0``."""

    mean: float = 0.0
    amplitude: float = 0.2
    kx: int = 1
    ky: int = 1
    smooth: bool = False

    def raw(self, grid: Grid) -> np.ndarray:
        X, Y = grid.mesh
        return self.mean + self.amplitude * np.cos(2 * np.pi * self.kx * X) * np.cos(np.pi * self.ky * Y)

    def evaluate(self, grid: Grid, epsilon: float) -> np.ndarray:
        u0 = self.raw(grid)
        return grid.smooth_initial_datum(epsilon, u0) if self.smooth else u0


@dataclass(frozen=True)
class ProblemConfig:
    """All model, discretization and data parameters of one simulation."""

    epsilon: float = 0.1
    lam: float = 0.1
    tau: float = 1e-3
    t_final: float = 0.05
    grid: Grid = field(default_factory=Grid)
    alpha: MonotoneGraph = field(default_factory=MonotoneGraph.linear)
    alpha_g: MonotoneGraph = field(default_factory=MonotoneGraph.linear)
    beta: MonotoneGraph = field(default_factory=lambda: MonotoneGraph.polynomial(3, 1.0))
    beta_g: MonotoneGraph = field(default_factory=lambda: MonotoneGraph.polynomial(3, 1.0))
    c_dom: float = 1.0
    pi_kind: str = "linear"
    pi_slope: float = 0.0
    pi_g_slope: float = 0.0
    source: SourceSpec = field(default_factory=SourceSpec)
    source_g: SourceSpec = field(default_factory=SourceSpec)
    strong_regime: bool = False
    initial: InitialDatum = field(default_factory=InitialDatum)
    assumptions: Optional[GraphAssumptionReport] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("epsilon", "lam", "tau", "t_final", "c_dom"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
        if self.tau > self.t_final:
            raise ValueError(f"tau={self.tau} exceeds t_final={self.t_final}: no steps to take")
        if self.t_final / self.tau > 1e7:
            raise ValueError("more than 1e7 time steps requested")
        if self.pi_kind not in ("linear", "cubic"):
            raise ValueError(f"pi_kind must be 'linear' or 'cubic', got {self.pi_kind!r}")
        for g in (self.alpha, self.alpha_g, self.beta, self.beta_g):
            if not g.contains(0.0):
                raise ValueError(f"graph {g.label()} does not contain 0 in its domain")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_final / self.tau + 1e-9))

    @property
    def lam_g(self) -> float:
        """Yosida parameter of the boundary potential graph."""
        return self.c_dom * self.lam

    def with_(self, **changes) -> "ProblemConfig":
        return replace(self, **changes)


# -----------------------------------------------------------------------------
# state
# -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class State:
    """Discrete solution at one time level (``v`` is always the trace of ``u``)."""

    t: float
    u: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    w_g: np.ndarray
    eta: np.ndarray
    eta_g: np.ndarray
    xi: np.ndarray
    xi_g: np.ndarray

    @classmethod
    def zero(cls, grid: Grid, t: float = 0.0) -> "State":
        z, b = grid.zeros(), grid.bzeros()
        return cls(t, z, b, z.copy(), z.copy(), b.copy(), z.copy(), b.copy(), z.copy(), b.copy())


@dataclass(frozen=True, eq=False)
class InitialRates:
    u_rate0: np.ndarray
    v_rate0: np.ndarray
    mu0: np.ndarray
    residual: float = 0.0
    bound: float = 0.0


def _assemble_state(cfg: ProblemConfig, t, u, mu, w, w_g) -> State:
    grid = cfg.grid
    v = grid.trace(u)
    lam = cfg.lam
    return State(
        t=float(t), u=u, v=v, mu=mu, w=w, w_g=w_g,
        eta=np.asarray(yosida(cfg.alpha, lam, w)),
        eta_g=np.asarray(yosida(cfg.alpha_g, lam, w_g)),
        xi=np.asarray(yosida(cfg.beta, lam, u)),
        xi_g=np.asarray(yosida(cfg.beta_g, cfg.lam_g, v)),
    )


# -----------------------------------------------------------------------------
# nodal nonlinearities
# -----------------------------------------------------------------------------

def pi_value(kind: str, slope: float, r):
    """Lipschitz perturbation and its derivative.

    ``linear``: ``slope*r``.  ``cubic``: ``slope*(r - r**3/3)`` on ``[-1, 1]``
    continued by the constants ``+-2*slope/3``; odd, vanishing at 0 and
    ``|slope|``-Lipschitz.
    """
    r = np.asarray(r, dtype=float)
    if kind == "linear":
        return slope * r, np.full_like(r, slope)
    inside = np.abs(r) <= 1.0
    val = np.where(inside, slope * (r - r**3 / 3.0), slope * (2.0 / 3.0) * np.sign(r))
    der = np.where(inside, slope * (1.0 - r * r), 0.0)
    return val, der


def _truncated_pi(lam, kind, slope, r):
    p, dp = pi_value(kind, slope, r)
    return np.asarray(truncate(lam, p)), np.asarray(truncate_derivative(lam, p)) * dp


def _check_finite(name, arr, graph_label):
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise GraphDomainError(graph_label, arr[tuple(bad)],
                               f"nonfinite {name} at node {tuple(int(b) for b in bad)} "
                               f"entering graph {graph_label}")


def sources_at(cfg: ProblemConfig, t: float):
    """Interior and boundary sources at time ``t``, smoothed in the strong regime."""
    grid = cfg.grid
    g = cfg.source.interior(grid, t)
    gg = cfg.source_g.boundary(grid, t)
    if cfg.strong_regime:
        lam = cfg.lam
        if cfg.source.kind == "mode":
            g = grid.helmholtz_neumann_solve(1.0 / lam, g / lam)
        if cfg.source_g.kind == "mode":
            gg = grid.boundary_helmholtz_solve(1.0 / lam, gg / lam)
    return g, gg


# -----------------------------------------------------------------------------
# the per-step algebraic system
# -----------------------------------------------------------------------------

class _StepSystem:
    """Residual and Jacobian of one backward-Euler step in ``z = [u, mu]``."""

    def __init__(self, cfg: ProblemConfig, prev: State, g, gg, frozen=None):
        self.cfg = cfg
        grid = cfg.grid
        self.grid = grid
        self.N = grid.size
        self.u_prev = prev.u
        self.v_prev = grid.trace(prev.u)
        self.t = prev.t + cfg.tau
        self.g, self.gg = g, gg
        self.frozen = frozen
        self.M = grid.weights.ravel()
        self.K = grid.stiffness
        self.B = grid.trace_matrix
        self.KG = grid.boundary_stiffness
        self.static21 = (self.K + cfg.epsilon * (self.B @ self.KG @ self.B.T)).tocsr()
        self.J12 = (-cfg.tau * (cfg.lam * sp.diags(self.M) + self.K)).tocsr()
        self.negM = sp.diags(-self.M)

    def _nodal(self, u):
        cfg, lam, tau = self.cfg, self.cfg.lam, self.cfg.tau
        grid = self.grid
        w = (u - self.u_prev) / tau
        v = grid.trace(u)
        wg = (v - self.v_prev) / tau
        _check_finite("rate", w, cfg.alpha.label())
        _check_finite("order parameter", u, cfg.beta.label())
        if self.frozen is None:
            tp, dtp = _truncated_pi(lam, cfg.pi_kind, cfg.pi_slope, u)
            tpg, dtpg = _truncated_pi(lam, cfg.pi_kind, cfg.pi_g_slope, v)
        else:
            f, fg = self.frozen
            tp, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_slope, f)
            tpg, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_g_slope, fg)
            dtp, dtpg = 0.0, 0.0
        a_in = (lam * w + np.asarray(yosida(cfg.alpha, lam, w)) + lam * u
                + np.asarray(yosida(cfg.beta, lam, u)) + tp - self.g)
        d_in = ((lam + np.asarray(yosida_derivative(cfg.alpha, lam, w))) / tau + lam
                + np.asarray(yosida_derivative(cfg.beta, lam, u)) + dtp)
        a_bd = (lam * wg + np.asarray(yosida(cfg.alpha_g, lam, wg))
                + np.asarray(yosida(cfg.beta_g, cfg.lam_g, v)) + tpg - self.gg)
        d_bd = ((lam + np.asarray(yosida_derivative(cfg.alpha_g, lam, wg))) / tau
                + np.asarray(yosida_derivative(cfg.beta_g, cfg.lam_g, v)) + dtpg)
        return w, v, a_in, d_in, a_bd, d_bd

    def strong_residuals(self, u, mu):
        """``(r1, r2, r3)`` as interior, interior, boundary fields."""
        cfg, grid = self.cfg, self.grid
        w, v, a_in, _, a_bd, _ = self._nodal(u)
        r1 = w + cfg.lam * mu - grid.laplacian_neumann(mu)
        e2 = a_in - grid.laplacian_neumann(u) - mu
        r2 = e2.copy()
        r2[:, 0] = 0.0
        r2[:, -1] = 0.0
        flux = 0.5 * grid.hy * grid.trace(e2)
        r3 = flux + a_bd - cfg.epsilon * grid.laplace_beltrami(v)
        return r1, r2, r3

    def norm(self, r):
        grid = self.grid
        r1, r2, r3 = r
        return math.sqrt(grid.inner(r1, r1) + grid.inner(r2, r2) + grid.boundary_inner(r3, r3))

    def weak(self, z):
        N, cfg, grid = self.N, self.cfg, self.grid
        u = z[:N].reshape(grid.shape)
        mu = z[N:]
        w, v, a_in, d_in, a_bd, d_bd = self._nodal(u)
        uf = z[:N]
        F1 = -self.M * (uf - self.u_prev.ravel()) - cfg.tau * (cfg.lam * self.M * mu + self.K @ mu)
        F2 = (self.M * (a_in.ravel() - mu) + self.K @ uf
              + self.B @ (grid.hx * a_bd.ravel() + cfg.epsilon * (self.KG @ v.ravel())))
        return np.concatenate([F1, F2]), d_in, d_bd

    def jacobian(self, d_in, d_bd):
        diag = self.M * d_in.ravel()
        bd = np.zeros(self.N)
        bd[self.grid.boundary_nodes.ravel()] = self.grid.hx * d_bd.ravel()
        J21 = self.static21 + sp.diags(diag + bd)
        return sp.bmat([[self.negM, self.J12], [J21, self.negM]], format="csc")

    def split(self, z):
        N = self.N
        return z[:N].reshape(self.grid.shape), z[N:].reshape(self.grid.shape)

    def merit(self, z):
        u, mu = self.split(z)
        return self.norm(self.strong_residuals(u, mu))


def _newton(sys: _StepSystem, z0: np.ndarray, maxit=NEWTON_MAXIT, trace=None):
    """Damped semismooth Newton; returns ``(z, residual, converged)``."""
    z = z0.copy()
    res = sys.merit(z)
    if trace is not None:
        trace.append(res)
    for _ in range(maxit):
        if res <= NEWTON_TOL:
            return z, res, True
        F, d_in, d_bd = sys.weak(z)
        J = sys.jacobian(d_in, d_bd)
        try:
            dz = spla.spsolve(J, -F)
        except RuntimeError:
            break
        if not np.all(np.isfinite(dz)):
            break
        step, accepted = 1.0, False
        for _ls in range(30):
            zt = z + step * dz
            try:
                rt = sys.merit(zt)
            except GraphDomainError:
                rt = math.inf
            if rt <= (1.0 - 1e-4 * step) * res:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        z, res = zt, rt
        if trace is not None:
            trace.append(res)
    return z, res, res <= ACCEPT_TOL


def _solve_step(cfg: ProblemConfig, prev: State, guess=None, g=None, gg=None, frozen=None):
    t_next = prev.t + cfg.tau
    if g is None or gg is None:
        g, gg = sources_at(cfg, t_next)
    sys = _StepSystem(cfg, prev, g, gg, frozen=frozen)
    if guess is None:
        z0 = np.concatenate([prev.u.ravel(), prev.mu.ravel()])
    else:
        z0 = np.concatenate([np.asarray(guess[0]).ravel(), np.asarray(guess[1]).ravel()])
    trace: list = []
    z, res, ok = _newton(sys, z0, trace=trace)
    return sys, z, res, ok, trace


def _finish(cfg: ProblemConfig, sys: _StepSystem, prev: State, z) -> State:
    u, mu = sys.split(z)
    w = (u - prev.u) / cfg.tau
    w_g = cfg.grid.trace(w)
    return _assemble_state(cfg, prev.t + cfg.tau, u, mu, w, w_g)


def theta_map(cfg: ProblemConfig, prev: State, frozen_u, g=None, gg=None) -> State:
    """One application of the frozen-perturbation map.

    The Lipschitz perturbation is evaluated at ``frozen_u`` (and its trace)
    and the remaining monotone step problem is solved exactly.  Optional
    ``g``, ``gg`` override the configured sources at the new time level.
    """
    frozen = (np.asarray(frozen_u, dtype=float), cfg.grid.trace(frozen_u))
    sys, z, res, ok, trace = _solve_step(cfg, prev, g=g, gg=gg, frozen=frozen)
    if not ok:
        raise ConvergenceError("frozen-perturbation solve failed", res, trace)
    return _finish(cfg, sys, prev, z)


def step(cfg: ProblemConfig, prev: State, guess=None) -> State:
    """Advance ``prev`` by one time step of size ``cfg.tau``.

    ``guess`` optionally supplies a starting ``(u, mu)`` pair for Newton.
    """
    sys, z, res, ok, trace = _solve_step(cfg, prev, guess=guess)
    if ok:
        return _finish(cfg, sys, prev, z)
    # fixed point on the frozen perturbation, relaxed if it stalls
    u_best, _ = sys.split(z)
    f = prev.u.copy() if not np.all(np.isfinite(u_best)) else u_best.copy()
    theta = 1.0
    last = math.inf
    for _ in range(FIXED_POINT_MAXIT):
        try:
            cand = theta_map(cfg, prev, f, g=sys.g, gg=sys.gg)
        except ConvergenceError as exc:
            trace.extend(exc.trace)
            break
        zc = np.concatenate([cand.u.ravel(), cand.mu.ravel()])
        res = sys.merit(zc)
        trace.append(res)
        if res <= ACCEPT_TOL:
            return _finish(cfg, sys, prev, zc)
        if res > last:
            theta *= 0.5
        last = res
        f = (1.0 - theta) * f + theta * cand.u
    raise ConvergenceError("Newton and fixed-point solvers failed", res, trace)


def residual(cfg: ProblemConfig, prev: State, candidate: State):
    """Residuals of the three step equations at ``prev.t + tau``.

    The rate is recomputed as ``(candidate.u - prev.u)/tau``.  The second
    residual is reported on interior rows only; on boundary rows the same
    quantity is folded into the boundary residual as the discrete normal
    flux.
    """
    g, gg = sources_at(cfg, prev.t + cfg.tau)
    sys = _StepSystem(cfg, prev, g, gg)
    return sys.strong_residuals(np.asarray(candidate.u, dtype=float), np.asarray(candidate.mu, dtype=float))


def residual_norm(cfg: ProblemConfig, prev: State, candidate: State) -> float:
    grid = cfg.grid
    r1, r2, r3 = residual(cfg, prev, candidate)
    return math.sqrt(grid.inner(r1, r1) + grid.inner(r2, r2) + grid.boundary_inner(r3, r3))


# -----------------------------------------------------------------------------
# initial rates
# -----------------------------------------------------------------------------

def _solve_boundary_rate(cfg: ProblemConfig, rhs: np.ndarray) -> np.ndarray:
    """Nodewise root of ``lam*y + alpha_g,lam(y) = rhs`` by bisection.

    The map is increasing with slope in ``[lam, lam + 1/lam]`` so the root
    lies between ``rhs/(lam + 1/lam)`` and ``rhs/lam``.
    """
    lam = cfg.lam
    lo = np.minimum(rhs / lam, rhs / (lam + 1.0 / lam))
    hi = np.maximum(rhs / lam, rhs / (lam + 1.0 / lam))
    f = lambda y: lam * y + np.asarray(yosida(cfg.alpha_g, lam, y)) - rhs  # noqa: E731
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        lo = np.where(fm < 0, mid, lo)
        hi = np.where(fm < 0, hi, mid)
        if np.all(hi - lo <= 1e-15 * (1 + np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def initial_rates(cfg: ProblemConfig, u0) -> InitialRates:
    """Rates and chemical potential compatible with the equations at ``t = 0``.

    Interior: ``lam*x + alpha_lam(x) + (lam - Lap_n)^{-1} x = z0`` with
    ``mu0 = -(lam - Lap_n)^{-1} x``, solved by damped Newton in ``(x, mu)``.
    Boundary: nodewise ``lam*y + alpha_g,lam(y) = w0``.  The returned
    ``bound`` is the sum of the dissipation-type quantities that stay
    bounded as ``lam`` decreases.
    """
    grid = cfg.grid
    lam = cfg.lam
    u0 = grid.check_field(u0, "u0")
    v0 = grid.trace(u0)
    g0, gg0 = sources_at(cfg, 0.0)
    tp, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_slope, u0)
    tpg, _ = _truncated_pi(lam, cfg.pi_kind, cfg.pi_g_slope, v0)
    lap_u0 = grid.laplacian(u0)
    dn_u0 = grid.normal_derivative(u0)
    lb_v0 = grid.laplace_beltrami(v0)
    xi0 = np.asarray(yosida(cfg.beta, lam, u0))
    xig0 = np.asarray(yosida(cfg.beta_g, cfg.lam_g, v0))
    z0 = g0 - tp - xi0 + lap_u0 - lam * u0
    w0 = gg0 - tpg - xig0 + cfg.epsilon * lb_v0 - dn_u0

    N = grid.size
    M = grid.weights.ravel()
    K = grid.stiffness
    A12 = (lam * sp.diags(M) + K).tocsr()

    def weak(z):
        x, mu = z[:N], z[N:]
        F1 = M * (x + lam * mu) + K @ mu
        F2 = M * (lam * x + np.asarray(yosida(cfg.alpha, lam, x)) - mu - z0.ravel())
        return np.concatenate([F1, F2])

    def strong(z):
        x, mu = z[:N].reshape(grid.shape), z[N:].reshape(grid.shape)
        r1 = x + lam * mu - grid.laplacian_neumann(mu)
        r2 = lam * x + np.asarray(yosida(cfg.alpha, lam, x)) - mu - z0
        return math.sqrt(grid.inner(r1, r1) + grid.inner(r2, r2))

    z = np.zeros(2 * N)
    res = strong(z)
    trace = [res]
    for _ in range(NEWTON_MAXIT):
        if res <= NEWTON_TOL:
            break
        x = z[:N]
        da = np.asarray(yosida_derivative(cfg.alpha, lam, x))
        J = sp.bmat([[sp.diags(M), A12], [sp.diags(M * (lam + da)), sp.diags(-M)]], format="csc")
        dz = spla.spsolve(J, -weak(z))
        step_len = 1.0
        while step_len > 1e-8:
            zt = z + step_len * dz
            rt = strong(zt)
            if rt <= (1 - 1e-4 * step_len) * res:
                break
            step_len *= 0.5
        else:
            break
        z, res = zt, rt
        trace.append(res)
    x = z[:N].reshape(grid.shape)
    mu = z[N:].reshape(grid.shape)
    y = _solve_boundary_rate(cfg, w0)

    # residuals of the three equations with u0 data frozen
    r1 = x + lam * mu - grid.laplacian_neumann(mu)
    r2 = mu - (lam * x + np.asarray(yosida(cfg.alpha, lam, x)) + lam * u0 - lap_u0 + xi0 + tp - g0)
    r3 = (lam * y + np.asarray(yosida(cfg.alpha_g, lam, y)) + dn_u0 - cfg.epsilon * lb_v0
          + xig0 + tpg - gg0)
    total = max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2))), float(np.max(np.abs(r3))))
    if total > ACCEPT_TOL:
        raise ConvergenceError("initial-rate solve failed", total, trace)

    eta = np.asarray(yosida(cfg.alpha, lam, x))
    eta_g = np.asarray(yosida(cfg.alpha_g, lam, y))
    conj = eta * x - np.asarray(moreau_envelope(cfg.alpha, lam, x))
    conj_g = eta_g * y - np.asarray(moreau_envelope(cfg.alpha_g, lam, y))
    bound = (lam * grid.inner(mu, mu) + grid.dirichlet_form(mu, mu) + lam * grid.inner(x, x)
             + float(np.sum(grid.weights * conj)) + lam * grid.boundary_inner(y, y)
             + float(np.sum(conj_g)) * grid.hx)
    return InitialRates(u_rate0=x, v_rate0=y, mu0=mu, residual=total, bound=float(bound))


def initial_state(cfg: ProblemConfig, u0=None) -> State:
    grid = cfg.grid
    if u0 is None:
        u0 = cfg.initial.evaluate(grid, cfg.epsilon)
    u0 = grid.check_field(u0, "u0").copy()
    if not np.all(np.isfinite(u0)):
        raise ValueError("initial datum has nonfinite values")
    rates = initial_rates(cfg, u0)
    return _assemble_state(cfg, 0.0, u0, rates.mu0, rates.u_rate0, rates.v_rate0)


def run(cfg: ProblemConfig, u0=None, hooks=None, keep: bool = True):
    """Integrate from ``t = 0`` for ``cfg.n_steps`` steps.

    ``hooks`` may define ``start(state)`` and ``step(index, prev, next)``;
    it receives every state.  Returns the list of states (only the first
    and last if ``keep`` is false).
    """
    state = initial_state(cfg, u0)
    if hooks is not None and hasattr(hooks, "start"):
        hooks.start(state)
    traj = [state]
    for k in range(1, cfg.n_steps + 1):
        try:
            nxt = step(cfg, state)
        except (ConvergenceError, GraphDomainError) as exc:
            raise StepError(k, state.t + cfg.tau, exc) from exc
        if hooks is not None and hasattr(hooks, "step"):
            hooks.step(k, state, nxt)
        state = nxt
        if keep:
            traj.append(state)
    if not keep:
        traj.append(state)
    return traj
