"""Maximal monotone graphs on the real line and their convex potentials.

Every graph in the built-in menu is the subdifferential of a convex,
nonnegative potential vanishing at zero.  All evaluation functions accept
scalars or numpy arrays and return the same shape (a Python ``float`` for
scalar input).

Examples
--------
>>> g = MonotoneGraph.linear(1.0)
>>> resolvent(g, 0.5, 1.5)
1.0
>>> yosida(MonotoneGraph.sign(), 0.5, 2.0)
1.0
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels


class GraphDomainError(ValueError):
    """A value lies outside the domain of a graph."""

    def __init__(self, graph_name: str, values, message: str = ""):
        self.graph_name = graph_name
        self.values = np.atleast_1d(np.asarray(values, dtype=float))
        msg = message or (
            f"value(s) {self.values[:5].tolist()} outside the domain of graph {graph_name}"
        )
        super().__init__(msg)


class GraphKind(str, enum.Enum):
    LINEAR = "linear"
    SIGN = "sign"
    POS = "pos"
    POLY = "poly"
    LOG = "log"
    ZERO = "zero"


@dataclass(frozen=True)
class MonotoneGraph:
    """A single member of the built-in graph menu.

    Parameters
    ----------
    kind : GraphKind
        Family of the graph.
    coef : float
        Slope (``linear``, ``pos``), coefficient (``poly``) or well
        parameter (``log``).  Ignored for ``sign`` and ``zero``.
    degree : int
        Odd polynomial degree, only meaningful for ``poly``.

    The section/potential pairs are

    ========  ==========================  =====================================
    kind      minimal section             potential
    ========  ==========================  =====================================
    linear    ``a*s``                     ``a*s**2/2``
    sign      ``sign(s)`` (0 at 0)        ``|s|``
    pos       ``a*max(s, 0)``             ``a*max(s, 0)**2/2``
    poly      ``c*s**d``                  ``c*s**(d+1)/(d+1)``
    log       ``2c*atanh(s)``             ``c*((1+s)ln(1+s) + (1-s)ln(1-s))``
    zero      ``0``                       ``0``
    ========  ==========================  =====================================
    """

    kind: GraphKind
    coef: float = 1.0
    degree: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", GraphKind(self.kind))
        if self.kind in (GraphKind.SIGN, GraphKind.ZERO):
            object.__setattr__(self, "coef", 1.0)
        if self.kind != GraphKind.POLY:
            object.__setattr__(self, "degree", 1)
        if not (math.isfinite(self.coef) and self.coef > 0):
            raise ValueError(f"graph coefficient must be positive and finite, got {self.coef}")
        if self.kind == GraphKind.POLY and (self.degree < 1 or self.degree % 2 == 0):
            raise ValueError(f"polynomial degree must be odd and >= 1, got {self.degree}")

    # -- constructors ---------------------------------------------------------
    @classmethod
    def linear(cls, slope: float = 1.0) -> "MonotoneGraph":
        return cls(GraphKind.LINEAR, float(slope))

    @classmethod
    def sign(cls) -> "MonotoneGraph":
        return cls(GraphKind.SIGN)

    @classmethod
    def positive_part(cls, slope: float = 1.0) -> "MonotoneGraph":
        return cls(GraphKind.POS, float(slope))

    @classmethod
    def polynomial(cls, degree: int = 3, coef: float = 1.0) -> "MonotoneGraph":
        return cls(GraphKind.POLY, float(coef), int(degree))

    @classmethod
    def logarithmic(cls, coef: float = 1.0) -> "MonotoneGraph":
        return cls(GraphKind.LOG, float(coef))

    @classmethod
    def zero(cls) -> "MonotoneGraph":
        return cls(GraphKind.ZERO)

    @classmethod
    def from_name(cls, name: str, params: Sequence[float] = ()) -> "MonotoneGraph":
        """Build a graph from its config name and parameter list.

        ``linear [a]``, ``sign []``, ``pos [a]``, ``poly [d, c]``,
        ``log [c]``, ``zero []``; missing parameters take value 1 (degree 3).
        """
        try:
            kind = GraphKind(str(name).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown graph {name!r}; expected one of "
                + ", ".join(k.value for k in GraphKind)
            ) from None
        params = [float(p) for p in params]
        arity = {GraphKind.LINEAR: 1, GraphKind.SIGN: 0, GraphKind.POS: 1,
                 GraphKind.POLY: 2, GraphKind.LOG: 1, GraphKind.ZERO: 0}[kind]
        if len(params) > arity:
            raise ValueError(f"graph {kind.value} takes at most {arity} parameter(s), got {params}")
        if kind == GraphKind.POLY:
            d = params[0] if params else 3
            if d != int(d):
                raise ValueError(f"polynomial degree must be an integer, got {d}")
            return cls.polynomial(int(d), params[1] if len(params) > 1 else 1.0)
        if arity:
            return cls(kind, params[0] if params else 1.0)
        return cls(kind)

    # -- descriptive ----------------------------------------------------------
    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def params(self) -> list:
        if self.kind == GraphKind.POLY:
            return [self.degree, self.coef]
        if self.kind in (GraphKind.LINEAR, GraphKind.POS, GraphKind.LOG):
            return [self.coef]
        return []

    def label(self) -> str:
        return f"{self.name}{self.params}"

    @property
    def domain(self) -> tuple:
        """Open interval ``(lo, hi)`` on which the section is finite."""
        if self.kind == GraphKind.LOG:
            return (-1.0, 1.0)
        return (-math.inf, math.inf)

    @property
    def bounded(self) -> bool:
        return self.kind in (GraphKind.SIGN, GraphKind.ZERO)

    def contains(self, s) -> np.ndarray:
        """Mask of points in the (open) domain of the section."""
        s = np.asarray(s, dtype=float)
        lo, hi = self.domain
        return (s > lo) & (s < hi)

    def _check_domain(self, s, closed: bool = False):
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise GraphDomainError(self.label(), s[~np.isfinite(s)], f"nonfinite input to graph {self.label()}")
        if self.kind == GraphKind.LOG:
            bad = (np.abs(s) > 1.0) if closed else (np.abs(s) >= 1.0)
            if np.any(bad):
                raise GraphDomainError(self.label(), s[bad])
        return s

    # -- evaluation -----------------------------------------------------------
    def potential(self, s):
        """Convex primitive with value 0 at 0."""
        s = self._check_domain(s, closed=True)
        k, a = self.kind, self.coef
        if k == GraphKind.LINEAR:
            out = 0.5 * a * s * s
        elif k == GraphKind.SIGN:
            out = np.abs(s)
        elif k == GraphKind.POS:
            p = np.maximum(s, 0.0)
            out = 0.5 * a * p * p
        elif k == GraphKind.POLY:
            d = self.degree
            out = a * s ** (d + 1) / (d + 1)
        elif k == GraphKind.LOG:
            out = a * (_xlogx(1.0 + s) + _xlogx(1.0 - s))
        else:
            out = np.zeros_like(s)
        return _ret(out)

    def minimal_section(self, s):
        """Element of least modulus of the graph at ``s``.

        For ``log`` the section is ``+-inf`` at the endpoints ``+-1``.
        """
        s = self._check_domain(s, closed=True)
        k, a = self.kind, self.coef
        if k == GraphKind.LINEAR:
            out = a * s
        elif k == GraphKind.SIGN:
            out = np.sign(s)
        elif k == GraphKind.POS:
            out = a * np.maximum(s, 0.0)
        elif k == GraphKind.POLY:
            out = a * s ** self.degree
        elif k == GraphKind.LOG:
            with np.errstate(divide="ignore"):
                out = 2.0 * a * np.arctanh(s)
        else:
            out = np.zeros_like(s)
        return _ret(out)

    def graph_distance(self, s, y):
        """Distance of the pair ``(s, y)`` from the graph, measured in
        whichever coordinate is smaller (section or inverse section)."""
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        k, a = self.kind, self.coef
        if k == GraphKind.LINEAR:
            out = np.minimum(np.abs(y - a * s), np.abs(s - y / a))
        elif k == GraphKind.SIGN:
            out = np.where(s > 0, np.abs(y - 1.0),
                           np.where(s < 0, np.abs(y + 1.0), np.maximum(np.abs(y) - 1.0, 0.0)))
        elif k == GraphKind.POS:
            direct = np.abs(y - a * np.maximum(s, 0.0))
            inv = np.where(y > 0, np.abs(s - y / a), np.where(y < 0, np.inf, np.maximum(s, 0.0)))
            out = np.minimum(direct, inv)
        elif k == GraphKind.POLY:
            d = self.degree
            inv = np.sign(y) * (np.abs(y) / a) ** (1.0 / d)
            out = np.minimum(np.abs(y - a * s**d), np.abs(s - inv))
        elif k == GraphKind.LOG:
            with np.errstate(divide="ignore", invalid="ignore"):
                direct = np.where(np.abs(s) < 1.0, np.abs(y - 2.0 * a * np.arctanh(np.clip(s, -1, 1))), np.inf)
            out = np.minimum(direct, np.abs(s - np.tanh(y / (2.0 * a))))
        else:
            out = np.abs(y)
        return _ret(out)


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)


def _ret(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _finite(r, what="r"):
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError(f"nonfinite {what} passed to a graph map")
    return r


def _positive(lam):
    lam = float(lam)
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"regularization parameter must be positive, got {lam}")
    return lam


# -----------------------------------------------------------------------------
# resolvent, Yosida map, Moreau envelope
# -----------------------------------------------------------------------------

def _resolvent(graph: MonotoneGraph, lam: float, r: np.ndarray) -> np.ndarray:
    k, a = graph.kind, graph.coef
    if k == GraphKind.LINEAR or (k == GraphKind.POLY and graph.degree == 1):
        return r / (1.0 + lam * a)
    if k == GraphKind.SIGN:
        return np.sign(r) * np.maximum(np.abs(r) - lam, 0.0)
    if k == GraphKind.POS:
        return np.where(r > 0.0, r / (1.0 + lam * a), r)
    if k == GraphKind.POLY:
        return _kernels.K.poly_resolvent(r, lam * a, graph.degree)
    if k == GraphKind.LOG:
        return _kernels.K.log_resolvent(r, lam * a)
    return r.copy()


def _yosida(graph: MonotoneGraph, lam: float, r: np.ndarray) -> np.ndarray:
    k, a = graph.kind, graph.coef
    if k == GraphKind.LINEAR or (k == GraphKind.POLY and graph.degree == 1):
        return a * r / (1.0 + lam * a)
    if k == GraphKind.SIGN:
        return np.clip(r / lam, -1.0, 1.0)
    if k == GraphKind.POS:
        return a * np.maximum(r, 0.0) / (1.0 + lam * a)
    if k == GraphKind.ZERO:
        return np.zeros_like(r)
    return (r - _resolvent(graph, lam, r)) / lam


def resolvent(graph: MonotoneGraph, lam: float, r):
    """Resolvent ``(I + lam*graph)^{-1}`` evaluated at ``r``.

    Closed forms are used for ``linear``, ``sign``, ``pos`` and ``zero``;
    ``poly`` and ``log`` are solved by a monotone Newton iteration that
    converges to relative tolerance 1e-12.
    """
    lam = _positive(lam)
    return _ret(_resolvent(graph, lam, _finite(r)))


def yosida(graph: MonotoneGraph, lam: float, r):
    """Yosida approximation ``(r - J_lam(r)) / lam``; ``1/lam``-Lipschitz."""
    lam = _positive(lam)
    return _ret(_yosida(graph, lam, _finite(r)))


def yosida_derivative(graph: MonotoneGraph, lam: float, r):
    """Derivative of :func:`yosida` in ``r`` (right derivative at kinks)."""
    lam = _positive(lam)
    r = _finite(r)
    k, a = graph.kind, graph.coef
    if k == GraphKind.LINEAR or (k == GraphKind.POLY and graph.degree == 1):
        out = np.full_like(r, a / (1.0 + lam * a))
    elif k == GraphKind.SIGN:
        out = np.where((r >= -lam) & (r < lam), 1.0 / lam, 0.0)
    elif k == GraphKind.POS:
        out = np.where(r >= 0.0, a / (1.0 + lam * a), 0.0)
    elif k == GraphKind.POLY:
        s = _resolvent(graph, lam, r)
        slope = a * graph.degree * s ** (graph.degree - 1)
        out = slope / (1.0 + lam * slope)
    elif k == GraphKind.LOG:
        s = _resolvent(graph, lam, r)
        # slope of 2c*atanh is 2c/(1-s^2); rewritten to stay finite as |s| -> 1
        out = 2.0 * a / ((1.0 - s) * (1.0 + s) + 2.0 * lam * a)
    else:
        out = np.zeros_like(r)
    return _ret(out)


def moreau_envelope(graph: MonotoneGraph, lam: float, r):
    """Moreau envelope ``h(J r) + lam/2 * yosida(r)**2`` of the potential."""
    lam = _positive(lam)
    r = _finite(r)
    s = _resolvent(graph, lam, r)
    y = _yosida(graph, lam, r)
    if graph.kind == GraphKind.LOG:
        s = np.clip(s, -1.0, 1.0)
    return _ret(np.asarray(graph.potential(s)) + 0.5 * lam * y * y)


def truncate(lam: float, r):
    """Clamp ``r`` to the band ``[-1/lam, 1/lam]``."""
    lam = _positive(lam)
    bound = 1.0 / lam
    return _ret(np.clip(np.asarray(r, dtype=float), -bound, bound))


def truncate_derivative(lam: float, r):
    lam = _positive(lam)
    r = np.asarray(r, dtype=float)
    bound = 1.0 / lam
    return _ret(np.where((r >= -bound) & (r < bound), 1.0, 0.0))


# -----------------------------------------------------------------------------
# structural assumptions
# -----------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphAssumptionReport:
    """Outcome of probing the structural inequalities on a sample set.

    ``alpha_constants`` certify ``r*s >= a1*s**2 - a2`` for the bulk
    viscosity graph, ``alpha_gamma_constants`` the same with ``(b1, b2)``
    for the boundary one, ``growth_constant`` certifies
    ``max(|alpha0(s)|, |alpha_g0(s)|) <= L(1+|s|)`` and
    ``domination_constant`` certifies ``|beta0(s)| <= c(1 + |beta_g0(s)|)``
    on the domain of ``beta_g``.  Failed checks carry ``nan`` constants and
    a reason in ``notes``.
    """

    coercive_alpha: bool
    alpha_constants: tuple
    coercive_alpha_gamma: bool
    alpha_gamma_constants: tuple
    linear_growth: bool
    growth_constant: float
    domination: bool
    domination_constant: float
    sample_grid: tuple
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "coercive_alpha": self.coercive_alpha,
            "alpha_constants": list(self.alpha_constants),
            "coercive_alpha_gamma": self.coercive_alpha_gamma,
            "alpha_gamma_constants": list(self.alpha_gamma_constants),
            "linear_growth": self.linear_growth,
            "growth_constant": self.growth_constant,
            "domination": self.domination,
            "domination_constant": self.domination_constant,
            "sample_grid": list(self.sample_grid),
            "notes": dict(self.notes),
        }


_NAN2 = (math.nan, math.nan)


def _coercivity_constants(g: MonotoneGraph):
    if g.kind == GraphKind.LINEAR or g.kind == GraphKind.POLY:
        return (g.coef, g.coef)
    if g.kind == GraphKind.LOG:
        return (2.0 * g.coef, g.coef)
    return None


def _growth_constant(g: MonotoneGraph):
    if g.kind in (GraphKind.LINEAR, GraphKind.POS):
        return g.coef
    if g.kind in (GraphKind.SIGN, GraphKind.ZERO):
        return 1.0
    if g.kind == GraphKind.POLY and g.degree == 1:
        return g.coef
    return None


def _power_bound(g: MonotoneGraph):
    """``(c, d)`` with ``|g0(s)| <= c|s|^d`` on the real line, when available."""
    if g.kind in (GraphKind.LINEAR, GraphKind.POS):
        return g.coef, 1
    if g.kind == GraphKind.POLY:
        return g.coef, g.degree
    return None


def _domination_constant(beta: MonotoneGraph, beta_g: MonotoneGraph):
    lo_b, hi_b = beta.domain
    lo_g, hi_g = beta_g.domain
    if lo_g < lo_b or hi_g > hi_b:
        return None, f"domain of {beta_g.label()} is not contained in domain of {beta.label()}"
    if beta.bounded:
        return 1.0, ""
    pb = _power_bound(beta)
    if beta_g.kind == GraphKind.LOG:
        if pb is not None:
            return pb[0], ""
        if beta.kind == GraphKind.LOG:
            return beta.coef / beta_g.coef, ""
    if beta.kind == GraphKind.POS and beta_g.kind == GraphKind.POS:
        return beta.coef / beta_g.coef, ""
    if pb is not None and beta_g.kind in (GraphKind.LINEAR, GraphKind.POLY):
        c_b, d_b = pb
        d_g = 1 if beta_g.kind == GraphKind.LINEAR else beta_g.degree
        if d_b <= d_g:
            return max(c_b, c_b / beta_g.coef), ""
    return None, f"{beta.label()} is not controlled by {beta_g.label()}"


def check_assumptions(alpha: MonotoneGraph, alpha_g: MonotoneGraph, beta: MonotoneGraph,
                      beta_g: MonotoneGraph, probes: Sequence[float]) -> GraphAssumptionReport:
    """Certify the structural inequalities at the probe points.

    Constants come from per-kind closed forms and are then re-evaluated at
    every probe; a check passes only if the closed form exists and holds at
    all probes.  Probes outside any graph's domain raise
    :class:`GraphDomainError`.
    """
    probes = np.asarray(list(probes), dtype=float)
    if probes.size == 0:
        raise ValueError("check_assumptions needs at least one probe point")
    for role, g in (("alpha", alpha), ("alpha_g", alpha_g), ("beta", beta), ("beta_g", beta_g)):
        bad = ~g.contains(probes)
        if np.any(bad):
            raise GraphDomainError(
                f"{role}={g.label()}", probes[bad],
                f"probe(s) {probes[bad][:5].tolist()} outside the domain of {role}={g.label()}",
            )
    notes = {}
    tol = 1e-12
    s = probes

    def coercive(g, role):
        consts = _coercivity_constants(g)
        if consts is None:
            notes[role] = f"{g.label()} has no coercive lower bound"
            return False, _NAN2
        c1, c2 = consts
        r = np.asarray(g.minimal_section(s))
        ok = bool(np.all(r * s >= c1 * s * s - c2 - tol * (1 + np.abs(r * s))))
        if not ok:
            notes[role] = "closed-form coercivity constants violated at a probe"
        return ok, (c1, c2) if ok else _NAN2

    ca, a_consts = coercive(alpha, "alpha")
    cg, b_consts = coercive(alpha_g, "alpha_g")

    lg_ok, lg = False, math.nan
    la, lb = _growth_constant(alpha), _growth_constant(alpha_g)
    if la is None or lb is None:
        notes["linear_growth"] = "superlinear growth or restricted domain"
    else:
        lg = max(la, lb)
        lhs = np.maximum(np.abs(alpha.minimal_section(s)), np.abs(alpha_g.minimal_section(s)))
        lg_ok = bool(np.all(lhs <= lg * (1 + np.abs(s)) * (1 + tol)))
        if not lg_ok:
            notes["linear_growth"] = "closed-form growth constant violated at a probe"
            lg = math.nan

    c_dom, why = _domination_constant(beta, beta_g)
    dom_ok = c_dom is not None
    if dom_ok:
        lhs = np.abs(beta.minimal_section(s))
        rhs = c_dom * (1 + np.abs(beta_g.minimal_section(s)))
        dom_ok = bool(np.all(lhs <= rhs * (1 + tol)))
        if not dom_ok:
            why = "closed-form domination constant violated at a probe"
    if not dom_ok:
        notes["domination"] = why
        c_dom = math.nan

    return GraphAssumptionReport(
        coercive_alpha=ca, alpha_constants=a_consts,
        coercive_alpha_gamma=cg, alpha_gamma_constants=b_consts,
        linear_growth=lg_ok, growth_constant=float(lg),
        domination=dom_ok, domination_constant=float(c_dom),
        sample_grid=tuple(float(p) for p in probes), notes=notes,
    )


def default_probes(*graphs: MonotoneGraph, n: int = 41) -> np.ndarray:
    """Symmetric probe set inside the common domain of ``graphs``."""
    lo = max(g.domain[0] for g in graphs)
    hi = min(g.domain[1] for g in graphs)
    if math.isinf(hi):
        return np.linspace(-4.0, 4.0, n)
    span = 0.999 * min(-lo, hi)
    return np.linspace(-span, span, n)
