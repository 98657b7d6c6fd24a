"""Flat ``section.key = <json value>`` configuration documents.

Sections are ``model``, ``grid``, ``time``, ``initial`` and ``experiment``.
Lines starting with ``#`` and blank lines are ignored.  Every key is
optional and falls back to the documented default; unknown keys are errors.

Example
-------
::

    model.lambda = 0.05
    model.beta = "log"
    model.beta_params = [0.5]
    grid.nx = 16
    grid.ny = 17
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graphs import GraphDomainError, GraphKind, MonotoneGraph, check_assumptions, default_probes
from .grid import Grid
from .stepper import InitialDatum, ProblemConfig, SourceSpec


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the offending dotted key path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


EXPERIMENT_KINDS = ("run", "sweep-lambda", "sweep-eps", "stability", "mms")


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run on top of a base configuration.

    ``values`` holds the swept parameter values (strictly decreasing).  The
    stability pair perturbs the initial datum by ``delta * cos(2 pi mode x)``
    plus, if ``noise > 0``, a seeded random mean-free smooth field.  The
    manufactured-solution check uses ``mms_taus`` on a ``mms_time_grid`` grid
    and ``mms_grids`` at step ``mms_space_tau``.
    """

    kind: str = "run"
    base: ProblemConfig = field(default_factory=ProblemConfig)
    output_dir: Optional[str] = None
    values: tuple = ()
    delta: float = 0.05
    mode: int = 1
    noise: float = 0.0
    seed: int = 0
    mms_taus: tuple = (0.02, 0.01, 0.005, 0.0025, 0.00125)
    mms_time_grid: int = 32
    mms_grids: tuple = (8, 16, 32, 64)
    mms_space_tau: float = 1e-3
    mms_t_final: float = 0.1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError("experiment.kind", f"unknown experiment {self.kind!r}")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("experiment.values", "values must be positive and strictly decreasing")
        if self.delta <= 0:
            raise ConfigError("experiment.delta", "perturbation amplitude must be positive")
        if self.kind == "mms":
            b = self.base
            if b.alpha.kind != GraphKind.LINEAR or b.alpha_g.kind != GraphKind.LINEAR:
                raise ConfigError("model.alpha", "the manufactured-solution check needs linear viscosity graphs")
            if b.beta.kind != GraphKind.ZERO or b.beta_g.kind != GraphKind.ZERO:
                raise ConfigError("model.beta", "the manufactured-solution check needs beta = beta_g = \"zero\"")


DEFAULT_VALUES = {
    "sweep-lambda": (0.1, 0.05, 0.025, 0.0125, 0.00625),
    "sweep-eps": (0.1, 0.05, 0.025, 0.0125, 0.00625),
}


# key -> default, as JSON-compatible python values; empty graph params mean the graph defaults
_SCHEMA = {
    "model.epsilon": 0.1,
    "model.lambda": 0.1,
    "model.alpha": "linear",
    "model.alpha_params": [],
    "model.alpha_g": "linear",
    "model.alpha_g_params": [],
    "model.beta": "poly",
    "model.beta_params": [],
    "model.beta_g": "poly",
    "model.beta_g_params": [],
    "model.c_dom": "auto",
    "model.pi_kind": "linear",
    "model.pi_slope": 0.0,
    "model.pi_g_slope": 0.0,
    "model.strong_regime": False,
    "model.source": {"kind": "zero"},
    "model.source_g": {"kind": "zero"},
    "grid.nx": 32,
    "grid.ny": 33,
    "time.tau": 1e-3,
    "time.t_final": 0.05,
    "initial.mean": 0.0,
    "initial.amplitude": 0.2,
    "initial.kx": 1,
    "initial.ky": 1,
    "initial.smooth": False,
    "experiment.kind": "run",
    "experiment.values": None,
    "experiment.delta": 0.05,
    "experiment.mode": 1,
    "experiment.noise": 0.0,
    "experiment.mms_taus": [0.02, 0.01, 0.005, 0.0025, 0.00125],
    "experiment.mms_time_grid": 32,
    "experiment.mms_grids": [8, 16, 32, 64],
    "experiment.mms_space_tau": 1e-3,
    "experiment.mms_t_final": 0.1,
}

_SOURCE_FIELDS = ("kind", "value", "amplitude", "kx", "ky", "freq", "decay")


def parse_document(text: str) -> dict:
    """Split a document into ``{key: value}`` without validation of meaning."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'section.key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key.count(".") != 1 or not all(key.split(".")):
            raise ConfigError(key or f"line {lineno}", "keys must have the form section.key")
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in out:
            raise ConfigError(key, "duplicate key")
        if not val:
            raise ConfigError(key, "missing value")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError as exc:
            raise ConfigError(key, f"value is not valid JSON ({exc.msg})") from None
    return out


def _num(doc, key, kind=float, positive=False):
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(key, f"expected a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(key, f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if not math.isfinite(val):
        raise ConfigError(key, "value must be finite")
    if positive and val <= 0:
        raise ConfigError(key, f"must be positive, got {val}")
    return val


def _bool(doc, key):
    val = doc[key]
    if not isinstance(val, bool):
        raise ConfigError(key, f"expected true or false, got {val!r}")
    return val


def _graph(doc, key):
    name = doc[key]
    params = doc[key + "_params"] if (key + "_params") in doc else None
    if not isinstance(name, str):
        raise ConfigError(key, f"expected a graph name, got {name!r}")
    if params is None:
        params = []
    if not isinstance(params, list):
        raise ConfigError(key + "_params", "expected a list of numbers")
    try:
        return MonotoneGraph.from_name(name, params)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _source(doc, key):
    val = doc[key]
    if not isinstance(val, dict):
        raise ConfigError(key, "expected an object such as {\"kind\": \"mode\", \"amplitude\": 1}")
    extra = set(val) - set(_SOURCE_FIELDS)
    if extra:
        raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown source field")
    kw = {}
    for f in _SOURCE_FIELDS:
        if f in val:
            if f == "kind":
                kw[f] = val[f]
            elif f in ("kx", "ky"):
                if isinstance(val[f], bool) or not isinstance(val[f], (int, float)) or int(val[f]) != val[f]:
                    raise ConfigError(f"{key}.{f}", "expected an integer")
                kw[f] = int(val[f])
            else:
                if isinstance(val[f], bool) or not isinstance(val[f], (int, float)):
                    raise ConfigError(f"{key}.{f}", "expected a number")
                kw[f] = float(val[f])
    try:
        return SourceSpec(**kw)
    except ValueError as exc:
        raise ConfigError(f"{key}.kind", str(exc)) from None


def _growth_power_bound(g: MonotoneGraph):
    """Smallest power ``p`` with ``|g0(s)| <= c1|s|^p + c2`` on the real line, if any."""
    if g.kind == GraphKind.LOG:
        return None
    if g.kind == GraphKind.POLY:
        return g.degree
    return 1


def validate(cfg: ProblemConfig) -> ProblemConfig:
    """Run the structural checks and return ``cfg`` with the report attached."""
    alpha, alpha_g, beta, beta_g = cfg.alpha, cfg.alpha_g, cfg.beta, cfg.beta_g
    m = cfg.initial.mean
    lo, hi = beta_g.domain
    if not (lo < m < hi):
        raise ConfigError("initial.mean",
                          f"initial mean {m} must lie in the interior of the domain of "
                          f"beta_g={beta_g.label()}, i.e. in ({lo}, {hi})")
    for key, g in (("model.beta", beta), ("model.beta_g", beta_g)):
        blo, bhi = g.domain
        span = abs(m) + abs(cfg.initial.amplitude)
        if math.isfinite(bhi) and span >= min(-blo, bhi):
            raise ConfigError("initial.amplitude",
                              f"initial datum reaches {span}, outside the domain of {key}={g.label()}")
    probes = default_probes(alpha, alpha_g, beta, beta_g)
    try:
        report = check_assumptions(alpha, alpha_g, beta, beta_g, probes)
    except GraphDomainError as exc:  # pragma: no cover - probes are built inside the domains
        raise ConfigError("model", str(exc)) from None
    if not report.coercive_alpha_gamma:
        raise ConfigError("model.alpha_g",
                          f"boundary viscosity graph {alpha_g.label()} is not coercive "
                          "(r*s >= b1*s^2 - b2 fails); this is a standing requirement")
    if not report.domination:
        raise ConfigError("model.beta",
                          f"{beta.label()} is not dominated by beta_g={beta_g.label()}: "
                          + report.notes.get("domination", ""))
    if not report.coercive_alpha and not cfg.strong_regime:
        raise ConfigError("model.alpha",
                          f"viscosity graph {alpha.label()} is not coercive (r*s >= a1*s^2 - a2 fails); "
                          "non-coercive viscosity requires the strong-data regime: set "
                          "model.strong_regime = true (smooth sources, regular initial data)")
    if not report.linear_growth:
        if not cfg.strong_regime:
            raise ConfigError("model.alpha",
                              "viscosity graphs grow faster than linearly; this requires "
                              "model.strong_regime = true and polynomially bounded potentials")
        pb, pg = _growth_power_bound(beta), _growth_power_bound(beta_g)
        if pb is None or pb > 5:
            raise ConfigError("model.beta",
                              f"superlinear viscosity needs |beta0(s)| <= c1|s|^5 + c2; {beta.label()} violates it")
        if pg is None:
            raise ConfigError("model.beta_g",
                              f"superlinear viscosity needs a polynomial bound on beta_g; {beta_g.label()} has none")
    return _attach(cfg, report)


def _attach(cfg: ProblemConfig, report) -> ProblemConfig:
    object.__setattr__(cfg, "assumptions", report)
    return cfg


def parse_config(text: str) -> ProblemConfig:
    """Parse and validate a configuration document (experiment keys ignored)."""
    return parse_plan(text).base


def parse_plan(text: str, kind: Optional[str] = None, output_dir=None, seed: int = 0) -> ExperimentPlan:
    """Parse a document into an :class:`ExperimentPlan`; ``kind`` overrides ``experiment.kind``."""
    doc = dict(_SCHEMA)
    doc.update(parse_document(text))

    alpha = _graph(doc, "model.alpha")
    alpha_g = _graph(doc, "model.alpha_g")
    beta = _graph(doc, "model.beta")
    beta_g = _graph(doc, "model.beta_g")
    if doc["model.pi_kind"] not in ("linear", "cubic"):
        raise ConfigError("model.pi_kind", f"expected 'linear' or 'cubic', got {doc['model.pi_kind']!r}")
    try:
        grid = Grid(_num(doc, "grid.nx", int), _num(doc, "grid.ny", int))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("grid", str(exc)) from None
    initial = InitialDatum(
        mean=_num(doc, "initial.mean"), amplitude=_num(doc, "initial.amplitude"),
        kx=_num(doc, "initial.kx", int), ky=_num(doc, "initial.ky", int),
        smooth=_bool(doc, "initial.smooth"),
    )
    c_dom_raw = doc["model.c_dom"]
    kw = dict(
        epsilon=_num(doc, "model.epsilon", positive=True),
        lam=_num(doc, "model.lambda", positive=True),
        tau=_num(doc, "time.tau", positive=True),
        t_final=_num(doc, "time.t_final", positive=True),
        grid=grid, alpha=alpha, alpha_g=alpha_g, beta=beta, beta_g=beta_g,
        pi_kind=doc["model.pi_kind"],
        pi_slope=_num(doc, "model.pi_slope"),
        pi_g_slope=_num(doc, "model.pi_g_slope"),
        strong_regime=_bool(doc, "model.strong_regime"),
        source=_source(doc, "model.source"),
        source_g=_source(doc, "model.source_g"),
        initial=initial,
    )
    if c_dom_raw != "auto":
        kw["c_dom"] = _num(doc, "model.c_dom", positive=True)
    try:
        cfg = ProblemConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = "time.tau" if "tau" in msg else "model"
        raise ConfigError(key, msg) from None
    cfg = validate(cfg)
    if c_dom_raw == "auto":
        report = cfg.assumptions
        cfg = _attach(cfg.with_(c_dom=report.domination_constant), report)

    kind = kind or doc["experiment.kind"]
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError("experiment.kind", f"unknown experiment {kind!r}")
    values = doc["experiment.values"]
    if values is None:
        values = DEFAULT_VALUES.get(kind, ())
    if not isinstance(values, (list, tuple)):
        raise ConfigError("experiment.values", "expected a list of numbers")

    def num_list(key, kind_=float):
        val = doc[key]
        if not isinstance(val, list) or not val:
            raise ConfigError(key, "expected a nonempty list")
        return tuple(_num({key: v}, key, kind_, positive=True) for v in val)

    return ExperimentPlan(
        kind=kind, base=cfg, output_dir=None if output_dir is None else str(output_dir),
        values=tuple(_num({"experiment.values": v}, "experiment.values") for v in values),
        delta=_num(doc, "experiment.delta", positive=True),
        mode=_num(doc, "experiment.mode", int),
        noise=_num(doc, "experiment.noise"),
        seed=int(seed),
        mms_taus=num_list("experiment.mms_taus"),
        mms_time_grid=_num(doc, "experiment.mms_time_grid", int, positive=True),
        mms_grids=num_list("experiment.mms_grids", int),
        mms_space_tau=_num(doc, "experiment.mms_space_tau", positive=True),
        mms_t_final=_num(doc, "experiment.mms_t_final", positive=True),
    )


def _dump(v) -> str:
    return json.dumps(v)


def _source_dict(s: SourceSpec) -> dict:
    d = {"kind": s.kind}
    for f in _SOURCE_FIELDS[1:]:
        d[f] = getattr(s, f)
    return d


def emit_config(cfg: ProblemConfig, plan: Optional[ExperimentPlan] = None) -> str:
    """Serialize a configuration (and optionally a plan) so that
    ``parse_config(emit_config(cfg)) == cfg``."""
    items = [
        ("model.epsilon", cfg.epsilon), ("model.lambda", cfg.lam),
        ("model.alpha", cfg.alpha.name), ("model.alpha_params", cfg.alpha.params),
        ("model.alpha_g", cfg.alpha_g.name), ("model.alpha_g_params", cfg.alpha_g.params),
        ("model.beta", cfg.beta.name), ("model.beta_params", cfg.beta.params),
        ("model.beta_g", cfg.beta_g.name), ("model.beta_g_params", cfg.beta_g.params),
        ("model.c_dom", cfg.c_dom),
        ("model.pi_kind", cfg.pi_kind), ("model.pi_slope", cfg.pi_slope),
        ("model.pi_g_slope", cfg.pi_g_slope), ("model.strong_regime", cfg.strong_regime),
        ("model.source", _source_dict(cfg.source)), ("model.source_g", _source_dict(cfg.source_g)),
        ("grid.nx", cfg.grid.nx), ("grid.ny", cfg.grid.ny),
        ("time.tau", cfg.tau), ("time.t_final", cfg.t_final),
        ("initial.mean", cfg.initial.mean), ("initial.amplitude", cfg.initial.amplitude),
        ("initial.kx", cfg.initial.kx), ("initial.ky", cfg.initial.ky),
        ("initial.smooth", cfg.initial.smooth),
    ]
    if plan is not None:
        items += [
            ("experiment.kind", plan.kind), ("experiment.values", list(plan.values)),
            ("experiment.delta", plan.delta), ("experiment.mode", plan.mode),
            ("experiment.noise", plan.noise), ("experiment.mms_taus", list(plan.mms_taus)),
            ("experiment.mms_time_grid", plan.mms_time_grid),
            ("experiment.mms_grids", list(plan.mms_grids)),
            ("experiment.mms_space_tau", plan.mms_space_tau),
            ("experiment.mms_t_final", plan.mms_t_final),
        ]
    return "".join(f"{k} = {_dump(v)}\n" for k, v in items)


def config_summary(cfg: ProblemConfig) -> dict:
    """JSON-friendly description including the attached assumption report."""
    out = {k: json.loads(v) for k, _, v in
           (line.partition(" = ") for line in emit_config(cfg).splitlines())}
    if cfg.assumptions is not None:
        rep = cfg.assumptions.as_dict()
        rep.pop("sample_grid")
        rep["probe_range"] = [cfg.assumptions.sample_grid[0], cfg.assumptions.sample_grid[-1]]
        out["assumptions"] = _jsonable(rep)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj
