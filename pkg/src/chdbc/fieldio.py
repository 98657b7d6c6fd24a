"""CSV serialization of grid fields and state checkpoints."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .grid import Grid

_SIDES = ("bottom", "top")


def _fmt(v: float) -> str:
    return "%.17g" % v


def field_to_csv(grid: Grid, f) -> str:
    """Interior field as ``x,y,value`` rows in row-major ``[i, j]`` order."""
    f = grid.check_field(f)
    out = io.StringIO()
    out.write("x,y,value\n")
    for i, x in enumerate(grid.x):
        for j, y in enumerate(grid.y):
            out.write(f"{_fmt(x)},{_fmt(y)},{_fmt(f[i, j])}\n")
    return out.getvalue()


def bfield_to_csv(grid: Grid, v) -> str:
    """Boundary field as ``x,side,value`` rows (bottom circle first)."""
    v = grid.check_bfield(v)
    out = io.StringIO()
    out.write("x,side,value\n")
    for s, side in enumerate(_SIDES):
        for i, x in enumerate(grid.x):
            out.write(f"{_fmt(x)},{side},{_fmt(v[s, i])}\n")
    return out.getvalue()


def field_from_csv(grid: Grid, text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"x", "y", "value"}:
        raise ValueError("interior field CSV must have header x,y,value")
    if len(rows) != grid.size:
        raise ValueError(f"expected {grid.size} rows, got {len(rows)}")
    return np.array([float(r["value"]) for r in rows]).reshape(grid.shape)


def bfield_from_csv(grid: Grid, text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"x", "side", "value"}:
        raise ValueError("boundary field CSV must have header x,side,value")
    out = grid.bzeros()
    counts = [0, 0]
    for r in rows:
        if r["side"] not in _SIDES:
            raise ValueError(f"unknown boundary side {r['side']!r}")
        s = _SIDES.index(r["side"])
        if counts[s] >= grid.nx:
            raise ValueError(f"too many rows for side {r['side']!r}")
        out[s, counts[s]] = float(r["value"])
        counts[s] += 1
    if counts != [grid.nx, grid.nx]:
        raise ValueError(f"expected {grid.nx} rows per side, got {counts}")
    return out


def state_to_csv(grid: Grid, state) -> str:
    """All interior fields of a state in one table: ``x,y,u,mu,w``."""
    out = io.StringIO()
    out.write("x,y,u,mu,w\n")
    for i, x in enumerate(grid.x):
        for j, y in enumerate(grid.y):
            out.write(",".join(_fmt(a) for a in (x, y, state.u[i, j], state.mu[i, j], state.w[i, j])) + "\n")
    return out.getvalue()


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_checkpoints(directory, grid: Grid, states, steps, config_text: str) -> Path:
    """Write one ``state_XXXXXX.csv`` per state and a ``checkpoints.json`` manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for state, k in zip(states, steps):
        name = f"state_{k:06d}.csv"
        (directory / name).write_text(state_to_csv(grid, state))
        entries.append({"file": name, "step": int(k), "t": float(state.t)})
    manifest = {"config_hash": config_hash(config_text), "checkpoints": entries}
    path = directory / "checkpoints.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
