"""Experiment configuration: TOML loading, defaults and validation.

A configuration has six tables::

    [space]       kind = "torus" | "graph" and its parameters
    [marginals]   rho0 / rho1 sub-tables, each with a ``preset`` key
    [solver]      tol, max_iter
    [sweep]       epsilons, steps, delta
    [checks]      enabled, lp, basis_size, test_mode
    [output]      dir

``validate_config`` reports every violated constraint at once; nothing is
computed.
"""

from __future__ import annotations

import copy
import math
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .marginals import PRESETS
from .space import MAX_NODES

CHECKS = ("solver", "path", "evolution", "entropy", "vanishing", "bounds", "limits", "second_order")

DEFAULTS = {
    "space": {"kind": "torus", "dims": 1, "resolution": 64, "side_lengths": 1.0},
    "marginals": {},
    "solver": {"tol": 1e-10, "max_iter": 100_000},
    "sweep": {"epsilons": [0.4, 0.2, 0.1, 0.05, 0.02], "steps": 200, "delta": 0.05},
    "checks": {"enabled": list(CHECKS), "lp": True, "basis_size": 9, "test_mode": 1},
    "output": {"dir": "out"},
}

_PRESET_FIELDS = {
    "uniform": (),
    "gaussian-bump": ("center", "width"),
    "two-bumps": ("centers", "widths"),
    "indicator": ("nodes",),
    "file": ("path",),
    "random": (),
}


def load_config(path):
    """Parse a TOML file; returns ``(raw_text, table)``.

    Raises :class:`ConfigError` if the file is unreadable or not TOML.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    return text, table


def with_defaults(table):
    """Deep copy of ``table`` with missing keys filled from :data:`DEFAULTS`."""
    out = copy.deepcopy(DEFAULTS)
    for section, values in table.items():
        if isinstance(values, dict) and isinstance(out.get(section), dict):
            out[section].update(copy.deepcopy(values))
        else:
            out[section] = copy.deepcopy(values)
    return out


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(table):
    """List of human-readable violations, each prefixed with the field name.

    An empty list means the configuration can be run.
    """
    problems = []
    add = problems.append
    known = set(DEFAULTS)
    for key in table:
        if key not in known:
            add(f"{key}: unknown section")
    cfg = with_defaults(table)
    for key in known:
        if not isinstance(cfg.get(key), dict):
            add(f"{key}: must be a table")
            cfg[key] = copy.deepcopy(DEFAULTS[key])

    sp = cfg["space"]
    if sp.get("kind") == "torus":
        dims = sp.get("dims")
        if not _is_int(dims) or not 1 <= dims <= 3:
            add("space.dims: must be an integer in 1..3")
            dims = 1
        res = sp.get("resolution")
        res_list = res if isinstance(res, list) else [res] * dims
        if len(res_list) != dims or not all(_is_int(r) and r >= 4 for r in res_list):
            add("space.resolution: needs integers >= 4, one per axis or a single value")
        elif math.prod(res_list) > MAX_NODES:
            add(f"space.resolution: {math.prod(res_list)} nodes exceed the limit of {MAX_NODES}")
        sides = sp.get("side_lengths")
        side_list = sides if isinstance(sides, list) else [sides] * dims
        if len(side_list) != dims or not all(_is_number(s) and s > 0 for s in side_list):
            add("space.side_lengths: needs positive numbers, one per axis or a single value")
    elif sp.get("kind") == "graph":
        if not isinstance(sp.get("edges"), str):
            add("space.edges: path to an edge CSV (i, j, conductance, length) is required")
        if not _is_int(sp.get("nodes")) or sp.get("nodes") < 2:
            add("space.nodes: must be an integer >= 2")
        if "measure" in sp and not isinstance(sp["measure"], str):
            add("space.measure: must be a path to a per-node weight file")
    else:
        add(f"space.kind: must be 'torus' or 'graph', got {sp.get('kind')!r}")

    margs = cfg["marginals"]
    for name in ("rho0", "rho1"):
        spec = margs.get(name)
        if not isinstance(spec, dict):
            add(f"marginals.{name}: missing (needs a table with a preset)")
            continue
        preset = spec.get("preset")
        if preset not in PRESETS:
            add(f"marginals.{name}.preset: must be one of {', '.join(PRESETS)}, got {preset!r}")
            continue
        for req in _PRESET_FIELDS[preset]:
            if req not in spec:
                add(f"marginals.{name}.{req}: required by preset {preset!r}")
        if preset in ("gaussian-bump", "two-bumps") and sp.get("kind") != "torus":
            add(f"marginals.{name}.preset: {preset!r} needs a torus space")
        if "width" in spec and not (_is_number(spec["width"]) and spec["width"] > 0):
            add(f"marginals.{name}.width: must be positive")

    sol = cfg["solver"]
    if not (_is_number(sol.get("tol")) and sol["tol"] > 0):
        add("solver.tol: must be a positive number")
    if not (_is_int(sol.get("max_iter")) and sol["max_iter"] >= 1):
        add("solver.max_iter: must be a positive integer")

    sw = cfg["sweep"]
    eps = sw.get("epsilons")
    if not isinstance(eps, list) or not eps or not all(_is_number(e) for e in eps):
        add("sweep.epsilons: must be a non-empty list of numbers")
    else:
        if any(e <= 0 for e in eps):
            add("sweep.epsilons: every epsilon must be strictly positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            add("sweep.epsilons: must be strictly decreasing")
    steps = sw.get("steps")
    if not (_is_int(steps) and steps >= 20):
        add("sweep.steps: time grid size M must be an integer >= 20")
        steps = None
    delta = sw.get("delta")
    if not (_is_number(delta) and 0 < delta < 0.5):
        add("sweep.delta: must satisfy 0 < delta < 1/2")
    elif steps is not None and abs(delta * steps - round(delta * steps)) > 1e-9:
        add("sweep.delta: delta * steps must be an integer so that delta lies on the time grid")

    ch = cfg["checks"]
    enabled = ch.get("enabled")
    if not isinstance(enabled, list) or not all(isinstance(c, str) for c in enabled):
        add("checks.enabled: must be a list of check names")
    else:
        for c in enabled:
            if c not in CHECKS:
                add(f"checks.enabled: unknown check {c!r}; known checks are {', '.join(CHECKS)}")
    if not isinstance(ch.get("lp"), bool):
        add("checks.lp: must be true or false")
    if not (_is_int(ch.get("basis_size")) and ch["basis_size"] >= 1):
        add("checks.basis_size: must be a positive integer")
    if not (_is_int(ch.get("test_mode")) and ch["test_mode"] >= 1):
        add("checks.test_mode: must be a positive integer")

    if not isinstance(cfg["output"].get("dir"), str):
        add("output.dir: must be a string")
    return problems


def resolve(table):
    """Validated configuration with defaults filled in.

    Raises :class:`ConfigError` listing every problem.
    """
    problems = validate_config(table)
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems), details={"problems": problems})
    return with_defaults(table)
