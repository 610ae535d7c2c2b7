"""Named marginal presets used by the experiment runner.

Every preset returns a :class:`numpy.ndarray` density normalized against
``space.measure``.  Positions on torus grids are given in the same length
units as ``side_lengths``; on weighted graphs only ``uniform``,
``indicator``, ``file`` and ``random`` make sense.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import BackendUnsupported, ConfigError, InvalidDensity
from .schrodinger import normalize_density

PRESETS = ("uniform", "gaussian-bump", "two-bumps", "indicator", "file", "random")


def _axis_vector(value, dims, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, dims)
    if arr.shape != (dims,):
        raise ConfigError(f"{name} needs 1 or {dims} components, got {arr.size}")
    return arr


def periodic_bump(space, center, width):
    """Gaussian profile ``exp(-d²/(2w²))`` in the wrapped torus distance."""
    if not space.is_grid:
        raise BackendUnsupported("gaussian bumps need a torus grid")
    if not width > 0:
        raise ConfigError(f"bump width must be positive, got {width!r}")
    L = np.asarray(space.side_lengths, dtype=float)
    c = _axis_vector(center, space.dims, "center")
    diff = np.abs(space.coordinates - c[None, :]) % L
    diff = np.minimum(diff, L - diff)
    return np.exp(-np.sum(diff**2, axis=1) / (2.0 * width**2))


def gaussian_bump(space, center, width):
    return normalize_density(space, periodic_bump(space, center, width))


def two_bumps(space, centers, widths, weights=(0.5, 0.5)):
    centers = list(centers)
    if len(centers) != 2:
        raise ConfigError("two-bumps needs exactly two centers")
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (2,))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (2,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ConfigError("two-bumps weights must be two nonnegative numbers")
    profiles = [normalize_density(space, periodic_bump(space, c, w)) for c, w in zip(centers, widths)]
    return normalize_density(space, weights[0] * profiles[0] + weights[1] * profiles[1])


def indicator(space, nodes):
    idx = np.asarray(nodes, dtype=int).ravel()
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= space.n):
        raise ConfigError(f"indicator nodes must be a non-empty subset of 0..{space.n - 1}")
    values = np.zeros(space.n)
    values[idx] = 1.0
    return normalize_density(space, values)


def from_file(space, path):
    """Read one value per node from ``.npy`` or a one-column text/CSV file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"marginal file not found: {path}")
    if path.suffix == ".npy":
        values = np.load(path)
    else:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        try:
            values = np.array([float(r[-1]) for r in rows])
        except ValueError:
            values = np.array([float(r[-1]) for r in rows[1:]])  # header row
    values = np.asarray(values, dtype=float).ravel()
    if values.shape != (space.n,):
        raise InvalidDensity(f"{path} holds {values.size} values, space has {space.n} nodes")
    return normalize_density(space, values)


def random_density(space, seed, spread=1.0):
    """Log-normal positive density, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    return normalize_density(space, np.exp(spread * rng.standard_normal(space.n)))


def build_marginal(space, spec, seed=0, base_dir="."):
    """Density from a preset description such as
    ``{"preset": "gaussian-bump", "center": 0.3, "width": 0.1}``."""
    spec = dict(spec)
    name = spec.pop("preset", None)
    if name not in PRESETS:
        raise ConfigError(f"unknown marginal preset {name!r}; expected one of {', '.join(PRESETS)}")
    try:
        if name == "uniform":
            return normalize_density(space, np.ones(space.n))
        if name == "gaussian-bump":
            return gaussian_bump(space, spec["center"], float(spec["width"]))
        if name == "two-bumps":
            return two_bumps(space, spec["centers"], spec["widths"], spec.get("weights", (0.5, 0.5)))
        if name == "indicator":
            return indicator(space, spec["nodes"])
        if name == "file":
            path = Path(spec["path"])
            return from_file(space, path if path.is_absolute() else Path(base_dir) / path)
        return random_density(space, int(spec.get("seed", seed)), float(spec.get("spread", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"marginal preset {name!r} is missing field {exc.args[0]!r}") from None
