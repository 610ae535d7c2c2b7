"""Discrete metric measure spaces.

A :class:`Space` bundles a probability measure on ``n`` nodes, a Laplacian
that is self-adjoint in ``L^2(m)``, and a geodesic distance table.  Two
backends are provided: periodic torus grids (the flat ``RCD*(0, d)`` model)
and general weighted graphs.  Both are stored as weighted graphs internally,
with ``Δf(i) = (1/m_i) Σ_j w_ij (f_j - f_i)``.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import (
    DisconnectedSpace,
    InvalidMeasure,
    InvalidResolution,
    InvalidWeight,
    SpaceTooLarge,
)

MAX_NODES = 4096
MEASURE_RENORMALIZE_SLACK = 0.01


@dataclass(frozen=True, eq=False)
class Space:
    """Immutable discrete metric measure space.

    Attributes
    ----------
    measure : ndarray, shape (n,)
        Node weights ``m_i``, summing to one.
    conductance : ndarray, shape (n, n)
        Symmetric edge conductances ``w_ij`` with zero diagonal.
    distance : ndarray, shape (n, n)
        Geodesic distances.
    curvature : (float, float)
        Nominal ``(K, N)``; only used to evaluate bound formulas.
    kind : {"torus", "graph"}
    """

    measure: np.ndarray
    conductance: np.ndarray
    distance: np.ndarray
    curvature: tuple = (0.0, np.inf)
    kind: str = "graph"
    resolution: tuple = ()
    side_lengths: tuple = ()
    edges: tuple = field(default=(), repr=False)

    @property
    def n(self):
        return self.measure.shape[0]

    @property
    def dims(self):
        return len(self.resolution)

    @property
    def is_grid(self):
        return self.kind == "torus"

    @property
    def spacing(self):
        return tuple(s / r for s, r in zip(self.side_lengths, self.resolution))

    @functools.cached_property
    def diameter(self):
        return float(np.max(self.distance))

    @functools.cached_property
    def laplacian(self):
        """Dense Laplacian matrix acting on column vectors of node values."""
        w = self.conductance
        lap = (w - np.diag(w.sum(axis=1))) / self.measure[:, None]
        return lap

    @functools.cached_property
    def _edge_arrays(self):
        # directed edges i -> j with rate w_ij / m_i, in row-major order
        src, dst = np.nonzero(self.conductance)
        rate = self.conductance[src, dst] / self.measure[src]
        return src, dst, rate

    @functools.cached_property
    def _rate_operator(self):
        src, dst, rate = self._edge_arrays
        n_edges = src.shape[0]
        return sparse.csr_matrix((rate, (src, np.arange(n_edges))), shape=(self.n, n_edges))

    def edge_differences(self, f):
        """``f(dst) - f(src)`` over directed edges, for a field or a stack."""
        src, dst, _ = self._edge_arrays
        f = np.asarray(f, dtype=float)
        return f[..., dst] - f[..., src]

    def edge_sum(self, values):
        """``Σ_{j ~ i} (w_ij / m_i) values_ij`` for per-edge values."""
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return self._rate_operator @ values
        return (self._rate_operator @ values.T).T

    @functools.cached_property
    def coordinates(self):
        """Node positions, shape (n, dims); only for torus grids."""
        if not self.is_grid:
            raise AttributeError("coordinates exist only on torus grids")
        axes = [np.arange(r) * h for r, h in zip(self.resolution, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def apply_laplacian(self, f):
        """Apply Δ to a field, or to each row of a stack of fields.

        Uses the edge-difference form, so constants are annihilated exactly.
        """
        return self.edge_sum(self.edge_differences(f))

    def integrate(self, f):
        """``∫ f dm`` for a field or for each row of a stack of fields."""
        return np.asarray(f, dtype=float) @ self.measure

    def spectral(self):
        """Cached spectral decomposition of ``-Δ``."""
        from .heat import spectral_decompose

        return spectral_decompose(self)

    def with_measure(self, measure):
        return dataclasses.replace(self, measure=np.asarray(measure, dtype=float))


def _check_size(n, max_nodes):
    if n > max_nodes:
        raise SpaceTooLarge(f"space has {n} nodes, limit is {max_nodes}", n=n)


def build_torus_grid(dims, resolution, side_lengths=1.0, max_nodes=MAX_NODES):
    """Periodic grid with the standard second-difference Laplacian.

    Parameters
    ----------
    dims : int
        Number of axes, 1 to 3.
    resolution : int or sequence of int
        Nodes per axis, each at least 4.
    side_lengths : float or sequence of float
        Period of each axis.
    """
    if not 1 <= int(dims) <= 3:
        raise InvalidResolution(f"dims must be 1, 2 or 3, got {dims}")
    dims = int(dims)
    resolution = _per_axis(resolution, dims, int)
    side_lengths = _per_axis(side_lengths, dims, float)
    if any(r < 4 for r in resolution):
        raise InvalidResolution(f"resolution must be >= 4 per axis, got {resolution}")
    if any(not np.isfinite(s) or s <= 0 for s in side_lengths):
        raise InvalidWeight(f"side lengths must be positive, got {side_lengths}")
    n = int(np.prod(resolution))
    _check_size(n, max_nodes)

    measure = np.full(n, 1.0 / n)
    spacing = [s / r for s, r in zip(side_lengths, resolution)]
    index = np.arange(n).reshape(resolution)
    conductance = np.zeros((n, n))
    edges = []
    for axis, h in enumerate(spacing):
        nbr = np.roll(index, -1, axis=axis).ravel()
        w = (1.0 / n) / h**2
        conductance[index.ravel(), nbr] += w
        conductance[nbr, index.ravel()] += w
        edges.extend((int(i), int(j), w, h) for i, j in zip(index.ravel(), nbr))

    coords = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.arange(r) for r in resolution], indexing="ij")],
        axis=1,
    )
    sq = np.zeros((n, n))
    for axis, (r, s) in enumerate(zip(resolution, side_lengths)):
        diff = np.abs(coords[:, None, axis] - coords[None, :, axis])
        wrapped = np.minimum(diff, r - diff) * (s / r)
        sq += wrapped**2
    distance = np.sqrt(sq)

    return Space(
        measure=measure,
        conductance=conductance,
        distance=distance,
        curvature=(0.0, float(dims)),
        kind="torus",
        resolution=tuple(resolution),
        side_lengths=tuple(side_lengths),
        edges=tuple(edges),
    )


def build_weighted_graph(n_nodes, edges, measure=None, curvature=(0.0, np.inf), max_nodes=MAX_NODES):
    """General weighted graph.

    ``edges`` is an iterable of ``(i, j, conductance, length)``.  Parallel
    edges add their conductances; the distance uses the shortest length.
    ``measure`` defaults to uniform and is renormalized when its total is
    within 1% of one.
    """
    n = int(n_nodes)
    if n < 1:
        raise InvalidResolution("graph needs at least one node")
    _check_size(n, max_nodes)
    measure = np.full(n, 1.0 / n) if measure is None else np.asarray(measure, dtype=float)
    if measure.shape != (n,):
        raise InvalidMeasure(f"measure has shape {measure.shape}, expected ({n},)")
    if not np.all(np.isfinite(measure)) or np.any(measure <= 0):
        raise InvalidMeasure("measure must be strictly positive")
    total = measure.sum()
    if abs(total - 1.0) > MEASURE_RENORMALIZE_SLACK:
        raise InvalidMeasure(f"measure sums to {total}, not within 1% of 1", total=total)
    measure = measure / total

    conductance = np.zeros((n, n))
    lengths = np.full((n, n), np.inf)
    clean = []
    for i, j, w, ell in edges:
        i, j, w, ell = int(i), int(j), float(w), float(ell)
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise InvalidWeight(f"edge ({i}, {j}) is not a valid pair of distinct nodes")
        if not (np.isfinite(w) and w > 0):
            raise InvalidWeight(f"edge ({i}, {j}) has nonpositive conductance {w}")
        if not (np.isfinite(ell) and ell > 0):
            raise InvalidWeight(f"edge ({i}, {j}) has nonpositive length {ell}")
        conductance[i, j] += w
        conductance[j, i] += w
        lengths[i, j] = lengths[j, i] = min(lengths[i, j], ell)
        clean.append((i, j, w, ell))

    graph = sparse.csr_matrix(np.where(np.isfinite(lengths), lengths, 0.0))
    n_comp, _ = csgraph.connected_components(graph, directed=False)
    if n_comp != 1:
        raise DisconnectedSpace(f"graph has {n_comp} connected components", components=n_comp)
    distance = csgraph.shortest_path(graph, method="D", directed=False)
    distance = np.minimum(distance, distance.T)  # summation order can differ by one ulp

    return Space(
        measure=measure,
        conductance=conductance,
        distance=distance,
        curvature=tuple(curvature),
        kind="graph",
        edges=tuple(clean),
    )


def _per_axis(value, dims, cast):
    if np.ndim(value) == 0:
        return [cast(value)] * dims
    value = [cast(v) for v in value]
    if len(value) != dims:
        raise InvalidResolution(f"expected {dims} per-axis values, got {len(value)}")
    return value


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tolerance: float
    note: str = ""


@dataclass
class SpaceReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            "passed": self.passed,
            "checks": [dataclasses.asdict(c) for c in self.checks],
        }


def validate_space(space, seed=0, n_random=4, triangle_sample=256):
    """Check every structural invariant of a space and report residuals.

    Never raises: malformed inputs produce failed checks instead.
    """
    checks = []

    def add(name, fn, tol, note=""):
        try:
            residual = float(fn())
            passed = bool(np.isfinite(residual) and residual <= tol)
        except Exception as exc:  # report, never throw
            residual, passed, note = float("nan"), False, f"{type(exc).__name__}: {exc}"
        checks.append(Check(name, passed, residual, tol, note))

    m = np.asarray(space.measure, dtype=float)
    d = np.asarray(space.distance, dtype=float)
    rng = np.random.default_rng(seed)

    add("measure-positivity", lambda: max(0.0, -np.min(m)) + (0.0 if np.all(m > 0) else 1.0), 0.0)
    add("measure-normalized", lambda: abs(m.sum() - 1.0), 1e-12)

    def self_adjoint():
        worst = 0.0
        for _ in range(n_random):
            f, g = rng.standard_normal((2, m.size))
            lf, lg = space.apply_laplacian(f), space.apply_laplacian(g)
            lhs = np.dot(m, g * lf)
            rhs = np.dot(m, f * lg)
            scale = 1.0 + np.dot(m, np.abs(g * lf))
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst

    add("laplacian-self-adjoint", self_adjoint, 1e-12)
    add("laplacian-constants", lambda: np.max(np.abs(space.apply_laplacian(np.ones(m.size)))), 0.0)

    def mass():
        worst = 0.0
        for _ in range(n_random):
            f = rng.standard_normal(m.size)
            lf = space.apply_laplacian(f)
            worst = max(worst, abs(np.dot(m, lf)) / (1.0 + np.dot(m, np.abs(lf))))
        return worst

    add("laplacian-mass", mass, 1e-12)
    add("laplacian-conductance-symmetric", lambda: np.max(np.abs(space.conductance - space.conductance.T)), 0.0)
    add("laplacian-conductance-nonnegative", lambda: max(0.0, -np.min(space.conductance)), 0.0)
    add("distance-symmetric", lambda: np.max(np.abs(d - d.T)), 0.0)
    add("distance-zero-diagonal", lambda: np.max(np.abs(np.diag(d))), 0.0)
    add("distance-nonnegative", lambda: max(0.0, -np.min(d)), 0.0)

    def triangle():
        ks = np.arange(d.shape[0])
        if ks.size > triangle_sample:
            ks = np.sort(rng.choice(ks, triangle_sample, replace=False))
        worst = 0.0
        for k in ks:
            worst = max(worst, float(np.max(d - (d[:, k, None] + d[None, k, :]))))
        return max(worst, 0.0)

    n_tri = min(d.shape[0], triangle_sample)
    add(
        "distance-triangle",
        triangle,
        1e-12 * (1.0 + float(np.max(np.abs(d)))),
        note="" if d.shape[0] <= triangle_sample else f"sampled {n_tri} pivots",
    )
    return SpaceReport(checks)


def iter_neighbors(space):
    """Yield ``(i, j, w_ij)`` for every undirected edge with ``i < j``."""
    src, dst = np.nonzero(np.triu(space.conductance, 1))
    for i, j in zip(src, dst):
        yield int(i), int(j), float(space.conductance[i, j])


def grid_index(space):
    """Node index array of shape ``space.resolution`` (C order)."""
    return np.arange(space.n).reshape(space.resolution)


def grid_shift(space, axis, step):
    """Index map ``i -> i + step·e_axis`` with periodic wraparound."""
    idx = grid_index(space)
    return np.roll(idx, -step, axis=axis).ravel()

