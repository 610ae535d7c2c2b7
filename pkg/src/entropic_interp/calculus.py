"""Discrete Γ-calculus, plus finite-difference ∇, Hess and div on torus grids.

``gamma`` and ``gamma2`` work on every backend and accept either one field
(shape ``(n,)``) or a stack of fields (shape ``(..., n)``).  Grid vector
fields have shape ``(..., n, d)`` and Hessian fields ``(..., n, d, d)``.
"""

from __future__ import annotations

import numpy as np

from .errors import BackendUnsupported


def gamma(space, f, g=None):
    """Carré du champ ``Γ(f, g) = ½(Δ(fg) - fΔg - gΔf)``.

    Evaluated in edge form ``½ Σ_j (w_ij/m_i)(f_j - f_i)(g_j - g_i)`` so that
    ``Γ(f, f) >= 0`` holds exactly.
    """
    df = space.edge_differences(f)
    dg = df if g is None else space.edge_differences(g)
    return 0.5 * space.edge_sum(df * dg)


def gamma2(space, f, g=None):
    """Iterated carré du champ ``Γ₂(f) = ½ΔΓ(f, f) - Γ(f, Δf)``.

    With ``g`` given, returns the symmetric bilinear form
    ``½ΔΓ(f, g) - ½Γ(f, Δg) - ½Γ(g, Δf)``.
    """
    if g is None:
        return 0.5 * space.apply_laplacian(gamma(space, f)) - gamma(space, f, space.apply_laplacian(f))
    lf, lg = space.apply_laplacian(f), space.apply_laplacian(g)
    return (
        0.5 * space.apply_laplacian(gamma(space, f, g))
        - 0.5 * gamma(space, f, lg)
        - 0.5 * gamma(space, g, lf)
    )


def grad_norm(space, f):
    """``|∇f| := Γ(f, f)^{1/2}``, the backend-agnostic slope."""
    return np.sqrt(gamma(space, f))


def _require_grid(space):
    if not space.is_grid:
        raise BackendUnsupported(f"operation needs a torus grid, space kind is {space.kind!r}")


def _as_grid(space, f):
    f = np.asarray(f, dtype=float)
    return f.reshape(f.shape[:-1] + tuple(space.resolution))


def _shift(arr, dims, axis, step):
    # arr[..., i + step e_axis] with periodic wraparound
    return np.roll(arr, -step, axis=arr.ndim - dims + axis)


def gradient_grid(space, f):
    """Central differences per axis; shape ``(..., n, d)``."""
    _require_grid(space)
    d = space.dims
    u = _as_grid(space, f)
    comps = [
        (_shift(u, d, a, 1) - _shift(u, d, a, -1)) / (2.0 * h)
        for a, h in enumerate(space.spacing)
    ]
    lead = u.shape[: u.ndim - d]
    return np.stack([c.reshape(lead + (space.n,)) for c in comps], axis=-1)


def hessian_grid(space, f):
    """Second central differences on the diagonal, symmetric mixed
    differences off it; shape ``(..., n, d, d)`` and exactly symmetric."""
    _require_grid(space)
    d = space.dims
    u = _as_grid(space, f)
    lead = u.shape[: u.ndim - d]
    hs = space.spacing
    out = np.empty(lead + (space.n, d, d))
    for a in range(d):
        diag = (_shift(u, d, a, 1) - 2.0 * u + _shift(u, d, a, -1)) / hs[a] ** 2
        out[..., a, a] = diag.reshape(lead + (space.n,))
        for b in range(a + 1, d):
            pp = _shift(_shift(u, d, a, 1), d, b, 1)
            pm = _shift(_shift(u, d, a, 1), d, b, -1)
            mp = _shift(_shift(u, d, a, -1), d, b, 1)
            mm = _shift(_shift(u, d, a, -1), d, b, -1)
            mixed = ((pp - pm) - (mp - mm)) / (4.0 * hs[a] * hs[b])
            mixed = mixed.reshape(lead + (space.n,))
            out[..., a, b] = mixed
            out[..., b, a] = mixed
    return out


def divergence_grid(space, v):
    """Central-difference divergence of a grid vector field ``(..., n, d)``.

    Exactly minus the adjoint of :func:`gradient_grid` in ``L^2(m)``.
    """
    _require_grid(space)
    d = space.dims
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != d:
        raise ValueError(f"vector field has {v.shape[-1]} components, grid has {d} axes")
    total = 0.0
    for a, h in enumerate(space.spacing):
        comp = _as_grid(space, v[..., a])
        total = total + (_shift(comp, d, a, 1) - _shift(comp, d, a, -1)) / (2.0 * h)
    lead = v.shape[:-2]
    return np.asarray(total).reshape(lead + (space.n,))


def hessian_hs_squared(hess):
    """``|Hess f|²_HS`` per node."""
    return np.sum(hess**2, axis=(-2, -1))


def hessian_quadratic(hess, v, w=None):
    """``Hess(v, w)`` per node for grid vector fields ``v`` and ``w``."""
    w = v if w is None else w
    return np.einsum("...ab,...a,...b->...", hess, v, w)
