"""Diagnostics on entropic interpolations and on ε-sweeps of them.

Time derivatives are centered differences on the path's uniform grid.
Residuals that involve the chain rule are split into a *time* part (finite
difference minus the exact semi-discrete derivative, obtained in closed form
from ``∂_t f_t = (ε/2)Δf_t`` and ``∂_t g_t = -(ε/2)Δg_t``) and a *space*
part (what is left, independent of ``Δt``).  On a fixed graph the space part
is the discrete chain-rule defect and does not vanish as ``Δt → 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import xlogy

from .calculus import gamma, gamma2, gradient_grid, hessian_grid, hessian_hs_squared, hessian_quadratic
from .errors import (
    BackendUnsupported,
    InvalidGrid,
    InvalidInput,
    InvalidPairing,
    InvalidSweep,
    PositivityViolated,
)
from .heat import TINY, bakry_emery_defect, heat_apply, heat_flow, spectral_decompose
from .ot_baseline import c_transform, hopf_lax, solve_w2_exact

DEFAULT_DELTA = 0.05
DEFAULT_BASIS = 9


def _uniform_dt(path, min_interior=3):
    dt = path.dt
    if dt is None:
        raise InvalidGrid("time grid is not uniform")
    if path.times.size - 2 < min_interior:
        raise InvalidGrid(f"need at least {min_interior} interior times, got {path.times.size - 2}")
    return dt


def _d1(arr, dt):
    return (arr[2:] - arr[:-2]) / (2.0 * dt)


def _d2(arr, dt):
    return (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dt**2


def _sup(arr):
    return np.max(np.abs(arr), axis=-1)


def _require_positive(path, index=slice(None)):
    rho = path.rho[index]
    if path.floored or np.any(rho <= TINY):
        raise PositivityViolated("density vanishes (or was floored) at some node on the requested times")


def time_derivatives(space, path):
    """Exact semi-discrete ``∂_t`` of ``φ``, ``ψ`` and ``ρ`` on the path grid."""
    eps = path.epsilon
    lf = space.apply_laplacian(path.f)
    lg = space.apply_laplacian(path.g)
    dphi = 0.5 * eps**2 * lf / path.f
    dpsi = -0.5 * eps**2 * lg / path.g
    drho = 0.5 * eps * (lf * path.g - path.f * lg)
    return dphi, dpsi, drho


# ---------------------------------------------------------------------------
# evolution equations


@dataclass
class HjbResiduals:
    """Sup-norm residuals of the two Hamilton-Jacobi-Bellman equations at
    interior times, with their time/space split."""

    times: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    phi_time: np.ndarray
    psi_time: np.ndarray
    phi_space: np.ndarray
    psi_space: np.ndarray


def hjb_residuals(space, path):
    """``‖D_tφ - ½Γ(φ) - (ε/2)Δφ‖_∞`` and ``‖D_tψ + ½Γ(ψ) + (ε/2)Δψ‖_∞``."""
    dt = _uniform_dt(path)
    eps = path.epsilon
    inner = slice(1, -1)
    phi, psi = path.phi[inner], path.psi[inner]
    dphi, dpsi, _ = time_derivatives(space, path)
    fd_phi = _d1(path.phi, dt)
    fd_psi = _d1(path.psi, dt)
    rhs_phi = 0.5 * gamma(space, phi) + 0.5 * eps * space.apply_laplacian(phi)
    rhs_psi = -0.5 * gamma(space, psi) - 0.5 * eps * space.apply_laplacian(psi)
    return HjbResiduals(
        times=path.times[inner],
        phi=_sup(fd_phi - rhs_phi),
        psi=_sup(fd_psi - rhs_psi),
        phi_time=_sup(fd_phi - dphi[inner]),
        psi_time=_sup(fd_psi - dpsi[inner]),
        phi_space=_sup(dphi[inner] - rhs_phi),
        psi_space=_sup(dpsi[inner] - rhs_psi),
    )


@dataclass
class ContinuityResiduals:
    """Weak continuity residual over the first eigenfields, with its split,
    and the pointwise identity ``D_tρ = (ε/2)(Δf·g - f·Δg)``."""

    times: np.ndarray
    weak: np.ndarray
    weak_time: np.ndarray
    weak_space: np.ndarray
    pointwise: np.ndarray
    basis_size: int


def continuity_residual(space, path, basis_size=DEFAULT_BASIS):
    """``max_k |D_t ∫ e_k ρ dm - ∫ Γ(e_k, θ) ρ dm|`` over ``k < basis_size``."""
    dt = _uniform_dt(path)
    sd = spectral_decompose(space)
    basis_size = int(min(basis_size, space.n))
    e = sd.eigenfields[:, :basis_size]
    m = space.measure
    inner = slice(1, -1)
    _, _, drho = time_derivatives(space, path)

    moments = (path.rho * m) @ e  # (T, k)
    fd = _d1(moments, dt)
    exact = (drho[inner] * m) @ e
    rho_i, theta_i = path.rho[inner], path.theta[inner]
    # ∫ Γ(e_k, θ) ρ dm for every k at once, via edge differences
    de = space.edge_differences(e.T)  # (k, E)
    dth = space.edge_differences(theta_i)  # (T, E)
    src, _, rate = space._edge_arrays
    # Γ(e,θ)(i) m_i = ½ Σ_j w_ij de dθ, so ∫Γ(e,θ)ρ dm = ½ Σ_edges m_src rate ρ_src de dθ
    edge_w = 0.5 * m[src] * rate
    flux = (dth * rho_i[:, src] * edge_w) @ de.T  # (T, k)
    pointwise = _d1(path.rho, dt) - drho[inner]
    return ContinuityResiduals(
        times=path.times[inner],
        weak=_sup(fd - flux),
        weak_time=_sup(fd - exact),
        weak_space=_sup(exact - flux),
        pointwise=_sup(pointwise),
        basis_size=basis_size,
    )


def acceleration(space, path, index=slice(None)):
    """``a_t = -(ε²/8)(2Δ log ρ_t + Γ(log ρ_t))`` on the selected times."""
    _require_positive(path, index)
    lr = path.log_rho[index]
    return -(path.epsilon**2 / 8.0) * (2.0 * space.apply_laplacian(lr) + gamma(space, lr))


@dataclass
class ThetaResiduals:
    times: np.ndarray
    total: np.ndarray
    time: np.ndarray
    space: np.ndarray


def theta_residual(space, path):
    """``‖D_tθ + ½Γ(θ) - a_t‖_∞`` at interior times, with its split."""
    dt = _uniform_dt(path)
    inner = slice(1, -1)
    dphi, dpsi, _ = time_derivatives(space, path)
    dtheta = 0.5 * (dpsi - dphi)[inner]
    fd = _d1(path.theta, dt)
    rhs = acceleration(space, path, inner) - 0.5 * gamma(space, path.theta[inner])
    return ThetaResiduals(path.times[inner], _sup(fd - rhs), _sup(fd - dtheta), _sup(dtheta - rhs))


def refinement_ratio(coarse_times, coarse, fine_times, fine, delta=DEFAULT_DELTA):
    """Two-grid ratio ``sup_window |coarse| / sup_window |fine|``."""
    slack = 1e-9

    def peak(times, values):
        sel = (times >= delta - slack) & (times <= 1.0 - delta + slack)
        return float(np.max(np.abs(np.asarray(values)[sel])))

    top = peak(np.asarray(coarse_times), coarse)
    bottom = peak(np.asarray(fine_times), fine)
    if bottom == 0.0:
        return np.inf if top > 0 else np.nan
    return top / bottom


# ---------------------------------------------------------------------------
# entropy


@dataclass
class EntropyProfile:
    """``H(t) = ∫ρ log ρ dm`` on all times; derivatives on interior times.

    ``H1_a = ∫Γ(ρ, θ) dm`` and ``H1_b = (1/2ε)∫(Γ(ψ) - Γ(φ))ρ dm`` are the two
    closed forms of ``H'``; ``H1_edge`` is ``H1_b`` with ``ρ`` averaged on
    edges by the logarithmic mean, for which the discrete chain rule is
    exact.  ``H2_a = ∫(Γ₂(θ) + (ε²/4)Γ₂(log ρ))ρ dm`` and
    ``H2_b = ½∫(Γ₂(φ) + Γ₂(ψ))ρ dm``.  ``*_exact`` are the semi-discrete
    derivatives of ``H`` along the computed path.
    """

    times: np.ndarray
    H: np.ndarray
    interior: np.ndarray
    H1_a: np.ndarray
    H1_b: np.ndarray
    H1_edge: np.ndarray
    H1_fd: np.ndarray
    H1_exact: np.ndarray
    H2_a: np.ndarray
    H2_b: np.ndarray
    H2_fd: np.ndarray
    H2_exact: np.ndarray


def _log_mean(x, y):
    x, y = np.broadcast_arrays(x, y)
    out = np.array(x, dtype=float, copy=True)
    diff = np.abs(x - y) > 1e-12 * np.maximum(x, y)
    out[diff] = (x[diff] - y[diff]) / (np.log(x[diff]) - np.log(y[diff]))
    close = ~diff
    out[close] = 0.5 * (x[close] + y[close])
    return out


def entropy_profile(space, path):
    dt = _uniform_dt(path)
    eps = path.epsilon
    inner = slice(1, -1)
    _require_positive(path, inner)
    m = space.measure
    H = xlogy(path.rho, path.rho) @ m

    rho, theta, phi, psi = path.rho[inner], path.theta[inner], path.phi[inner], path.psi[inner]
    lr = path.log_rho[inner]
    H1_a = gamma(space, rho, theta) @ m
    H1_b = ((gamma(space, psi) - gamma(space, phi)) * rho) @ m / (2.0 * eps)
    src, dst, rate = space._edge_arrays
    dpsi, dphi = space.edge_differences(psi), space.edge_differences(phi)
    lm = _log_mean(rho[:, src], rho[:, dst])
    H1_edge = ((dpsi**2 - dphi**2) * lm) @ (0.5 * m[src] * rate) / (2.0 * eps)

    H2_a = ((gamma2(space, theta) + 0.25 * eps**2 * gamma2(space, lr)) * rho) @ m
    H2_b = (0.5 * (gamma2(space, phi) + gamma2(space, psi)) * rho) @ m

    L = space.apply_laplacian
    f, g = path.f[inner], path.g[inner]
    lf, lg = L(f), L(g)
    d1 = 0.5 * eps * (lf * g - f * lg)
    d2 = 0.25 * eps**2 * (L(lf) * g - 2.0 * lf * lg + f * L(lg))
    H1_exact = (d1 * lr) @ m
    H2_exact = (d2 * lr) @ m + (d1**2 / rho) @ m
    return EntropyProfile(
        times=path.times,
        H=H,
        interior=path.times[inner],
        H1_a=H1_a,
        H1_b=H1_b,
        H1_edge=H1_edge,
        H1_fd=_d1(H, dt),
        H1_exact=H1_exact,
        H2_a=H2_a,
        H2_b=H2_b,
        H2_fd=_d2(H, dt),
        H2_exact=H2_exact,
    )


# ---------------------------------------------------------------------------
# vanishing and bounded quantities


@dataclass
class Vanishing:
    """Acceleration on the window ``[δ, 1-δ]`` and the integrals V1..V4."""

    times: np.ndarray
    accel: np.ndarray
    V1: float
    V2: float
    V3: float
    V4: float


def acceleration_and_vanishing(space, path, delta=DEFAULT_DELTA):
    idx = path.window(delta)
    if idx.size < 2:
        raise InvalidGrid(f"window [{delta}, {1 - delta}] holds fewer than two grid times")
    _require_positive(path, idx)
    eps2 = path.epsilon**2
    m = space.measure
    rho = path.rho[idx]
    lr = path.log_rho[idx]
    lap = np.abs(space.apply_laplacian(lr))
    grad = np.sqrt(gamma(space, lr))
    t = path.times[idx]

    def integral(values):
        return float(eps2 * trapezoid((values * rho) @ m, t))

    return Vanishing(
        times=t,
        accel=acceleration(space, path, idx),
        V1=integral(lap),
        V2=integral(grad**2),
        V3=integral(lap * grad),
        V4=integral(grad**3),
    )


def _check_sweep(paths):
    if not paths:
        raise InvalidSweep("empty sweep")
    ref = paths[0]
    for p in paths[1:]:
        if p.times.shape != ref.times.shape or np.max(np.abs(p.times - ref.times)) > 1e-12:
            raise InvalidSweep("paths in a sweep must share one time grid")
        for k in (0, -1):
            if np.max(np.abs(p.rho[k] - ref.rho[k])) > 1e-8 * (1.0 + np.max(np.abs(ref.rho[k]))):
                raise InvalidSweep("paths in a sweep must share their marginals")


def _window_mask(times, lo, hi):
    slack = 1e-9
    return (times >= lo - slack) & (times <= hi + slack)


def bounds_report(space, paths, delta=DEFAULT_DELTA):
    """Per-ε trackers for the uniform bounds along a sweep.

    Returns a list of dicts (one per path) with keys ``epsilon``,
    ``dens_sup``, ``lip_phi``, ``lip_psi``, ``lap_floor``, ``kinetic``,
    ``blap`` and, on grids, ``bhess``.
    """
    _check_sweep(paths)
    m = space.measure
    rows = []
    for p in paths:
        eps = p.epsilon
        t = p.times
        late = _window_mask(t, delta, 1.0)
        early = _window_mask(t, 0.0, 1.0 - delta)
        mid = p.window(delta)
        row = {"epsilon": eps, "dens_sup": float(np.max(p.rho))}
        row["lip_phi"] = float(np.max(np.sqrt(gamma(space, p.phi[late]))))
        row["lip_psi"] = float(np.max(np.sqrt(gamma(space, p.psi[early]))))
        row["lap_floor"] = float(np.min(space.apply_laplacian(p.phi[late])))

        full = np.all(np.isfinite(p.theta)) and not p.floored and np.all(p.rho > 0)
        kin_idx = np.arange(t.size) if full else mid
        lr = p.log_rho[kin_idx]
        dens = p.rho[kin_idx]
        kin = ((gamma(space, p.theta[kin_idx]) + eps**2 * gamma(space, lr)) * dens) @ m
        row["kinetic"] = float(trapezoid(kin, t[kin_idx]))
        row["kinetic_window"] = "full" if full else "delta"

        lr = p.log_rho[mid]
        dens = p.rho[mid]
        th = p.theta[mid]
        blap = ((space.apply_laplacian(th) ** 2 + eps**2 * space.apply_laplacian(lr) ** 2) * dens) @ m
        row["blap"] = float(trapezoid(blap, t[mid]))
        if space.is_grid:
            hs = hessian_hs_squared(hessian_grid(space, th)) + eps**2 * hessian_hs_squared(hessian_grid(space, lr))
            row["bhess"] = float(trapezoid((hs * dens) @ m, t[mid]))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# heat-flow gradient estimates


@dataclass
class GradientEstimates:
    """Margins of Hamilton's estimate and sweep trackers.

    ``hamilton_excess[k]`` is ``max_x (tΓ(log u_t) - log(‖u₀‖_∞/u_t))`` at
    ``times[k]``; ``tau`` is its positive part over all times.
    ``eps_grad[j]`` is ``ε‖Γ(log h_{εt} u₀)^{1/2}‖_∞`` at ``t = t_grad`` and
    ``li_yau[j]`` is ``min_{t ≥ δ} ε min_x Δ log h_{εt} u₀`` over ``times``.
    """

    times: np.ndarray
    hamilton_excess: np.ndarray
    tau: float
    epsilons: np.ndarray
    eps_grad: np.ndarray
    li_yau: np.ndarray
    bakry_emery: float


def gradient_estimates_check(space, u0, times, epsilons, delta=DEFAULT_DELTA, t_grad=0.5):
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (space.n,) or not np.all(np.isfinite(u0)) or np.any(u0 <= 0):
        raise InvalidInput("u0 must be a finite, strictly positive field")
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise InvalidInput("gradient estimates need times > 0")
    epsilons = np.asarray(epsilons, dtype=float)
    top = float(np.max(u0))

    u = heat_flow(space, times, u0)
    logu = np.log(u)
    excess = times[:, None] * gamma(space, logu) - np.log(top / u)
    hamilton = np.max(excess, axis=1)
    be = max(float(np.max(bakry_emery_defect(space, t, u0))) for t in times)

    eps_grad, li_yau = [], []
    late = times[times >= delta]
    for eps in epsilons:
        ug = heat_apply(space, eps * t_grad, u0)
        eps_grad.append(eps * float(np.max(np.sqrt(gamma(space, np.log(ug))))))
        ul = heat_flow(space, eps * late, u0) if late.size else np.ones((1, space.n))
        li_yau.append(eps * float(np.min(space.apply_laplacian(np.log(ul)))))
    return GradientEstimates(
        times=times,
        hamilton_excess=hamilton,
        tau=float(max(0.0, np.max(hamilton))),
        epsilons=epsilons,
        eps_grad=np.array(eps_grad),
        li_yau=np.array(li_yau),
        bakry_emery=be,
    )


# ---------------------------------------------------------------------------
# ε → 0 limits


def _time_index(path, t):
    k = int(np.argmin(np.abs(path.times - t)))
    if abs(path.times[k] - t) > 1e-9:
        raise InvalidGrid(f"time {t} is not on the path grid")
    return k


def limit_checks(space, paths, solutions, lp, delta=DEFAULT_DELTA, intermediate_lp=True):
    """Per-ε defects that vanish in the limit ε ↓ 0.

    ``hopflax_defect``: ``sup|(-φ_1) - Q_{1-δ}(-φ_δ)|``.
    ``concavity_defect``: ``sup|φ̂^{cc} - φ̂|`` for ``φ̂ = -(1-δ)ψ_δ``.
    ``duality_defect``: ``|∫φ_δ dμ_δ - ∫φ_1 dμ_1 - W₂²(μ_δ, μ_1)/(2(1-δ))|``.
    ``eps_cost_gap``: ``|εI_ε - ½W₂²|`` with ``W₂²`` from ``lp``.
    """
    _check_sweep(paths)
    if len(solutions) != len(paths):
        raise InvalidSweep("one solution per path is required")
    m = space.measure
    rows = []
    for p, sol in zip(paths, solutions):
        if np.max(np.abs(lp.plan.first_marginal - sol.rho0 * m)) > 1e-9 or np.max(
            np.abs(lp.plan.second_marginal - sol.rho1 * m)
        ) > 1e-9:
            raise InvalidPairing("LP solution belongs to different marginals")
        eps = p.epsilon
        k0, k1 = _time_index(p, delta), _time_index(p, 1.0)
        span = p.times[k1] - p.times[k0]
        hl = float(np.max(np.abs(-p.phi[k1] - hopf_lax(space, -p.phi[k0], span))))
        pot = -(1.0 - p.times[k0]) * p.psi[k0]
        conc = float(np.max(np.abs(c_transform(space, c_transform(space, pot)) - pot)))
        s0 = sol.rho0 > 0
        s1 = sol.rho1 > 0
        cost = float(np.dot(sol.log_f[s0], (sol.rho0 * m)[s0]) + np.dot(sol.log_g[s1], (sol.rho1 * m)[s1]))
        row = {
            "epsilon": eps,
            "hopflax_defect": hl,
            "concavity_defect": conc,
            "eps_cost": eps * cost,
            "eps_cost_gap": abs(eps * cost - 0.5 * lp.w2_squared),
            "half_w2": 0.5 * lp.w2_squared,
        }
        if intermediate_lp:
            mid = solve_w2_exact(space, p.rho[k0], p.rho[k1])
            lhs = float(p.phi[k0] @ (p.rho[k0] * m) - p.phi[k1] @ (p.rho[k1] * m))
            row["duality_defect"] = abs(lhs - mid.w2_squared / (2.0 * span))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# second-order differentiation formula


@dataclass
class SecondOrder:
    """Decomposition of ``d²/dt² ∫hρ_t dm`` at interior times of one path."""

    epsilon: float
    times: np.ndarray
    I: np.ndarray
    I2_fd: np.ndarray
    T_H: np.ndarray
    T_A: np.ndarray
    window: np.ndarray = field(repr=False)

    @property
    def defect(self):
        return np.abs(self.I2_fd - self.T_H - self.T_A)

    @property
    def relative_defect(self):
        return self.defect / (1.0 + np.abs(self.I2_fd))

    @property
    def accel_L1(self):
        w = self.window
        return float(trapezoid(np.abs(self.T_A[w]), self.times[w]))

    @property
    def hessian_gap(self):
        return np.abs(self.I2_fd - self.T_H)


def second_order_check(space, paths, h, delta=DEFAULT_DELTA):
    if not space.is_grid:
        raise BackendUnsupported("second-order check needs a torus grid (Hessian of h)")
    _check_sweep(paths)
    h = np.asarray(h, dtype=float)
    m = space.measure
    hess = hessian_grid(space, h)
    out = []
    for p in paths:
        dt = _uniform_dt(p)
        inner = slice(1, -1)
        _require_positive(p, inner)
        I = p.rho @ (h * m)
        rho = p.rho[inner]
        grad_theta = gradient_grid(space, p.theta[inner])
        T_H = (hessian_quadratic(hess[None], grad_theta) * rho) @ m
        a = acceleration(space, p, inner)
        T_A = (gamma(space, np.broadcast_to(h, a.shape), a) * rho) @ m
        t = p.times[inner]
        window = _window_mask(t, delta, 1.0 - delta)
        out.append(SecondOrder(p.epsilon, t, I, _d2(I, dt), T_H, T_A, window))
    return out


# ---------------------------------------------------------------------------
# one-path summary


@dataclass
class PathDiagnostics:
    epsilon: float
    hjb: HjbResiduals
    continuity: ContinuityResiduals
    theta: ThetaResiduals
    entropy: EntropyProfile
    vanishing: Vanishing

    def table(self):
        """Columns of the per-path CSV, aligned on interior times."""
        return {
            "t": self.entropy.interior,
            "H": self.entropy.H[1:-1],
            "H1_a": self.entropy.H1_a,
            "H1_b": self.entropy.H1_b,
            "H2_a": self.entropy.H2_a,
            "H2_b": self.entropy.H2_b,
            "H2_fd": self.entropy.H2_fd,
            "res_phi": self.hjb.phi,
            "res_psi": self.hjb.psi,
            "res_cont": self.continuity.weak,
            "res_theta": self.theta.total,
        }


def diagnose_path(space, path, delta=DEFAULT_DELTA, basis_size=DEFAULT_BASIS):
    return PathDiagnostics(
        epsilon=path.epsilon,
        hjb=hjb_residuals(space, path),
        continuity=continuity_residual(space, path, basis_size),
        theta=theta_residual(space, path),
        entropy=entropy_profile(space, path),
        vanishing=acceleration_and_vanishing(space, path, delta),
    )
