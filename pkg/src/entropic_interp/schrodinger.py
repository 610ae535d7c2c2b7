"""Schrödinger system, entropic interpolation, plans and entropic cost.

For ``ε > 0`` we look for ``f, g >= 0`` with

    ρ₀ = f · h_{ε/2} g,        ρ₁ = g · h_{ε/2} f,

by iterative proportional fitting (Sinkhorn), normalized so that
``∫ log(h_{ε/2} f) ρ₁ dm = 0``.  The entropic interpolation is then
``ρ_t = h_{tε/2} f · h_{(1-t)ε/2} g`` with potentials
``φ_t = ε log h_{tε/2} f`` and ``ψ_t = ε log h_{(1-t)ε/2} g``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidDensity, InvalidEpsilon, InvalidGrid, NoConvergence, ZeroDensityAtEndpoint
from .heat import TINY, heat_apply, heat_flow, heat_kernel

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
LOG_DOMAIN_FACTOR = 0.1
DENSITY_TOL = 1e-10


@dataclass
class SchrodingerSolution:
    """Normalized solution ``(f, g)`` of the Schrödinger system for one ``ε``.

    ``log_f`` and ``log_g`` hold ``-inf`` off the supports of ``ρ₀``, ``ρ₁``.
    """

    epsilon: float
    f: np.ndarray
    g: np.ndarray
    log_f: np.ndarray
    log_g: np.ndarray
    rho0: np.ndarray
    rho1: np.ndarray
    iterations: int
    marginal_residual: float
    normalization_residual: float
    tol: float
    log_domain: bool
    residual_history: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


@dataclass
class InterpolationPath:
    """Entropic interpolation sampled on a time grid.

    All field arrays have shape ``(len(times), n)``.
    """

    epsilon: float
    times: np.ndarray
    f: np.ndarray
    g: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    floored: int = 0

    @property
    def log_rho(self):
        return (self.phi + self.psi) / self.epsilon

    @property
    def dt(self):
        """Uniform time step, or ``None`` if the grid is not uniform."""
        steps = np.diff(self.times)
        if steps.size == 0 or np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, abs(steps[0])):
            return None
        return float((self.times[-1] - self.times[0]) / (self.times.size - 1))

    def window(self, delta):
        """Indices of grid times in ``[delta, 1 - delta]`` (up to round-off)."""
        slack = 1e-9
        return np.nonzero((self.times >= delta - slack) & (self.times <= 1.0 - delta + slack))[0]


@dataclass
class TransportPlan:
    """Coupling weights ``γ_xy`` on node pairs (already including ``m_x m_y``)."""

    weights: np.ndarray

    @property
    def first_marginal(self):
        return self.weights.sum(axis=1)

    @property
    def second_marginal(self):
        return self.weights.sum(axis=0)

    @property
    def transpose(self):
        return TransportPlan(self.weights.T.copy())


def check_density(space, rho, name="density"):
    """Validate a density against ``space.measure``; returns it as an array."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (space.n,):
        raise InvalidDensity(f"{name} has shape {rho.shape}, expected ({space.n},)")
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise InvalidDensity(f"{name} must be finite and nonnegative")
    mass = float(np.dot(rho, space.measure))
    if abs(mass - 1.0) > DENSITY_TOL:
        raise InvalidDensity(f"{name} integrates to {mass!r}, not 1", mass=mass)
    return rho


def normalize_density(space, values):
    """Scale nonnegative node values to a density against ``space.measure``."""
    values = np.asarray(values, dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidDensity("density values must be finite and nonnegative")
    mass = float(np.dot(values, space.measure))
    if mass <= 0:
        raise InvalidDensity("density has zero mass")
    return values / mass


def log_domain_threshold(space):
    return LOG_DOMAIN_FACTOR * space.diameter**2


def solve_schrodinger_system(
    space,
    rho0,
    rho1,
    epsilon,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    log_domain=None,
):
    """Iterative proportional fitting for the Schrödinger system.

    Parameters
    ----------
    space : Space
    rho0, rho1 : array_like
        Densities against ``space.measure``; zeros are allowed.
    epsilon : float
        Temperature; the reference kernel is ``r_{ε/2}``.
    tol : float
        Stop once both marginal constraints hold to this sup-norm residual.
    max_iter : int
    log_domain : bool, optional
        Force or forbid log-domain iterations.  By default they are used
        when ``epsilon < 0.1 · diameter²``.

    Returns
    -------
    SchrodingerSolution

    Raises
    ------
    InvalidEpsilon
        If ``epsilon <= 0``.
    NoConvergence
        If ``max_iter`` iterations do not reach ``tol``.
    """
    epsilon = float(epsilon)
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InvalidEpsilon(f"epsilon must be positive, got {epsilon}")
    rho0 = check_density(space, rho0, "rho0")
    rho1 = check_density(space, rho1, "rho1")
    if log_domain is None:
        log_domain = epsilon < log_domain_threshold(space)

    s0, s1 = rho0 > 0, rho1 > 0
    kernel = heat_kernel(space, epsilon / 2)
    if log_domain:
        u, v, history = _ipfp_log(kernel, space.measure, rho0, rho1, s0, s1, tol, max_iter)
    else:
        u, v, history = _ipfp_plain(kernel, space.measure, rho0, rho1, s0, s1, tol, max_iter)
    iterations = history.size
    if iterations == 0 or not history[-1] < tol:
        last = float(history[-1]) if history.size else float("nan")
        raise NoConvergence(
            f"IPFP did not reach tol={tol:g} in {max_iter} iterations (residual {last:.3e})",
            residual=last,
            iterations=iterations,
            epsilon=epsilon,
        )

    # (f, g) -> (cf, g/c) with ∫ log(h_{ε/2}(cf)) ρ₁ dm = 0
    log_hf = _log_apply(kernel, space.measure, u)
    shift = -float(np.dot(log_hf[s1], (rho1 * space.measure)[s1]))
    u = np.where(s0, u + shift, -np.inf)
    v = np.where(s1, v - shift, -np.inf)
    f = np.where(s0, np.exp(u), 0.0)
    g = np.where(s1, np.exp(v), 0.0)

    hf = heat_apply(space, epsilon / 2, f)
    hg = heat_apply(space, epsilon / 2, g)
    residual = max(
        float(np.max(np.abs(f * hg - rho0))),
        float(np.max(np.abs(g * hf - rho1))),
    )
    norm_residual = abs(float(np.dot(np.log(np.maximum(hf, TINY))[s1], (rho1 * space.measure)[s1])))
    log.debug("eps=%g: %d iterations, residual %.3e", epsilon, iterations, residual)
    return SchrodingerSolution(
        epsilon=epsilon,
        f=f,
        g=g,
        log_f=u,
        log_g=v,
        rho0=rho0,
        rho1=rho1,
        iterations=iterations,
        marginal_residual=residual,
        normalization_residual=norm_residual,
        tol=float(tol),
        log_domain=bool(log_domain),
        residual_history=history,
    )


def _ipfp_plain(kernel, m, rho0, rho1, s0, s1, tol, max_iter):
    op = kernel * m[None, :]
    g = np.ones_like(rho1)
    hg = op @ g
    history = []
    f = np.zeros_like(rho0)
    for _ in range(max_iter):
        f = np.where(s0, rho0 / np.where(s0, hg, 1.0), 0.0)
        hf = op @ f
        g = np.where(s1, rho1 / np.where(s1, hf, 1.0), 0.0)
        hg = op @ g
        res = max(np.max(np.abs(f * hg - rho0)), np.max(np.abs(g * hf - rho1)))
        history.append(res)
        if not np.isfinite(res):
            break
        if res < tol:
            break
    with np.errstate(divide="ignore"):
        return np.log(f), np.log(g), np.asarray(history)


def _log_apply(kernel, m, logvals):
    # log Σ_y r[x](y) m_y exp(logvals_y)
    return logsumexp(np.log(kernel) + (np.log(m) + logvals)[None, :], axis=1)


def _ipfp_log(kernel, m, rho0, rho1, s0, s1, tol, max_iter):
    log_op = np.log(kernel) + np.log(m)[None, :]
    with np.errstate(divide="ignore"):
        log_rho0, log_rho1 = np.log(rho0), np.log(rho1)
    v = np.zeros_like(rho1)
    u = np.full_like(rho0, -np.inf)
    lhg = logsumexp(log_op + v[None, :], axis=1)
    history = []
    for _ in range(max_iter):
        u = np.where(s0, log_rho0 - lhg, -np.inf)
        lhf = logsumexp(log_op + u[None, :], axis=1)
        v = np.where(s1, log_rho1 - lhf, -np.inf)
        lhg = logsumexp(log_op + v[None, :], axis=1)
        res0 = np.max(np.abs(np.where(s0, np.exp(u + lhg), 0.0) - rho0))
        res1 = np.max(np.abs(np.where(s1, np.exp(v + lhf), 0.0) - rho1))
        res = max(res0, res1)
        history.append(res)
        if not np.isfinite(res) or res < tol:
            break
    return u, v, np.asarray(history)


def uniform_time_grid(steps=200):
    if steps < 2:
        raise InvalidGrid(f"time grid needs at least 2 steps, got {steps}")
    return np.linspace(0.0, 1.0, int(steps) + 1)


def interpolate(space, solution, time_grid=None, floor_mode=False):
    """Entropic interpolation on ``time_grid`` (default: 200 uniform steps).

    Endpoint ``t = 0`` needs ``ρ₀ > 0`` everywhere and ``t = 1`` needs
    ``ρ₁ > 0``, unless ``floor_mode`` is set, in which case vanishing values
    are floored at the smallest positive normal float before taking logs.
    Interior values that round to zero are always floored and counted in
    ``path.floored``.
    """
    times = uniform_time_grid() if time_grid is None else np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise InvalidGrid("time grid must be a non-empty 1-d array")
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > 1:
        raise InvalidGrid("time grid must be strictly increasing inside [0, 1]")
    eps = solution.epsilon
    if not floor_mode:
        if times[0] == 0.0 and np.any(solution.rho0 <= 0):
            raise ZeroDensityAtEndpoint("rho0 vanishes somewhere; t = 0 needs floor_mode")
        if times[-1] == 1.0 and np.any(solution.rho1 <= 0):
            raise ZeroDensityAtEndpoint("rho1 vanishes somewhere; t = 1 needs floor_mode")

    f_t = heat_flow(space, times * eps / 2, solution.f)
    g_t = heat_flow(space, (1.0 - times) * eps / 2, solution.g)
    # zeros of f at t = 0 and of g at t = 1 are the marginals' own; not counted
    inner = (times > 0.0) & (times < 1.0)
    floored = int(np.count_nonzero(f_t[inner] < TINY) + np.count_nonzero(g_t[inner] < TINY))
    floored += int(np.count_nonzero(f_t[times == 1.0] < TINY) + np.count_nonzero(g_t[times == 0.0] < TINY))
    f_t = np.maximum(f_t, TINY)
    g_t = np.maximum(g_t, TINY)
    rho = f_t * g_t
    phi = eps * np.log(f_t)
    psi = eps * np.log(g_t)
    # exact log f at t = 0 and log g at t = 1 keep full precision there
    if times[0] == 0.0:
        phi[0] = np.where(solution.rho0 > 0, eps * solution.log_f, phi[0])
    if times[-1] == 1.0:
        psi[-1] = np.where(solution.rho1 > 0, eps * solution.log_g, psi[-1])
    theta = (psi - phi) / 2
    return InterpolationPath(eps, times, f_t, g_t, rho, phi, psi, theta, floored)


def entropic_plan(space, solution):
    """``γ_xy = f(x) g(y) r_{ε/2}[x](y) m_x m_y``."""
    kernel = heat_kernel(space, solution.epsilon / 2)
    m = space.measure
    weights = (solution.f * m)[:, None] * kernel * (solution.g * m)[None, :]
    return TransportPlan(weights)


def reference_plan(space, epsilon):
    """Reference coupling ``R^{ε/2}`` with entries ``r_{ε/2}[x](y) m_x m_y``."""
    m = space.measure
    return heat_kernel(space, epsilon / 2) * np.outer(m, m)


def relative_entropy(p, q):
    """``Σ p log(p / q)`` with ``0 log 0 = 0``; ``inf`` if ``p`` charges a
    ``q``-null atom."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("relative_entropy needs arrays of equal size")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("relative_entropy needs nonnegative weights")
    charged = p > 0
    if np.any(q[charged] <= 0):
        return math.inf
    return float(np.sum(p[charged] * (np.log(p[charged]) - np.log(q[charged]))))


def endpoint_potentials(solution):
    """``(φ₀, ψ₁) = (ε log f, ε log g)`` with ``-inf`` off the supports."""
    eps = solution.epsilon
    return eps * solution.log_f, eps * solution.log_g


def entropic_cost(space, solution, check=True, check_tol=1e-8):
    """Entropic cost ``I_ε = (1/ε)(∫ φ₀ ρ₀ dm + ∫ ψ₁ ρ₁ dm)``.

    With ``check`` the value is compared against the entrywise relative
    entropy ``H(γ | R^{ε/2})`` and a warning is raised on disagreement.
    """
    m = space.measure
    s0, s1 = solution.rho0 > 0, solution.rho1 > 0
    value = float(
        np.dot(solution.log_f[s0], (solution.rho0 * m)[s0])
        + np.dot(solution.log_g[s1], (solution.rho1 * m)[s1])
    )
    if check:
        entrywise = relative_entropy(entropic_plan(space, solution).weights, reference_plan(space, solution.epsilon))
        if not abs(entrywise - value) <= check_tol * (1.0 + abs(value)):
            warnings.warn(
                f"entropic cost mismatch: potentials give {value!r}, plan entropy gives {entrywise!r}",
                RuntimeWarning,
                stacklevel=2,
            )
    return value


def density_sup_ratio(path, rho0, rho1):
    """``sup_t ‖ρ_t‖_∞ / max(‖ρ₀‖_∞, ‖ρ₁‖_∞)``."""
    return float(np.max(path.rho) / max(np.max(rho0), np.max(rho1)))
