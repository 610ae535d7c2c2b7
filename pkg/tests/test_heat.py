import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropic_interp.errors import InvalidTime
from entropic_interp.heat import (
    bakry_emery_defect,
    gaussian_profile,
    heat_apply,
    heat_flow,
    heat_kernel,
    spectral_decompose,
)
from entropic_interp.space import build_torus_grid, build_weighted_graph

from conftest import two_node


@pytest.mark.parametrize("space", [build_torus_grid(1, 16), build_torus_grid(2, (6, 5), (1.0, 1.5)), two_node()])
def test_decomposition_invariants(space):
    sd = spectral_decompose(space)
    assert sd.eigenvalues[0] == 0.0
    assert np.all(sd.eigenvalues >= 0)
    np.testing.assert_allclose(sd.eigenfields[:, 0], 1.0, atol=1e-12)
    assert sd.orthonormality_error() < 1e-10
    assert sd.reconstruction_error(space.laplacian) < 1e-8


def test_weighted_graph_decomposition():
    rng = np.random.default_rng(3)
    edges = [(i, (i + 1) % 12, rng.uniform(0.2, 2), 1.0) for i in range(12)] + [(0, 6, 0.7, 2.0)]
    m = rng.uniform(1, 2, 12)
    sp = build_weighted_graph(12, edges, measure=m / m.sum())
    sd = spectral_decompose(sp)
    assert sd.orthonormality_error() < 1e-10
    assert sd.reconstruction_error(sp.laplacian) < 1e-8


def test_two_node_eigenvalues():
    np.testing.assert_allclose(spectral_decompose(two_node()).eigenvalues, [0.0, 1.0], atol=1e-14)


def test_circle_mode_one_eigenvalue():
    lam = spectral_decompose(build_torus_grid(1, 64)).eigenvalues
    expected = (2 - 2 * np.cos(2 * np.pi / 64)) * 64**2
    assert abs(lam[1] - expected) < 1e-9
    assert abs(lam[2] - expected) < 1e-9


def test_circle_spectrum_closed_form():
    n = 64
    lam = spectral_decompose(build_torus_grid(1, n)).eigenvalues
    k = np.arange(n)
    exact = np.sort((2 - 2 * np.cos(2 * np.pi * k / n)) * n**2)
    np.testing.assert_allclose(lam, exact, rtol=0, atol=1e-10 * exact.max())


def test_constants_preserved():
    sp = build_torus_grid(1, 32)
    np.testing.assert_allclose(heat_apply(sp, 0.3, np.ones(32)), 1.0, atol=1e-12)


def test_two_node_heat():
    for t in (0.1, 0.7, 3.0):
        np.testing.assert_allclose(heat_apply(two_node(), t, [2.0, 0.0]), [1 + np.exp(-t), 1 - np.exp(-t)], atol=1e-14)


def test_two_node_kernel_diagonal():
    t = 0.6
    assert heat_kernel(two_node(), t)[0, 0] == pytest.approx(1 + np.exp(-t), abs=1e-14)


def test_eigenfunction_decay():
    sp = build_torus_grid(1, 64)
    x = sp.coordinates[:, 0]
    lam1 = (2 - 2 * np.cos(2 * np.pi / 64)) * 64**2
    f = np.cos(2 * np.pi * x)
    np.testing.assert_allclose(heat_apply(sp, 0.013, f), np.exp(-lam1 * 0.013) * f, atol=1e-13)


def test_time_zero_identity_and_negative_time():
    sp = build_torus_grid(1, 8)
    f = np.arange(8.0)
    assert np.array_equal(heat_apply(sp, 0.0, f), f)
    with pytest.raises(InvalidTime):
        heat_apply(sp, -1e-3, f)
    with pytest.raises(InvalidTime):
        heat_kernel(sp, 0.0)


def test_kernel_properties(rng):
    sp = build_torus_grid(2, 8)
    t = 0.02
    r = heat_kernel(sp, t)
    m = sp.measure
    np.testing.assert_allclose(r @ m, 1.0, atol=1e-12)
    assert np.max(np.abs(r - r.T)) < 1e-10
    assert r.min() > 0
    f = rng.standard_normal(sp.n)
    np.testing.assert_allclose(r @ (f * m), heat_apply(sp, t, f), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 2.0), st.floats(1e-3, 2.0), st.integers(0, 2**32 - 1))
def test_chapman_kolmogorov(s, t, seed):
    sp = build_torus_grid(1, 32)
    f = np.random.default_rng(seed).standard_normal(sp.n)
    assert np.max(np.abs(heat_apply(sp, s, heat_apply(sp, t, f)) - heat_apply(sp, s + t, f))) < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_mass_and_maximum_principle(t, seed):
    sp = build_torus_grid(1, 24)
    f = np.random.default_rng(seed).uniform(-1, 1, sp.n)
    u = heat_apply(sp, t, f)
    assert abs(sp.integrate(u) - sp.integrate(f)) < 1e-12
    assert u.max() <= f.max() + 1e-12
    assert u.min() >= f.min() - 1e-12


def test_heat_flow_matches_pointwise_apply(rng):
    sp = build_torus_grid(1, 16)
    f = rng.uniform(0, 1, 16)
    f[3] = 0.0
    times = np.array([0.0, 0.01, 0.1])
    out = heat_flow(sp, times, f)
    assert out[0, 3] == 0.0
    for k, t in enumerate(times):
        np.testing.assert_allclose(out[k], heat_apply(sp, t, f), atol=1e-14)


def test_bakry_emery_refines():
    """Γ(h_t f) ≤ h_t Γ(f) up to a defect that shrinks with the mesh."""
    worst = []
    for n in (32, 64, 128):
        sp = build_torus_grid(1, n)
        x = sp.coordinates[:, 0]
        f = np.sin(2 * np.pi * x) + 0.3 * np.cos(6 * np.pi * x)
        worst.append(max(0.0, float(np.max(bakry_emery_defect(sp, 0.01, f)))))
    assert worst[-1] <= worst[0] + 1e-12
    assert worst[-1] < 1e-8


def test_gaussian_profile_sampled():
    prof = gaussian_profile(build_torus_grid(1, 64), 0.01)
    assert np.isfinite(prof["shifted_min"]) and prof["log_r_max"] > prof["log_r_min"]
