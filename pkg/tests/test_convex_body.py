import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from lpflow import (
    ConvexityError,
    SupportField,
    ball,
    ball_volume,
    curvature,
    duality_residual,
    ellipsoid,
    embed,
    lp_barycenter,
    normalize_to_unit_volume,
    polar,
    recenter,
    volume,
)
from lpflow.convex_body import centro_affine
from conftest import grid, real_harmonic

axes3 = st.tuples(*[st.floats(0.6, 1.6)] * 3)
shift3 = st.tuples(*[st.floats(-0.3, 0.3)] * 3)


def ellipsoid_s2_oracle(g, axes):
    """1/K at the point with normal u on the implicit surface sum x_i^2/a_i^2 = 1."""
    a = np.asarray(axes, float)
    u = g.nodes
    h = np.sqrt(((a * u) ** 2).sum(1))
    x = a**2 * u / h[:, None]
    K = 1.0 / (np.prod(a) ** 2 * ((x**2 / a**4).sum(1)) ** 2)
    return 1.0 / K


def mesh_volume(h, nlat=200):
    """Signed volume of a fine triangulation of x(u) sampled by interpolation."""
    g = h.grid
    nlon = 2 * nlat
    th = np.linspace(0, math.pi, nlat + 1)[1:-1]
    ph = np.linspace(0, 2 * math.pi, nlon, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    dirs = np.vstack([[0, 0, 1.0], dirs, [0, 0, -1.0]])
    X = g.interpolate(embed(h), dirs)
    idx = 1 + np.arange((nlat - 1) * nlon).reshape(nlat - 1, nlon)
    nx = np.roll(idx, -1, axis=1)
    tris = [np.stack([idx[:-1], idx[1:], nx[:-1]], -1).reshape(-1, 3),
            np.stack([idx[1:], nx[1:], nx[:-1]], -1).reshape(-1, 3),
            np.stack([np.zeros(nlon, int), idx[0], nx[0]], -1),
            np.stack([np.full(nlon, len(dirs) - 1), nx[-1], idx[-1]], -1)]
    T = np.concatenate(tris)
    return np.einsum("ki,ki->k", X[T[:, 0]], np.cross(X[T[:, 1]], X[T[:, 2]])).sum() / 6


# curvature ---------------------------------------------------------------------------

def test_sphere_curvature(g32):
    c = curvature(ball(g32, 1.7))
    assert np.allclose(c.sn, 1.7**2, rtol=1e-12)
    assert np.allclose(c.principal_radii, 1.7, rtol=1e-12)
    assert np.allclose(c.sn * c.gauss, 1.0, rtol=1e-15)


def test_translated_ball_curvature(g32):
    h = ball(g32).translated([0.2, -0.4, 0.3])
    assert np.abs(curvature(h).sn - 1).max() < 1e-10


@pytest.mark.parametrize("axes", [(2, 1, 1), (1.5, 1, 0.75), (1.2, 0.9, 1.1)])
def test_ellipsoid_curvature_oracle(axes):
    g = grid(2, 48)
    c = curvature(ellipsoid(g, axes))
    oracle = ellipsoid_s2_oracle(g, axes)
    assert np.abs(c.sn / oracle - 1).max() < 1e-7
    h = ellipsoid(g, axes).values
    assert np.abs(c.sn - np.prod(axes) ** 2 / h**4).max() < 1e-7


def test_principal_curvatures_order_and_product(g32):
    c = curvature(ellipsoid(g32, (2, 1, 1)))
    assert np.all(c.principal_radii[:, 0] <= c.principal_radii[:, 1])
    assert np.allclose(np.prod(c.principal_radii, 1), c.sn, rtol=1e-12)
    assert np.allclose(np.prod(c.principal_curvatures, 1), c.gauss, rtol=1e-12)


def test_convexity_failure_reports_node(g32):
    Y = real_harmonic(g32, 8, 0)
    h = SupportField(g32, 1 + 0.5 * Y / np.abs(Y).max())
    with pytest.raises(ConvexityError) as err:
        curvature(h)
    assert 0 <= err.value.node < g32.size
    assert err.value.eigenvalue <= 1e-8 * abs(err.value.trace)


def test_origin_not_interior(g32):
    with pytest.raises(ValueError, match="origin is not interior"):
        ball(g32).translated([0, 0, 1.2])


def test_circle_curvature():
    g = grid(1, 128)
    h = ellipsoid(g, (2, 1))
    a = np.arctan2(g.nodes[:, 1], g.nodes[:, 0])
    # radius of curvature of an ellipse at normal angle a
    oracle = 4.0 / (4 * np.cos(a) ** 2 + np.sin(a) ** 2) ** 1.5
    assert np.abs(curvature(h).sn - oracle).max() < 1e-7
    assert abs(volume(h) - 2 * math.pi) < 1e-9


# volume and normalization ------------------------------------------------------------------

def test_volume_examples(g32):
    assert abs(volume(ball(g32, 1.3)) - 4 * math.pi / 3 * 1.3**3) < 1e-12
    assert abs(volume(ball(g32).translated([0.1, 0.2, -0.3])) - 4 * math.pi / 3) < 1e-10
    for axes in [(2, 1, 1), (1.5, 1, 0.75)]:
        assert abs(volume(ellipsoid(g32, axes)) / (4 * math.pi / 3 * np.prod(axes)) - 1) < 1e-8


def test_normalize_examples(g32):
    assert np.allclose(normalize_to_unit_volume(ball(g32, 2)).values, 1, rtol=1e-14)
    h = normalize_to_unit_volume(ellipsoid(g32, (2, 1, 1)))
    assert np.allclose(h.values, ellipsoid(g32, (2, 1, 1)).values / 2 ** (1 / 3), rtol=1e-10)
    assert abs(volume(h) - 4 * math.pi / 3) < 1e-10


def test_volume_divergence_theorem_oracle(g32):
    rng = np.random.default_rng(7)
    Y = sum(rng.standard_normal() * real_harmonic(g32, l, m) for l in (2, 3, 4) for m in range(-l, l + 1))
    h = SupportField(g32, ellipsoid(g32, (1.3, 1, 0.8)).values + 0.02 * Y / np.abs(Y).max())
    curvature(h)
    h = h.translated([0.05, 0, -0.1])
    assert abs(mesh_volume(h, nlat=400) / volume(h) - 1) < 1e-4


# embedding --------------------------------------------------------------------------------

def test_embed_examples(g32):
    assert np.abs(embed(ball(g32, 2)) - 2 * g32.nodes).max() < 1e-12
    v = np.array([0.1, -0.2, 0.3])
    assert np.abs(embed(ball(g32).translated(v)) - (g32.nodes + v)).max() < 1e-11
    a = np.array([1.5, 1, 0.75])
    h = ellipsoid(g32, a)
    x = embed(h)
    assert np.abs((x**2 / a**2).sum(1) - 1).max() < 1e-8
    assert np.abs((x * g32.nodes).sum(1) - h.values).max() < 1e-13


# polar and duality --------------------------------------------------------------------------

def test_polar_balls(g32):
    assert np.abs(polar(ball(g32)).values - 1).max() < 1e-12
    assert np.abs(polar(ball(g32, 2.5)).values - 0.4).max() < 1e-12


@pytest.mark.parametrize("L,tol", [(32, 2e-3), (48, 1e-9)])
def test_polar_ellipsoid_closed_form(L, tol):
    g = grid(2, L)
    a = np.array([1.5, 1, 0.75])
    hs = polar(ellipsoid(g, a))
    exact = np.sqrt((g.nodes**2 / a**2).sum(1))
    assert np.abs(hs.values - exact).max() < tol


def test_polar_improves_with_resolution():
    a = np.array([2.0, 1, 0.6])
    errs = []
    for L in (16, 32):
        g = grid(2, L)
        errs.append(np.abs(polar(ellipsoid(g, a)).values - np.sqrt((g.nodes**2 / a**2).sum(1))).max())
    assert errs[1] < errs[0]


def test_bipolar_translated_ellipsoid():
    g = grid(2, 32)
    h = ellipsoid(g, (1.3, 1, 0.8)).translated([0.1, -0.05, 0.15])
    assert np.abs(polar(polar(h)).values - h.values).max() < 1e-6


def test_duality_examples():
    g32, g48 = grid(2, 32), grid(2, 48)
    assert duality_residual(ball(g32, 1.7)) < 1e-10
    assert duality_residual(ball(g32).translated([0, 0.2, 0.3])) < 5e-3
    assert duality_residual(ellipsoid(g48, (1.5, 1, 0.75))) < 5e-3


def test_centro_affine_constant_on_ellipsoid():
    q = centro_affine(ellipsoid(grid(2, 48), (1.5, 1, 0.75)))
    assert np.abs(q / (1.5 * 0.75) ** 2 - 1).max() < 1e-7


# barycenter and recentering ---------------------------------------------------------------------

def test_barycenter_symmetric(g32):
    h = ellipsoid(g32, (1.5, 1, 0.75))
    phi = 1 + 0.5 * g32.nodes[:, 2] ** 2
    assert np.abs(lp_barycenter(h, phi, 0.5)).max() < 1e-12
    for p in (-3, 0, 2):
        assert np.abs(lp_barycenter(ball(g32), 1.0, p)).max() < 1e-12


def test_barycenter_quadrature_oracle(g32):
    h = SupportField(g32, 1 + 0.2 * g32.nodes[:, 2])
    b = lp_barycenter(h, 1.0, -2)
    # axisymmetric: 2 pi * int mu / (1 + 0.2 mu)^3 dmu
    oracle = 2 * math.pi * quad(lambda m: m / (1 + 0.2 * m) ** 3, -1, 1, epsabs=1e-14)[0]
    assert b[2] < 0
    assert abs(b[2] - oracle) < 1e-10
    assert np.abs(b[:2]).max() < 1e-12


def test_recenter_examples(g32):
    h = ellipsoid(g32, (1.5, 1, 0.75))
    assert np.abs(recenter(h, 1.0, -3)).max() < 1e-12
    v = recenter(ball(g32).translated([0, 0, 0.3]), 1.0, -3)
    assert np.abs(v - [0, 0, -0.3]).max() < 1e-6
    ht = ellipsoid(g32, (1.2, 1, 0.8)).translated([0.1, -0.2, 0.15])
    v = recenter(ht, 1.0, -3, tol=1e-10)
    assert np.linalg.norm(lp_barycenter(ht.translated(v), 1.0, -3)) < 1e-10


# properties ---------------------------------------------------------------------------------

@given(axes3, st.floats(0.2, 5.0))
def test_scaling_law(axes, lam):
    g = grid(2, 16)
    h = ellipsoid(g, axes)
    c, cl = curvature(h), curvature(h.scaled(lam))
    assert np.allclose(cl.sn, lam**2 * c.sn, rtol=1e-10, atol=0)
    assert abs(volume(h.scaled(lam)) / (lam**3 * volume(h)) - 1) < 1e-12


@given(axes3, shift3)
def test_translation_invariance(axes, v):
    g = grid(2, 16)
    h = ellipsoid(g, axes)
    if min(axes) <= np.linalg.norm(v) + 0.05:
        return
    c1, c2 = curvature(h), curvature(h.translated(v))
    assert np.abs(c2.sn - c1.sn).max() < 1e-10 * c1.sn.max()
    assert abs(volume(h.translated(v)) - volume(h)) < 1e-10


@given(axes3)
def test_volume_ball_formula_and_positive(axes):
    g = grid(2, 16)
    h = ellipsoid(g, axes)
    V = volume(h)
    assert V > 0
    assert abs(V / (ball_volume(2) * np.prod(axes)) - 1) < 1e-4
