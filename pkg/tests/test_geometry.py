import numpy as np
import pytest

from harnacklab.geometry import (
    GraphProfile,
    SupportProfile,
    cot_times,
    curvatures_from_graph,
    curvatures_from_support,
    ellipsoid_curvatures,
    ellipsoid_profile,
    even_derivatives,
    graph_curvatures,
    sphere_profile,
    surface_operators,
    theta_grid,
)
from harnacklab.errors import ConvexityLost
from harnacklab.speeds import KHarmonic, SigmaRatio, Trace


def test_sphere_curvatures():
    speed = KHarmonic(3, 2)
    D = curvatures_from_support(sphere_profile(3, 2.0, 64), speed)
    np.testing.assert_allclose(D.lam_m, 0.5, rtol=1e-14)
    np.testing.assert_allclose(D.lam_o, 0.5, rtol=1e-14)
    np.testing.assert_allclose(D.G, speed.gamma_one / 2, rtol=1e-14)
    np.testing.assert_allclose(D.G_s, 0.0, atol=1e-14)
    np.testing.assert_allclose(D.lap_G, 0.0, atol=1e-12)


def test_sphere_points_on_circle():
    pts = sphere_profile(2, 1.5, 64).points()
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.5, rtol=1e-14)


def test_ellipsoid_curvatures_second_order():
    errs = []
    for M in (64, 128, 256):
        D = curvatures_from_support(ellipsoid_profile(2, 1.0, 2.0, M), Trace(2))
        lm, lo = ellipsoid_curvatures(theta_grid(M), 1.0, 2.0)
        errs.append(max(np.max(np.abs(D.lam_m - lm)), np.max(np.abs(D.lam_o - lo))))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_scaling():
    speed = SigmaRatio(3, 2)
    P = ellipsoid_profile(3, 1.0, 1.5, 64)
    D1 = curvatures_from_support(P, speed)
    D2 = curvatures_from_support(P.with_h(3.0 * P.h), speed)
    np.testing.assert_allclose(D2.lam_m, D1.lam_m / 3, rtol=1e-11)
    np.testing.assert_allclose(D2.G, D1.G / 3, rtol=1e-11)


def test_operators_on_constant_and_cosine():
    r = 2.0
    P = sphere_profile(3, r, 256)
    D = curvatures_from_support(P, Trace(3))
    u_s, lap = surface_operators(P, D, np.full(257, 4.0))
    assert np.max(np.abs(u_s)) == 0.0 and np.max(np.abs(lap)) == 0.0
    # cos(theta) is a first spherical harmonic on the n-sphere
    u = np.cos(P.theta)
    _, lap = surface_operators(P, D, u)
    np.testing.assert_allclose(lap, -3 / r ** 2 * u, atol=1e-4)


def test_cot_times_pole_limit():
    th = theta_grid(128)
    u = np.cos(2 * th)
    u_t, u_tt = even_derivatives(u, th[1])
    out = cot_times(u, u_t, u_tt, th)
    exact = -4 * np.cos(th) ** 2
    np.testing.assert_allclose(out, exact, atol=2e-3)


def test_nonconvex_support_rejected():
    th = theta_grid(64)
    h = 1.0 + 0.5 * np.cos(4 * th)
    with pytest.raises(ConvexityLost):
        curvatures_from_support(SupportProfile(2, h), Trace(2))


def test_paraboloid_vertex():
    r = np.linspace(0.0, 1.0, 201)
    Q = GraphProfile(2, r, 0.5 * r ** 2, r)
    D = curvatures_from_graph(Q, Trace(2))
    assert D.lam_m[0] == pytest.approx(1.0, rel=1e-12)
    assert D.lam_o[0] == pytest.approx(1.0, rel=1e-12)
    assert D.G[0] == pytest.approx(2.0, rel=1e-12)


def test_hemisphere_graph():
    r = np.linspace(0.0, 0.8, 101)
    f = -np.sqrt(1 - r ** 2)
    fp = r / np.sqrt(1 - r ** 2)
    fpp = (1 - r ** 2) ** -1.5
    lam_m, lam_o, _ = graph_curvatures(2, r, fp, fpp)
    np.testing.assert_allclose(lam_m, 1.0, rtol=1e-13)
    np.testing.assert_allclose(lam_o, 1.0, rtol=1e-13)


def test_grim_reaper_curve():
    # z = -log cos r translates with unit speed: curvature equals 1/W
    r = np.linspace(0.0, 1.2, 301)
    fp, fpp = np.tan(r), 1 / np.cos(r) ** 2
    lam_m, _, W = graph_curvatures(1, r, fp, fpp)
    np.testing.assert_allclose(lam_m, 1 / W, rtol=1e-10)
