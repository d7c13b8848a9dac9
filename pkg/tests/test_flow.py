import math

import numpy as np
import pytest

from harnacklab.errors import Extinct
from harnacklab.flow import (
    FlowAborted,
    cubic_interp,
    evolve_graph,
    exact_sphere,
    extinction_time,
    run,
    solve_translator,
    sphere_radius_error,
    step,
)
from harnacklab.geometry import curvatures_from_support, ellipsoid_profile, sphere_profile
from harnacklab.speeds import KHarmonic, SigmaRatio, Trace


def test_exact_sphere_examples():
    assert exact_sphere(1.3, KHarmonic(3, 2), 0.0) == 1.3
    assert exact_sphere(2.0, Trace(2), 0.5) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert exact_sphere(1.0, KHarmonic(3, 2), 0.75) == 0.0
    with pytest.raises(Extinct):
        exact_sphere(1.0, KHarmonic(3, 2), 0.76)
    assert extinction_time(1.0, KHarmonic(3, 2)) == pytest.approx(0.75, rel=1e-15)


def test_zero_step_is_identity():
    P = ellipsoid_profile(2, 1.0, 1.5, 64)
    assert step(P, Trace(2), 0.0) is P


def test_zero_horizon_single_snapshot():
    traj = run(sphere_profile(2, 1.0, 64), Trace(2), t_end=0.0)
    assert traj.K == 1 and traj.times[0] == 0.0


def test_sphere_stays_round():
    speed = SigmaRatio(3, 2)
    traj = run(sphere_profile(3, 1.0, 64), speed, t_end=0.3, safety=1.0)
    assert sphere_radius_error(traj, 1.0) <= 1e-10
    assert np.ptp(traj.h[-1]) == 0.0


def test_record_interval_lands_on_times():
    traj = run(ellipsoid_profile(2, 1.0, 1.25, 64), Trace(2), t_end=0.1, record_interval=0.025)
    np.testing.assert_allclose(traj.times, [0.0, 0.025, 0.05, 0.075, 0.1], rtol=1e-12)


def test_convexity_and_containment_preserved():
    traj = run(ellipsoid_profile(2, 1.0, 2.0, 64), KHarmonic(2, 2), t_end=None, r_min=0.5,
               max_steps=100_000)
    assert traj.status == "ok"
    for j in range(traj.K):
        D = traj.curvature(j)
        assert D.lam_m.min() > 0 and D.lam_o.min() > 0
    assert np.all(np.diff(traj.h, axis=0) < 0)


def test_markers_stay_on_surface():
    traj = run(ellipsoid_profile(2, 1.0, 1.25, 128), Trace(2), t_end=0.1, markers=5)
    assert max(traj.surface_gap(j).max() for j in range(traj.K)) <= 1e-5


def test_step_budget_aborts():
    with pytest.raises(FlowAborted) as info:
        run(sphere_profile(2, 1.0, 64), Trace(2), t_end=1.0, max_steps=3)
    assert info.value.trajectory.K >= 1


def test_cubic_interp_exact_on_cubics():
    x = np.arange(20.0)
    u = 0.3 * x ** 3 - x ** 2 + 2 * x - 1
    q = np.array([2.5, 7.25, 13.9])
    np.testing.assert_allclose(cubic_interp(u, q), 0.3 * q ** 3 - q ** 2 + 2 * q - 1, rtol=1e-12)


@pytest.mark.parametrize("speed, vertex", [(Trace(2), 0.5), (KHarmonic(3, 2), 1.5)])
def test_translator_vertex(speed, vertex):
    sol = solve_translator(speed, 1.0, nodes=101)
    assert sol.vertex_curvature == pytest.approx(vertex, rel=1e-14)
    assert sol.profile.fpp[0] == pytest.approx(vertex, rel=1e-14)
    assert sol.soliton_residual(speed) <= 1e-8


def test_translator_moves_rigidly():
    speed = Trace(2)
    sol = solve_translator(speed, 2.0, nodes=201)
    gt = evolve_graph(sol, speed, 0.05, 0.025, [0.2, 0.5])
    inner = slice(0, 150)
    np.testing.assert_allclose(gt.f[-1][inner] - sol.profile.f[inner], 0.05, atol=1e-4)
