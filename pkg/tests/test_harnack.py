import numpy as np
import pytest

from harnacklab.errors import InsufficientResolution
from harnacklab.flow import extinction_time, run, solve_translator
from harnacklab.geometry import curvatures_from_support, ellipsoid_profile, sphere_profile
from harnacklab.harnack import (
    ancient_sweep,
    full_Q,
    gradient_diagnostics,
    harnack_report,
    harnack_tolerance,
    identity_residuals,
    integrated_harnack,
    q_identity_residual,
    scalar_harnack,
    sphere_harnack_exact,
    support_xi,
    translator_equality,
    xi_constancy,
)
from harnacklab.speeds import KHarmonic, Trace


@pytest.fixture(scope="module")
def sphere_traj():
    speed = KHarmonic(3, 2)
    T = 0.3 * extinction_time(1.0, speed)
    return run(sphere_profile(3, 1.0, 64), speed, t_end=T, record_interval=T / 10,
               markers=4, safety=1.0)


@pytest.fixture(scope="module")
def ellipsoid_traj():
    speed = Trace(2)
    T = 0.2 * extinction_time(1.0, speed)
    return run(ellipsoid_profile(2, 1.0, 1.25, 64), speed, t_end=T, record_interval=T / 10,
               markers=4)


def test_tolerance_formula():
    assert harnack_tolerance(100, 0.01, 2.0, 20, 20) == pytest.approx((20e-4 + 20e-4) * 8)


def test_needs_three_snapshots():
    traj = run(sphere_profile(2, 1.0, 64), Trace(2), t_end=0.0, markers=2)
    with pytest.raises(InsufficientResolution):
        scalar_harnack(traj)


def test_sphere_matches_closed_form(sphere_traj):
    s = scalar_harnack(sphere_traj)
    exact = sphere_harnack_exact(sphere_traj.speed, 1.0, s.t)
    np.testing.assert_allclose(s.P, np.broadcast_to(exact[:, None], s.P.shape), rtol=1e-3)
    assert np.max(np.abs(s.G_s)) <= 1e-12


def test_Q_minimum_at_vstar(ellipsoid_traj):
    s = scalar_harnack(ellipsoid_traj)
    q = full_Q(s, orbit_lam=np.ones_like(s.G))
    assert q.at_vstar_error <= 1e-12
    assert q.value >= q.P_min - 1e-12 * abs(q.P_min)
    assert q.orbit_reduction_ok


def test_ancient_sweep_monotone(ellipsoid_traj):
    sweep = ancient_sweep(scalar_harnack(ellipsoid_traj, T0=1.0), T0s=(1.0, 10.0, 100.0))
    mins = sweep["min_P"]
    assert mins[0] >= mins[1] >= mins[2] >= sweep["limit"]


def test_sphere_gradients_vanish(sphere_traj):
    g1, g2 = gradient_diagnostics(sphere_traj)
    assert g1.max() <= 1e-10 and g2.max() <= 1e-10


def test_identities_on_sphere(sphere_traj):
    # space is exact on the sphere, so only the time-differencing error remains
    res = identity_residuals(sphere_traj)
    tau = float(np.max(np.diff(sphere_traj.times)))
    assert max(res.scalar, res.first_variation, res.simons) <= 20 * tau ** 2
    assert res.to_dict()["gauss_marker"] <= 1e-10


def test_q_identity_decomposition(ellipsoid_traj):
    out = q_identity_residual(ellipsoid_traj)
    assert out["decomposition"] <= 1e-10
    assert len(out["per_snapshot"]) == ellipsoid_traj.K - 4


def test_integrated_coincident_points(ellipsoid_traj):
    res = integrated_harnack(ellipsoid_traj, 1, 1, 3, 3)
    assert res.path_cost == 0.0 and res.margin == 0.0


def test_integrated_along_flow(ellipsoid_traj):
    res = integrated_harnack(ellipsoid_traj, 0, 3, 1, ellipsoid_traj.K - 1)
    assert res.ok and np.isfinite(res.path_cost)


def test_report_passes(ellipsoid_traj):
    rep = harnack_report(ellipsoid_traj)
    assert rep.passed and rep.min_P >= -rep.tolerance


def test_translator_equality_and_control():
    speed = Trace(2)
    rep = translator_equality(solve_translator(speed, 2.0, nodes=201), speed)
    assert rep.soliton_residual <= 1e-8
    assert rep.xi_residual <= 1e-3
    P = ellipsoid_profile(2, 1.0, 1.5, 64)
    assert xi_constancy(support_xi(P, curvatures_from_support(P, speed))) > 0.1
