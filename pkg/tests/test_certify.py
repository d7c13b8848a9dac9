import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab.certify import (
    Certificate,
    ConeSampler,
    certify_ellipticity,
    check_facet_equivalence,
    compute_mstar,
    dist_to_facet,
    estimate_kappa,
    estimate_mIC,
    find_epsilon,
    min_subset_ratio,
    strict_level_minimum,
    validate_epsilon,
)
from harnacklab.errors import NegativeEntry
from harnacklab.spectral import ic_form
from harnacklab.speeds import ConeSpec, KHarmonic, SigmaRatio, Trace


def test_dist_to_facet_examples():
    assert dist_to_facet([0.0, 0.6, 0.8], 2) == 0.0
    assert dist_to_facet([1.0, 1.0, 1.0], 2) == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    assert dist_to_facet([1.0, 1.0, 1.0], 0) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(NegativeEntry):
        dist_to_facet([-1.0, 1.0, 1.0], 2)


def test_mstar_examples():
    assert compute_mstar(ConeSpec("halfspace", 3, 2)) == 2
    assert compute_mstar(ConeSpec("garding", 3, 2)) == 2
    for n in range(1, 6):
        assert compute_mstar(ConeSpec("positive", n)) == n


@pytest.mark.parametrize("speed, expected", [(KHarmonic(3, 2), 2), (SigmaRatio(3, 2), 3),
                                              (SigmaRatio(4, 2), 3)])
def test_mIC(speed, expected):
    assert estimate_mIC(speed, N=1000, seed=1) == expected


def test_sampler_deterministic_and_feasible():
    a = ConeSampler(3, 2, 0.2, seed=5, N=3000).sample()
    b = ConeSampler(3, 2, 0.2, seed=5, N=3000).sample()
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, rtol=1e-14)
    assert np.all(a >= 0)
    assert np.all(min_subset_ratio(a, 2) >= 0.2 * (1 - 1e-12))
    assert np.sum(a[:, 0] == 0.0) > 0


def test_sampler_rejects_bad_rho():
    with pytest.raises(ValueError):
        ConeSampler(3, 2, 0.6)
    with pytest.raises(ValueError):
        ConeSampler(3, 2, 0.0)


def test_ellipticity_trace():
    C, _ = certify_ellipticity(Trace(3), ConeSampler(3, 1, 0.2, N=500))
    assert C == 1.0


def test_ellipticity_kharmonic_reproducible_and_monotone():
    speed = KHarmonic(3, 2)
    C, wit = certify_ellipticity(speed, ConeSampler(3, 2, 0.2, N=4000))
    assert 1 < C < math.inf
    g = speed.grad(np.array(wit.lam))
    assert max(g.max(), 1 / g.min()) == pytest.approx(C, rel=1e-12)
    C_small, _ = certify_ellipticity(speed, ConeSampler(3, 2, 0.05, N=4000))
    assert C_small > C


def test_kappa_positive_kharmonic():
    kappa, wit = estimate_kappa(KHarmonic(3, 2), ConeSampler(3, 2, 0.2, N=1000))
    assert kappa > 0
    A, S = np.array(wit.A), np.array(wit.S)
    lam = np.linalg.eigvalsh(A)
    assert KHarmonic(3, 2).value(lam) * ic_form(KHarmonic(3, 2), A, S) == pytest.approx(kappa, rel=1e-9)


def test_kappa_trace_brute_force():
    # for the trace the form is 2 * sum_ij S_ij^2 / lam_j, minimized by S = e_n e_n^T
    sampler = ConeSampler(3, 1, 0.2, N=1000)
    kappa, _ = estimate_kappa(Trace(3), sampler)
    lams = sampler.sample()
    lams = lams[lams[:, 0] > 1e-6]
    brute = np.min(lams.sum(axis=1) * 2 / lams[:, -1])
    assert kappa > 0
    assert kappa <= brute * (1 + 1e-12)


def test_harmonic_mean_facet_null():
    value, lam = strict_level_minimum(SigmaRatio(3, 2), 2, N=2000, seed=0)
    assert -1e-9 <= value <= 1e-8


def test_epsilon_trace_grid_maximum():
    sampler = ConeSampler(3, 1, 0.2, N=500)
    res = find_epsilon(Trace(3), sampler, kappa=1.0, C=1.0)
    assert res.eps_empirical == 1.0
    assert res.eps == min(res.eps_formula, res.eps_empirical)


def test_epsilon_survives_boundary_points():
    speed = KHarmonic(3, 2)
    sampler = ConeSampler(3, 2, 0.2, seed=2, N=2000)
    lams = sampler.sample()
    C, _ = certify_ellipticity(speed, sampler, lams)
    kappa, _ = estimate_kappa(speed, sampler, lams=lams)
    eps = find_epsilon(speed, sampler, kappa, C, lams=lams).eps
    report = validate_epsilon(speed, ConeSampler(3, 2, 0.2, seed=99, N=2000), eps, n_random=500)
    assert report["rank_deficient"] > 0
    assert report["exact_min"] >= -1e-9 and report["random_min"] >= -1e-9


def test_facet_equivalence_forward():
    lams = ConeSampler(3, 2, 0.2, N=2000).sample()
    rep = check_facet_equivalence(lams, 2)
    assert rep["delta"] > 0 and rep["rho_hat"] > 0 and rep["consistent"]


def test_facet_equivalence_limit_scan():
    ts = np.geomspace(1e-1, 1e-12, 12)
    fam = np.array([[t, t, 1.0] for t in ts])
    rep = check_facet_equivalence(fam, 2)
    assert rep["delta"] < 1e-11 and rep["rho_hat"] < 1e-11
    assert rep["spearman"] > 0.99


def test_certificate_json_roundtrip():
    cert = Certificate("trace:n=2", 2, 1, 0.2, 0, 10, 1.0, 0.5, 0.1, 0.3, 1, 1,
                       witnesses=[{"kind": "C", "value": 1.0}])
    again = Certificate.from_json(cert.to_json())
    assert again == cert
    for key in ("speed", "n", "k", "rho", "seed", "N", "C", "kappa", "epsilon", "delta",
                "m_star", "m_IC", "witnesses"):
        assert key in cert.to_json()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=6).filter(lambda v: sum(v) > 1e-3))
def test_facet_distance_properties(values):
    lam = np.array(values)
    n = lam.size
    d = [dist_to_facet(lam, m) for m in range(n + 1)]
    assert d[n] == 0.0
    assert all(a >= b - 1e-15 for a, b in zip(d, d[1:]))
    assert d[0] == pytest.approx(1.0)
