"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from conftest import interior_points
from harnacklab.certify import ConeSampler, certify_speed, compute_mstar, estimate_mIC, strict_level_minimum
from harnacklab.flow import exact_sphere, extinction_time, run, solve_translator, sphere_radius_error
from harnacklab.geometry import curvatures_from_support, ellipsoid_profile, sphere_profile
from harnacklab.harnack import (
    ancient_sweep,
    harnack_tolerance,
    identity_convergence,
    integrated_harnack,
    scalar_harnack,
    sphere_harnack_exact,
    support_xi,
    translator_equality,
    xi_constancy,
)
from harnacklab.spectral import d2gamma_contract, ic_minimum_batch
from harnacklab.speeds import CATALOG_KEYS, FacetRestriction, KHarmonic, SigmaRatio, Trace, parse_speed

PAIRS = ((3, 2), (4, 2), (4, 3))


def _fd_grad(speed, lam, h):
    g = np.empty_like(lam)
    for i in range(lam.size):
        e = np.zeros_like(lam)
        e[i] = h
        g[i] = (speed.value(lam + e) - speed.value(lam - e)) / (2 * h)
    return g


def _fd_hess(speed, lam, h):
    H = np.empty((lam.size, lam.size))
    for i in range(lam.size):
        e = np.zeros_like(lam)
        e[i] = h
        H[i] = (speed.grad(lam + e) - speed.grad(lam - e)) / (2 * h)
    return H


def _five_point(f, h):
    return (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h)


def test_c1_derivative_oracles(criterion, rng):
    start = time.perf_counter()
    worst = {"grad": 0.0, "hess": 0.0, "d2": 0.0, "euler": 0.0}
    for key in CATALOG_KEYS:
        speed = parse_speed(key)
        lams = interior_points(speed, 100, rng)
        for lam in lams:
            scale = np.linalg.norm(lam)
            val, grad, hess = speed.value(lam), speed.grad(lam), speed.hess(lam)
            h = 1e-5 * scale
            gref = _fd_grad(speed, lam, h)
            worst["grad"] = max(worst["grad"], np.max(np.abs(grad - gref)) / np.max(np.abs(gref)))
            href = _fd_hess(speed, lam, h)
            hscale = max(np.max(np.abs(href)), np.max(np.abs(grad)) / scale)
            worst["hess"] = max(worst["hess"], np.max(np.abs(hess - href)) / hscale)
            worst["euler"] = max(worst["euler"], abs(grad @ lam - val) / abs(val),
                                 np.max(np.abs(hess @ lam)) / np.max(np.abs(grad)))
            Q, _ = np.linalg.qr(rng.normal(size=(speed.n, speed.n)))
            A = (Q * lam) @ Q.T
            S = rng.normal(size=A.shape)
            S = (S + S.T) / np.linalg.norm(S + S.T)
            d2 = d2gamma_contract(speed, A, S)
            ref = _five_point(lambda s: speed.value(np.linalg.eigvalsh(A + s * S)), 1e-3 * scale)
            worst["d2"] = max(worst["d2"], abs(d2 - ref) / max(abs(ref), val / scale))
    elapsed = time.perf_counter() - start
    ok = (worst["grad"] <= 1e-6 and worst["hess"] <= 1e-5 and worst["d2"] <= 1e-5
          and worst["euler"] <= 1e-9 and elapsed <= 10.0)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s"
    criterion(1, "derivative oracles", ok, detail)
    assert ok


def test_c2_inverse_concavity_levels(criterion):
    got, want = {}, {}
    for n, k in PAIRS:
        for speed, m_ic, m_star in ((KHarmonic(n, k), n - k + 1, n - k + 1), (SigmaRatio(n, k), k + 1, k)):
            got[speed.key] = (estimate_mIC(speed, N=2000, seed=0), compute_mstar(speed.cone))
            want[speed.key] = (m_ic, m_star)
    ok = got == want
    bad = {k: (got[k], want[k]) for k in got if got[k] != want[k]}
    criterion(2, "m_IC and m_* exact", ok, f"mismatches {bad}" if bad else f"{len(got)} speeds")
    assert ok


def test_c3_harmonic_mean_null_direction(criterion):
    worst_min, worst_all = -math.inf, math.inf
    for n, k in PAIRS:
        speed = SigmaRatio(n, k)
        value, _ = strict_level_minimum(speed, k, N=10_000, seed=3)
        facet = FacetRestriction(speed, k)
        lams = ConeSampler(k, 1, 0.1, 3, 10_000, zero_fraction=0.0).sample()
        everywhere = float(np.min(facet._value(lams) * ic_minimum_batch(facet, lams)))
        worst_min = max(worst_min, value)
        worst_all = min(worst_all, everywhere, value)
    ok = worst_min <= 1e-8 and worst_all >= -1e-9
    criterion(3, "facet null direction", ok, f"max minimized {worst_min:.2e}, min seen {worst_all:.2e}")
    assert ok


def test_c4_certificate(criterion):
    start = time.perf_counter()
    cert = certify_speed(KHarmonic(3, 2), 0.2, N=10_000, seed=0, validate_seed=987654321)
    elapsed = time.perf_counter() - start
    v = cert.validation
    held_out = min(v["exact_min"], v["random_min"])
    ok = (math.isfinite(cert.C) and cert.kappa > 0 and cert.epsilon > 0 and held_out >= -1e-9
          and v["rank_deficient"] > 0 and v["N"] == 10_000 and elapsed <= 60.0)
    criterion(4, "KHarmonic(3,2) certificate", ok,
              f"C {cert.C:.3g}, kappa {cert.kappa:.3g}, eps {cert.epsilon:.3g}, "
              f"held-out min {held_out:.2e}, {elapsed:.1f}s")
    assert ok


def test_c5_sphere_flow(criterion):
    errors, factors = {}, {}
    for speed in (Trace(2), KHarmonic(3, 2)):
        traj = run(sphere_profile(speed.n, 1.0, 256), speed, r_min=0.25, safety=1.0)
        assert traj.h[-1].min() <= 0.25
        errors[speed.key] = sphere_radius_error(traj, 1.0)
        T = 0.5 * extinction_time(2.0, speed)
        errs = []
        for dt in (T / 8, T / 16, T / 32):
            end = run(sphere_profile(speed.n, 2.0, 256), speed, t_end=T, dt=dt)
            errs.append(abs(end.h[-1][0] - exact_sphere(2.0, speed, T)))
        factors[speed.key] = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = max(errors.values()) <= 1e-4 and all(8 <= f <= 32 for v in factors.values() for f in v)
    detail = "; ".join(f"{k}: err {errors[k]:.1e}, factors {factors[k][0]:.1f}/{factors[k][1]:.1f}"
                       for k in errors)
    criterion(5, "sphere flow oracle", ok, detail)
    assert ok


def test_c6_evolution_identities(criterion):
    lines, ok = [], True
    for speed in (Trace(2), KHarmonic(3, 2)):
        conv = identity_convergence(speed, grids=(128, 256, 512))
        for name, res in conv["residuals"].items():
            ratios = conv["ratios"][name]
            ok &= all(3 <= r <= 5 for r in ratios) and res[-1] <= 1e-4
            lines.append(f"{speed.key} {name} {res[-1]:.1e} x{min(ratios):.2f}-{max(ratios):.2f}")
    criterion(6, "evolution identities", ok, "; ".join(lines))
    assert ok


def test_c7_harnack_inequality(criterion):
    M = 128
    sphere_rel, margin = 0.0, math.inf
    for key in CATALOG_KEYS:
        speed = parse_speed(key)
        T = 0.2 * extinction_time(1.0, speed)
        sph = run(sphere_profile(speed.n, 1.0, M), speed, t_end=T, record_interval=T / 20,
                  markers=6, safety=0.9)
        s = scalar_harnack(sph)
        exact = sphere_harnack_exact(speed, 1.0, s.t)[:, None]
        sphere_rel = max(sphere_rel, float(np.max(np.abs(s.P - exact) / exact)))
        margin = min(margin, float(s.P.min()) + harnack_tolerance(M, T / 20, s.G.max()))
        ell = run(ellipsoid_profile(speed.n, 1.0, 1.25, M), speed, t_end=T, record_interval=T / 20,
                  markers=6, safety=0.9)
        e = scalar_harnack(ell)
        margin = min(margin, float(e.P.min()) + harnack_tolerance(M, T / 20, e.G.max()))
    ok = margin >= 0 and sphere_rel <= 1e-3
    criterion(7, "Harnack inequality", ok, f"min P + tol {margin:.3g}, sphere rel err {sphere_rel:.1e}")
    assert ok


def test_c8_equality_case(criterion):
    grim = solve_translator(Trace(1), 1.5, nodes=401)
    grim_err = float(np.max(np.abs(grim.profile.f + np.log(np.cos(grim.profile.r)))))
    reports = {}
    for speed, R in ((Trace(1), 1.5), (Trace(2), 3.0), (KHarmonic(3, 2), 3.0)):
        sol = grim if speed.n == 1 else solve_translator(speed, R, nodes=401)
        reports[speed.key] = translator_equality(sol, speed)
    P = sphere_profile(2, 1.0, 128)
    control = xi_constancy(support_xi(P, curvatures_from_support(P, Trace(2))))
    ok = (grim_err <= 1e-6 and control >= 0.1
          and all(r.soliton_residual <= 1e-6 and r.equality_residual <= 5e-3
                  and r.xi_constancy <= 1e-4 for r in reports.values()))
    worst = {f: max(getattr(r, f) for r in reports.values())
             for f in ("soliton_residual", "equality_residual", "xi_constancy")}
    criterion(8, "translator equality case", ok,
              f"grim {grim_err:.1e}, " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
              + f", sphere control {control:.2f}")
    assert ok


def test_c9_integrated_harnack(criterion):
    speed = KHarmonic(3, 2)
    T = 0.5 * extinction_time(1.0, speed)
    sph = run(sphere_profile(3, 1.0, 128), speed, t_end=T, record_interval=T / 20, markers=6, safety=0.9)
    j0, j1 = 2, 18
    res = integrated_harnack(sph, 2, 2, j0, j1)
    t0, t1 = sph.times[j0], sph.times[j1]
    G0 = speed.gamma_one / exact_sphere(1.0, speed, t0)
    G1 = speed.gamma_one / exact_sphere(1.0, speed, t1)
    sphere_err = max(abs(res.lhs / G1 - 1), abs(res.rhs / (math.sqrt(t0 / t1) * G0) - 1), res.path_cost)
    margins = []
    for key in ("trace:n=2", "kharmonic:n=3,k=2"):
        sp = parse_speed(key)
        Te = 0.5 * extinction_time(1.0, sp)
        ell = run(ellipsoid_profile(sp.n, 1.0, 1.25, 128), sp, t_end=Te, record_interval=Te / 40,
                  markers=6, safety=0.9)
        margins.append(integrated_harnack(ell, 0, 5, 2, ell.K - 1).margin)
    ok = sphere_err <= 1e-3 and min(margins) >= -5e-3
    criterion(9, "integrated Harnack", ok, f"sphere err {sphere_err:.1e}, antipodal margin {min(margins):.3g}")
    assert ok


def test_c10_ancient_sweep(criterion):
    ok, lines = True, []
    for speed, R in ((Trace(2), 3.0), (KHarmonic(3, 2), 3.0)):
        sol = solve_translator(speed, R, nodes=401)
        _, gtraj = translator_equality(sol, speed, trajectory=True)
        samples = scalar_harnack(gtraj, 1.0)
        sweep = ancient_sweep(samples, (1.0, 10.0, 100.0))
        vals, limit = sweep["min_P"], sweep["limit"]
        monotone = all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))
        gaps = [v - limit for v in vals]
        approach = all(g >= -1e-6 for g in gaps) and all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))
        scale = float(np.max(samples.G)) ** 3
        ok &= monotone and approach and abs(limit) / scale <= 5e-3
        lines.append(f"{speed.key} " + "/".join(f"{v:.3g}" for v in vals) + f" -> {limit:.1e}")
    criterion(10, "ancient-limit sweep", ok, "; ".join(lines))
    assert ok
