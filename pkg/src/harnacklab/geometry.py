"""Rotationally symmetric convex hypersurfaces in R^{n+1}.

Closed states are stored through the support function ``h(theta)`` on the
polar grid ``theta_i = i*pi/M``, where ``theta`` is the angle between the
outer normal and the symmetry axis.  In the (r, z) half plane

    nu  = (sin t, cos t)          outer normal
    e_s = (cos t, -sin t)         unit meridian tangent, s increasing with t
    X   = h nu + h_t e_s          surface point

and the principal radii are ``R1 = h_tt + h`` (meridian) and
``R2 = h + h_t cot t`` (orbit directions, multiplicity n - 1).

Open states (translating bowls) are graphs ``z = f(r)`` lying below the
convex region, so that ``nu = (f', -1)/W`` with ``W = sqrt(1 + f'^2)``.

Fields are even across the poles, which fixes the ghost values
``u[-1] = u[1]`` and ``u[M+1] = u[M-1]``.  Quantities with a removable
``cot`` singularity use their pole limit there.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvexityLost, PoleSingularity
from .speeds import SpeedFunction


def theta_grid(M: int):
    return np.linspace(0.0, np.pi, M + 1)


def even_derivatives(u, dtheta):
    """Centered first and second derivatives with even reflection at both ends."""
    u = np.asarray(u, dtype=float)
    ext = np.concatenate([u[1:2], u, u[-2:-1]])
    d1 = (ext[2:] - ext[:-2]) / (2 * dtheta)
    d2 = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / dtheta ** 2
    d1[0] = d1[-1] = 0.0
    return d1, d2


def cot_times(u, u_theta, u_thetatheta, theta):
    """``cot(theta) * u_theta`` for an even field, with its pole limit.

    At a pole the limit is ``u_thetatheta``.  Approaching the pole, the
    centered interior stencil has error ``u_4 dtheta^2 / 6`` (``u_4`` the
    fourth derivative) while the pole stencil has ``u_4 dtheta^2 / 12``.
    The pole value is shifted by the difference so that the truncation
    error stays continuous; a jump there seeds a fast pole transient.
    """
    out = np.empty_like(u_theta)
    out[1:-1] = u_theta[1:-1] / np.tan(theta[1:-1])
    dth2 = (theta[1] - theta[0]) ** 2
    for pole, a, b, c in ((0, 0, 1, 2), (-1, -1, -2, -3)):
        fourth = 6 * (u[a] - u[b]) - 2 * (u[b] - u[c])
        out[pole] = u_thetatheta[pole] + fourth / (12 * dth2)
    return out


@dataclass(frozen=True)
class SupportProfile:
    """Support function samples of a closed rotationally symmetric body."""

    n: int
    h: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or h.size < 5:
            raise ValueError("support profile needs at least 5 nodes")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ConvexityLost("support function must be positive and finite")
        object.__setattr__(self, "h", h)

    @property
    def M(self) -> int:
        return self.h.size - 1

    @property
    def theta(self):
        return theta_grid(self.M)

    @property
    def dtheta(self) -> float:
        return np.pi / self.M

    def with_h(self, h, t=None):
        return replace(self, h=h, t=self.t if t is None else t)

    def radii(self):
        h_t, h_tt = even_derivatives(self.h, self.dtheta)
        R1 = h_tt + self.h
        R2 = self.h + cot_times(self.h, h_t, h_tt, self.theta)
        return R1, R2, h_t

    def points(self):
        """Surface points ``(r, z)`` per node."""
        h_t, _ = even_derivatives(self.h, self.dtheta)
        th = self.theta
        r = self.h * np.sin(th) + h_t * np.cos(th)
        z = self.h * np.cos(th) - h_t * np.sin(th)
        r[0] = r[-1] = 0.0
        return np.stack([r, z], axis=-1)


def sphere_profile(n: int, radius: float, M: int, t: float = 0.0) -> SupportProfile:
    return SupportProfile(n, np.full(M + 1, float(radius)), t)


def ellipsoid_support(theta, a: float, c: float):
    """Support function of the ellipsoid with equatorial radius a, polar radius c."""
    return np.sqrt((a * np.sin(theta)) ** 2 + (c * np.cos(theta)) ** 2)


def ellipsoid_profile(n: int, a: float, c: float, M: int, t: float = 0.0) -> SupportProfile:
    return SupportProfile(n, ellipsoid_support(theta_grid(M), a, c), t)


def ellipsoid_curvatures(theta, a: float, c: float):
    """Exact (meridian, orbit) curvatures of the ellipsoid of revolution."""
    h = ellipsoid_support(theta, a, c)
    return h ** 3 / (a * c) ** 2, h / a ** 2


def spectra(lam_m, lam_o, n: int):
    """Stack per-node spectra ``(lam_m, lam_o, ..., lam_o)`` with shape (N, n)."""
    lam_m = np.asarray(lam_m, dtype=float)
    lam = np.repeat(np.asarray(lam_o, dtype=float)[:, None], n, axis=1)
    lam[:, 0] = lam_m
    return lam


@dataclass
class SpeedFields:
    """Speed value and eigenvalue derivatives at a set of (lam_m, lam_o) pairs."""

    G: np.ndarray
    dg_m: np.ndarray
    dg_o: np.ndarray
    hess: np.ndarray

    def simons_meridian(self, mu_m, mu_o):
        """Second-derivative contraction with ``(mu_m, mu_o, ..., mu_o)``."""
        n = self.hess.shape[-1]
        mu = spectra(mu_m, mu_o, n)
        return np.einsum("ni,nij,nj->n", mu, self.hess, mu)


def speed_fields(speed: SpeedFunction, lam_m, lam_o, second: bool = True) -> SpeedFields:
    lam = spectra(lam_m, lam_o, speed.n)
    speed.check(lam)
    grad = speed._grad(lam)
    hess = None
    if second:
        hess = speed._hess(lam)
        hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    dg_o = grad[:, 1] if speed.n > 1 else np.zeros(len(lam))
    return SpeedFields(speed._value(lam), grad[:, 0], dg_o, hess)


@dataclass
class CurvatureData:
    """Per-node curvature quantities of a rotationally symmetric state.

    Arclength derivatives carry the suffix ``_s``.  ``c`` is the orbit
    radius derivative over the orbit radius, ``cos(theta)/r`` on the support
    grid, which equals ``lam_o * cot(theta)``.
    """

    n: int
    lam_m: np.ndarray
    lam_o: np.ndarray
    G: np.ndarray
    dg_m: np.ndarray
    dg_o: np.ndarray
    hess: np.ndarray
    G_s: np.ndarray
    lap_G: np.ndarray
    rho_orb: np.ndarray
    drho_s: np.ndarray
    c: np.ndarray
    theta: np.ndarray = None
    R1: np.ndarray = None
    R2: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def H(self):
        return self.lam_m + (self.n - 1) * self.lam_o

    @property
    def A2_gamma(self):
        """Speed-weighted squared norm of the second fundamental form."""
        return self.dg_m * self.lam_m ** 2 + (self.n - 1) * self.dg_o * self.lam_o ** 2

    def speed(self):
        return SpeedFields(self.G, self.dg_m, self.dg_o, self.hess)


class SupportOperators:
    """Arclength derivatives and the speed-weighted Laplacian on a support grid.

    Built once per state; every field passed in must be even at the poles.
    """

    def __init__(self, P: SupportProfile, lam_m, lam_o, dg_m, dg_o):
        self.n, self.dtheta, self.theta = P.n, P.dtheta, P.theta
        self.lam_m, self.lam_o, self.dg_m, self.dg_o = lam_m, lam_o, dg_m, dg_o
        self.lam_m_t, _ = even_derivatives(lam_m, self.dtheta)
        cot = np.zeros_like(self.theta)
        cot[1:-1] = 1.0 / np.tan(self.theta[1:-1])
        self.cot = cot

    def d_s(self, u):
        u_t, _ = even_derivatives(u, self.dtheta)
        return self.lam_m * u_t

    def parts(self, u):
        """Return ``(u_s, u_ss, c * u_s)`` with pole limits."""
        u_t, u_tt = even_derivatives(u, self.dtheta)
        u_s = self.lam_m * u_t
        u_ss = self.lam_m ** 2 * u_tt + self.lam_m * self.lam_m_t * u_t
        c_us = self.lam_o * self.lam_m * cot_times(u, u_t, u_tt, self.theta)
        return u_s, u_ss, c_us

    def laplacian(self, u):
        u_s, u_ss, c_us = self.parts(u)
        return u_s, self.dg_m * u_ss + (self.n - 1) * self.dg_o * c_us


def support_speed(P: SupportProfile, speed: SpeedFunction):
    """Speed values only; the cheap path used inside time steps."""
    R1, R2, _ = P.radii()
    if np.any(R1 <= 0) or np.any(R2 <= 0):
        raise ConvexityLost("nonpositive curvature radius")
    lam = spectra(1.0 / R1, 1.0 / R2, P.n)
    return speed._value(speed.check(lam))


def curvatures_from_support(P: SupportProfile, speed: SpeedFunction,
                            second: bool = True) -> CurvatureData:
    """Curvatures, speed and first geometric derivatives of a support profile.

    With ``second=False`` the eigenvalue Hessian and ``Delta_gamma G`` are
    skipped (left as ``None``); time stepping only needs first derivatives.
    """
    if speed.n != P.n:
        raise ValueError(f"speed dimension {speed.n} differs from profile dimension {P.n}")
    R1, R2, h_t = P.radii()
    if np.any(R1 <= 0) or np.any(R2 <= 0):
        bad = int(np.argmin(np.minimum(R1, R2)))
        raise ConvexityLost(f"nonpositive curvature radius at node {bad}")
    lam_m, lam_o = 1.0 / R1, 1.0 / R2
    sf = speed_fields(speed, lam_m, lam_o, second)
    ops = SupportOperators(P, lam_m, lam_o, sf.dg_m, sf.dg_o)
    if second:
        G_s, lap_G = ops.laplacian(sf.G)
    else:
        G_s, lap_G = ops.d_s(sf.G), None
    th = P.theta
    rho = P.h * np.sin(th) + h_t * np.cos(th)
    interior = slice(1, -1)
    if np.any(rho[interior] < 1e-12):
        raise PoleSingularity("orbit radius vanishes away from the poles")
    rho[0] = rho[-1] = 0.0
    c = lam_o * ops.cot
    return CurvatureData(
        n=P.n, lam_m=lam_m, lam_o=lam_o, G=sf.G, dg_m=sf.dg_m, dg_o=sf.dg_o,
        hess=sf.hess, G_s=G_s, lap_G=lap_G, rho_orb=rho, drho_s=np.cos(th),
        c=c, theta=th, R1=R1, R2=R2, extra={"ops": ops},
    )


def surface_operators(P: SupportProfile, D: CurvatureData, u):
    """Arclength derivative and speed-weighted Laplacian of a node field."""
    ops = D.extra.get("ops") or SupportOperators(P, D.lam_m, D.lam_o, D.dg_m, D.dg_o)
    return ops.laplacian(np.asarray(u, dtype=float))


def normals(theta):
    """Outer normal and meridian tangent on the support grid."""
    nu = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    e_s = np.stack([np.cos(theta), -np.sin(theta)], axis=-1)
    return nu, e_s


@dataclass(frozen=True)
class GraphProfile:
    """Radial graph ``z = f(r)`` of a convex bowl, optionally with ``f''``."""

    n: int
    r: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray = None
    t: float = 0.0

    def __post_init__(self):
        for name in ("r", "f", "fp", "fpp"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float))
        if self.r[0] != 0.0 or np.any(np.diff(self.r) <= 0):
            raise ValueError("radial grid must start at 0 and increase")

    @property
    def W(self):
        return np.sqrt(1.0 + self.fp ** 2)

    def second_derivative(self):
        if self.fpp is not None:
            return self.fpp
        return graph_second_derivative(self.r, self.fp)

    def points(self):
        return np.stack([self.r, self.f], axis=-1)

    def frame(self):
        """Outer normal (pointing away from the convex side) and tangent."""
        W = self.W
        nu = np.stack([self.fp / W, -1.0 / W], axis=-1)
        e_s = np.stack([1.0 / W, self.fp / W], axis=-1)
        return nu, e_s


def graph_second_derivative(r, fp):
    """Derivative of the odd field ``f'`` with reflection at ``r = 0``."""
    d = np.gradient(fp, r, edge_order=2)
    if r.size > 2:
        # f' = a r + b r^3 near the axis
        q1, q2 = fp[1] / r[1], fp[2] / r[2]
        w = (r[2] / r[1]) ** 2
        d[0] = (w * q1 - q2) / (w - 1)
    return d


def graph_curvatures(n, r, fp, fpp):
    """(meridian, orbit) curvatures of a radial graph with the axis limit."""
    W = np.sqrt(1.0 + fp ** 2)
    lam_m = fpp / W ** 3
    lam_o = np.empty_like(lam_m)
    pos = r > 0
    lam_o[pos] = fp[pos] / (r[pos] * W[pos])
    lam_o[~pos] = fpp[~pos]
    return lam_m, lam_o, W


def curvatures_from_graph(Q: GraphProfile, speed: SpeedFunction = None) -> CurvatureData:
    """Curvatures of a radial graph; speed fields are added when ``speed`` is given."""
    fpp = Q.second_derivative()
    lam_m, lam_o, W = graph_curvatures(Q.n, Q.r, Q.fp, fpp)
    interior = Q.r > 0
    if np.any(lam_m < 0) or np.any(lam_o[interior] < 0):
        raise ConvexityLost("graph profile is not convex")
    c = np.zeros_like(Q.r)
    c[interior] = 1.0 / (Q.r[interior] * W[interior])
    rho = Q.r.copy()
    drho = 1.0 / W
    if speed is None:
        z = np.zeros_like(lam_m)
        return CurvatureData(Q.n, lam_m, lam_o, z, z, z, None, z, z, rho, drho, c,
                             extra={"W": W, "fpp": fpp})
    if speed.n != Q.n:
        raise ValueError("speed dimension differs from graph dimension")
    sf = speed_fields(speed, lam_m, lam_o)
    G_r = np.gradient(sf.G, Q.r, edge_order=2)
    G_r[0] = 0.0
    G_s = G_r / W
    return CurvatureData(
        n=Q.n, lam_m=lam_m, lam_o=lam_o, G=sf.G, dg_m=sf.dg_m, dg_o=sf.dg_o,
        hess=sf.hess, G_s=G_s, lap_G=None, rho_orb=rho, drho_s=drho, c=c,
        extra={"W": W, "fpp": fpp, "G_r": G_r},
    )

