"""Time integration of ``dF/dt = -G nu`` for rotationally symmetric states.

Closed convex states evolve through their support function, ``dh/dt = -G``
at fixed normal direction.  Points moving purely in the normal direction
(markers) drift in the normal angle at the rate ``lam_m * dG/dtheta`` and
are integrated alongside the solver, so that time derivatives along the
normal motion can be measured directly.

Translating bowls come from a profile ODE integrated outward from the axis.
A short graph-mode evolution ``du/dt = G W`` moves them with the flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import (
    BisectionFailure,
    ConeViolation,
    ConvexityLost,
    Extinct,
    StepRejected,
)
from .geometry import (
    GraphProfile,
    SupportProfile,
    curvatures_from_graph,
    curvatures_from_support,
    even_derivatives,
    graph_curvatures,
    speed_fields,
    support_speed,
)
from .speeds import SpeedFunction

MAX_HALVINGS = 12


# ---------------------------------------------------------------- interpolation

def _extend(u, parity_lo, parity_hi, width=2):
    lo = parity_lo * u[width:0:-1]
    hi = parity_hi * u[-2:-2 - width:-1]
    return np.concatenate([lo, u, hi])


def cubic_interp(u, x, parity=(1, 1)):
    """Four-point Lagrange interpolation on a uniform grid with unit spacing.

    ``x`` is in grid units (0 .. len(u) - 1).  Values beyond the ends come
    from even (+1) or odd (-1) reflection as given by ``parity``.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    ext = _extend(u, *parity)
    i = np.clip(np.floor(x).astype(int), 0, u.size - 2)
    s = x - i
    j = i + 2
    w = (
        -s * (s - 1) * (s - 2) / 6,
        (s + 1) * (s - 1) * (s - 2) / 2,
        -(s + 1) * s * (s - 2) / 2,
        (s + 1) * s * (s - 1) / 6,
    )
    return w[0] * ext[j - 1] + w[1] * ext[j] + w[2] * ext[j + 1] + w[3] * ext[j + 2]


def _graph_interp(u, r, x, parity0):
    """Cubic interpolation on a uniform radial grid; one-sided near the far end."""
    dr = r[1] - r[0]
    g = np.minimum(np.asarray(x) / dr, r.size - 1.0)
    ext = np.concatenate([parity0 * u[2:0:-1], u])
    i = np.clip(np.floor(g).astype(int), 0, u.size - 3)
    s = g - i
    j = i + 2
    w = (
        -s * (s - 1) * (s - 2) / 6,
        (s + 1) * (s - 1) * (s - 2) / 2,
        -(s + 1) * s * (s - 2) / 2,
        (s + 1) * s * (s - 1) / 6,
    )
    return w[0] * ext[j - 1] + w[1] * ext[j] + w[2] * ext[j + 1] + w[3] * ext[j + 2]


# ---------------------------------------------------------------- sphere oracle

def exact_sphere(r0: float, speed: SpeedFunction, t: float) -> float:
    """Radius of the shrinking sphere: ``sqrt(r0^2 - 2 gamma(1) t)``."""
    sq = r0 ** 2 - 2.0 * speed.gamma_one * t
    if sq < 0:
        raise Extinct(f"sphere of radius {r0} is extinct before t={t}")
    return math.sqrt(sq)


def extinction_time(r0: float, speed: SpeedFunction) -> float:
    return r0 ** 2 / (2.0 * speed.gamma_one)


# ---------------------------------------------------------------- closed flow

def _speed(P, speed):
    return curvatures_from_support(P, speed, second=False)


def stable_dt(P: SupportProfile, D, safety: float) -> float:
    """Parabolic step ``safety * ds_min^2 / (2 C n)``."""
    ds_min = float(np.min(D.R1)) * P.dtheta
    C_est = float(max(np.max(D.dg_m), np.max(D.dg_o), 1e-300))
    return safety * ds_min ** 2 / (2.0 * C_est * P.n)


def step(P: SupportProfile, speed: SpeedFunction, dt: float, D0=None) -> SupportProfile:
    """One classical RK4 step of ``dh/dt = -G``.

    Raises
    ------
    StepRejected
        If a stage loses strict convexity or leaves the cone; carries
        ``dt / 2`` as the suggested retry.
    """
    if dt == 0:
        return P
    try:
        k1 = -(D0.G if D0 is not None else support_speed(P, speed))
        k2 = -support_speed(P.with_h(P.h + 0.5 * dt * k1), speed)
        k3 = -support_speed(P.with_h(P.h + 0.5 * dt * k2), speed)
        k4 = -support_speed(P.with_h(P.h + dt * k3), speed)
        new = P.with_h(P.h + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), P.t + dt)
    except (ConvexityLost, ConeViolation) as exc:
        raise StepRejected(f"step dt={dt:.3e} rejected: {exc}", dt / 2) from exc
    return new


@dataclass
class FlowTrajectory:
    """Snapshots of a closed flow plus marker paths.

    ``h`` has shape ``(K, M + 1)``; ``marker_theta`` ``(K, m)`` and
    ``marker_X`` ``(K, m, 2)`` hold marker normal angles and ambient
    ``(r, z)`` positions at the snapshot times.  ``log`` rows are
    ``(t, dt, min curvature radius)`` per accepted step.
    """

    speed: SpeedFunction
    n: int
    times: np.ndarray
    h: np.ndarray
    marker_theta: np.ndarray
    marker_X: np.ndarray
    log: np.ndarray = None
    status: str = "ok"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self):
        return self.h.shape[1] - 1

    @property
    def K(self):
        return self.h.shape[0]

    def profile(self, j) -> SupportProfile:
        return SupportProfile(self.n, self.h[j], float(self.times[j]))

    def curvature(self, j):
        if j not in self._cache:
            self._cache[j] = curvatures_from_support(self.profile(j), self.speed)
        return self._cache[j]

    def marker_fields(self, j):
        """``G``, ``dG/ds`` and ``lam_m`` interpolated at the markers."""
        D = self.curvature(j)
        x = self.marker_theta[j] / (np.pi / self.M)
        return {
            "G": cubic_interp(D.G, x),
            "G_s": cubic_interp(D.G_s, x, (-1, -1)),
            "lam_m": cubic_interp(D.lam_m, x),
            "lam_o": cubic_interp(D.lam_o, x),
        }

    def surface_gap(self, j):
        """Distance of each marker to the surface point at its normal angle."""
        pts = self.profile(j).points()
        x = self.marker_theta[j] / (np.pi / self.M)
        r = cubic_interp(pts[:, 0], x, (-1, -1))
        z = cubic_interp(pts[:, 1], x)
        return np.hypot(self.marker_X[j, :, 0] - r, self.marker_X[j, :, 1] - z)


def _marker_velocity(D, dtheta, theta):
    """Normal-angle rate and ambient velocity of normal-moving points."""
    G_t, _ = even_derivatives(D.G, dtheta)
    x = theta / dtheta
    rate = cubic_interp(D.lam_m * G_t, x, (-1, -1))
    G = cubic_interp(D.G, x)
    vel = -G[:, None] * np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    return rate, vel


def marker_start(P: SupportProfile, theta):
    pts = P.points()
    x = np.asarray(theta) / P.dtheta
    return np.stack([cubic_interp(pts[:, 0], x, (-1, -1)), cubic_interp(pts[:, 1], x)], axis=-1)


def default_markers(count: int):
    """``count`` markers spread over the open meridian."""
    return np.linspace(0.0, np.pi, count + 2)[1:-1]


class FlowAborted(StepRejected):
    """Step rejection cascade; ``trajectory`` holds the partial result."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def run(initial: SupportProfile, speed: SpeedFunction, t_end: float = None,
        r_min: float = None, safety: float = 0.5, record_interval: float = None,
        markers=None, dt: float = None, max_steps: int = 10_000_000) -> FlowTrajectory:
    """Integrate the flow until time ``t_end`` or until ``min h <= r_min``.

    Parameters
    ----------
    record_interval
        Snapshot spacing in time; ``None`` records every step.  Steps are
        shortened to land exactly on snapshot times and on ``t_end``.
    markers
        Initial normal angles of markers, or an integer count.
    dt
        Fixed step; overrides the adaptive parabolic step.
    """
    if t_end is None and r_min is None:
        raise ValueError("give t_end or r_min")
    if safety <= 0 or safety > 1:
        raise ValueError("safety must lie in (0, 1]")
    if isinstance(markers, (int, np.integer)):
        markers = default_markers(int(markers))
    theta_m = np.asarray([] if markers is None else markers, dtype=float)
    P = initial
    D = _speed(P, speed)
    X_m = marker_start(P, theta_m) if theta_m.size else np.zeros((0, 2))
    t0 = P.t
    times, hs, thetas, Xs, log = [t0], [P.h], [theta_m.copy()], [X_m.copy()], []
    next_rec = None if record_interval is None else t0 + record_interval
    k_rec = 1

    def finish(status):
        return FlowTrajectory(speed, P.n, np.array(times), np.array(hs),
                              np.array(thetas).reshape(len(times), -1),
                              np.array(Xs).reshape(len(times), -1, 2),
                              np.array(log).reshape(-1, 3), status)

    def done():
        if t_end is not None and P.t >= t_end - 1e-14 * max(1.0, abs(t_end)):
            return True
        return r_min is not None and P.h.min() <= r_min

    nsteps = 0
    while not done():
        if nsteps >= max_steps:
            raise FlowAborted(f"step budget {max_steps} exhausted at t={P.t}", finish("budget"))
        h_dt = dt if dt is not None else stable_dt(P, D, safety)
        if t_end is not None:
            h_dt = min(h_dt, t_end - P.t)
        if next_rec is not None:
            h_dt = min(h_dt, next_rec - P.t)
        for _ in range(MAX_HALVINGS):
            try:
                new = step(P, speed, h_dt, D)
                break
            except StepRejected as exc:
                h_dt = exc.suggested_dt
        else:
            raise FlowAborted(f"step rejected {MAX_HALVINGS} times at t={P.t}", finish("rejected"))
        try:
            D_new = _speed(new, speed)
        except (ConvexityLost, ConeViolation) as exc:
            raise FlowAborted(f"state left the admissible set at t={new.t}: {exc}",
                              finish("invalid")) from exc
        if theta_m.size:
            rate0, vel0 = _marker_velocity(D, P.dtheta, theta_m)
            pred = np.clip(theta_m + h_dt * rate0, 0.0, np.pi)
            rate1, vel1 = _marker_velocity(D_new, P.dtheta, pred)
            theta_m = np.clip(theta_m + 0.5 * h_dt * (rate0 + rate1), 0.0, np.pi)
            X_m = X_m + 0.5 * h_dt * (vel0 + vel1)
        P, D = new, D_new
        if next_rec is not None and abs(P.t - next_rec) <= 1e-12 * max(1.0, abs(next_rec)):
            P = P.with_h(P.h, next_rec)
            k_rec += 1
            next_rec = t0 + k_rec * record_interval
            record = True
        else:
            record = next_rec is None
        log.append((P.t, h_dt, float(min(D.R1.min(), D.R2.min()))))
        nsteps += 1
        if record or done():
            if not (times and P.t == times[-1]):
                times.append(P.t)
                hs.append(P.h)
                thetas.append(theta_m.copy())
                Xs.append(X_m.copy())
    return finish("ok")


def sphere_radius_error(traj: FlowTrajectory, r0: float) -> float:
    """Largest relative radius error against the exact shrinking sphere."""
    errs = []
    for t, h in zip(traj.times, traj.h):
        exact = exact_sphere(r0, traj.speed, t - traj.times[0])
        errs.append(np.max(np.abs(h - exact)) / exact)
    return float(max(errs))


def roundness(traj: FlowTrajectory, j: int) -> float:
    D = traj.curvature(j)
    lam = np.concatenate([D.lam_m, D.lam_o])
    return float(lam.max() / lam.min())


# ---------------------------------------------------------------- translator

@dataclass
class TranslatorSolution:
    profile: GraphProfile
    xi: np.ndarray
    vertex_curvature: float
    r_max: float
    speed_key: str

    @classmethod
    def from_profile(cls, speed: SpeedFunction, r, f, fp) -> "TranslatorSolution":
        """Rebuild a bowl from stored ``(r, f, f')``; ``f''`` comes from the ODE."""
        rhs = _translator_rhs(speed, speed.gamma_one)
        r, f, fp = (np.asarray(x, dtype=float) for x in (r, f, fp))
        fpp = np.array([rhs(ri, (fi, fpi))[1] for ri, fi, fpi in zip(r, f, fp)])
        prof = GraphProfile(speed.n, r, f, fp, fpp)
        return cls(prof, np.array([0.0, 1.0]), 1.0 / speed.gamma_one, float(r[-1]), speed.key)

    def soliton_residual(self, speed: SpeedFunction) -> float:
        """Largest ``|G + <xi, nu>| / G`` over the nodes."""
        D = curvatures_from_graph(self.profile, speed)
        nu, _ = self.profile.frame()
        return float(np.max(np.abs(D.G + nu @ self.xi) / D.G))


def merid_curvature_for(speed: SpeedFunction, lam_o: float, target: float) -> float:
    """Solve ``gamma(x, lam_o, ..., lam_o) = target`` for ``x`` by bracketing."""
    n = speed.n

    def g(x):
        lam = np.full((1, n), lam_o)
        lam[0, 0] = x
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(speed._value(lam)[0]) - target

    lo = 0.0
    g_lo = g(lo)
    if not np.isfinite(g_lo) or g_lo > 0:
        raise BisectionFailure(f"no convex solution: gamma(0, {lam_o:.3g}) >= {target:.3g}")
    hi = max(1.0, lam_o, target)
    for _ in range(200):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise BisectionFailure("upper bracket did not grow past the target")
    if g_lo == 0:
        return 0.0
    return brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _translator_rhs(speed, g1):
    def rhs(r, y):
        fp = y[1]
        W = math.sqrt(1.0 + fp * fp)
        if r == 0.0:
            lam_m = 1.0 / g1
        elif speed.n == 1:
            lam_m = merid_curvature_for(speed, 0.0, 1.0 / W)
        else:
            lam_m = merid_curvature_for(speed, fp / (r * W), 1.0 / W)
        return [fp, lam_m * W ** 3]
    return rhs


def solve_translator(speed: SpeedFunction, R_max: float, nodes: int = 2001,
                     rtol: float = 1e-12, atol: float = 1e-14) -> TranslatorSolution:
    """Rotationally symmetric translating bowl with unit speed along ``+z``.

    The profile solves ``gamma(lam_m, lam_o, ..., lam_o) = 1/W`` with the
    vertex value ``f''(0) = 1/gamma(1)``; the meridian curvature is found
    pointwise by bracketing and the profile by an explicit Runge-Kutta pair.
    """
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    g1 = speed.gamma_one
    rhs = _translator_rhs(speed, g1)
    sol = solve_ivp(rhs, (0.0, R_max), [0.0, 0.0], method="DOP853", rtol=rtol,
                    atol=atol, dense_output=True)
    if not sol.success:
        raise ConvexityLost(f"translator ODE failed: {sol.message}")
    r = np.linspace(0.0, R_max, nodes)
    f, fp = sol.sol(r)
    fp[0] = 0.0
    fpp = np.array([rhs(ri, (fi, fpi))[1] for ri, fi, fpi in zip(r, f, fp)])
    if np.any(fpp <= 0):
        raise ConvexityLost("translator profile lost strict convexity")
    prof = GraphProfile(speed.n, r, f, fp, fpp)
    return TranslatorSolution(prof, np.array([0.0, 1.0]), 1.0 / g1, R_max, speed.key)


# ---------------------------------------------------------------- graph mode

def graph_derivatives(r, f):
    """Second-order ``f'`` and ``f''`` on a uniform radial grid, even at ``r = 0``."""
    dr = r[1] - r[0]
    fp = np.empty_like(f)
    fpp = np.empty_like(f)
    fp[1:-1] = (f[2:] - f[:-2]) / (2 * dr)
    fpp[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / dr ** 2
    fp[0] = 0.0
    fpp[0] = 2 * (f[1] - f[0]) / dr ** 2
    fp[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dr)
    fpp[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / dr ** 2
    return fp, fpp


def _graph_speed(speed, r, f, second=True):
    fp, fpp = graph_derivatives(r, f)
    lam_m, lam_o, W = graph_curvatures(speed.n, r, fp, fpp)
    if np.any(lam_m <= 0):
        raise ConvexityLost("graph lost strict convexity")
    sf = speed_fields(speed, lam_m, lam_o, second)
    return sf, fp, W, lam_m


@dataclass
class GraphTrajectory:
    """Snapshots of a graph evolving by ``du/dt = G W`` with radial markers."""

    speed: SpeedFunction
    n: int
    r: np.ndarray
    times: np.ndarray
    f: np.ndarray
    marker_r: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def K(self):
        return self.f.shape[0]

    def fields(self, j):
        if j not in self._cache:
            sf, fp, W, lam_m = _graph_speed(self.speed, self.r, self.f[j])
            G = sf.G
            G_r = np.gradient(G, self.r, edge_order=2)
            G_r[0] = 0.0
            lam_o = graph_curvatures(self.n, self.r, fp, graph_derivatives(self.r, self.f[j])[1])[1]
            self._cache[j] = {"G": G, "G_s": G_r / W, "lam_m": lam_m, "lam_o": lam_o,
                              "fp": fp, "W": W}
        return self._cache[j]

    def marker_fields(self, j):
        F = self.fields(j)
        x = self.marker_r[j]
        return {
            "G": _graph_interp(F["G"], self.r, x, 1),
            "G_s": _graph_interp(F["G_s"], self.r, x, -1),
            "lam_m": _graph_interp(F["lam_m"], self.r, x, 1),
            "lam_o": _graph_interp(F["lam_o"], self.r, x, 1),
        }


def evolve_graph(sol: TranslatorSolution, speed: SpeedFunction, t_end: float,
                 record_interval: float, markers, safety: float = 0.5) -> GraphTrajectory:
    """Move a bowl by the flow in graph form.

    The outer node follows the rigid translation of the initial data, which
    is the exact boundary value for a translating solution; only interior
    nodes away from it should be examined.
    """
    r = sol.profile.r
    f = sol.profile.f.copy()
    dr = r[1] - r[0]
    f_outer = f[-1]
    marker_r = np.asarray(markers, dtype=float)

    def rhs(u):
        sf, fp, W, _ = _graph_speed(speed, r, u, False)
        du = sf.G * W
        du[-1] = 1.0
        return du

    def marker_rate(u, x):
        sf, fp, W, _ = _graph_speed(speed, r, u, False)
        return -_graph_interp(sf.G * fp / W, r, x, -1)

    C_est = float(np.max(_graph_speed(speed, r, f)[0].dg_m))
    dt_max = safety * dr ** 2 / (2.0 * max(C_est, 1e-300) * max(speed.n, 1))
    t = 0.0
    times, fs, ms = [0.0], [f.copy()], [marker_r.copy()]
    k = 1
    while t < t_end - 1e-14:
        target = min(k * record_interval, t_end)
        while t < target - 1e-15:
            dt = min(dt_max, target - t)
            k1 = rhs(f)
            k2 = rhs(f + 0.5 * dt * k1)
            k3 = rhs(f + 0.5 * dt * k2)
            k4 = rhs(f + dt * k3)
            v0 = marker_rate(f, marker_r)
            f_new = f + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            pred = marker_r + dt * v0
            marker_r = marker_r + 0.5 * dt * (v0 + marker_rate(f_new, pred))
            f = f_new
            t += dt
        t = target
        f[-1] = f_outer + t
        times.append(t)
        fs.append(f.copy())
        ms.append(marker_r.copy())
        k += 1
    return GraphTrajectory(speed, speed.n, r, np.array(times), np.array(fs), np.array(ms))
