"""Sampling certificates for the structural constants of a speed.

All searches follow the same pattern: Monte-Carlo over spectra (and, for the
matrix forms, Haar-random frames and random directions), then a projected
coordinate descent started from the worst samples.  The results are
statistical lower/upper bounds, not proofs, and the :class:`Certificate`
says so.

Minimization over the direction ``S`` is exact once the spectrum is fixed
(:func:`harnacklab.spectral.ic_minimum`), so the descent only moves the
spectrum.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import ortho_group, spearmanr

from .errors import NegativeEntry, NoEpsilonFound, NonPositiveKappa, NoStrictLevel
from .spectral import ic_form, ic_minimum, ic_minimum_batch, pert_ic_form
from .speeds import FacetRestriction, SpeedFunction

CHUNK = 1024
STRICT_THRESHOLD = 1e-6
# Strictness is probed on spectra with min(lam) >= STRICT_FLOOR * trace(lam).
STRICT_FLOOR = 0.1
EPS_TOLERANCE = 1e-9
DESCENT_STEPS = 200
DESCENT_STARTS = 10


def dist_to_facet(lam, m: int) -> float:
    """Distance from ``lam/|lam|`` to the closure of the m-dimensional facets.

    The nearest facet point zeroes the ``n - m`` smallest coordinates.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    if not 0 <= m <= n:
        raise ValueError(f"facet index {m} outside 0..{n}")
    if np.any(lam < 0):
        raise NegativeEntry("facet distance needs a nonnegative vector")
    norm = np.linalg.norm(lam)
    if norm == 0:
        raise ValueError("zero vector has no direction")
    low = np.sort(lam)[: n - m] / norm
    return float(math.sqrt(np.sum(low ** 2)))


def compute_mstar(cone) -> int:
    """Least ``m`` whose representative ``(0,..,0,1,..,1)`` lies in the cone."""
    n = cone.n
    for m in range(1, n + 1):
        if cone.contains_exact([0] * (n - m) + [1] * m):
            return m
    raise ValueError(f"{cone} does not contain the positive cone")


def min_subset_ratio(lams, k):
    """Smallest k-subset sum over the trace, per row."""
    lams = np.atleast_2d(lams)
    srt = np.sort(lams, axis=1)
    return srt[:, :k].sum(axis=1) / srt.sum(axis=1)


def _mix_to_feasible(rng, u, k, rho, boundary_fraction):
    """Pull simplex points toward the barycenter until the k-ratio is >= rho."""
    n = u.shape[1]
    top = k / n
    umin = np.sort(u, axis=1)[:, :k].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstar = np.where(umin >= rho, 1.0, (top - rho) / (top - umin))
    tstar = np.clip(tstar, 0.0, 1.0)
    on_edge = rng.random(len(u)) < boundary_fraction
    t = np.where(on_edge, tstar, tstar * rng.random(len(u)))
    return (1 - t)[:, None] / n + t[:, None] * u


@dataclass(frozen=True)
class ConeSampler:
    """Unit spectra ``lam >= 0`` with ``min k-sum / trace >= rho``.

    ``zero_fraction`` of the points carry exact zero eigenvalues (as many as
    the constraint allows, up to ``k - 1``); ``boundary_fraction`` sit on
    the ``rho`` boundary.  Output is sorted ascending and depends only on
    ``seed`` and ``N``.
    """

    n: int
    k: int
    rho: float
    seed: int = 0
    N: int = 10_000
    zero_fraction: float = 0.1
    boundary_fraction: float = 0.25
    alpha: float = 0.5

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError("sampler needs 1 <= k <= n")
        if not 0 < self.rho <= 1.0 / self.k:
            raise ValueError(f"rho must lie in (0, 1/k], got {self.rho}")
        if self.rho > self.k / self.n + 1e-15:
            raise ValueError(f"rho={self.rho} exceeds k/n; the sampled cone is empty")

    def _chunk(self, seq, size):
        rng = np.random.default_rng(seq)
        n, k = self.n, self.k
        u = rng.dirichlet(np.full(n, self.alpha), size)
        lam = _mix_to_feasible(rng, u, k, self.rho, self.boundary_fraction)
        zeros = rng.random(size) < self.zero_fraction
        for row in np.flatnonzero(zeros):
            options = [j for j in range(1, k) if self.rho <= (k - j) / (n - j)]
            if not options:
                continue
            j = options[rng.integers(len(options))]
            v = rng.dirichlet(np.full(n - j, self.alpha), 1)
            v = _mix_to_feasible(rng, v, k - j, self.rho, self.boundary_fraction)
            lam[row] = np.concatenate([np.zeros(j), v[0]])
        lam = np.sort(lam, axis=1)
        return lam / np.linalg.norm(lam, axis=1, keepdims=True)

    def sample(self, threads: int = 1):
        seqs = np.random.SeedSequence(self.seed).spawn(math.ceil(self.N / CHUNK))
        sizes = [min(CHUNK, self.N - i * CHUNK) for i in range(len(seqs))]
        parts = _map(lambda a: self._chunk(*a), list(zip(seqs, sizes)), threads)
        return np.concatenate(parts, axis=0)

    def feasible(self, lam, floor=0.0):
        lam = np.asarray(lam)
        if np.any(lam < floor * np.linalg.norm(lam)):
            return False
        return bool(min_subset_ratio(lam, self.k)[0] >= self.rho * (1 - 1e-12))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _haar(rng, n):
    return ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))


def _random_unit_sym(rng, n):
    S = rng.normal(size=(n, n))
    S = S + S.T
    return S / np.linalg.norm(S)


def coordinate_descent(objective, x0, feasible, steps=DESCENT_STEPS, step0=0.05):
    """Projected coordinate descent on the unit sphere.

    Each sweep tries ``+/- step`` on every coordinate, renormalizes, keeps
    improvements that stay feasible, and halves the step after a sweep with
    no improvement.
    """
    x = np.asarray(x0, dtype=float)
    x = x / np.linalg.norm(x)
    fx = objective(x)
    step = step0
    for _ in range(steps):
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                y = x.copy()
                y[i] += sign * step
                nrm = np.linalg.norm(y)
                if nrm == 0:
                    continue
                y = np.sort(y / nrm)
                if not feasible(y):
                    continue
                fy = objective(y)
                if fy < fx:
                    x, fx, improved = y, fy, True
        if not improved:
            step *= 0.5
            if step < 1e-12:
                break
    return x, fx


@dataclass
class Witness:
    """Reproducible extremum: ``value`` re-evaluates from ``A`` (and ``S``)."""

    quantity: str
    value: float
    lam: list
    A: list = None
    S: list = None
    eps: float = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def certify_ellipticity(speed: SpeedFunction, sampler: ConeSampler, lams=None):
    """Ellipticity constant ``C`` over the sampled cone.

    ``C = max(max grad, 1/min grad)``; eigenvalues of the matrix derivative
    are exactly the eigenvalue derivatives.
    """
    lams = sampler.sample() if lams is None else lams
    grads = speed.grad(lams)
    per = np.maximum(grads.max(axis=1), 1.0 / grads.min(axis=1))
    i = int(np.argmax(per))
    C = float(max(per[i], 1.0))
    return C, Witness("C", C, lams[i].tolist())


def _kappa_objective(speed, eps=0.0):
    def f(lam):
        return speed.value(lam) * ic_minimum(speed, lam, eps)[0]
    return f


def estimate_kappa(speed: SpeedFunction, sampler: ConeSampler, starts=(), lams=None,
                   pos_floor=1e-6, raise_on_nonpositive=True):
    """Inverse-concavity modulus ``kappa`` on the sampled cone.

    ``kappa = min gamma(A) * form(A, S)`` over ``|A| = |S| = 1``.  Extra
    ``starts`` (spectra) seed the descent, which lets scans over nested
    cones reuse earlier witnesses.
    """
    rng = np.random.default_rng(np.random.SeedSequence([sampler.seed, 7]))
    lams = sampler.sample() if lams is None else lams
    lams = lams[lams[:, 0] > pos_floor]
    # matrix route: random frames and directions
    mc_best, mc_wit = math.inf, None
    n = speed.n
    for lam in lams:
        Q = _haar(rng, n)
        A = (Q * lam) @ Q.T
        S = _random_unit_sym(rng, n)
        v = speed.value(lam) * ic_form(speed, A, S)
        if v < mc_best:
            mc_best, mc_wit = v, (lam, A, S)
    # exact in S, then descent on the spectrum
    vals = speed._value(lams) * ic_minimum_batch(speed, lams)
    order = np.argsort(vals)[:DESCENT_STARTS]
    objective = _kappa_objective(speed)
    feasible = lambda y: sampler.feasible(y, pos_floor)  # noqa: E731
    best, best_lam = math.inf, None
    for x0 in list(lams[order]) + [np.asarray(s) for s in starts]:
        x, fx = coordinate_descent(objective, x0, feasible)
        if fx < best:
            best, best_lam = fx, x
    if mc_best < best:
        lam, A, S = mc_wit
        wit = Witness("kappa", float(mc_best), lam.tolist(), A.tolist(), S.tolist())
    else:
        _, S = ic_minimum(speed, best_lam)
        wit = Witness("kappa", float(best), best_lam.tolist(),
                      np.diag(best_lam).tolist(), S.tolist())
    if wit.value <= 0 and raise_on_nonpositive:
        raise NonPositiveKappa(f"kappa search reached {wit.value:.3e}", wit)
    return wit.value, wit


def kappa_scan(speed, rhos, k, seed=0, N=2000):
    """``kappa`` over nested cones, largest ``rho`` first, warm-started."""
    out, starts = {}, []
    for rho in sorted(rhos, reverse=True):
        kappa, wit = estimate_kappa(speed, ConeSampler(speed.n, k, rho, seed, N), starts)
        out[rho] = kappa
        starts.append(wit.lam)
    return out


@dataclass
class EpsilonResult:
    eps: float
    eps_formula: float
    eps_empirical: float
    source: str
    theta: float
    grid_min: float

    def to_dict(self):
        return asdict(self)


def pert_minimum(speed, lams, eps):
    """Smallest ``gamma(A) * perturbed form`` over unit ``S``, per spectrum."""
    return speed._value(lams) * ic_minimum_batch(speed, lams, eps)


def find_epsilon(speed: SpeedFunction, sampler: ConeSampler, kappa: float, C: float,
                 grid_depth: int = 40, lams=None):
    """Perturbation ``eps`` such that the perturbed form stays nonnegative.

    Two candidates are computed: the closed-form bound from ``kappa`` and
    ``C`` with ``theta = C^-2 / 4``, and the largest ``2^-j`` for which the
    sampled minimum (including rank-deficient spectra) is ``>= -1e-9``.
    The smaller one is returned.
    """
    if kappa <= 0 or C < 1:
        raise ValueError("need kappa > 0 and C >= 1")
    theta = C ** -2 / 4
    eps_formula = 0.5 * min(kappa * theta ** 2 / C, theta)
    lams = sampler.sample() if lams is None else lams
    eps_emp, grid_min = None, None
    for j in range(grid_depth + 1):
        eps = 2.0 ** -j
        worst = float(pert_minimum(speed, lams, eps).min())
        if worst >= -EPS_TOLERANCE:
            eps_emp, grid_min = eps, worst
            break
    if eps_emp is None:
        raise NoEpsilonFound(f"no eps >= 2^-{grid_depth} keeps the form nonnegative")
    source = "formula" if eps_formula <= eps_emp else "empirical"
    return EpsilonResult(min(eps_formula, eps_emp), eps_formula, eps_emp, source, theta, grid_min)


def validate_epsilon(speed, sampler, eps, n_random=None):
    """Held-out check of an ``eps`` certificate.

    Returns the exact-in-S minimum and the minimum over random matrix
    pairs (Haar frames, unit ``S``) evaluated through the matrix route.
    """
    lams = sampler.sample()
    exact = pert_minimum(speed, lams, eps)
    rng = np.random.default_rng(np.random.SeedSequence([sampler.seed, 11]))
    n = speed.n
    rand_min = math.inf
    count = len(lams) if n_random is None else n_random
    for lam in lams[:count]:
        Q = _haar(rng, n)
        A = (Q * lam) @ Q.T
        S = _random_unit_sym(rng, n)
        rand_min = min(rand_min, speed.value(lam) * pert_ic_form(speed, A, S, eps))
    i = int(np.argmin(exact))
    return {
        "exact_min": float(exact[i]),
        "random_min": float(rand_min),
        "witness_lam": lams[i].tolist(),
        "rank_deficient": int(np.sum(lams[:, 0] == 0.0)),
        "N": int(len(lams)),
    }


def strict_level_minimum(speed: SpeedFunction, m: int, N: int, seed: int):
    """Minimized normalized form of the facet restriction ``gamma_m``."""
    facet = FacetRestriction(speed, m) if m < speed.n else speed
    if m == 1:
        lam = np.ones(1)
        return facet.value(lam) * ic_minimum(facet, lam)[0], lam
    sampler = ConeSampler(m, 1, STRICT_FLOOR, seed, N, zero_fraction=0.0)
    lams = sampler.sample()
    rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
    best, best_lam = math.inf, None
    for lam in lams[: min(N, 2000)]:
        Q = _haar(rng, m)
        A = (Q * lam) @ Q.T
        v = facet.value(lam) * ic_form(facet, A, _random_unit_sym(rng, m))
        if v < best:
            best, best_lam = v, lam
    vals = facet._value(lams) * ic_minimum_batch(facet, lams)
    objective = _kappa_objective(facet)
    for x0 in lams[np.argsort(vals)[:DESCENT_STARTS]]:
        x, fx = coordinate_descent(objective, x0, sampler.feasible)
        if fx < best:
            best, best_lam = fx, x
    return float(best), np.asarray(best_lam)


def estimate_mIC(speed: SpeedFunction, N: int = 10_000, seed: int = 0, details=False):
    """Least facet level from which every restriction is strictly inverse-concave."""
    mstar = compute_mstar(speed.cone)
    levels = {}
    for m in range(mstar, speed.n + 1):
        levels[m] = strict_level_minimum(speed, m, N, seed)
    if levels[speed.n][0] <= STRICT_THRESHOLD:
        raise NoStrictLevel(f"{speed.key} is not strictly inverse-concave at full rank")
    m_ic = speed.n
    for m in range(speed.n, mstar - 1, -1):
        if levels[m][0] > STRICT_THRESHOLD:
            m_ic = m
        else:
            break
    if details:
        return m_ic, {m: v for m, (v, _) in levels.items()}
    return m_ic


def facet_distance_floor(lams, m_ic):
    """Smallest facet distance over ``m < m_ic`` for each spectrum."""
    lams = np.atleast_2d(lams)
    n = lams.shape[1]
    k = n - m_ic + 1
    srt = np.sort(lams, axis=1) / np.linalg.norm(lams, axis=1, keepdims=True)
    return np.sqrt(np.sum(srt[:, :k] ** 2, axis=1))


def check_facet_equivalence(family, k: int, tol: float = 1e-10):
    """Compare facet distance and k-positivity over a family of spectra.

    The minimum facet distance over ``m < n - k + 1`` is positive exactly
    when the minimal normalized k-subset sum is.
    """
    lams = np.atleast_2d(np.asarray(family, dtype=float))
    n = lams.shape[1]
    deltas = facet_distance_floor(lams, n - k + 1)
    ratios = min_subset_ratio(lams, k)
    agree = (deltas > tol) == (ratios > tol)
    corr = spearmanr(deltas, ratios).statistic if len(lams) > 2 else float("nan")
    return {
        "delta": float(deltas.min()),
        "rho_hat": float(ratios.min()),
        "spearman": float(corr),
        "disagreements": int(np.sum(~agree)),
        "consistent": bool(np.all(agree)),
    }


def boundary_distance_floor(speed: SpeedFunction, lams, subsample=64):
    """Smallest distance of sampled unit spectra to the cone boundary."""
    lams = np.atleast_2d(lams)
    lams = lams / np.linalg.norm(lams, axis=1, keepdims=True)
    margins = speed.cone.margin(lams)
    pick = np.argsort(margins)[:subsample]
    return float(min(speed.cone.distance_to_boundary(lam) for lam in lams[pick]))


@dataclass
class Certificate:
    speed: str
    n: int
    k: int
    rho: float
    seed: int
    N: int
    C: float
    kappa: float
    epsilon: float
    delta: float
    m_star: int
    m_IC: int
    boundary_floor: float = None
    epsilon_detail: dict = None
    validation: dict = None
    statistical: bool = True
    witnesses: list = field(default_factory=list)

    def to_json(self, **kw):
        return json.dumps(asdict(self), **kw)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def certify_speed(speed: SpeedFunction, rho: float, N: int = 10_000, seed: int = 0,
                  k: int = None, validate_seed: int = None, threads: int = 1) -> Certificate:
    """Run the full certificate pipeline for one speed and cone slice.

    ``k`` defaults to ``n - m_IC + 1``, the positivity order under which the
    facet-distance hypothesis holds.
    """
    m_star = compute_mstar(speed.cone)
    m_ic = estimate_mIC(speed, min(N, 4000), seed)
    k = speed.n - m_ic + 1 if k is None else k
    sampler = ConeSampler(speed.n, k, rho, seed, N)
    lams = sampler.sample(threads)
    C, c_wit = certify_ellipticity(speed, sampler, lams)
    kappa, k_wit = estimate_kappa(speed, sampler, lams=lams)
    eps = find_epsilon(speed, sampler, kappa, C, lams=lams)
    held_out = ConeSampler(speed.n, k, rho, seed + 1 if validate_seed is None else validate_seed, N)
    validation = validate_epsilon(speed, held_out, eps.eps, n_random=min(N, 2000))
    delta = float(facet_distance_floor(lams, m_ic).min())
    return Certificate(
        speed=speed.key, n=speed.n, k=k, rho=rho, seed=seed, N=N,
        C=C, kappa=kappa, epsilon=eps.eps, delta=delta, m_star=m_star, m_IC=m_ic,
        boundary_floor=boundary_distance_floor(speed, lams),
        epsilon_detail=eps.to_dict(), validation=validation,
        witnesses=[c_wit.to_dict(), k_wit.to_dict()],
    )


def all_subsets(n, k):
    return list(itertools.combinations(range(n), k))
