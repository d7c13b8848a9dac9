"""Catalog of one-homogeneous symmetric speeds and their eigenvalue calculus.

Every speed acts on arrays of eigenvalues with shape ``(..., n)`` so that
whole grids of curvature data are evaluated in one call.  ``value``,
``grad`` and ``hess`` check cone membership first; the underscored
variants skip the check and are meant for inner loops that already did it.

Text keys::

    trace:n=3
    kharmonic:n=3,k=2
    sigmaratio:n=4,k=2
    hcomp:kharmonic:n=4,k=2|sigmaratio:n=4,k=2
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConeViolation, ParseError

MAX_DIM = 8

# Relative floor on the smallest k-subset sum (KHarmonic boundary guard).
SUBSET_SUM_FLOOR = 1e-12


def as_eigenvalues(values, sort=True):
    """Validate an eigenvalue vector: finite, 1 <= n <= 8, ascending."""
    lam = np.asarray(values, dtype=float)
    if lam.ndim != 1 or not 1 <= lam.size <= MAX_DIM:
        raise ValueError(f"expected 1..{MAX_DIM} eigenvalues, got shape {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite")
    return np.sort(lam) if sort else lam


def elementary_symmetric(lam, kmax):
    """Return ``[sigma_0, ..., sigma_kmax]`` stacked on the last axis."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape[:-1] + (kmax + 1,))
    out[..., 0] = 1.0
    for i in range(lam.shape[-1]):
        li = lam[..., i]
        for j in range(min(i + 1, kmax), 0, -1):
            out[..., j] += li * out[..., j - 1]
    return out


def _neumaier_sum(terms):
    """Compensated sum over the last axis."""
    total = np.zeros(terms.shape[:-1])
    comp = np.zeros(terms.shape[:-1])
    for j in range(terms.shape[-1]):
        x = terms[..., j]
        t = total + x
        big = np.abs(total) >= np.abs(x)
        comp += np.where(big, (total - t) + x, (x - t) + total)
        total = t
    return total + comp


@dataclass(frozen=True)
class ConeSpec:
    """Open symmetric convex cone containing the positive cone.

    ``variant`` is one of ``positive``, ``kpositive``, ``garding``,
    ``halfspace``.  ``kpositive`` and ``halfspace`` describe the same set
    ``{min k-subset sum > 0}``; both names are kept because configs use both.
    """

    variant: str
    n: int
    k: int = 1

    def __post_init__(self):
        if self.variant not in ("positive", "kpositive", "garding", "halfspace"):
            raise ValueError(f"unknown cone variant {self.variant!r}")
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"cone dimension must be in 1..{MAX_DIM}")
        if self.variant != "positive" and not 1 <= self.k <= self.n:
            raise ValueError(f"cone parameter k={self.k} outside 1..{self.n}")

    @property
    def parts(self):
        return (self,)

    def margin(self, lam):
        """Signed membership margin: positive inside, <= 0 outside.

        For the polyhedral variants this is the smallest defining linear
        form (k-subset sums); for the Garding cone it is the smallest
        ``sigma_j`` for ``j <= k``.
        """
        lam = np.asarray(lam, dtype=float)
        if self.variant == "positive":
            return lam.min(axis=-1)
        if self.variant == "garding":
            return elementary_symmetric(lam, self.k)[..., 1:].min(axis=-1)
        srt = np.sort(lam, axis=-1)
        return srt[..., : self.k].sum(axis=-1)

    def contains(self, lam, rel_floor=0.0):
        lam = np.asarray(lam, dtype=float)
        scale = np.linalg.norm(lam, axis=-1)
        if self.variant == "garding":
            sig = elementary_symmetric(lam, self.k)[..., 1:]
            powers = scale[..., None] ** np.arange(1, self.k + 1)
            return np.all(sig > rel_floor * powers, axis=-1)
        return self.margin(lam) > rel_floor * scale

    def contains_exact(self, values):
        """Membership in exact rational arithmetic (used for m*)."""
        lam = [Fraction(v) for v in values]
        if self.variant == "positive":
            return min(lam) > 0
        if self.variant == "garding":
            sig = [Fraction(1)] + [Fraction(0)] * self.k
            for li in lam:
                for j in range(self.k, 0, -1):
                    sig[j] += li * sig[j - 1]
            return all(s > 0 for s in sig[1:])
        return sum(sorted(lam)[: self.k]) > 0

    def distance_to_boundary(self, lam):
        """Euclidean distance from an interior point to the cone boundary."""
        lam = np.asarray(lam, dtype=float)
        if self.variant == "positive":
            return float(lam.min())
        if self.variant in ("halfspace", "kpositive"):
            # Every k-subset hyperplane; redundant ones are never closer.
            return float(np.sort(lam)[: self.k].sum() / math.sqrt(self.k))
        return _garding_boundary_distance(lam, self.k)

    def __str__(self):
        if self.variant == "positive":
            return f"positive(n={self.n})"
        return f"{self.variant}(n={self.n},k={self.k})"


def _garding_boundary_distance(lam, k):
    from scipy.optimize import minimize

    best = math.inf
    for j in range(1, k + 1):
        cons = {"type": "eq", "fun": lambda mu, j=j: elementary_symmetric(mu, j)[j]}
        # start from the radial scaling toward the hyperplane sum = 0
        x0 = lam - lam.mean() * 0.999
        res = minimize(lambda mu: np.sum((mu - lam) ** 2), x0, constraints=[cons],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
        if res.success and abs(cons["fun"](res.x)) < 1e-8:
            best = min(best, math.sqrt(res.fun))
    return best


@dataclass(frozen=True)
class IntersectionCone:
    """Intersection of several cones, used by composite speeds."""

    cones: tuple

    @property
    def n(self):
        return self.cones[0].n

    @property
    def parts(self):
        out = []
        for c in self.cones:
            out.extend(c.parts)
        return tuple(out)

    def margin(self, lam):
        return np.min([c.margin(lam) for c in self.parts], axis=0)

    def contains(self, lam, rel_floor=0.0):
        return np.all([c.contains(lam, rel_floor) for c in self.parts], axis=0)

    def contains_exact(self, values):
        return all(c.contains_exact(values) for c in self.parts)

    def distance_to_boundary(self, lam):
        return min(c.distance_to_boundary(lam) for c in self.parts)

    def __str__(self):
        return " & ".join(str(c) for c in self.parts)


class SpeedFunction:
    """Symmetric, increasing, 1-homogeneous speed on an admissible cone."""

    n: int
    cone: ConeSpec
    # relative floor used when testing membership before evaluation
    boundary_floor = 0.0

    @property
    def key(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.key}>"

    def __eq__(self, other):
        return isinstance(other, SpeedFunction) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    # raw kernels: arrays of shape (..., n)
    def _value(self, lam):
        raise NotImplementedError

    def _grad(self, lam):
        raise NotImplementedError

    def _hess(self, lam):
        raise NotImplementedError

    def check(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape[-1] != self.n:
            raise ValueError(f"{self.key} expects {self.n} eigenvalues, got {lam.shape[-1]}")
        if not np.all(np.isfinite(lam)):
            raise ConeViolation("non-finite eigenvalues")
        inside = self.cone.contains(lam, self.boundary_floor)
        if not np.all(inside):
            bad = lam[~inside] if lam.ndim > 1 else lam
            raise ConeViolation(f"eigenvalues {np.asarray(bad)[:3]} outside {self.cone}")
        return lam

    def value(self, lam):
        return self._value(self.check(lam))

    __call__ = value

    def grad(self, lam):
        """Derivatives with respect to each eigenvalue."""
        return self._grad(self.check(lam))

    def hess(self, lam):
        """Second eigenvalue derivatives; symmetric (..., n, n)."""
        h = self._hess(self.check(lam))
        return 0.5 * (h + np.swapaxes(h, -1, -2))

    @property
    def gamma_one(self) -> float:
        """Value at the all-ones vector; fixes sphere and translator scales."""
        return float(self.value(np.ones(self.n)))


class Trace(SpeedFunction):
    """Sum of the eigenvalues (mean curvature)."""

    def __init__(self, n):
        self.n = int(n)
        self.cone = ConeSpec("halfspace", self.n, self.n)

    @property
    def key(self):
        return f"trace:n={self.n}"

    def _value(self, lam):
        return lam.sum(axis=-1)

    def _grad(self, lam):
        return np.ones_like(lam)

    def _hess(self, lam):
        return np.zeros(lam.shape + (self.n,))


class KHarmonic(SpeedFunction):
    """Reciprocal of the summed reciprocals of all k-subset sums.

    Concave and strictly inverse-concave on ``{min k-subset sum > 0}``.
    """

    boundary_floor = SUBSET_SUM_FLOOR

    def __init__(self, n, k):
        self.n, self.k = int(n), int(k)
        if not 1 <= self.k <= self.n:
            raise ValueError("kharmonic requires 1 <= k <= n")
        self.cone = ConeSpec("halfspace", self.n, self.k)
        subsets = list(itertools.combinations(range(self.n), self.k))
        self._incidence = np.zeros((len(subsets), self.n))
        for p, sub in enumerate(subsets):
            self._incidence[p, list(sub)] = 1.0

    @property
    def key(self):
        return f"kharmonic:n={self.n},k={self.k}"

    def _sums(self, lam):
        return lam @ self._incidence.T

    def _value(self, lam):
        return 1.0 / _neumaier_sum(1.0 / self._sums(lam))

    def _grad(self, lam):
        s = self._sums(lam)
        recip = _neumaier_sum(1.0 / s)
        return ((s ** -2) @ self._incidence) / recip[..., None] ** 2

    def _hess(self, lam):
        s = self._sums(lam)
        E = self._incidence
        recip = _neumaier_sum(1.0 / s)[..., None, None]
        b = (s ** -2) @ E
        inner = np.einsum("...p,pi,pj->...ij", s ** -3, E, E)
        return 2.0 * b[..., :, None] * b[..., None, :] / recip ** 3 - 2.0 * inner / recip ** 2


def _sigma_without(lam, drop, kmax):
    """sigma_0..sigma_kmax of lam with the coordinates in ``drop`` removed."""
    keep = [i for i in range(lam.shape[-1]) if i not in drop]
    return elementary_symmetric(lam[..., keep], kmax)


class SigmaRatio(SpeedFunction):
    """Quotient sigma_k / sigma_{k-1} on the Garding cone of order k."""

    def __init__(self, n, k):
        self.n, self.k = int(n), int(k)
        if not 2 <= self.k <= self.n:
            raise ValueError("sigmaratio requires 2 <= k <= n")
        self.cone = ConeSpec("garding", self.n, self.k)

    @property
    def key(self):
        return f"sigmaratio:n={self.n},k={self.k}"

    def _value(self, lam):
        sig = elementary_symmetric(lam, self.k)
        return sig[..., self.k] / sig[..., self.k - 1]

    def _parts(self, lam):
        k, n = self.k, self.n
        sig = elementary_symmetric(lam, k)
        p, q = sig[..., k], sig[..., k - 1]
        dp = np.empty(lam.shape)
        dq = np.empty(lam.shape)
        for i in range(n):
            s = _sigma_without(lam, (i,), k)
            dp[..., i] = s[..., k - 1]
            dq[..., i] = s[..., k - 2]
        return p, q, dp, dq

    def _grad(self, lam):
        p, q, dp, dq = self._parts(lam)
        g = p / q
        return (dp - g[..., None] * dq) / q[..., None]

    def _hess(self, lam):
        k, n = self.k, self.n
        p, q, dp, dq = self._parts(lam)
        d2p = np.zeros(lam.shape + (n,))
        d2q = np.zeros(lam.shape + (n,))
        for i in range(n):
            for j in range(i + 1, n):
                s = _sigma_without(lam, (i, j), k)
                d2p[..., i, j] = d2p[..., j, i] = s[..., k - 2]
                if k >= 3:
                    d2q[..., i, j] = d2q[..., j, i] = s[..., k - 3]
        g = (p / q)[..., None, None]
        dg = (dp - (p / q)[..., None] * dq) / q[..., None]
        outer = dg[..., :, None] * dq[..., None, :]
        return (d2p - g * d2q - outer - np.swapaxes(outer, -1, -2)) / q[..., None, None]


class HarmonicComposite(SpeedFunction):
    """Harmonic mean ``2ab/(a+b)`` of two speeds of the same dimension."""

    def __init__(self, first: SpeedFunction, second: SpeedFunction):
        if first.n != second.n:
            raise ValueError("composite parts must share the dimension")
        self.first, self.second = first, second
        self.n = first.n
        self.cone = IntersectionCone((first.cone, second.cone))
        self.boundary_floor = max(first.boundary_floor, second.boundary_floor)

    @property
    def key(self):
        return f"hcomp:{self.first.key}|{self.second.key}"

    def _value(self, lam):
        a, b = self.first._value(lam), self.second._value(lam)
        return 2 * a * b / (a + b)

    def _grad(self, lam):
        a, b = self.first._value(lam), self.second._value(lam)
        s = (a + b) ** 2
        ha, hb = 2 * b ** 2 / s, 2 * a ** 2 / s
        return ha[..., None] * self.first._grad(lam) + hb[..., None] * self.second._grad(lam)

    def _hess(self, lam):
        a, b = self.first._value(lam), self.second._value(lam)
        da, db = self.first._grad(lam), self.second._grad(lam)
        s2, s3 = (a + b) ** 2, (a + b) ** 3
        ha, hb = 2 * b ** 2 / s2, 2 * a ** 2 / s2
        haa, hbb, hab = -4 * b ** 2 / s3, -4 * a ** 2 / s3, 4 * a * b / s3
        ex = lambda x: x[..., None, None]  # noqa: E731
        out = ex(ha) * self.first._hess(lam) + ex(hb) * self.second._hess(lam)
        out += ex(haa) * da[..., :, None] * da[..., None, :]
        out += ex(hbb) * db[..., :, None] * db[..., None, :]
        cross = da[..., :, None] * db[..., None, :]
        out += ex(hab) * (cross + np.swapaxes(cross, -1, -2))
        return out


class FacetRestriction(SpeedFunction):
    """The restriction ``gamma_m(mu) = gamma(0, ..., 0, mu)`` to an m-facet."""

    def __init__(self, parent: SpeedFunction, m: int):
        if not 1 <= m <= parent.n:
            raise ValueError("facet dimension out of range")
        self.parent, self.m, self.n = parent, int(m), int(m)
        self._pad = parent.n - self.m
        self.cone = ConeSpec("positive", self.n)

    @property
    def key(self):
        return f"facet:m={self.m}|{self.parent.key}"

    def _lift(self, lam):
        pad = np.zeros(lam.shape[:-1] + (self._pad,))
        return np.concatenate([pad, lam], axis=-1)

    def _value(self, lam):
        return self.parent._value(self._lift(lam))

    def _grad(self, lam):
        return self.parent._grad(self._lift(lam))[..., self._pad:]

    def _hess(self, lam):
        return self.parent._hess(self._lift(lam))[..., self._pad:, self._pad:]


def _parse_params(text):
    params = {}
    for item in text.split(","):
        if "=" not in item:
            raise ParseError(f"malformed speed parameter {item!r}")
        name, val = item.split("=", 1)
        try:
            params[name.strip()] = int(val)
        except ValueError:
            raise ParseError(f"speed parameter {name!r} must be an integer") from None
    return params


def parse_speed(key: str) -> SpeedFunction:
    """Build a speed from its text key (see module docstring)."""
    key = key.strip()
    kind, _, rest = key.partition(":")
    kind = kind.lower()
    try:
        if kind == "hcomp":
            left, sep, right = rest.partition("|")
            if not sep:
                raise ParseError("hcomp needs two speeds separated by '|'")
            return HarmonicComposite(parse_speed(left), parse_speed(right))
        params = _parse_params(rest)
        if kind == "trace":
            return Trace(params["n"])
        if kind == "kharmonic":
            return KHarmonic(params["n"], params["k"])
        if kind == "sigmaratio":
            return SigmaRatio(params["n"], params["k"])
    except KeyError as exc:
        raise ParseError(f"speed key {key!r} is missing parameter {exc}") from None
    raise ParseError(f"unknown speed kind {kind!r} in {key!r}")


CATALOG_KEYS = (
    "trace:n=2",
    "kharmonic:n=3,k=2",
    "kharmonic:n=4,k=2",
    "kharmonic:n=4,k=3",
    "sigmaratio:n=3,k=2",
    "sigmaratio:n=4,k=2",
    "hcomp:kharmonic:n=4,k=2|sigmaratio:n=4,k=2",
)
