"""Matrix-form derivatives of orthogonally invariant speeds.

A speed ``gamma`` of eigenvalues induces ``gamma(A) = gamma(lambda(A))`` on
symmetric matrices.  Everything here diagonalizes ``A = U diag(lam) U^T``,
rotates the direction matrices into that frame and applies the classical
formulas for spectral functions:

* first derivative  ``U diag(grad) U^T``
* second derivative ``sum_ij hess_ij S_ii S_jj + sum_{i != j} q_ij S_ij^2``
  with ``q_ij = (grad_i - grad_j) / (lam_i - lam_j)``, replaced by its limit
  ``hess_ii - hess_ij`` when the eigenvalues coincide.
"""
from __future__ import annotations

import numpy as np

from .errors import ConeViolation, EigenFailure, NotPositiveDefinite
from .speeds import SpeedFunction

# relative gap below which the divided difference of the gradient is
# replaced by its limit at the pair midpoint: cancellation costs eps/gap and
# the midpoint limit errs by O(gap^2), balanced near eps^(1/3)
DEGENERATE_GAP = 5e-6


def sym(A):
    """Symmetrize; entry (i, j) equals (j, i) bit for bit."""
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def eigh(A):
    A = sym(A)
    if not np.all(np.isfinite(A)):
        raise EigenFailure("matrix has non-finite entries")
    try:
        return np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc


def divided_differences(speed: SpeedFunction, lam, grad=None):
    """Matrix ``q_ij`` of first divided differences of the gradient.

    Diagonal entries are meaningless and set to zero.
    """
    lam = np.asarray(lam, dtype=float)
    grad = speed.grad(lam) if grad is None else grad
    q = _quotients(speed, lam[None], grad[None])[0]
    np.fill_diagonal(q, 0.0)
    return q


def _quotients(speed, lams, grad):
    """Batched ``(grad_i - grad_j) / (lam_i - lam_j)`` with stable near-ties.

    Nearly equal pairs use ``hess_ii - hess_ij`` evaluated where both
    eigenvalues are moved to their mean.
    """
    gap = lams[:, :, None] - lams[:, None, :]
    scale = np.linalg.norm(lams, axis=1)[:, None, None]
    tiny = np.abs(gap) < DEGENERATE_GAP * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (grad[:, :, None] - grad[:, None, :]) / gap
    n = lams.shape[1]
    for i, j in zip(*np.triu_indices(n, 1)):
        rows = np.nonzero(tiny[:, i, j])[0]
        if rows.size == 0:
            continue
        mid = lams[rows].copy()
        mid[:, i] = mid[:, j] = 0.5 * (lams[rows, i] + lams[rows, j])
        h = speed._hess(mid)
        h = 0.5 * (h + np.swapaxes(h, -1, -2))
        q[rows, i, j] = q[rows, j, i] = 0.5 * (h[:, i, i] + h[:, j, j]) - h[:, i, j]
    return q


def _frame(speed, A):
    lam, U = eigh(A)
    if not speed.cone.contains(lam, speed.boundary_floor):
        raise ConeViolation(f"spectrum {lam} outside {speed.cone}")
    return lam, U


def dgamma_matrix(speed: SpeedFunction, A):
    """First matrix derivative of ``gamma`` at ``A``."""
    lam, U = _frame(speed, A)
    return sym((U * speed.grad(lam)) @ U.T)


def d2gamma_contract(speed: SpeedFunction, A, S, T=None):
    """Second matrix derivative of ``gamma`` at ``A`` applied to ``(S, T)``.

    With ``T`` omitted this is ``d^2/ds^2 gamma(A + sS)`` at ``s = 0``.
    """
    lam, U = _frame(speed, A)
    return _d2_in_frame(speed, lam, U, S, S if T is None else T)


def _d2_in_frame(speed, lam, U, S, T):
    St = U.T @ sym(S) @ U
    Tt = St if T is S else U.T @ sym(T) @ U
    grad, hess = speed.grad(lam), speed.hess(lam)
    q = divided_differences(speed, lam, grad)
    diag_part = np.diag(St) @ hess @ np.diag(Tt)
    return float(diag_part + np.sum(q * St * Tt))


def ic_form(speed: SpeedFunction, A, S):
    """Inverse-concavity form ``(gamma'' + 2 gamma' A^{-1}) S S``.

    Nonnegative for every symmetric ``S`` iff ``gamma`` is inverse-concave.
    """
    lam, U = _frame(speed, A)
    if lam[0] <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {lam[0]:.3g} is not positive")
    return _ic_in_frame(speed, lam, U, S, lam)


def pert_ic_form(speed: SpeedFunction, A, S, eps: float):
    """Inverse-concavity form with ``A^{-1}`` replaced by ``(A + eps gamma(A) I)^{-1}``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    lam, U = _frame(speed, A)
    shifted = lam + eps * speed.value(lam)
    if shifted[0] <= 0:
        raise NotPositiveDefinite("A + eps*gamma(A)*I is not positive definite")
    return _ic_in_frame(speed, lam, U, S, shifted)


def _ic_in_frame(speed, lam, U, S, denom):
    St = U.T @ sym(S) @ U
    second = _d2_in_frame(speed, lam, U, S, S)
    grad = speed.grad(lam)
    first = 2.0 * np.sum(grad[:, None] * St ** 2 / denom[None, :])
    return second + first


def ic_minimum(speed: SpeedFunction, lam, eps: float = 0.0):
    """Exact minimum of the (perturbed) form over unit-Frobenius ``S``.

    For fixed ``A = diag(lam)`` the form is a quadratic form on Sym(n) that
    splits into a diagonal block and independent off-diagonal pairs, so the
    minimum is the smallest eigenvalue of that block structure.

    Returns
    -------
    value : float
    S : ndarray
        Unit-norm minimizer in the eigenframe of ``diag(lam)``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    grad, hess = speed.grad(lam), speed.hess(lam)
    denom = lam + eps * speed.value(lam) if eps else lam
    if np.any(denom <= 0):
        raise NotPositiveDefinite("form requires a positive definite (shifted) matrix")
    w = 1.0 / denom
    block = hess + 2.0 * np.diag(grad * w)
    vals, vecs = np.linalg.eigh(0.5 * (block + block.T))
    best, S = vals[0], np.diag(vecs[:, 0])
    if n > 1:
        q = divided_differences(speed, lam, grad)
        pair = q + grad[:, None] * w[None, :] + grad[None, :] * w[:, None]
        iu = np.triu_indices(n, 1)
        idx = int(np.argmin(pair[iu]))
        if pair[iu][idx] < best:
            i, j = iu[0][idx], iu[1][idx]
            best = pair[i, j]
            S = np.zeros((n, n))
            S[i, j] = S[j, i] = 1.0 / np.sqrt(2.0)
    return float(best), S


def ic_minimum_batch(speed: SpeedFunction, lams, eps: float = 0.0):
    """Vectorized :func:`ic_minimum` value for a stack of spectra ``(N, n)``.

    Spectra must already be admissible; no witness is returned.
    """
    lams = np.asarray(lams, dtype=float)
    N, n = lams.shape
    grad, hess = speed._grad(lams), speed._hess(lams)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    denom = lams + eps * speed._value(lams)[:, None] if eps else lams
    if np.any(denom <= 0):
        raise NotPositiveDefinite("form requires a positive definite (shifted) matrix")
    w = 1.0 / denom
    block = hess + 2.0 * np.einsum("ni,ij->nij", grad * w, np.eye(n))
    best = np.linalg.eigvalsh(block)[:, 0]
    if n > 1:
        q = _quotients(speed, lams, grad)
        pair = q + grad[:, :, None] * w[:, None, :] + grad[:, None, :] * w[:, :, None]
        iu = np.triu_indices(n, 1)
        best = np.minimum(best, pair[:, iu[0], iu[1]].min(axis=1))
    return best
