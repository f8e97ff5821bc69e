"""Joint diagonalization of symmetric positive definite matrices.

Conventions: a diagonalizer ``W`` acts by congruence ``W.T @ S @ W`` and its
columns are the separating directions.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InputError, NearDegenerateSpectrum, NotPositiveDefinite
from .weighted_stats import diag_error

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 100
SPECTRUM_GAP = 1e-8


@dataclass
class DiagResult:
    W: np.ndarray
    criterion_history: list = field(default_factory=list)
    sweeps_used: int = 0
    converged: bool = True
    near_degenerate: bool = False
    eigenvalues: np.ndarray = None


def check_diag_set(S):
    S = np.asarray(S, dtype=float)
    if S.ndim == 2:
        S = S[None]
    if S.ndim != 3 or S.shape[1] != S.shape[2]:
        raise InputError(f"expected a stack of square matrices, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InputError("matrix set contains non-finite entries")
    return (S + S.transpose(0, 2, 1)) / 2


def mean_diag_error(W, S):
    """Average diagonalization error of ``W.T @ S_i @ W`` over the set."""
    S = check_diag_set(S)
    W = np.asarray(W, dtype=float)
    C = np.einsum("ji,njk,kl->nil", W, S, W)
    return float(np.mean([diag_error(c) for c in C]))


def canonical_order(W, S_ref):
    """Fix the scale, order and sign ambiguity of a diagonalizer.

    Columns are scaled to unit Euclidean norm, sorted by descending
    ``w.T @ S_ref @ w`` and flipped so each column's largest-magnitude entry
    is positive.
    """
    W = np.asarray(W, dtype=float)
    W = W / np.linalg.norm(W, axis=0)
    return order_columns(W, np.einsum("ij,ik,kj->j", W, S_ref, W))


def _fix_signs(W):
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1
    return W * signs


def order_columns(W, key, digits=9):
    """Sign-fix the columns of ``W`` and sort them by descending ``key``.

    Keys equal to ``digits`` relative digits count as ties, broken by the
    column entries themselves, so the order depends only on the set of
    columns and repeated normalization is a fixed point.
    """
    W = _fix_signs(W)
    key = np.asarray(key, dtype=float)
    scale = np.max(np.abs(key)) or 1.0
    coarse = np.round(key / scale, digits)
    entries = np.round(W / np.max(np.abs(W)), digits)
    order = np.lexsort(tuple(-entries[::-1]) + (-coarse,))
    return W[:, order]


def simultaneous_diag_pair(S1, S2):
    """Exact simultaneous diagonalization of two symmetric matrices.

    Solves the generalized problem ``S2 w = lambda S1 w`` by whitening with
    the Cholesky factor of ``S1`` and diagonalizing the whitened ``S2``.

    Parameters
    ----------
    S1 : ndarray, shape (d, d)
        Strictly positive definite.
    S2 : ndarray, shape (d, d)
        Positive semidefinite.

    Returns
    -------
    DiagResult
        ``near_degenerate`` is set (and :class:`NearDegenerateSpectrum`
        warned) when two generalized eigenvalues agree to within a relative
        ``1e-8``, in which case the directions are not unique.
    """
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if S1.shape != S2.shape or S1.ndim != 2 or S1.shape[0] != S1.shape[1]:
        raise InputError("expected two square matrices of equal shape")
    try:
        L = linalg.cholesky((S1 + S1.T) / 2, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("first matrix must be positive definite") from exc
    Linv_S2 = linalg.solve_triangular(L, (S2 + S2.T) / 2, lower=True)
    M = linalg.solve_triangular(L, Linv_S2.T, lower=True)
    lam, V = np.linalg.eigh((M + M.T) / 2)
    W = linalg.solve_triangular(L.T, V, lower=False)

    lam_sorted = np.sort(lam)
    scale = np.maximum(np.abs(lam_sorted[1:]), np.abs(lam_sorted[:-1]))
    scale = np.where(scale > 0, scale, 1.0)
    near = bool(np.any(np.diff(lam_sorted) < SPECTRUM_GAP * scale))
    if near:
        warnings.warn("generalized eigenvalues are nearly repeated",
                      NearDegenerateSpectrum, stacklevel=2)

    W = canonical_order(W, S1)
    S = np.stack([S1, S2])
    crit = _criterion(np.einsum("ji,njk,kl->nil", W, S, W))
    return DiagResult(W=W, criterion_history=[crit], sweeps_used=0,
                      converged=True, near_degenerate=near, eigenvalues=lam)


def _criterion(C):
    d = np.einsum("nii->ni", C)
    return float(np.mean(np.sum(np.log(d), axis=1) - np.linalg.slogdet(C)[1]))


def _pair_step(C, i, j):
    """Pham's Newton-like 2x2 update for the index pair ``(i, j)``."""
    c1 = C[:, i, i]
    c2 = C[:, j, j]
    c12 = C[:, i, j]
    g12 = np.mean(c12 / c1)
    g21 = np.mean(c12 / c2)
    omega21 = np.mean(c1 / c2)
    omega12 = np.mean(c2 / c1)
    omega = np.sqrt(omega12 * omega21)
    t = np.sqrt(omega21 / omega12)
    tmp1 = (t * g12 + g21) / (omega + 1)
    tmp2 = (t * g12 - g21) / max(omega - 1, 1e-9)
    h12 = tmp1 + tmp2
    h21 = (tmp1 - tmp2) / t
    return h12, h21


def _transform(h12, h21):
    denom = 1.0 + np.sqrt(max(1.0 - h12 * h21, 0.0))
    return np.array([[1.0, -h12 / denom], [-h21 / denom, 1.0]])


def _pair_change(C, i, j, T):
    """Change of the summed criterion when ``T`` acts on coordinates i, j."""
    a = C[:, i, i]
    b = C[:, j, j]
    c = C[:, i, j]
    new_a = T[0, 0] ** 2 * a + 2 * T[0, 0] * T[0, 1] * c + T[0, 1] ** 2 * b
    new_b = T[1, 0] ** 2 * a + 2 * T[1, 0] * T[1, 1] * c + T[1, 1] ** 2 * b
    if np.any(new_a <= 0) or np.any(new_b <= 0):
        return np.inf
    det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
    if det == 0:
        return np.inf
    return float(np.sum(np.log(new_a / a) + np.log(new_b / b)) - 2 * len(a) * np.log(abs(det)))


def _inv_sqrt(M):
    vals, vecs = np.linalg.eigh(M)
    return (vecs / np.sqrt(vals)) @ vecs.T


def pham_joint_diag(S, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS, precondition=True):
    """Approximate joint diagonalization minimizing the mean log-det criterion.

    Cyclic sweeps over index pairs; each pair gets Pham's closed-form 2x2
    update, halved until the criterion does not increase, so the per-sweep
    history is monotone.

    Parameters
    ----------
    S : ndarray, shape (n, d, d)
        Strictly positive definite matrices.
    tol : float
        Stop once the largest off-diagonal entry of any pair update is
        below this value.
    max_sweeps : int
        Sweep budget. Running out is reported through ``converged=False``.
    precondition : bool
        Start from the inverse square root of the mean matrix when that
        gives a lower criterion than the identity.

    Returns
    -------
    DiagResult
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    S = check_diag_set(S)
    n, d, _ = S.shape
    for s in S:
        if np.linalg.eigvalsh(s)[0] <= 0:
            raise NotPositiveDefinite("every matrix in the set must be positive definite")

    W = np.eye(d)
    C = S.copy()
    crit = _criterion(C)
    if precondition and d > 1:
        P = _inv_sqrt(S.mean(axis=0))
        CP = np.einsum("ji,njk,kl->nil", P, S, P)
        crit_p = _criterion(CP)
        if crit_p < crit:
            W, C, crit = P, CP, crit_p

    history = [crit]
    converged = d == 1
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        sweeps += 1
        largest = 0.0
        for i in range(1, d):
            for j in range(i):
                h12, h21 = _pair_step(C, i, j)
                step = 1.0
                T = _transform(h12, h21)
                while _pair_change(C, i, j, T) > 0 and step > 1e-6:
                    step /= 2
                    T = _transform(step * h12, step * h21)
                if step <= 1e-6:
                    continue
                largest = max(largest, abs(T[0, 1]), abs(T[1, 0]))
                pair = [i, j]
                C[:, pair, :] = np.einsum("ab,nbk->nak", T, C[:, pair, :])
                C[:, :, pair] = np.einsum("nka,ba->nkb", C[:, :, pair], T)
                W[:, pair] = W[:, pair] @ T.T
        # renormalize to unit diagonal; the criterion is scale invariant
        s = 1.0 / np.sqrt(np.mean(np.einsum("nii->ni", C), axis=0))
        C *= s[None, :, None] * s[None, None, :]
        W = W * s
        history.append(_criterion(C))
        converged = largest < tol

    W = canonical_order(W, S[0])
    return DiagResult(W=W, criterion_history=history, sweeps_used=sweeps,
                      converged=bool(converged))
