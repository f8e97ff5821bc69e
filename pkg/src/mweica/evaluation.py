"""Separation quality: Tucker congruence, component matching, Amari index, ranks."""

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .errors import MismatchedTrialSets, ShapeMismatch, SingularMatrix, ZeroVector

EXHAUSTIVE_MAX_DIM = 8


@dataclass
class MatchReport:
    congruences: np.ndarray
    permutation: np.ndarray
    mean_abs_congruence: float
    amari: float = None


def tucker_congruence(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ShapeMismatch("vectors differ in length")
    nx, ny = np.dot(x, x), np.dot(y, y)
    if nx == 0 or ny == 0:
        raise ZeroVector("congruence of a zero vector is undefined")
    return float(np.clip(np.dot(x, y) / np.sqrt(nx * ny), -1.0, 1.0))


def congruence_matrix(S_est, S_true):
    """Tucker coefficients between centered columns; entry (i, j) pairs estimate i with source j."""
    S_est = np.asarray(S_est, dtype=float)
    S_true = np.asarray(S_true, dtype=float)
    if S_est.shape != S_true.shape:
        raise ShapeMismatch(f"shapes differ: {S_est.shape} vs {S_true.shape}")
    E = S_est - S_est.mean(axis=0)
    T = S_true - S_true.mean(axis=0)
    ne = np.sqrt(np.sum(E ** 2, axis=0))
    nt = np.sqrt(np.sum(T ** 2, axis=0))
    if np.any(ne == 0) or np.any(nt == 0):
        bad = np.flatnonzero(ne == 0).tolist() or np.flatnonzero(nt == 0).tolist()
        raise ZeroVector(f"constant column(s) {bad}")
    return np.clip(E.T @ T / np.outer(ne, nt), -1.0, 1.0)


def match_components(C):
    """Assignment of estimated to true components maximizing total |congruence|.

    ``permutation[i]`` is the true component matched with estimate ``i``.
    Exhaustive search up to dimension 8, Hungarian assignment above.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch("congruence matrix must be square")
    d = C.shape[0]
    A = np.abs(C)
    if d <= EXHAUSTIVE_MAX_DIM:
        perms = np.array(list(permutations(range(d))))
        totals = A[np.arange(d), perms].sum(axis=1)
        perm = perms[np.argmax(totals)]
    else:
        rows, cols = linear_sum_assignment(A, maximize=True)
        perm = cols[np.argsort(rows)]
    return MatchReport(congruences=C, permutation=perm,
                       mean_abs_congruence=float(np.mean(A[np.arange(d), perm])))


def match_sources(S_est, S_true, W=None, A=None):
    """Congruence matrix plus matching, with the Amari index when W and A are given."""
    report = match_components(congruence_matrix(S_est, S_true))
    if W is not None and A is not None:
        report.amari = amari_index(W, A)
    return report


def amari_index(W, A):
    """Distance of ``W.T @ A`` from the scaled permutation matrices, in [0, d - 1]."""
    W = np.asarray(W, dtype=float)
    A = np.asarray(A, dtype=float)
    if W.shape != A.shape or W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeMismatch("W and A must be square and of equal shape")
    for M in (W, A):
        if np.linalg.matrix_rank(M) < M.shape[0]:
            raise SingularMatrix("amari index needs invertible matrices")
    return amari_error(W.T @ A)


def amari_error(G):
    """Amari error of a square gain matrix; zero exactly for scaled permutations."""
    G = np.abs(np.asarray(G, dtype=float))
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ShapeMismatch("gain matrix must be square")
    if np.any(G.max(axis=0) == 0) or np.any(G.max(axis=1) == 0):
        raise ZeroVector("gain matrix has a zero row or column")
    d = G.shape[0]
    rows = np.sum(G.sum(axis=1) / G.max(axis=1) - 1)
    cols = np.sum(G.sum(axis=0) / G.max(axis=0) - 1)
    return float((rows + cols) / (2 * d))


def rank_methods(scores):
    """Per-trial ranks (1 = highest score, ties share the mean rank).

    Parameters
    ----------
    scores : dict
        Method name to a sequence of per-trial scores; all sequences must
        cover the same trials.

    Returns
    -------
    ranks : dict
        Method name to an array of per-trial ranks.
    summary : dict
        Method name to ``{"q1", "median", "q3", "mean"}`` of its ranks.
    """
    methods = list(scores)
    lengths = {len(scores[m]) for m in methods}
    if len(lengths) != 1:
        raise MismatchedTrialSets(f"methods were scored on different trial counts: {sorted(lengths)}")
    table = np.array([np.asarray(scores[m], dtype=float) for m in methods]).reshape(len(methods), -1)
    ranked = np.empty_like(table)
    for t in range(table.shape[1]):
        ranked[:, t] = rankdata(-table[:, t], method="average")
    ranks = {m: ranked[i] for i, m in enumerate(methods)}
    summary = {}
    for m, r in ranks.items():
        q1, med, q3 = np.percentile(r, [25, 50, 75]) if r.size else (np.nan,) * 3
        summary[m] = {"q1": float(q1), "median": float(med), "q3": float(q3),
                      "mean": float(np.mean(r)) if r.size else np.nan}
    return ranks, summary
