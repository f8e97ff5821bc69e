"""Unmixing by joint diagonalization of Gaussian-weighted covariances.

Samples are rows, so the recovered sources are ``(X - mean) @ W``: column
``j`` of ``W`` projects the data onto source ``j``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .errors import InputError, TooFewValidWeightPoints, ZeroVarianceSource
from .joint_diag import (
    DEFAULT_MAX_SWEEPS,
    DEFAULT_TOL,
    mean_diag_error,
    order_columns,
    pham_joint_diag,
    simultaneous_diag_pair,
)
from .weighted_stats import DEFAULT_REG, check_data, diag_error, draw_weight_points, sample_covariance

DEFAULT_N_WEIGHTS = 32


@dataclass
class MweicaOptions:
    n_weights: int = DEFAULT_N_WEIGHTS
    seed: int = 0
    tol: float = DEFAULT_TOL
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    ess_floor: float = None
    max_redraws: int = 100
    n_jobs: int = 1

    def validate(self, k):
        if self.n_weights < 2:
            raise InputError("n_weights must be at least 2")
        if self.n_weights > k:
            raise InputError(f"n_weights={self.n_weights} exceeds the number of samples {k}")
        if self.tol <= 0 or self.max_sweeps < 1 or self.max_redraws < 0:
            raise InputError("tol, max_sweeps and max_redraws must be positive")


@dataclass
class UnmixingResult:
    W: np.ndarray
    sources: np.ndarray
    residual: float
    weight_points: np.ndarray = None
    covariances: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)


def transform(X, W):
    X = check_data(X)
    return (X - X.mean(axis=0)) @ np.asarray(W, dtype=float)


def normalize_unmixing(W, X, reference=None):
    """Rescale ``W`` to unit-variance sources and fix column order and signs.

    Columns are ordered by descending ``w.T @ reference @ w`` (identity when
    no reference is given) and each column's largest-magnitude entry is made
    positive. The operation is idempotent.
    """
    W = np.asarray(W, dtype=float)
    std = transform(X, W).std(axis=0)
    if np.any(std == 0) or not np.all(np.isfinite(std)):
        raise ZeroVarianceSource("an unmixed source is constant")
    W = W / std
    R = np.eye(W.shape[0]) if reference is None else np.asarray(reference, dtype=float)
    return order_columns(W, np.einsum("ij,ik,kj->j", W, R, W))


def profile_separation(W, covariances):
    """Smallest spread between the log weighted-variance profiles of two sources.

    Two recovered directions are only distinguishable if their variances
    react differently to the weight centers; a spread near the sampling
    noise means the pair is not identified (Gaussian-like data).
    """
    D = np.log(np.einsum("ji,njk,ki->ni", W, covariances, W))
    d = D.shape[1]
    if d < 2 or D.shape[0] < 2:
        return np.inf
    return float(min(np.std(D[:, p] - D[:, q]) for p, q in combinations(range(d), 2)))


def _separation_diagnostics(W, points):
    sep = profile_separation(W, points.covariances)
    noise = 4.0 / np.sqrt(np.median(points.ess))
    return {"separation": sep, "separation_noise": noise, "near_degenerate": bool(sep < noise)}


def _weight_points(X, n, opts):
    rng = np.random.default_rng(opts.seed)
    if opts.n_jobs > 1:
        with ThreadPoolExecutor(opts.n_jobs) as ex:
            return draw_weight_points(X, n, rng, ess_floor=opts.ess_floor,
                                      max_redraws=opts.max_redraws, eps=DEFAULT_REG, executor=ex)
    return draw_weight_points(X, n, rng, ess_floor=opts.ess_floor,
                              max_redraws=opts.max_redraws, eps=DEFAULT_REG)


def mweica(X, opts=None, **kwargs):
    """Multiple-weighted ICA.

    Parameters
    ----------
    X : ndarray, shape (k, d)
        Observations, one sample per row.
    opts : MweicaOptions, optional
        Options; keyword arguments override individual fields.

    Returns
    -------
    UnmixingResult
        ``residual`` is the mean diagonalization error of the weighted
        covariances at the returned ``W``. ``diagnostics`` holds the solver
        record and a ``near_degenerate`` flag raised when some pair of
        sources is indistinguishable at the sampling noise level.
    """
    opts = replace(opts or MweicaOptions(), **kwargs)
    X = check_data(X)
    k, d = X.shape
    opts.validate(k)
    Xc = X - X.mean(axis=0)

    points = _weight_points(Xc, opts.n_weights, opts)
    if len(points.indices) < 2:
        raise TooFewValidWeightPoints(
            f"only {len(points.indices)} weight points survived {len(points.rejected)} rejections")

    res = pham_joint_diag(points.covariances, tol=opts.tol, max_sweeps=opts.max_sweeps)
    W = normalize_unmixing(res.W, Xc, reference=points.covariances[0])
    diagnostics = {
        "converged": res.converged,
        "sweeps": res.sweeps_used,
        "criterion_history": res.criterion_history,
        "n_used": len(points.indices),
        "rejected": points.rejected,
    }
    diagnostics.update(_separation_diagnostics(W, points))
    return UnmixingResult(
        W=W,
        sources=Xc @ W,
        residual=mean_diag_error(W, points.covariances),
        weight_points=points.indices,
        covariances=points.covariances,
        diagnostics=diagnostics,
    )


def weica(X, seed=0, max_redraws=100):
    """Two-weight closed form: simultaneous diagonalization of two weighted covariances."""
    X = check_data(X)
    k, d = X.shape
    if k < 2:
        raise InputError("need at least two samples")
    Xc = X - X.mean(axis=0)
    opts = MweicaOptions(n_weights=2, seed=seed, max_redraws=max_redraws)
    points = _weight_points(Xc, 2, opts)
    if len(points.indices) < 2:
        raise TooFewValidWeightPoints(
            f"only {len(points.indices)} weight points survived {len(points.rejected)} rejections")
    C1, C2 = points.covariances
    res = simultaneous_diag_pair(C1, C2)
    W = normalize_unmixing(res.W, Xc, reference=C1)
    diagnostics = {
        "converged": True,
        "eigenvalues": res.eigenvalues,
        "near_degenerate": res.near_degenerate,
        "rejected": points.rejected,
    }
    return UnmixingResult(
        W=W,
        sources=Xc @ W,
        residual=mean_diag_error(W, points.covariances),
        weight_points=points.indices,
        covariances=points.covariances,
        diagnostics=diagnostics,
    )


def _sym_decorrelation(W):
    s, u = np.linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u / np.sqrt(s)) @ u.T @ W


def fastica_baseline(X, seed=0, tol=1e-4, max_iter=200):
    """Symmetric FastICA with the log-cosh contrast, as a comparison baseline.

    ``residual`` is the diagonalization error of the sample covariance of
    the recovered sources (near zero since FastICA whitens).
    """
    X = check_data(X)
    Xc = X - X.mean(axis=0)
    d = X.shape[1]
    vals, vecs = np.linalg.eigh(sample_covariance(Xc))
    if vals[0] <= 0:
        raise ZeroVarianceSource("data covariance is singular")
    K = vecs / np.sqrt(vals)
    Z = Xc @ K

    rng = np.random.default_rng(seed)
    B = _sym_decorrelation(rng.standard_normal((d, d)))
    converged = False
    for it in range(1, max_iter + 1):
        Y = np.tanh(Z @ B.T)
        B_new = (Y.T @ Z) / len(Z) - np.mean(1 - Y ** 2, axis=0)[:, None] * B
        B_new = _sym_decorrelation(B_new)
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", B_new, B)) - 1))
        B = B_new
        if lim < tol:
            converged = True
            break

    W = normalize_unmixing(K @ B.T, Xc)
    sources = Xc @ W
    return UnmixingResult(
        W=W,
        sources=sources,
        residual=diag_error(sample_covariance(sources)),
        diagnostics={"converged": converged, "iterations": it},
    )
