"""Sample moments under Gaussian data weighting.

Data matrices hold samples in rows and dimensions in columns. Weights are
kept in the log domain and only ever used after max-shift normalization,
so additive constants (the Gaussian normalizer included) never matter.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateData,
    InputError,
    NotPositiveDefinite,
    SingularWeightCovariance,
    WeightUnderflow,
    ZeroMatrix,
)

DEFAULT_REG = 1e-10
# loading kicks in below this smallest eigenvalue of the correlation-scaled matrix
SINGULAR_CORR = 1e-8


def check_data(X, min_rows=None):
    """Return ``X`` as a finite 2-D float array, raising on bad input."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise InputError(f"expected a non-empty 2-D data matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("data matrix contains non-finite entries")
    if min_rows is not None and X.shape[0] < min_rows:
        raise InputError(f"need at least {min_rows} samples, got {X.shape[0]}")
    return X


@dataclass(frozen=True)
class WeightVector:
    """Per-sample weights stored as log values, up to an additive constant."""

    log_weights: np.ndarray

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float).ravel()
        if lw.size == 0 or np.all(np.isneginf(lw)):
            raise WeightUnderflow("weight vector carries no mass")
        if np.any(np.isnan(lw)) or np.any(np.isposinf(lw)):
            raise WeightUnderflow("weight vector has NaN or +inf log weights")
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, w):
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        with np.errstate(divide="ignore"):
            return cls(np.log(w))

    @classmethod
    def uniform(cls, k):
        return cls(np.zeros(k))

    def __len__(self):
        return self.log_weights.size

    def normalized(self):
        """Weights summing to one."""
        lw = self.log_weights - self.log_weights.max()
        w = np.exp(lw)
        return w / w.sum()


def _as_weights(w):
    return w if isinstance(w, WeightVector) else WeightVector(w)


def sample_mean(X):
    return check_data(X).mean(axis=0)


def sample_covariance(X, strict=False):
    """Covariance normalized by the number of samples ``k``.

    With ``strict=True`` a constant column raises :class:`DegenerateData`.
    """
    X = check_data(X, min_rows=2)
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / X.shape[0]
    if strict and np.any(np.ptp(X, axis=0) == 0):
        raise DegenerateData("data has a constant column")
    return (C + C.T) / 2


def regularize(S, eps):
    """Shift ``S`` by ``eps * trace(S) / d`` along the diagonal."""
    if eps < 0:
        raise InputError("regularization must be nonnegative")
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    tr = np.trace(S)
    if tr == 0:
        raise ZeroMatrix("cannot regularize a matrix with zero trace")
    return S + eps * (tr / d) * np.eye(d)


def conditioned(S, eps=DEFAULT_REG):
    """Return ``S``, or ``regularize(S, eps)`` when it is numerically singular.

    Singular means a non-positive variance or a correlation matrix whose
    smallest eigenvalue is below ``1e-8``. Well-conditioned matrices pass
    through untouched, which keeps the Gaussian weights exactly affine
    equivariant.
    """
    S = np.asarray(S, dtype=float)
    if eps <= 0:
        return S
    v = np.diag(S)
    if np.all(v > 0):
        s = 1.0 / np.sqrt(v)
        if np.linalg.eigvalsh(S * s[:, None] * s[None, :])[0] >= SINGULAR_CORR:
            return S
    return regularize(S, eps)


def gaussian_log_weights(X, m, S, eps=DEFAULT_REG):
    """Log of the Gaussian density N(m, S) at each row of ``X``, up to a constant.

    Parameters
    ----------
    X : ndarray, shape (k, d)
        Samples.
    m : ndarray, shape (d,)
        Center of the weighting Gaussian.
    S : ndarray, shape (d, d)
        Covariance of the weighting Gaussian.
    eps : float
        Relative diagonal loading applied when ``S`` is numerically
        singular, see :func:`conditioned`.

    Returns
    -------
    WeightVector
        ``-0.5 * (x - m)^T S^{-1} (x - m)`` for every sample.
    """
    X = check_data(X)
    L = _cholesky(conditioned(S, eps))
    Z = linalg.solve_triangular(L, (X - np.asarray(m, dtype=float)).T, lower=True)
    return WeightVector(-0.5 * np.einsum("ij,ij->j", Z, Z))


def _cholesky(S):
    try:
        return linalg.cholesky(S, lower=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularWeightCovariance("weighting covariance is not positive definite") from exc


def effective_sample_size(w):
    p = _as_weights(w).normalized()
    return 1.0 / np.dot(p, p)


def weighted_mean(X, w, min_ess=1.0):
    X = check_data(X)
    w = _as_weights(w)
    if len(w) != X.shape[0]:
        raise InputError("weight vector length does not match the number of samples")
    p = w.normalized()
    if 1.0 / np.dot(p, p) < min_ess * (1 - 1e-12):
        raise WeightUnderflow("effective sample size below threshold")
    return p @ X


def weighted_covariance(X, w, min_ess=1.0):
    """Weighted, weighted-mean-centered second moment of ``X``.

    ``min_ess`` guards against weightings that collapse onto a handful of
    samples; callers drawing weight centers reject points below ``d + 1``.
    """
    X = check_data(X)
    p = _as_weights(w).normalized()
    mean = weighted_mean(X, w, min_ess=min_ess)
    Xc = X - mean
    C = (Xc * p[:, None]).T @ Xc
    return (C + C.T) / 2


def diag_error(A):
    """``log(det diag(A) / det A)`` for a positive definite ``A``.

    Zero exactly when ``A`` is diagonal.
    """
    A = np.asarray(A, dtype=float)
    diag = np.diag(A)
    if np.any(diag <= 0):
        raise NotPositiveDefinite("matrix has a non-positive diagonal entry")
    # scaling to unit diagonal first keeps the determinant well conditioned
    s = 1.0 / np.sqrt(diag)
    R = A * s[:, None] * s[None, :]
    sign, logdet = np.linalg.slogdet(R)
    if sign <= 0:
        raise NotPositiveDefinite("matrix is not positive definite")
    return max(-logdet, 0.0)


@dataclass
class WeightPoints:
    """Weighted moments at a set of accepted weight centers.

    ``indices`` are data rows used as centers, in draw order; ``rejected``
    lists rows discarded because their weighting was too concentrated.
    """

    indices: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    ess: np.ndarray
    rejected: list


def _moments_at(Z, X, j, ess_floor, pd_jitter):
    lw = -0.5 * np.sum((Z - Z[j]) ** 2, axis=1)
    p = np.exp(lw - lw.max())
    p /= p.sum()
    ess = 1.0 / np.dot(p, p)
    if ess < ess_floor:
        return None
    mean = p @ X
    Xc = X - mean
    C = (Xc * p[:, None]).T @ Xc
    C = (C + C.T) / 2
    lo = np.linalg.eigvalsh(C)[0]
    if lo <= 0:
        tr = np.trace(C)
        if not pd_jitter or tr <= 0 or lo < -1e-12 * tr:
            return None
        C = regularize(C, 1e-12)
    return mean, C, ess


def draw_weight_points(X, n, rng, ess_floor=None, max_redraws=100,
                       eps=DEFAULT_REG, pd_jitter=False, executor=None):
    """Draw ``n`` data rows as Gaussian weight centers and compute their moments.

    Rows are visited in the order of one seeded permutation, so the accepted
    centers depend on row indices only and not on the data values. A center
    is rejected when its effective sample size falls below ``ess_floor``
    (default ``d + 1``) or its weighted covariance is not positive definite;
    the next row of the permutation replaces it, at most ``max_redraws``
    times in total. With ``pd_jitter`` a covariance that misses positive
    definiteness by less than ``1e-12 * trace`` is loaded instead of dropped.

    The weighting covariance is the sample covariance of ``X``, passed
    through :func:`conditioned`. ``executor`` may be any
    ``concurrent.futures`` executor; results are assembled in draw order
    either way.
    """
    X = check_data(X)
    k, d = X.shape
    if ess_floor is None:
        ess_floor = d + 1
    L = _cholesky(conditioned(sample_covariance(X), eps))
    Z = linalg.solve_triangular(L, (X - X.mean(axis=0)).T, lower=True).T

    order = rng.permutation(k)
    budget = min(k, n + max_redraws)
    accepted, rejected = [], []
    pos = 0
    mapper = executor.map if executor is not None else map
    while len(accepted) < n and pos < budget:
        batch = order[pos:min(pos + n - len(accepted), budget)]
        pos += len(batch)
        results = mapper(lambda j: _moments_at(Z, X, j, ess_floor, pd_jitter), batch)
        for j, res in zip(batch, results):
            if res is None:
                rejected.append(int(j))
            else:
                accepted.append((int(j), res))

    if not accepted:
        return WeightPoints(np.zeros(0, dtype=int), np.zeros((0, d)),
                            np.zeros((0, d, d)), np.zeros(0), rejected)
    return WeightPoints(
        indices=np.array([j for j, _ in accepted]),
        means=np.array([r[0] for _, r in accepted]),
        covariances=np.array([r[1] for _, r in accepted]),
        ess=np.array([r[2] for _, r in accepted]),
        rejected=rejected,
    )
