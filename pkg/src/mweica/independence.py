"""Dependence index: mean diagonalization error of Gaussian-weighted covariances."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, TooFewValidWeightPoints
from .weighted_stats import check_data, diag_error, draw_weight_points


@dataclass
class IndexReport:
    index: float
    n_used: int
    per_point: np.ndarray
    seed: int
    weight_points: np.ndarray = None


def independence_index(X, n=32, seed=0, ess_floor=None, max_redraws=100):
    """Estimate how far the coordinates of ``X`` are from independent.

    Draws ``n`` rows as weight centers and averages the diagonalization
    error of the corresponding weighted covariances. Zero in population
    exactly when every weighted covariance is diagonal; sample values are
    small positive numbers for independent coordinates.

    Parameters
    ----------
    X : ndarray, shape (k, d)
    n : int
        Number of weight centers.
    seed : int
        Seeds the row permutation the centers are taken from; the same
        seed selects the same rows for any data of the same length.

    Returns
    -------
    IndexReport
    """
    X = check_data(X)
    if n < 1:
        raise InputError("n must be at least 1")
    if n > X.shape[0]:
        raise InputError(f"n={n} exceeds the number of samples {X.shape[0]}")
    points = draw_weight_points(X, n, np.random.default_rng(seed), ess_floor=ess_floor,
                                max_redraws=max_redraws, pd_jitter=True)
    if len(points.indices) == 0:
        raise TooFewValidWeightPoints("no weight point survived rejection")
    per_point = np.array([diag_error(C) for C in points.covariances])
    return IndexReport(index=float(np.mean(per_point)), n_used=len(per_point),
                       per_point=per_point, seed=seed, weight_points=points.indices)
