"""Independent oracles the tests check implementations against.

These deliberately use different routes than the library code: explicit SVD
instead of the Cholesky solve, explicit Gram inversion instead of the shared
mapping, per-window summation instead of the sliding recurrence, and scalar
dot products instead of matrix products.
"""

import numpy as np


def svd_pinv_mapping(design_hist: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of the (p, n) history design via an explicit SVD."""
    u, s, vt = np.linalg.svd(design_hist.T, full_matrices=False)
    return (vt.T * (1.0 / s)) @ u.T


def normal_equations_beta(design_hist: np.ndarray, y_hist: np.ndarray) -> np.ndarray:
    """Brute-force history fit: explicit inversion of the Gram matrix."""
    gram = design_hist @ design_hist.T
    return np.linalg.inv(gram) @ (design_hist @ y_hist)


def direct_mosum(residuals, sigma: float, n_history: int, bandwidth: int) -> np.ndarray:
    """Moving sums by per-window summation, no recurrence."""
    resid = np.asarray(residuals, dtype=np.float64)
    n_obs = resid.size
    inv = 1.0 / (sigma * np.sqrt(n_history))
    out = np.empty(n_obs - n_history)
    for j, t in enumerate(range(n_history + 1, n_obs + 1)):
        out[j] = resid[t - bandwidth : t].sum() * inv
    return out


def dot_predict(matrix: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Predictions by scalar dot products over the (p, n) design."""
    n_params, n_obs = matrix.shape
    out = np.zeros(n_obs)
    for i in range(n_obs):
        acc = 0.0
        for j in range(n_params):
            acc += matrix[j, i] * beta[j]
        out[i] = acc
    return out
