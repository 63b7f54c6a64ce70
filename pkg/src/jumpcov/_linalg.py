"""Shared dense linear-algebra helpers used outside the hot kernels."""

from __future__ import annotations

import numpy as np
import scipy.linalg


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def is_spd(a: np.ndarray, rel_sym_tol: float = 1e-12) -> bool:
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - a.T)) > rel_sym_tol * scale:
        return False
    try:
        np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        return False
    return True


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factorization."""
    factor = scipy.linalg.cho_factor(symmetrize(a), lower=True)
    inv = scipy.linalg.cho_solve(factor, np.eye(a.shape[0]))
    return symmetrize(inv)


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    factor = scipy.linalg.cho_factor(symmetrize(a), lower=True)
    return scipy.linalg.cho_solve(factor, b)


def conditional_weights(gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate conditional regression weights of an SPD covariance.

    For ``x ~ N(m, gamma)`` the conditional distribution of ``x_i`` given
    ``x_{-i}`` is normal with mean ``m_i + sum_k w[i, k] (x_k - m_k)`` and
    variance ``b2[i]`` (the reciprocal of the precision diagonal).  ``w`` has
    a zero diagonal.  Computed from a Cholesky factorization of ``gamma``,
    never by forming the explicit inverse entry formulas.
    """
    prec = spd_inverse(gamma)
    d = np.diag(prec).copy()
    if np.any(d <= 0):
        raise np.linalg.LinAlgError("precision diagonal not positive")
    w = -prec / d[:, None]
    np.fill_diagonal(w, 0.0)
    b2 = 1.0 / d
    return w, b2
