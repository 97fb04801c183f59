"""Dense least-squares machinery shared by the selection and region code.

Deterministic by construction: all reductions happen in fixed order through
numpy/LAPACK with no parallel reduction, so region endpoints are
bit-reproducible across runs.
"""

from __future__ import annotations

import numpy as np

# Gram matrices with a reciprocal condition estimate below this are rejected:
# feature selection must be deterministic, not tolerance-lucky.
RCOND_MIN = 1e-10


class RankDeficiencyError(ValueError):
    """Raised when a candidate design matrix is numerically rank deficient."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(
            f"design matrix with columns {self.columns} is rank deficient "
            f"(reciprocal condition < {RCOND_MIN:g})"
        )


def _check_rank(X: np.ndarray, columns=None) -> None:
    if X.shape[1] == 0:
        return
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < RCOND_MIN:
        cols = columns if columns is not None else range(X.shape[1])
        raise RankDeficiencyError(cols)


def rss(Y: np.ndarray, X_M: np.ndarray, columns=None) -> float:
    """Residual sum of squares of regressing Y on the columns of X_M.

    X_M with zero columns corresponds to the null model: the residual is Y
    itself.
    """
    Y = np.asarray(Y, dtype=float)
    X_M = np.asarray(X_M, dtype=float)
    if X_M.ndim == 1:
        X_M = X_M[:, None]
    if X_M.shape[0] != Y.shape[0]:
        raise ValueError("row count mismatch between Y and X_M")
    if X_M.shape[1] == 0:
        return float(Y @ Y)
    _check_rank(X_M, columns)
    coef, *_ = np.linalg.lstsq(X_M, Y, rcond=None)
    resid = Y - X_M @ coef
    return float(resid @ resid)


def residual_operator(X_M: np.ndarray, columns=None) -> np.ndarray:
    """The orthogonal-complement projector I - X (X'X)^{-1} X'.

    Symmetric and idempotent; the empty column set yields the identity.
    """
    X_M = np.asarray(X_M, dtype=float)
    if X_M.ndim == 1:
        X_M = X_M[:, None]
    n = X_M.shape[0]
    if X_M.shape[1] == 0:
        return np.eye(n)
    _check_rank(X_M, columns)
    Q, _ = np.linalg.qr(X_M)
    return np.eye(n) - Q @ Q.T


def quad_form_coeffs(
    a: np.ndarray, b: np.ndarray, L: np.ndarray
) -> tuple[float, float, float]:
    """Coefficients (w, r, o) with (a+bz)'L(a+bz) = w + r z + o z^2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    L = np.asarray(L, dtype=float)
    La = L @ a
    Lb = L @ b
    return float(a @ La), float(a @ Lb + b @ La), float(b @ Lb)
