"""Per-predictor block matrices and the change of coordinates to group-lasso form.

For one predictor with centered design block ``Bc`` and curvature matrix
``omega``, the block matrix is

    M = (w1 / n) * Bc.T @ Bc + lambda2 * w2 * omega.

Factoring M = R.T @ R and mapping ``beta_tilde = R @ beta`` turns the combined
norm ``sqrt(w1 * ||Bc beta||_n^2 + lambda2 * w2 * beta @ omega @ beta)`` into
the plain Euclidean norm of ``beta_tilde``, which is what the group-lasso
solver penalizes.

Column centering puts the constant function in the null space of both terms,
so M built from a real spline block is singular by construction; a tiny
escalating diagonal jitter (recorded on the transform) makes the Cholesky
factorization well defined.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SingularBlockError, ValidationError
from .splines import CurvatureMatrix

# Escalating relative jitter levels; each is multiplied by trace(M)/K.
_JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)
# A Cholesky pivot below sqrt(accept * trace(M)/K) is treated as failure.
_PIVOT_ACCEPT = 1e-13


@dataclass(frozen=True)
class BlockTransform:
    """Factored block matrix and the data needed to map coefficients back.

    ``M`` includes any jitter that was added to make the factorization
    succeed; ``jitter_used`` is the absolute diagonal shift (0 when none).
    """

    M: np.ndarray
    R: np.ndarray
    col_means: np.ndarray
    w1: float
    w2: float
    jitter_used: float


def build_block(B_j, omega: CurvatureMatrix, lambda2: float,
                w1: float = 1.0, w2: float = 1.0) -> tuple[BlockTransform, np.ndarray]:
    """Center a design block, factor its block matrix, and transform it.

    Returns the transform record and ``Btilde = Bc @ inv(R)`` computed by
    triangular solves.

    Raises
    ------
    SingularBlockError
        If the factorization fails even at the largest jitter level.
    """
    B = np.asarray(B_j, dtype=float)
    if B.ndim != 2:
        raise ValidationError("design block must be 2-dimensional")
    n, K = B.shape
    om = omega.omega
    if om.shape != (K, K):
        raise ValidationError(f"curvature matrix shape {om.shape} does not match K={K}")
    if lambda2 < 0:
        raise ValidationError("lambda2 must be nonnegative")
    if w1 <= 0 or w2 <= 0:
        raise ValidationError("block weights must be positive")
    if K > n:
        warnings.warn(f"block has more basis functions ({K}) than rows ({n})", stacklevel=2)

    col_means = B.mean(axis=0)
    Bc = B - col_means
    M0 = (w1 / n) * (Bc.T @ Bc) + (lambda2 * w2) * om
    M0 = 0.5 * (M0 + M0.T)
    scale = np.trace(M0) / K
    if not np.isfinite(scale) or scale <= 0:
        raise SingularBlockError("block matrix has nonpositive trace")

    for level in _JITTER_LEVELS:
        jitter = level * scale
        M = M0 if level == 0.0 else M0 + jitter * np.eye(K)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            continue
        # A pivot at roundoff level means M is numerically singular even
        # though the factorization did not raise; escalate in that case.
        if np.min(np.diagonal(L)) ** 2 < _PIVOT_ACCEPT * scale:
            continue
        R = L.T.copy()
        Btilde = solve_triangular(R, Bc.T, trans="T", lower=False).T
        return BlockTransform(M=M, R=R, col_means=col_means, w1=float(w1),
                              w2=float(w2), jitter_used=float(jitter)), Btilde

    raise SingularBlockError(
        f"block matrix could not be factored at any jitter level (K={K}, n={n})")


def back_transform(transform: BlockTransform, beta_tilde) -> np.ndarray:
    """Original-coordinate coefficients beta with R @ beta = beta_tilde."""
    bt = np.asarray(beta_tilde, dtype=float)
    return solve_triangular(transform.R, bt, lower=False)


def quad_in_transformed(transform: BlockTransform, omega: CurvatureMatrix) -> np.ndarray:
    """Curvature quadratic form expressed in transformed coordinates.

    Returns Q with beta_tilde @ Q @ beta_tilde = beta @ omega @ beta.
    """
    R = transform.R
    W = solve_triangular(R, omega.omega, trans="T", lower=False)
    Q = solve_triangular(R, W.T, trans="T", lower=False).T
    return 0.5 * (Q + Q.T)
