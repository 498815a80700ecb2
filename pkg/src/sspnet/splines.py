"""Cubic B-spline bases with quantile-placed knots and exact curvature matrices.

Each predictor gets a clamped cubic B-spline basis whose interior knots sit at
empirical quantiles of the training column.  The curvature matrix holds the
inner products of second derivatives of the basis functions, so that for a
coefficient vector ``beta`` the quadratic form ``beta @ omega @ beta`` equals
the integrated squared second derivative of the represented function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePredictorError, ValidationError

DEGREE = 3

# Gauss-Legendre nodes on [-1, 1].  Second derivatives of cubic B-splines are
# piecewise linear, so their pairwise products are piecewise quadratic and a
# 2-point rule per knot interval integrates them exactly.
_GAUSS_NODES = (-1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0))


def default_num_interior(n: int) -> int:
    """Interior-knot count for sample size n: basis size tracks sqrt(n)."""
    return max(int(round(math.sqrt(n))) - 4, 0)


@dataclass(frozen=True)
class KnotVector:
    """Domain endpoints plus strictly increasing interior knots."""

    lower: float
    upper: float
    interior: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValidationError(f"knot domain is empty: [{self.lower}, {self.upper}]")
        for t in self.interior:
            if not (self.lower < t < self.upper):
                raise ValidationError(f"interior knot {t} outside ({self.lower}, {self.upper})")
        interior = np.asarray(self.interior, dtype=float)
        if interior.size > 1 and not np.all(np.diff(interior) > 0):
            raise ValidationError("interior knots must be strictly increasing")

    def full(self) -> np.ndarray:
        """Clamped knot sequence: endpoints repeated degree+1 times."""
        return np.concatenate([
            np.full(DEGREE + 1, self.lower),
            np.asarray(self.interior, dtype=float),
            np.full(DEGREE + 1, self.upper),
        ])


@dataclass(frozen=True)
class SplineBasis:
    """Clamped cubic B-spline basis over a knot vector; K = len(interior) + 4."""

    knots: KnotVector
    _full: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_full", self.knots.full())
        self._full.setflags(write=False)

    @property
    def K(self) -> int:
        return len(self.knots.interior) + DEGREE + 1


@dataclass(frozen=True)
class CurvatureMatrix:
    """Gram matrix of second derivatives of the basis functions."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 2 or om.shape[0] != om.shape[1]:
            raise ValidationError("curvature matrix must be square")
        object.__setattr__(self, "omega", om)
        self.omega.setflags(write=False)


def make_knots(x_col, num_interior: int | None = None) -> KnotVector:
    """Place interior knots at empirical quantiles of a predictor column.

    Quantile levels are i/(num_interior+1) for i = 1..num_interior, computed
    by linear interpolation of order statistics.  Duplicate quantiles (heavy
    ties in the data) are collapsed, shrinking the basis.  Boundary knots sit
    exactly at the data range.

    Parameters
    ----------
    x_col : array_like
        Training values of one predictor, at least two distinct.
    num_interior : int, optional
        Interior knot count; defaults to the sqrt(n) rule.
    """
    x = np.asarray(x_col, dtype=float).ravel()
    if x.size < 2:
        raise DegeneratePredictorError("need at least 2 observations to place knots")
    lo = float(np.min(x))
    hi = float(np.max(x))
    if lo == hi:
        raise DegeneratePredictorError("predictor has fewer than 2 distinct values")
    if num_interior is None:
        num_interior = default_num_interior(x.size)
    if num_interior < 0:
        raise ValidationError("num_interior must be nonnegative")
    if num_interior == 0:
        return KnotVector(lo, hi, ())
    levels = np.arange(1, num_interior + 1) / (num_interior + 1)
    qs = np.quantile(x, levels, method="linear")
    qs = np.unique(qs)
    qs = qs[(qs > lo) & (qs < hi)]
    return KnotVector(lo, hi, tuple(float(q) for q in qs))


def _find_spans(t: np.ndarray, K: int, x: np.ndarray) -> np.ndarray:
    # Knot span index i with t[i] <= x < t[i+1], clipped so the clamped ends
    # (x == lower or upper) land in the first/last nonempty span.
    spans = np.searchsorted(t, x, side="right") - 1
    return np.clip(spans, DEGREE, K - 1)


def _basis_rows(t: np.ndarray, spans: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Vectorized Cox-de Boor triangle: the DEGREE+1 nonvanishing basis values
    # at each x, for basis indices spans-DEGREE .. spans.
    m = x.shape[0]
    values = np.zeros((m, DEGREE + 1))
    values[:, 0] = 1.0
    left = np.zeros((m, DEGREE + 1))
    right = np.zeros((m, DEGREE + 1))
    for j in range(1, DEGREE + 1):
        left[:, j] = x - t[spans + 1 - j]
        right[:, j] = t[spans + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return values


def _ders_basis(t: np.ndarray, span: int, u: float, n_ders: int) -> np.ndarray:
    # Nonvanishing basis functions and derivatives up to order n_ders at u.
    # Returns (n_ders+1, DEGREE+1); row d holds the d-th derivatives of basis
    # functions span-DEGREE .. span.
    p = DEGREE
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = u - t[span + 1 - j]
        right[j] = t[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved
    ders = np.zeros((n_ders + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n_ders + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    factor = float(p)
    for k in range(1, n_ders + 1):
        ders[k, :] *= factor
        factor *= p - k
    return ders


def design_block(basis: SplineBasis, x_col) -> np.ndarray:
    """Evaluate the basis at every point of ``x_col``; rows sum to one.

    Out-of-range points are clamped to the boundary (constant extrapolation).
    """
    x = np.asarray(x_col, dtype=float).ravel()
    t = basis._full
    K = basis.K
    xc = np.clip(x, basis.knots.lower, basis.knots.upper)
    spans = _find_spans(t, K, xc)
    rows = _basis_rows(t, spans, xc)
    out = np.zeros((x.size, K))
    cols = spans[:, None] + np.arange(-DEGREE, 1)[None, :]
    out[np.arange(x.size)[:, None], cols] = rows
    return out


def eval_basis(basis: SplineBasis, x: float) -> np.ndarray:
    """All K basis values at a single point (clamped to the domain)."""
    return design_block(basis, np.array([float(x)]))[0]


def curvature_matrix(basis: SplineBasis) -> CurvatureMatrix:
    """Exact integrals of products of second derivatives over the domain.

    The integrand is piecewise quadratic, so a 2-point Gauss rule on each
    knot interval is exact up to roundoff.
    """
    t = basis._full
    K = basis.K
    omega = np.zeros((K, K))
    for i in range(DEGREE, K):
        a, b = t[i], t[i + 1]
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        block = slice(i - DEGREE, i + 1)
        for node in _GAUSS_NODES:
            d2 = _ders_basis(t, i, mid + half * node, 2)[2]
            omega[block, block] += half * np.outer(d2, d2)
    omega = 0.5 * (omega + omega.T)
    return CurvatureMatrix(omega)


def eval_component(basis: SplineBasis, beta, col_means, x: float) -> float:
    """Centered component value sum_k beta_k * (b_k(x) - col_means_k)."""
    row = eval_basis(basis, x)
    beta = np.asarray(beta, dtype=float)
    col_means = np.asarray(col_means, dtype=float)
    return float((row - col_means) @ beta)


def component_values(basis: SplineBasis, beta, col_means, x_col) -> np.ndarray:
    """Vectorized :func:`eval_component` over a column of points."""
    block = design_block(basis, x_col)
    beta = np.asarray(beta, dtype=float)
    col_means = np.asarray(col_means, dtype=float)
    return (block - col_means) @ beta


def greville_sites(basis: SplineBasis) -> np.ndarray:
    """Knot averages xi_k; the coefficient vector xi represents f(x) = x."""
    t = basis._full
    K = basis.K
    return np.array([t[k + 1 : k + DEGREE + 1].mean() for k in range(K)])
