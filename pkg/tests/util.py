"""Independent oracles shared by the test suite.

Everything here is deliberately written from first principles, without
touching the package's own evaluation or optimization paths: a naive
recursive B-spline evaluator, subdivided Gauss quadrature for curvature
integrals, a flat projected (proximal) gradient reference for the group
lasso, and finite differences for the logistic gradient.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# Naive textbook B-spline recursion (half-open convention, 0/0 = 0).

def naive_bspline(t: np.ndarray, i: int, k: int, x: float) -> float:
    if k == 0:
        return 1.0 if t[i] <= x < t[i + 1] else 0.0
    out = 0.0
    d1 = t[i + k] - t[i]
    if d1 > 0:
        out += (x - t[i]) / d1 * naive_bspline(t, i, k - 1, x)
    d2 = t[i + k + 1] - t[i + 1]
    if d2 > 0:
        out += (t[i + k + 1] - x) / d2 * naive_bspline(t, i + 1, k - 1, x)
    return out


def naive_second_derivative(t: np.ndarray, i: int, x: float) -> float:
    """Second derivative of the cubic basis function i, via the derivative
    recursion down to degree-1 hat functions."""
    def safe(num, den):
        return num / den if den > 0 else 0.0

    b_i = naive_bspline(t, i, 1, x)
    b_i1 = naive_bspline(t, i + 1, 1, x)
    b_i2 = naive_bspline(t, i + 2, 1, x)
    term1 = safe(safe(b_i, t[i + 2] - t[i]), t[i + 3] - t[i])
    term2 = safe(safe(b_i1, t[i + 3] - t[i + 1]), t[i + 3] - t[i])
    term3 = safe(safe(b_i1, t[i + 3] - t[i + 1]), t[i + 4] - t[i + 1])
    term4 = safe(safe(b_i2, t[i + 4] - t[i + 2]), t[i + 4] - t[i + 1])
    return 6.0 * (term1 - term2 - term3 + term4)


_GL4_NODES = np.array([-0.8611363115940526, -0.3399810435848563,
                       0.3399810435848563, 0.8611363115940526])
_GL4_WEIGHTS = np.array([0.34785484513745385, 0.6521451548625461,
                         0.6521451548625461, 0.34785484513745385])


def quadrature_omega(basis) -> np.ndarray:
    """Curvature matrix by subdivided 4-point Gauss quadrature of the naive
    second derivatives (8 subpanels per knot interval, nodes strictly
    interior, so the half-open recursion never sees a breakpoint)."""
    t = basis.knots.full()
    K = basis.K
    omega = np.zeros((K, K))
    breaks = np.unique(t)
    for a, b in zip(breaks[:-1], breaks[1:]):
        edges = np.linspace(a, b, 9)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            for node, w in zip(_GL4_NODES, _GL4_WEIGHTS):
                x = mid + half * node
                d2 = np.array([naive_second_derivative(t, i, x) for i in range(K)])
                omega += (w * half) * np.outer(d2, d2)
    return omega


def bernstein_cubic(x: float) -> np.ndarray:
    u = 1.0 - x
    return np.array([u ** 3, 3 * u ** 2 * x, 3 * u * x ** 2, x ** 3])


def interpolate_coefficients(basis, fn) -> np.ndarray:
    """Least-squares B-spline coefficients of a function on a dense grid;
    exact for polynomials up to the spline degree."""
    from sspnet.splines import design_block

    xs = np.linspace(basis.knots.lower, basis.knots.upper, 40 * basis.K)
    block = design_block(basis, xs)
    coef, *_ = np.linalg.lstsq(block, fn(xs), rcond=None)
    return coef


# ---------------------------------------------------------------------------
# Flat projected (proximal) gradient reference for the group lasso.  The
# shrinkage step is the Moreau residual of projecting onto the penalty's dual
# ball, applied after a full gradient step with a fixed 1/L step size; this is
# a different algorithm family from the package's cyclic per-block descent.

def reference_objective(problem, beta_flat: np.ndarray) -> float:
    n = problem.n
    offs = np.concatenate([[0], np.cumsum([b.shape[1] for b in problem.blocks])])
    fitted = np.zeros(n)
    val = 0.0
    for j, block in enumerate(problem.blocks):
        bj = beta_flat[offs[j]:offs[j + 1]]
        fitted += block @ bj
        val += problem.lambda1 * math.sqrt(float(bj @ bj))
        if problem.lambda3 > 0 and problem.quad is not None:
            val += problem.lambda3 * float(bj @ problem.quad[j] @ bj)
    r = problem.y - fitted
    return val + float(r @ r) / n


def projected_gradient_reference(problem, n_iter: int = 1_000_000) -> float:
    """Reference optimum objective from ``n_iter`` projected-gradient steps."""
    n = problem.n
    sizes = [b.shape[1] for b in problem.blocks]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    B = np.concatenate(problem.blocks, axis=1)
    A = (2.0 / n) * (B.T @ B)
    if problem.lambda3 > 0 and problem.quad is not None:
        for j, q in enumerate(problem.quad):
            A[offs[j]:offs[j + 1], offs[j]:offs[j + 1]] += 2.0 * problem.lambda3 * q
    c = (2.0 / n) * (B.T @ problem.y)
    step = 1.0 / float(np.linalg.eigvalsh(A)[-1])
    thr = step * problem.lambda1
    beta = np.zeros(offs[-1])
    for _ in range(n_iter):
        z = beta - step * (A @ beta - c)
        for j in range(len(sizes)):
            zj = z[offs[j]:offs[j + 1]]
            nz = math.sqrt(float(zj @ zj))
            if nz <= thr:
                zj[:] = 0.0
            else:
                zj *= 1.0 - thr / nz
        beta = z
    return reference_objective(problem, beta)


def projected_gradient_reference_batch(problems, n_iter: int = 1_000_000) -> list[float]:
    """Vectorized reference across problems padded to a common block layout.

    Padded coefficients keep zero gradients and zero norms, so they stay at
    zero through every step and do not affect unpadded coordinates.
    """
    nb = len(problems)
    p_max = max(pr.p for pr in problems)
    k_max = max(b.shape[1] for pr in problems for b in pr.blocks)
    D = p_max * k_max
    A = np.zeros((nb, D, D))
    c = np.zeros((nb, D))
    steps = np.zeros(nb)
    for b_idx, pr in enumerate(problems):
        n = pr.n
        cols = []
        for j, block in enumerate(pr.blocks):
            K = block.shape[1]
            cols.append(np.pad(block, [(0, 0), (0, k_max - K)]))
        for j in range(pr.p, p_max):
            cols.append(np.zeros((pr.y.size, k_max)))
        Bp = np.concatenate(cols, axis=1)
        Ai = (2.0 / n) * (Bp.T @ Bp)
        if pr.lambda3 > 0 and pr.quad is not None:
            for j, q in enumerate(pr.quad):
                K = q.shape[0]
                lo = j * k_max
                Ai[lo:lo + K, lo:lo + K] += 2.0 * pr.lambda3 * q
        A[b_idx] = Ai
        c[b_idx] = (2.0 / n) * (Bp.T @ pr.y)
        steps[b_idx] = 1.0 / float(np.linalg.eigvalsh(Ai)[-1])
    lam1 = np.array([pr.lambda1 for pr in problems])
    thr = steps * lam1
    beta = np.zeros((nb, D))
    step_col = steps[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(n_iter):
            grad = np.einsum("bij,bj->bi", A, beta) - c
            z = beta - step_col * grad
            zb = z.reshape(nb, p_max, k_max)
            norms = np.sqrt(np.einsum("bpk,bpk->bp", zb, zb))
            factor = 1.0 - thr[:, None] / norms
            factor = np.where(norms > thr[:, None], factor, 0.0)
            beta = (zb * factor[:, :, None]).reshape(nb, D)
    out = []
    for b_idx, pr in enumerate(problems):
        flat = np.concatenate([
            beta[b_idx, j * k_max: j * k_max + pr.blocks[j].shape[1]]
            for j in range(pr.p)])
        out.append(reference_objective(pr, flat))
    return out


# ---------------------------------------------------------------------------
# Small numeric helpers.

def logistic_objective_flat(problem, beta_list, intercept: float) -> float:
    eta = intercept + sum(b @ v for b, v in zip(problem.blocks, beta_list))
    loss = float(np.mean(np.logaddexp(0.0, eta) - problem.y * eta))
    pen = problem.lambda1 * sum(float(np.linalg.norm(v)) for v in beta_list)
    if problem.lambda3 > 0 and problem.quad is not None:
        pen += problem.lambda3 * sum(float(v @ q @ v)
                                     for v, q in zip(beta_list, problem.quad))
    return loss + pen


def central_difference_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2 * h)
    return g


def random_spline_problem(rng, n, p, num_interior, lambda1, lambda2,
                          lambda3=0.0, family="gaussian", signal_scale=1.0):
    """Small end-to-end problem through the real pipeline, returning the
    prepared pieces tests need to cross-check the reduction."""
    from sspnet.model import AdditiveModelSpec, _build_transforms, _prepare_design
    from sspnet.solver import GroupLassoProblem

    X = rng.uniform(-1.0, 1.0, size=(n, p))
    signal = signal_scale * (np.sin(2.0 * X[:, 0]) + 0.6 * X[:, min(1, p - 1)] ** 2)
    if family == "gaussian":
        y = signal + 0.5 * rng.standard_normal(n)
    else:
        prob = 1.0 / (1.0 + np.exp(-signal))
        y = (rng.random(n) < prob).astype(float)
    spec = AdditiveModelSpec(lambda1=lambda1, lambda2=lambda2, lambda3=lambda3,
                             num_interior=num_interior, family=family)
    prep = _prepare_design(X, spec)
    transforms, btilde, quads = _build_transforms(prep, spec)
    if family == "gaussian":
        problem = GroupLassoProblem(y - y.mean(), btilde, lambda1, family=family,
                                    quad=quads, lambda3=lambda3)
    else:
        problem = GroupLassoProblem(y, btilde, lambda1, family=family,
                                    quad=quads, lambda3=lambda3)
    return X, y, spec, prep, transforms, problem
