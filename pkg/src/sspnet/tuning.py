"""Lambda grids, warm-started path fits, holdout/CV selection, adaptive weights.

Each lambda2 value gets its own descending lambda1 ladder anchored at the
lambda1_max of that lambda2's transformed problem, so the first fit of every
ladder is the all-zero model.  Paths descend lambda1 with warm starts; scoring
back-transforms only the active blocks.  Ties in the score surface break
toward the sparser, smoother corner (larger lambda1, then larger lambda2).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import model as model_mod
from . import penalty, solver
from .errors import (DegenerateResponseError, EmptyModelError, ValidationError)
from .model import AdditiveModelSpec, FittedAdditiveModel, _PreparedDesign
from .solver import GroupLassoProblem, Solution


@dataclass(frozen=True)
class LambdaGrid:
    """Per-lambda2 descending lambda1 ladders plus their anchors."""

    lambda1_values: np.ndarray  # (n_l2, n_l1), descending within each row
    lambda2_values: np.ndarray  # (n_l2,)
    anchors: np.ndarray  # (n_l2,) lambda1_max at each lambda2

    @property
    def n_l1(self) -> int:
        return self.lambda1_values.shape[1]

    @property
    def n_l2(self) -> int:
        return self.lambda2_values.size


@dataclass
class TuneResult:
    best_lambda1: float
    best_lambda2: float
    scores: np.ndarray  # (n_l1, n_l2)
    active_sizes: np.ndarray  # (n_l1, n_l2)
    model: FittedAdditiveModel
    grid: LambdaGrid


def default_lambda2_range(n: int) -> tuple[float, float]:
    """Wide log-range centered on the n**(-4/5) smoothing scale."""
    base = n ** (-0.8)
    return (1e-6 * base, 1e2 * base)


def _problem_for(prep: _PreparedDesign, y: np.ndarray, spec: AdditiveModelSpec,
                 btilde: list[np.ndarray], quads) -> tuple[GroupLassoProblem, float]:
    if spec.family == "gaussian":
        ybar = float(np.mean(y))
        return GroupLassoProblem(y - ybar, btilde, spec.lambda1, family="gaussian",
                                 quad=quads, lambda3=spec.lambda3), ybar
    return GroupLassoProblem(y, btilde, spec.lambda1, family="binomial",
                             quad=quads, lambda3=spec.lambda3), float(np.mean(y))


def make_grid(train_X, train_y, spec: AdditiveModelSpec, n_l1: int = 100,
              n_l2: int = 15, l1_ratio: float = 1e-3,
              l2_range: tuple[float, float] | None = None) -> LambdaGrid:
    """Build the tuning grid for a training set.

    For each lambda2, lambda1 runs log-spaced from its lambda1_max down to
    ``l1_ratio`` times that anchor.
    """
    if n_l1 < 1 or n_l2 < 1:
        raise ValidationError("grid sizes must be positive")
    if not 0 < l1_ratio <= 1:
        raise ValidationError("l1_ratio must be in (0, 1]")
    X, y = model_mod._validate_xy(train_X, train_y, spec)
    prep = model_mod._prepare_design(X, spec)
    if l2_range is None:
        l2_range = default_lambda2_range(prep.n)
    lo, hi = l2_range
    if lo <= 0 or hi < lo:
        raise ValidationError("l2_range must be positive and ordered")
    lambda2_values = np.geomspace(lo, hi, n_l2)
    anchors = np.zeros(n_l2)
    ladders = np.zeros((n_l2, n_l1))
    for i, lam2 in enumerate(lambda2_values):
        spec_i = replace(spec, lambda1=0.0, lambda2=float(lam2))
        _, btilde, quads = model_mod._build_transforms(prep, spec_i)
        problem, _ = _problem_for(prep, y, spec_i, btilde, quads)
        lmax = solver.lambda1_max(problem)
        if lmax <= 0:
            raise DegenerateResponseError("lambda1_max is zero; response carries no signal")
        anchors[i] = lmax
        ladders[i] = np.geomspace(lmax, l1_ratio * lmax, n_l1)
    return LambdaGrid(lambda1_values=ladders, lambda2_values=lambda2_values,
                      anchors=anchors)


@dataclass
class _PathPoint:
    lambda1: float
    lambda2: float
    i_l1: int
    i_l2: int
    active_beta: dict[int, np.ndarray]  # kept-position -> beta_tilde
    intercept: float
    converged: bool
    n_active: int


def _iter_path(prep: _PreparedDesign, y: np.ndarray, spec: AdditiveModelSpec,
               grid: LambdaGrid, i_l2: int, btilde: list[np.ndarray], quads):
    """Warm-started descent of one lambda2 track; yields path points."""
    lam2 = float(grid.lambda2_values[i_l2])
    warm: Solution | None = None
    ops = solver._BlockOps(btilde, quads, spec.lambda3, spec.family)
    for i_l1, lam1 in enumerate(grid.lambda1_values[i_l2]):
        spec_pt = replace(spec, lambda1=float(lam1), lambda2=lam2)
        problem, _ = _problem_for(prep, y, spec_pt, btilde, quads)
        if spec.family == "gaussian":
            sol = solver.fit_gaussian(problem, spec.solver, warm_start=warm, ops=ops)
        else:
            sol = solver.fit_logistic(problem, spec.solver, warm_start=warm, ops=ops)
        warm = sol
        active_beta = {pos: sol.beta_tilde[pos].copy() for pos in sorted(sol.active)}
        yield _PathPoint(lambda1=float(lam1), lambda2=lam2, i_l1=i_l1, i_l2=i_l2,
                         active_beta=active_beta, intercept=sol.intercept,
                         converged=sol.converged, n_active=len(sol.active)), sol


def path_fit(train_X, train_y, grid: LambdaGrid, spec: AdditiveModelSpec
             ) -> list[FittedAdditiveModel]:
    """Fit every grid point with warm starts; returns one model per point.

    Models are ordered by lambda2 index, then descending lambda1 within each
    track; each carries its own penalty levels in its spec echo.
    """
    X, y = model_mod._validate_xy(train_X, train_y, spec)
    prep = model_mod._prepare_design(X, spec)
    out: list[FittedAdditiveModel] = []
    for i_l2 in range(grid.n_l2):
        lam2 = float(grid.lambda2_values[i_l2])
        transforms, btilde, quads = model_mod._build_transforms(
            prep, replace(spec, lambda2=lam2))
        for pt, sol in _iter_path(prep, y, spec, grid, i_l2, btilde, quads):
            spec_pt = replace(spec, lambda1=pt.lambda1, lambda2=lam2)
            if spec.family == "gaussian":
                intercept = float(np.mean(y))
            else:
                intercept = sol.intercept
            out.append(model_mod._assemble(prep, transforms, sol, spec_pt,
                                           intercept, float(np.mean(y))))
    return out


def _holdout_blocks(prep: _PreparedDesign, holdout_X: np.ndarray) -> dict[int, np.ndarray]:
    from . import splines
    return {j: splines.design_block(prep.bases[j], holdout_X[:, j]) for j in prep.kept}


def _score_point(pt: _PathPoint, prep: _PreparedDesign,
                 transforms: dict[int, penalty.BlockTransform],
                 hold_blocks: dict[int, np.ndarray], holdout_y: np.ndarray,
                 family: str, train_ybar: float) -> float:
    m = holdout_y.size
    if family == "gaussian":
        pred = np.full(m, train_ybar)
    else:
        pred = np.full(m, pt.intercept)
    for pos, bt in pt.active_beta.items():
        j = prep.kept[pos]
        tr = transforms[j]
        beta = penalty.back_transform(tr, bt)
        pred += (hold_blocks[j] - tr.col_means) @ beta
    if family == "gaussian":
        diff = holdout_y - pred
        return float(diff @ diff) / m
    return float(np.mean(np.logaddexp(0.0, pred) - holdout_y * pred))


def _assemble_point(pt: _PathPoint, prep: _PreparedDesign, y: np.ndarray,
                    spec: AdditiveModelSpec,
                    transforms: dict[int, penalty.BlockTransform]) -> FittedAdditiveModel:
    """Rebuild a full fitted model from a stored sparse path solution."""
    spec_pt = replace(spec, lambda1=pt.lambda1, lambda2=pt.lambda2)
    _, btilde, quads = model_mod._build_transforms(prep, spec_pt)
    beta_full = [np.zeros(btilde[pos].shape[1]) for pos in range(len(prep.kept))]
    for pos, bt in pt.active_beta.items():
        beta_full[pos] = bt.copy()
    problem, ybar = _problem_for(prep, y, spec_pt, btilde, quads)
    sol = Solution(beta_tilde=beta_full, intercept=pt.intercept,
                   objective_trace=[solver.objective(problem, beta_full, pt.intercept)],
                   kkt_residuals=np.zeros(len(prep.kept)),
                   active=set(pt.active_beta), sweeps_used=0, converged=pt.converged)
    sol.kkt_residuals = solver.kkt_residuals(problem, sol)
    intercept = ybar if spec.family == "gaussian" else pt.intercept
    return model_mod._assemble(prep, transforms, sol, spec_pt, intercept, ybar)


def _select(scores: np.ndarray, grid: LambdaGrid) -> tuple[int, int]:
    # argmin with ties broken toward larger lambda1, then larger lambda2
    best = None
    best_key = None
    for i_l2 in range(grid.n_l2):
        for i_l1 in range(grid.n_l1):
            key = (scores[i_l1, i_l2], -grid.lambda1_values[i_l2, i_l1],
                   -grid.lambda2_values[i_l2])
            if best_key is None or key < best_key:
                best_key = key
                best = (i_l1, i_l2)
    return best


def validate_select(train: tuple, holdout: tuple, grid: LambdaGrid,
                    spec: AdditiveModelSpec) -> TuneResult:
    """Fit paths on the training set, score every grid point on the holdout.

    ``train`` and ``holdout`` are (X, y) pairs.  The returned model is the
    path solution at the winning pair, assembled on the training data.
    """
    train_X, train_y = model_mod._validate_xy(train[0], train[1], spec)
    hold_X = np.asarray(holdout[0], dtype=float)
    hold_y = np.asarray(holdout[1], dtype=float).ravel()
    if hold_y.size == 0:
        raise ValidationError("holdout set is empty")
    if hold_X.ndim != 2 or hold_X.shape[0] != hold_y.size or hold_X.shape[1] != train_X.shape[1]:
        raise ValidationError("holdout shapes do not match training data")
    prep = model_mod._prepare_design(train_X, spec)
    hold_blocks = _holdout_blocks(prep, hold_X)
    train_ybar = float(np.mean(train_y))

    scores = np.zeros((grid.n_l1, grid.n_l2))
    sizes = np.zeros((grid.n_l1, grid.n_l2), dtype=int)
    points: dict[tuple[int, int], _PathPoint] = {}
    for i_l2 in range(grid.n_l2):
        lam2 = float(grid.lambda2_values[i_l2])
        transforms, btilde, quads = model_mod._build_transforms(
            prep, replace(spec, lambda2=lam2))
        for pt, _sol in _iter_path(prep, train_y, spec, grid, i_l2, btilde, quads):
            scores[pt.i_l1, i_l2] = _score_point(pt, prep, transforms, hold_blocks,
                                                 hold_y, spec.family, train_ybar)
            sizes[pt.i_l1, i_l2] = pt.n_active
            points[(pt.i_l1, i_l2)] = pt

    i_l1, i_l2 = _select(scores, grid)
    best_pt = points[(i_l1, i_l2)]
    best_transforms, _, _ = model_mod._build_transforms(
        prep, replace(spec, lambda2=best_pt.lambda2))
    best_model = _assemble_point(best_pt, prep, train_y, spec, best_transforms)
    return TuneResult(best_lambda1=best_pt.lambda1, best_lambda2=best_pt.lambda2,
                      scores=scores, active_sizes=sizes, model=best_model, grid=grid)


def _fold_assignment(n: int, k: int, seed: int, y: np.ndarray | None) -> np.ndarray:
    """Deterministic fold labels; stratified by class when y is given."""
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    perm = rng.permutation(n)
    folds[perm] = np.arange(n) % k
    if y is None:
        return folds
    # Redraw stratified when any fold's train or holdout part is single-class.
    def degenerate(f):
        for i in range(k):
            in_fold = f == i
            for part in (y[in_fold], y[~in_fold]):
                if part.size == 0 or np.all(part == part[0]):
                    return True
        return False
    if not degenerate(folds):
        return folds
    folds = np.empty(n, dtype=int)
    pos = 0
    for label in (0.0, 1.0):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + pos) % k
        pos += idx.size
    return folds


def kfold_cv(X, y, grid: LambdaGrid, spec: AdditiveModelSpec, k: int = 5,
             seed: int = 0) -> TuneResult:
    """K-fold cross-validation over the grid, then a refit on all data.

    The fold assignment is a pure function of (n, k, seed, labels); binomial
    responses get stratified folds whenever a plain split would leave a fold
    single-class.
    """
    X, y = model_mod._validate_xy(X, y, spec)
    n = y.size
    if k < 2:
        raise ValidationError("k must be at least 2")
    if n < 2 * k and k != n:
        raise ValidationError("need n >= 2k observations (or k = n for leave-one-out)")
    folds = _fold_assignment(n, k, seed, y if spec.family == "binomial" else None)

    total = np.zeros((grid.n_l1, grid.n_l2))
    size_total = np.zeros((grid.n_l1, grid.n_l2))
    for i in range(k):
        test = folds == i
        result = validate_select((X[~test], y[~test]), (X[test], y[test]), grid, spec)
        total += result.scores
        size_total += result.active_sizes
    scores = total / k
    i_l1, i_l2 = _select(scores, grid)
    best_l1 = float(grid.lambda1_values[i_l2, i_l1])
    best_l2 = float(grid.lambda2_values[i_l2])
    final_spec = replace(spec, lambda1=best_l1, lambda2=best_l2)
    final = model_mod.fit(X, y, final_spec)
    return TuneResult(best_lambda1=best_l1, best_lambda2=best_l2, scores=scores,
                      active_sizes=np.rint(size_total / k).astype(int), model=final,
                      grid=grid)


def adaptive_weights(init_model: FittedAdditiveModel, gamma_w: float = 1.0) -> tuple:
    """Per-predictor (w1, w2) pairs from an initial fit.

    Components with zero fitted norm are excluded from the adaptive fit
    entirely (returned as None); components with zero curvature but nonzero
    norm get w2 = 0, removing their smoothness penalty.
    """
    if gamma_w <= 0:
        raise ValidationError("gamma_w must be positive")
    weights: list = []
    any_active = False
    for c in init_model.components:
        if c.dropped or c.norm_n == 0.0:
            weights.append(None)
            continue
        any_active = True
        w1 = c.norm_n ** (-gamma_w)
        curve = math.sqrt(max(c.curvature, 0.0))
        w2 = 0.0 if curve == 0.0 else curve ** (-gamma_w)
        weights.append((w1, w2))
    if not any_active:
        raise EmptyModelError("initial model has no active components to adapt")
    return tuple(weights)


def score_surface_csv(result: TuneResult) -> str:
    """Score surface as CSV: lambda2 header row, lambda1/anchor ratio column.

    Each ladder is anchored at its own lambda1_max, so absolute lambda1 at
    cell (i, j) is ``anchors[j] * ratio[i]``; the anchors occupy the second
    header row.
    """
    grid = result.grid
    ratios = grid.lambda1_values[0] / grid.anchors[0]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["l1_over_l1max"] + [repr(float(v)) for v in grid.lambda2_values])
    writer.writerow(["lambda1_max"] + [repr(float(v)) for v in grid.anchors])
    for i in range(grid.n_l1):
        writer.writerow([repr(float(ratios[i]))] +
                        [repr(float(result.scores[i, j])) for j in range(grid.n_l2)])
    return buf.getvalue()
