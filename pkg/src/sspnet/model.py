"""End-to-end additive model: knots, blocks, transforms, solve, back-transform.

The fitted object stores per-predictor bases and original-coordinate
coefficients, so prediction never touches the solver's transformed space.
Degenerate predictors (constant columns) are dropped with a recorded warning
and contribute exactly zero to every prediction.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from . import penalty, solver, splines
from .errors import DegeneratePredictorError, ValidationError
from .penalty import BlockTransform
from .solver import GroupLassoProblem, Solution, SolverConfig
from .splines import CurvatureMatrix, KnotVector, SplineBasis

MODEL_FORMAT_VERSION = 1

# tau_n exponent: combined-norm diagnostics use lambda**(2 - gamma) with the
# curvature-seminorm conjugate gamma = 2/5.
TAU_EXPONENT = 2.0 - 0.4


@dataclass(frozen=True)
class AdditiveModelSpec:
    """Penalty levels, weights, knot policy, family, and solver settings."""

    lambda1: float
    lambda2: float
    lambda3: float = 0.0
    weights: tuple | None = None
    num_interior: int | None = None
    family: str = "gaussian"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ValidationError("penalty levels must be nonnegative")
        if self.family not in ("gaussian", "binomial"):
            raise ValidationError(f"unknown family {self.family!r}")
        if self.weights is not None:
            w = tuple(None if pair is None else (float(pair[0]), float(pair[1]))
                      for pair in self.weights)
            for pair in w:
                if pair is not None and (pair[0] <= 0 or pair[1] < 0):
                    raise ValidationError("weights must be positive (w2 may be 0)")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ComponentFit:
    """One predictor's basis, coefficients, and diagnostics."""

    index: int
    dropped: bool
    drop_reason: str | None
    basis: SplineBasis | None
    col_means: np.ndarray | None
    beta: np.ndarray | None
    w1: float
    w2: float
    jitter_used: float
    norm_n: float
    curvature: float
    transform: BlockTransform | None = None

    def values(self, x_col) -> np.ndarray:
        if self.dropped or self.beta is None or not np.any(self.beta != 0.0):
            return np.zeros(np.asarray(x_col).size)
        return splines.component_values(self.basis, self.beta, self.col_means, x_col)


@dataclass(frozen=True)
class FittedAdditiveModel:
    spec: AdditiveModelSpec
    components: tuple[ComponentFit, ...]
    intercept: float
    active: frozenset[int]
    kkt_residuals: np.ndarray
    objective_trace: tuple[float, ...]
    converged: bool
    n: int
    p: int
    response_mean: float
    warnings: tuple[str, ...] = ()
    feature_names: tuple[str, ...] | None = None


@dataclass(frozen=True)
class _PreparedDesign:
    """Per-dataset artifacts that do not depend on the penalty levels."""

    n: int
    p: int
    kept: tuple[int, ...]
    bases: dict[int, SplineBasis]
    blocks: dict[int, np.ndarray]
    omegas: dict[int, CurvatureMatrix]
    dropped: dict[int, str]
    warnings: tuple[str, ...]


def _validate_xy(X, y, spec: AdditiveModelSpec) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ValidationError("X must be a 2-dimensional array")
    n, p = X.shape
    if y.size != n:
        raise ValidationError(f"X has {n} rows but y has {y.size} entries")
    if n < 8:
        raise ValidationError("need at least 8 observations")
    if p < 1:
        raise ValidationError("need at least one predictor")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValidationError("inputs contain non-finite values")
    if spec.family == "binomial" and np.any((y != 0.0) & (y != 1.0)):
        raise ValidationError("binomial response must contain only 0/1 labels")
    if spec.weights is not None and len(spec.weights) != p:
        raise ValidationError("weights must supply one entry per predictor")
    return X, y


def _prepare_design(X: np.ndarray, spec: AdditiveModelSpec) -> _PreparedDesign:
    n, p = X.shape
    kept: list[int] = []
    bases: dict[int, SplineBasis] = {}
    blocks: dict[int, np.ndarray] = {}
    omegas: dict[int, CurvatureMatrix] = {}
    dropped: dict[int, str] = {}
    warns: list[str] = []
    num_interior = spec.num_interior
    if num_interior is None:
        num_interior = splines.default_num_interior(n)
    for j in range(p):
        if spec.weights is not None and spec.weights[j] is None:
            dropped[j] = "excluded by adaptive weights"
            continue
        try:
            kv = splines.make_knots(X[:, j], num_interior)
        except DegeneratePredictorError:
            dropped[j] = "constant predictor"
            warns.append(f"predictor {j} is constant and was dropped")
            continue
        if len(kv.interior) < num_interior:
            warns.append(
                f"predictor {j}: tied quantiles collapsed interior knots "
                f"{num_interior} -> {len(kv.interior)}")
        basis = SplineBasis(kv)
        kept.append(j)
        bases[j] = basis
        blocks[j] = splines.design_block(basis, X[:, j])
        omegas[j] = splines.curvature_matrix(basis)
    if not kept:
        raise ValidationError("all predictors are degenerate or excluded")
    return _PreparedDesign(n=n, p=p, kept=tuple(kept), bases=bases, blocks=blocks,
                           omegas=omegas, dropped=dropped, warnings=tuple(warns))


def _build_transforms(prep: _PreparedDesign, spec: AdditiveModelSpec
                      ) -> tuple[dict[int, BlockTransform], list[np.ndarray],
                                 list[np.ndarray] | None]:
    """Block transforms at this spec's lambda2/weights, in kept order."""
    transforms: dict[int, BlockTransform] = {}
    btilde: list[np.ndarray] = []
    quads: list[np.ndarray] | None = [] if spec.lambda3 > 0 else None
    for j in prep.kept:
        w1, w2 = 1.0, 1.0
        if spec.weights is not None and spec.weights[j] is not None:
            w1, w2 = spec.weights[j]
        # w2 = 0 removes the smoothness penalty for this block; fold it into
        # lambda2 by zeroing the curvature contribution.
        lam2_eff = spec.lambda2 * (1.0 if w2 > 0 else 0.0)
        w2_eff = w2 if w2 > 0 else 1.0
        tr, bt = penalty.build_block(prep.blocks[j], prep.omegas[j], lam2_eff,
                                     w1=w1, w2=w2_eff)
        tr = BlockTransform(M=tr.M, R=tr.R, col_means=tr.col_means, w1=w1, w2=w2,
                            jitter_used=tr.jitter_used)
        transforms[j] = tr
        btilde.append(bt)
        if quads is not None:
            quads.append(penalty.quad_in_transformed(tr, prep.omegas[j]))
    return transforms, btilde, quads


def _assemble(prep: _PreparedDesign, transforms: dict[int, BlockTransform],
              sol: Solution, spec: AdditiveModelSpec, intercept: float,
              response_mean: float, extra_warnings: tuple[str, ...] = (),
              feature_names: tuple[str, ...] | None = None) -> FittedAdditiveModel:
    components: list[ComponentFit] = []
    active: set[int] = set()
    kkt = np.zeros(prep.p)
    warns = list(prep.warnings) + list(extra_warnings)
    for pos, j in enumerate(prep.kept):
        tr = transforms[j]
        beta = penalty.back_transform(tr, sol.beta_tilde[pos])
        if pos not in sol.active:
            beta = np.zeros_like(beta)
        Bc = prep.blocks[j] - tr.col_means
        fj = Bc @ beta
        norm_n = float(np.linalg.norm(fj)) / math.sqrt(prep.n)
        curvature = max(0.0, float(beta @ prep.omegas[j].omega @ beta))
        kkt[j] = sol.kkt_residuals[pos]
        if np.any(beta != 0.0):
            active.add(j)
        components.append(ComponentFit(
            index=j, dropped=False, drop_reason=None, basis=prep.bases[j],
            col_means=tr.col_means, beta=beta, w1=tr.w1, w2=tr.w2,
            jitter_used=tr.jitter_used, norm_n=norm_n, curvature=curvature,
            transform=tr))
    for j, reason in prep.dropped.items():
        components.append(ComponentFit(
            index=j, dropped=True, drop_reason=reason, basis=None, col_means=None,
            beta=None, w1=1.0, w2=1.0, jitter_used=0.0, norm_n=0.0, curvature=0.0))
    components.sort(key=lambda c: c.index)
    if not sol.converged:
        warns.append(f"solver did not converge within {spec.solver.max_sweeps} sweeps "
                     f"(max KKT residual {float(np.max(sol.kkt_residuals)):.3e})")
    return FittedAdditiveModel(
        spec=spec, components=tuple(components), intercept=float(intercept),
        active=frozenset(active), kkt_residuals=kkt,
        objective_trace=tuple(sol.objective_trace), converged=sol.converged,
        n=prep.n, p=prep.p, response_mean=float(response_mean),
        warnings=tuple(warns), feature_names=feature_names)


def fit(X, y, spec: AdditiveModelSpec,
        feature_names: tuple[str, ...] | None = None) -> FittedAdditiveModel:
    """Fit the penalized additive model.

    Gaussian responses are centered by their mean, which becomes the
    intercept; binomial fits estimate an unpenalized intercept inside the
    solver.
    """
    X, y = _validate_xy(X, y, spec)
    prep = _prepare_design(X, spec)
    transforms, btilde, quads = _build_transforms(prep, spec)
    if spec.family == "gaussian":
        ybar = float(np.mean(y))
        problem = GroupLassoProblem(y - ybar, btilde, spec.lambda1,
                                    family="gaussian", quad=quads,
                                    lambda3=spec.lambda3)
        sol = solver.fit_gaussian(problem, spec.solver)
        intercept = ybar
    else:
        ybar = float(np.mean(y))
        problem = GroupLassoProblem(y, btilde, spec.lambda1, family="binomial",
                                    quad=quads, lambda3=spec.lambda3)
        sol = solver.fit_logistic(problem, spec.solver)
        intercept = sol.intercept
    return _assemble(prep, transforms, sol, spec, intercept, ybar,
                     feature_names=feature_names)


def linear_predictor(model: FittedAdditiveModel, X_new) -> np.ndarray:
    """Intercept plus the sum of fitted components, before any link."""
    X = np.asarray(X_new, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.p:
        raise ValidationError(f"expected {model.p} columns, got {X.shape}")
    eta = np.full(X.shape[0], model.intercept)
    for c in model.components:
        if c.index in model.active:
            eta += c.values(X[:, c.index])
    return eta


def predict(model: FittedAdditiveModel, X_new) -> np.ndarray:
    """Predictions on the response scale; binomial returns probabilities.

    Out-of-range inputs are clamped to the training range of each predictor.
    """
    eta = linear_predictor(model, X_new)
    if model.spec.family == "binomial":
        return 1.0 / (1.0 + np.exp(-eta))
    return eta


def diagnostics(model: FittedAdditiveModel, lambda_theory: float) -> np.ndarray:
    """Combined norms tau_j = sqrt(||f_j||_n^2 + lambda**(8/5) * I2(f_j))."""
    if lambda_theory <= 0:
        raise ValidationError("lambda_theory must be positive")
    scale = lambda_theory ** TAU_EXPONENT
    return np.array([math.sqrt(c.norm_n ** 2 + scale * c.curvature)
                     for c in model.components])


# ---------------------------------------------------------------------------
# Persistence: JSON with enough content to reproduce predictions bit for bit.

def _spec_to_dict(spec: AdditiveModelSpec) -> dict:
    return {
        "lambda1": spec.lambda1,
        "lambda2": spec.lambda2,
        "lambda3": spec.lambda3,
        "weights": None if spec.weights is None else
                   [None if w is None else [w[0], w[1]] for w in spec.weights],
        "num_interior": spec.num_interior,
        "family": spec.family,
        "solver": {"kkt_tol": spec.solver.kkt_tol,
                   "max_sweeps": spec.solver.max_sweeps,
                   "inner_tol": spec.solver.inner_tol},
    }


def _spec_from_dict(d: dict) -> AdditiveModelSpec:
    weights = d.get("weights")
    if weights is not None:
        weights = tuple(None if w is None else (w[0], w[1]) for w in weights)
    return AdditiveModelSpec(
        lambda1=d["lambda1"], lambda2=d["lambda2"], lambda3=d.get("lambda3", 0.0),
        weights=weights, num_interior=d.get("num_interior"),
        family=d.get("family", "gaussian"),
        solver=SolverConfig(**d.get("solver", {})))


def to_dict(model: FittedAdditiveModel) -> dict:
    comps = []
    for c in model.components:
        if c.dropped:
            comps.append({"index": c.index, "dropped": True, "drop_reason": c.drop_reason})
            continue
        comps.append({
            "index": c.index,
            "dropped": False,
            "lower": c.basis.knots.lower,
            "upper": c.basis.knots.upper,
            "interior": list(c.basis.knots.interior),
            "col_means": [float(v) for v in c.col_means],
            "beta": [float(v) for v in c.beta],
            "w1": c.w1, "w2": c.w2, "jitter_used": c.jitter_used,
            "norm_n": c.norm_n, "curvature": c.curvature,
        })
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "spec": _spec_to_dict(model.spec),
        "intercept": model.intercept,
        "active": sorted(model.active),
        "kkt_residuals": [float(v) for v in model.kkt_residuals],
        "objective_trace": [float(v) for v in model.objective_trace],
        "converged": model.converged,
        "n": model.n, "p": model.p,
        "response_mean": model.response_mean,
        "warnings": list(model.warnings),
        "feature_names": None if model.feature_names is None else list(model.feature_names),
        "components": comps,
    }


def from_dict(d: dict) -> FittedAdditiveModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {version!r}")
    spec = _spec_from_dict(d["spec"])
    components = []
    for cd in d["components"]:
        if cd.get("dropped"):
            components.append(ComponentFit(
                index=cd["index"], dropped=True, drop_reason=cd.get("drop_reason"),
                basis=None, col_means=None, beta=None, w1=1.0, w2=1.0,
                jitter_used=0.0, norm_n=0.0, curvature=0.0))
            continue
        basis = SplineBasis(KnotVector(cd["lower"], cd["upper"], tuple(cd["interior"])))
        components.append(ComponentFit(
            index=cd["index"], dropped=False, drop_reason=None, basis=basis,
            col_means=np.asarray(cd["col_means"], dtype=float),
            beta=np.asarray(cd["beta"], dtype=float),
            w1=cd["w1"], w2=cd["w2"], jitter_used=cd["jitter_used"],
            norm_n=cd["norm_n"], curvature=cd["curvature"]))
    components.sort(key=lambda c: c.index)
    names = d.get("feature_names")
    return FittedAdditiveModel(
        spec=spec, components=tuple(components), intercept=d["intercept"],
        active=frozenset(d["active"]),
        kkt_residuals=np.asarray(d["kkt_residuals"], dtype=float),
        objective_trace=tuple(d["objective_trace"]), converged=d["converged"],
        n=d["n"], p=d["p"], response_mean=d["response_mean"],
        warnings=tuple(d.get("warnings", ())),
        feature_names=None if names is None else tuple(names))


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: FittedAdditiveModel, path: str) -> None:
    write_atomic(path, json.dumps(to_dict(model), indent=1) + "\n")


def load_model(path: str) -> FittedAdditiveModel:
    with open(path, "r", encoding="utf-8") as fh:
        return from_dict(json.load(fh))


def spec_at(spec: AdditiveModelSpec, lambda1: float, lambda2: float) -> AdditiveModelSpec:
    """Copy of a model settings object with the penalty levels replaced."""
    return replace(spec, lambda1=float(lambda1), lambda2=float(lambda2))
