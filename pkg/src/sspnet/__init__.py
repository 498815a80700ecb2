"""Sparse additive models with a sparsity-smoothness penalty.

Fits high-dimensional additive (and logistic-additive) regression models by
penalizing each component with a combined norm of its empirical size and
integrated squared second derivative, reduced through a per-block Cholesky
change of coordinates to a group lasso solved by certified block coordinate
descent.
"""

from .errors import (CsvFormatError, DegenerateLabelsError,
                     DegeneratePredictorError, DegenerateResponseError,
                     EmptyModelError, SingularBlockError, SspnetError,
                     ValidationError)
from .model import (AdditiveModelSpec, ComponentFit, FittedAdditiveModel,
                    diagnostics, fit, linear_predictor, load_model, predict,
                    save_model)
from .penalty import BlockTransform, back_transform, build_block
from .simulate import (SimDraw, SimScenario, StudyPolicy, StudyReport, gen,
                       make_scenario, prediction_error, run_study,
                       snr_estimate, tp_fp)
from .solver import (GroupLassoProblem, Solution, SolverConfig, fit_gaussian,
                     fit_logistic, kkt_residuals, lambda1_max, objective,
                     solve_block)
from .splines import (CurvatureMatrix, KnotVector, SplineBasis,
                      curvature_matrix, design_block, eval_basis,
                      eval_component, make_knots)
from .tuning import (LambdaGrid, TuneResult, adaptive_weights, kfold_cv,
                     make_grid, path_fit, validate_select)

__version__ = "0.1.0"

__all__ = [
    "AdditiveModelSpec", "BlockTransform", "ComponentFit", "CsvFormatError",
    "CurvatureMatrix", "DegenerateLabelsError", "DegeneratePredictorError",
    "DegenerateResponseError", "EmptyModelError", "FittedAdditiveModel",
    "GroupLassoProblem", "KnotVector", "LambdaGrid", "SimDraw", "SimScenario",
    "SingularBlockError", "Solution", "SolverConfig", "SplineBasis",
    "SspnetError", "StudyPolicy", "StudyReport", "TuneResult",
    "ValidationError", "adaptive_weights", "back_transform", "build_block",
    "curvature_matrix", "design_block", "diagnostics", "eval_basis",
    "eval_component", "fit", "fit_gaussian", "fit_logistic", "gen", "kfold_cv",
    "kkt_residuals", "lambda1_max", "linear_predictor", "load_model",
    "make_grid", "make_knots", "make_scenario", "objective", "path_fit",
    "predict", "prediction_error", "run_study", "save_model", "snr_estimate",
    "solve_block", "tp_fp", "validate_select",
]
