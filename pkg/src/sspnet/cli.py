"""Batch command line: fit, predict, cv, simulate, lambda-max, curves.

Exit status contract: 0 on success (including solver soft non-convergence,
which surfaces as a warning field in the diagnostics output), 2 on input
errors (missing or malformed CSV, bad arguments), 3 on internal errors.

All file outputs are written atomically (temp file plus rename).  A JSON
config file may supply any long option (keys spelled like the flag, with
either hyphens or underscores); explicit flags win over config values.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import re
import sys

import numpy as np

from . import model as model_mod
from . import simulate, solver, tuning
from .errors import CsvFormatError, SspnetError, ValidationError
from .model import AdditiveModelSpec, write_atomic


def _read_table(path: str) -> tuple[list[str], np.ndarray]:
    """Strict numeric CSV with a header row; errors carry line/column info."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CsvFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise CsvFormatError(f"{path}: header contains an empty column name")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}")
            values = []
            for col_no, cell in enumerate(row, start=1):
                cell = cell.strip()
                if cell == "":
                    raise CsvFormatError(
                        f"{path}: line {line_no}, column {col_no}: missing value")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"{path}: line {line_no}, column {col_no}: "
                        f"not a number: {cell!r}") from None
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def _split_response(header: list[str], data: np.ndarray, response: str
                    ) -> tuple[np.ndarray, np.ndarray, list[str]]:
    if response not in header:
        raise CsvFormatError(f"response column {response!r} not found in header")
    idx = header.index(response)
    y = data[:, idx]
    X = np.delete(data, idx, axis=1)
    names = [h for i, h in enumerate(header) if i != idx]
    return X, y, names


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CsvFormatError(f"cannot open config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CsvFormatError(f"config {path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CsvFormatError(f"config {path}: expected a JSON object")
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def _opt(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, default)
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sspnet",
        description="Sparse additive models with a sparsity-smoothness penalty.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with default option values")

    p_fit = sub.add_parser("fit", help="fit a model on a CSV file")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--response", required=True)
    p_fit.add_argument("--family", choices=["gaussian", "binomial"])
    p_fit.add_argument("--lambda1", type=float)
    p_fit.add_argument("--lambda2", type=float)
    p_fit.add_argument("--lambda3", type=float)
    p_fit.add_argument("--adaptive", action="store_true", default=None)
    p_fit.add_argument("--gamma-w", type=float, dest="gamma_w")
    p_fit.add_argument("--num-interior", type=int, dest="num_interior")
    p_fit.add_argument("--out", required=True)
    add_common(p_fit)

    p_pred = sub.add_parser("predict", help="predict with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True)
    add_common(p_pred)

    p_cv = sub.add_parser("cv", help="k-fold cross-validation over a lambda grid")
    p_cv.add_argument("--data", required=True)
    p_cv.add_argument("--response", required=True)
    p_cv.add_argument("--family", choices=["gaussian", "binomial"])
    p_cv.add_argument("--folds", type=int)
    p_cv.add_argument("--n-l1", type=int, dest="n_l1")
    p_cv.add_argument("--n-l2", type=int, dest="n_l2")
    p_cv.add_argument("--l1-ratio", type=float, dest="l1_ratio")
    p_cv.add_argument("--lambda3", type=float)
    p_cv.add_argument("--num-interior", type=int, dest="num_interior")
    p_cv.add_argument("--seed", type=int)
    p_cv.add_argument("--out", required=True)
    add_common(p_cv)

    p_sim = sub.add_parser("simulate", help="run a replicated simulation study")
    p_sim.add_argument("--scenario", required=True,
                       choices=list(simulate.SCENARIO_IDS))
    p_sim.add_argument("--t", type=float)
    p_sim.add_argument("--p", type=int)
    p_sim.add_argument("--reps", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--n-l1", type=int, dest="n_l1")
    p_sim.add_argument("--n-l2", type=int, dest="n_l2")
    p_sim.add_argument("--l1-ratio", type=float, dest="l1_ratio")
    p_sim.add_argument("--n-mc", type=int, dest="n_mc")
    p_sim.add_argument("--adaptive", action="store_true", default=None)
    p_sim.add_argument("--gamma-w", type=float, dest="gamma_w")
    p_sim.add_argument("--num-interior", type=int, dest="num_interior")
    p_sim.add_argument("--out", required=True)
    add_common(p_sim)

    p_lm = sub.add_parser("lambda-max", help="print the smallest all-zero lambda1")
    p_lm.add_argument("--data", required=True)
    p_lm.add_argument("--response", required=True)
    p_lm.add_argument("--family", choices=["gaussian", "binomial"])
    p_lm.add_argument("--lambda2", type=float)
    p_lm.add_argument("--num-interior", type=int, dest="num_interior")
    add_common(p_lm)

    p_cur = sub.add_parser("curves", help="emit per-component fitted-curve data")
    p_cur.add_argument("--model", required=True)
    p_cur.add_argument("--grid-points", type=int, dest="grid_points")
    p_cur.add_argument("--out", required=True)
    add_common(p_cur)

    return parser


def _diagnostics_csv(model: model_mod.FittedAdditiveModel) -> str:
    names = model.feature_names or tuple(f"x{j}" for j in range(model.p))
    warn_text = "; ".join(model.warnings)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["predictor", "name", "dropped", "active", "norm_n",
                     "curvature", "kkt_residual", "w1", "w2", "jitter",
                     "converged", "warnings"])
    for c in model.components:
        writer.writerow([
            c.index, names[c.index], "true" if c.dropped else "false",
            "true" if c.index in model.active else "false",
            repr(c.norm_n), repr(c.curvature), repr(float(model.kkt_residuals[c.index])),
            repr(c.w1), repr(c.w2), repr(c.jitter_used),
            "true" if model.converged else "false", warn_text,
        ])
    return buf.getvalue()


def _cmd_fit(args, config) -> int:
    header, data = _read_table(args.data)
    X, y, names = _split_response(header, data, args.response)
    spec = AdditiveModelSpec(
        lambda1=float(_require(args, config, "lambda1")),
        lambda2=float(_require(args, config, "lambda2")),
        lambda3=float(_opt(args, config, "lambda3", 0.0)),
        num_interior=_opt(args, config, "num_interior", None),
        family=_opt(args, config, "family", "gaussian"))
    fitted = model_mod.fit(X, y, spec, feature_names=tuple(names))
    if _opt(args, config, "adaptive", False):
        weights = tuning.adaptive_weights(fitted, float(_opt(args, config, "gamma_w", 1.0)))
        spec = AdditiveModelSpec(
            lambda1=spec.lambda1, lambda2=spec.lambda2, lambda3=spec.lambda3,
            weights=weights, num_interior=spec.num_interior, family=spec.family)
        fitted = model_mod.fit(X, y, spec, feature_names=tuple(names))
    model_mod.save_model(fitted, args.out)
    diag_path = os.path.splitext(args.out)[0] + "_diagnostics.csv"
    write_atomic(diag_path, _diagnostics_csv(fitted))
    for w in fitted.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _require(args, config, key):
    value = _opt(args, config, key, None)
    if value is None:
        raise ValidationError(f"--{key.replace('_', '-')} is required")
    return value


def _cmd_predict(args, config) -> int:
    fitted = model_mod.load_model(args.model)
    header, data = _read_table(args.data)
    if fitted.feature_names is not None:
        missing = [n for n in fitted.feature_names if n not in header]
        if missing:
            raise CsvFormatError(f"data is missing model columns: {missing}")
        cols = [header.index(n) for n in fitted.feature_names]
        X = data[:, cols]
    else:
        if data.shape[1] != fitted.p:
            raise CsvFormatError(
                f"expected {fitted.p} feature columns, got {data.shape[1]}")
        X = data
    preds = model_mod.predict(fitted, X)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["prediction"])
    for v in preds:
        writer.writerow([repr(float(v))])
    write_atomic(args.out, buf.getvalue())
    return 0


def _cmd_cv(args, config) -> int:
    header, data = _read_table(args.data)
    X, y, names = _split_response(header, data, args.response)
    spec = AdditiveModelSpec(
        lambda1=0.0, lambda2=0.0,
        lambda3=float(_opt(args, config, "lambda3", 0.0)),
        num_interior=_opt(args, config, "num_interior", None),
        family=_opt(args, config, "family", "gaussian"))
    grid = tuning.make_grid(X, y, spec,
                            n_l1=int(_opt(args, config, "n_l1", 100)),
                            n_l2=int(_opt(args, config, "n_l2", 15)),
                            l1_ratio=float(_opt(args, config, "l1_ratio", 1e-3)))
    result = tuning.kfold_cv(X, y, grid, spec,
                             k=int(_opt(args, config, "folds", 5)),
                             seed=int(_opt(args, config, "seed", 0)))
    os.makedirs(args.out, exist_ok=True)
    write_atomic(os.path.join(args.out, "score_surface.csv"),
                 tuning.score_surface_csv(result))
    best = {"best_lambda1": result.best_lambda1, "best_lambda2": result.best_lambda2,
            "n_active": len(result.model.active), "converged": result.model.converged}
    write_atomic(os.path.join(args.out, "best.json"), json.dumps(best, indent=1) + "\n")
    final = dataclasses.replace(result.model, feature_names=tuple(names))
    model_mod.save_model(final, os.path.join(args.out, "model.json"))
    return 0


def _cmd_simulate(args, config) -> int:
    scenario = simulate.make_scenario(args.scenario,
                                      t=float(_opt(args, config, "t", 0.0)),
                                      p=_opt(args, config, "p", None))
    policy = simulate.StudyPolicy(
        n_l1=int(_opt(args, config, "n_l1", 25)),
        n_l2=int(_opt(args, config, "n_l2", 5)),
        l1_ratio=float(_opt(args, config, "l1_ratio", 1e-2)),
        n_mc=int(_opt(args, config, "n_mc", 10_000)),
        adaptive=bool(_opt(args, config, "adaptive", False)),
        gamma_w=float(_opt(args, config, "gamma_w", 1.0)),
        num_interior=_opt(args, config, "num_interior", None))
    report = simulate.run_study(scenario, int(_opt(args, config, "reps", 1)),
                                policy, seed=int(_opt(args, config, "seed", 0)))
    simulate.write_study_csvs(report, args.out)
    if report.n_failed:
        print(f"warning: {report.n_failed} replicate(s) failed softly", file=sys.stderr)
    return 0


def _cmd_lambda_max(args, config) -> int:
    header, data = _read_table(args.data)
    X, y, _names = _split_response(header, data, args.response)
    spec = AdditiveModelSpec(
        lambda1=0.0,
        lambda2=float(_opt(args, config, "lambda2", 0.0)),
        num_interior=_opt(args, config, "num_interior", None),
        family=_opt(args, config, "family", "gaussian"))
    prep = model_mod._prepare_design(np.asarray(X, dtype=float), spec)
    _transforms, btilde, quads = model_mod._build_transforms(prep, spec)
    if spec.family == "gaussian":
        problem = solver.GroupLassoProblem(y - float(np.mean(y)), btilde, 0.0,
                                           family="gaussian")
    else:
        problem = solver.GroupLassoProblem(y, btilde, 0.0, family="binomial")
    print(repr(solver.lambda1_max(problem)))
    return 0


def _cmd_curves(args, config) -> int:
    fitted = model_mod.load_model(args.model)
    n_points = int(_opt(args, config, "grid_points", 200))
    names = fitted.feature_names or tuple(f"x{j}" for j in range(fitted.p))
    os.makedirs(args.out, exist_ok=True)
    written = 0
    for c in fitted.components:
        if c.index not in fitted.active:
            continue
        xs = np.linspace(c.basis.knots.lower, c.basis.knots.upper, n_points)
        fs = c.values(xs)
        safe = re.sub(r"[^A-Za-z0-9_.-]", "_", names[c.index])
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["x", "f_hat"])
        for xv, fv in zip(xs, fs):
            writer.writerow([repr(float(xv)), repr(float(fv))])
        write_atomic(os.path.join(args.out, f"curve_{c.index:04d}_{safe}.csv"),
                     buf.getvalue())
        written += 1
    print(f"wrote {written} curve file(s)")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "simulate": _cmd_simulate,
    "lambda-max": _cmd_lambda_max,
    "curves": _cmd_curves,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _load_config(getattr(args, "config", None))
        return _COMMANDS[args.command](args, config)
    except (SspnetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-status contract
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
