import csv
import json

import numpy as np
import pytest

from sspnet.cli import main


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture
def train_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 60
    X = rng.uniform(-2, 2, (n, 3))
    y = np.sin(X[:, 0]) + 0.3 * rng.standard_normal(n)
    path = tmp_path / "train.csv"
    rows = [[repr(float(v)) for v in row] + [repr(float(t))]
            for row, t in zip(X, y)]
    write_csv(path, ["a", "b", "c", "target"], rows)
    return path


def read_predictions(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assert header == ["prediction"]
        return np.array([float(row[0]) for row in reader])


class TestFitPredict:
    def test_fit_then_predict_on_training_file(self, tmp_path, train_csv):
        model_path = tmp_path / "model.json"
        rc = main(["fit", "--data", str(train_csv), "--response", "target",
                   "--family", "gaussian", "--lambda1", "0.05", "--lambda2", "0.1",
                   "--num-interior", "3", "--out", str(model_path)])
        assert rc == 0
        assert model_path.exists()
        assert (tmp_path / "model_diagnostics.csv").exists()
        pred_path = tmp_path / "pred.csv"
        rc = main(["predict", "--model", str(model_path), "--data", str(train_csv),
                   "--out", str(pred_path)])
        assert rc == 0
        preds = read_predictions(pred_path)
        with open(train_csv) as fh:
            reader = csv.reader(fh)
            next(reader)
            y = np.array([float(row[3]) for row in reader])
        assert abs(preds.mean() - y.mean()) <= 1e-10

    def test_predict_roundtrip_bit_identical(self, tmp_path, train_csv):
        model_path = tmp_path / "model.json"
        main(["fit", "--data", str(train_csv), "--response", "target",
              "--lambda1", "0.05", "--lambda2", "0.1", "--out", str(model_path)])
        p1 = tmp_path / "p1.csv"
        p2 = tmp_path / "p2.csv"
        main(["predict", "--model", str(model_path), "--data", str(train_csv),
              "--out", str(p1)])
        main(["predict", "--model", str(model_path), "--data", str(train_csv),
              "--out", str(p2)])
        assert p1.read_bytes() == p2.read_bytes()

    def test_adaptive_fit(self, tmp_path, train_csv):
        model_path = tmp_path / "adaptive.json"
        rc = main(["fit", "--data", str(train_csv), "--response", "target",
                   "--lambda1", "0.08", "--lambda2", "0.1", "--adaptive",
                   "--gamma-w", "1.0", "--out", str(model_path)])
        assert rc == 0
        doc = json.loads(model_path.read_text())
        assert doc["spec"]["weights"] is not None

    def test_diagnostics_columns(self, tmp_path, train_csv):
        model_path = tmp_path / "model.json"
        main(["fit", "--data", str(train_csv), "--response", "target",
              "--lambda1", "0.05", "--lambda2", "0.1", "--out", str(model_path)])
        with open(tmp_path / "model_diagnostics.csv") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header[:4] == ["predictor", "name", "dropped", "active"]
        assert len(rows) == 3
        assert rows[0][1] == "a"


class TestLambdaMax:
    def test_prints_value_and_fit_at_it_is_null(self, tmp_path, train_csv, capsys):
        rc = main(["lambda-max", "--data", str(train_csv), "--response", "target",
                   "--lambda2", "0.1"])
        assert rc == 0
        lmax = float(capsys.readouterr().out.strip())
        assert lmax > 0
        model_path = tmp_path / "null.json"
        main(["fit", "--data", str(train_csv), "--response", "target",
              "--lambda1", repr(lmax), "--lambda2", "0.1", "--out", str(model_path)])
        doc = json.loads(model_path.read_text())
        assert doc["active"] == []


class TestExitCodes:
    def test_missing_value_is_input_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,y\n1.0,,3.0\n")
        rc = main(["fit", "--data", str(path), "--response", "y",
                   "--lambda1", "0.1", "--lambda2", "0.1",
                   "--out", str(tmp_path / "m.json")])
        assert rc == 2

    def test_non_numeric_cell_reports_line_and_column(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("a,y\n1.0,2.0\nfoo,3.0\n")
        rc = main(["lambda-max", "--data", str(path), "--response", "y"])
        assert rc == 2
        err = capsys.readouterr().err
        assert "line 3" in err and "column 1" in err

    def test_missing_response_column(self, tmp_path, train_csv):
        rc = main(["fit", "--data", str(train_csv), "--response", "nope",
                   "--lambda1", "0.1", "--lambda2", "0.1",
                   "--out", str(tmp_path / "m.json")])
        assert rc == 2

    def test_missing_file(self, tmp_path):
        rc = main(["predict", "--model", str(tmp_path / "none.json"),
                   "--data", str(tmp_path / "none.csv"),
                   "--out", str(tmp_path / "p.csv")])
        assert rc == 2

    def test_unknown_command_usage_error(self):
        assert main(["frobnicate"]) == 2


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, tmp_path, train_csv):
        config = tmp_path / "conf.json"
        config.write_text(json.dumps({"lambda1": 0.05, "lambda2": 0.7}))
        model_path = tmp_path / "m.json"
        rc = main(["fit", "--data", str(train_csv), "--response", "target",
                   "--lambda2", "0.1", "--config", str(config),
                   "--out", str(model_path)])
        assert rc == 0
        doc = json.loads(model_path.read_text())
        assert doc["spec"]["lambda1"] == 0.05  # from config
        assert doc["spec"]["lambda2"] == 0.1  # flag wins


class TestSimulateCommand:
    def test_fixed_seed_reproduces_outputs(self, tmp_path):
        args = ["simulate", "--scenario", "ex1", "--reps", "1",
                "--seed", "4", "--n-l1", "4", "--n-l2", "2", "--l1-ratio", "0.2",
                "--n-mc", "1000"]
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        assert (out1 / "replicates.csv").read_bytes() == \
               (out2 / "replicates.csv").read_bytes()
        assert (out1 / "summary.csv").read_bytes() == \
               (out2 / "summary.csv").read_bytes()


class TestCvCommand:
    def test_outputs_written(self, tmp_path, train_csv):
        out = tmp_path / "cv"
        rc = main(["cv", "--data", str(train_csv), "--response", "target",
                   "--folds", "4", "--n-l1", "4", "--n-l2", "2",
                   "--l1-ratio", "0.1", "--seed", "1", "--out", str(out)])
        assert rc == 0
        assert (out / "score_surface.csv").exists()
        assert (out / "best.json").exists()
        assert (out / "model.json").exists()
        best = json.loads((out / "best.json").read_text())
        assert best["best_lambda1"] > 0


class TestCurvesCommand:
    def test_curve_files_for_active_components(self, tmp_path, train_csv):
        model_path = tmp_path / "model.json"
        main(["fit", "--data", str(train_csv), "--response", "target",
              "--lambda1", "0.03", "--lambda2", "0.1", "--out", str(model_path)])
        doc = json.loads(model_path.read_text())
        out = tmp_path / "curves"
        rc = main(["curves", "--model", str(model_path), "--out", str(out)])
        assert rc == 0
        files = sorted(out.glob("curve_*.csv"))
        assert len(files) == len(doc["active"])
        with open(files[0]) as fh:
            reader = csv.reader(fh)
            assert next(reader) == ["x", "f_hat"]
            rows = list(reader)
        assert len(rows) == 200
        xs = np.array([float(r[0]) for r in rows])
        fs = np.array([float(r[1]) for r in rows])
        assert np.all(np.diff(xs) > 0)
        assert np.all(np.isfinite(fs))
