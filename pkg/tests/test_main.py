# File: hdsurv/tests/test_main.py

import json
import os
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from src.errors import ConvergenceError, SchemaError
from src.main import EXIT_FAILURE, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main, run
from src.pipelines import PIPELINES, Command, RunConfig


def _write_config(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    return str(path)


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


@pytest.fixture(scope="module")
def simulated_csv(tmp_path_factory):
    """Simulate a small Cox dataset through the CLI."""
    root = tmp_path_factory.mktemp("simulated")
    config = _write_config(
        root / "simulate.json",
        {"simulation": {"kind": "cox", "n": 150, "p": 5, "beta": [1.0, -1.0, 0.0, 0.0, 0.0]}},
    )
    code = main(["simulate", "--config", config, "--output", str(root / "out"), "--seed", "11"])
    assert code == EXIT_OK
    return str(root / "out" / "data.csv")


class TestSimulateAndFit:
    """End-to-end pipelines through the command line."""

    def test_simulated_csv(self, simulated_csv):
        """Test the simulated file layout and the manifest next to it."""
        frame = pd.read_csv(simulated_csv)
        assert list(frame.columns) == ["time", "event", "x1", "x2", "x3", "x4", "x5"]
        assert len(frame) == 150
        with open(os.path.join(os.path.dirname(simulated_csv), "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 11
        assert "data.csv" in manifest["outputs"]

    def test_fit_cox_lasso(self, simulated_csv, tmp_path):
        """Test that a lasso fit writes the path, the chosen fit and a hashed manifest."""
        config = _write_config(tmp_path / "fit.json", {"method": {"n_etas": 10, "folds": 3}})
        output = tmp_path / "fit"
        code = main([
            "fit", "--config", config, "--input", simulated_csv, "--output", str(output),
            "--method", "cox-lasso", "--seed", "3",
        ])
        assert code == EXIT_OK
        with open(output / "path.json") as f:
            path = json.load(f)
        assert len(path["etas"]) == 10
        assert path["selected_eta"] is not None
        coefficients = pd.read_csv(output / "coefficients.csv")
        assert list(coefficients["feature"]) == ["x1", "x2", "x3", "x4", "x5"]
        with open(output / "manifest.json") as f:
            manifest = json.load(f)
        assert len(manifest["input_sha256"]) == 64

    def test_fit_then_predict(self, simulated_csv, tmp_path):
        """Test that a saved Cox fit predicts decreasing survival curves per row."""
        assert main(["fit", "--input", simulated_csv, "--output", str(tmp_path / "cox")]) == EXIT_OK
        config = _write_config(tmp_path / "predict.json", {"times": [0.1, 0.5, 1.0, 2.0]})
        code = main([
            "predict", "--config", config, "--input", simulated_csv,
            "--model", str(tmp_path / "cox" / "fit.json"), "--output", str(tmp_path / "pred"),
        ])
        assert code == EXIT_OK
        curves = pd.read_csv(tmp_path / "pred" / "survival.csv")
        assert len(curves) == 150 * 4
        assert curves["survival"].between(0, 1).all()
        per_row = curves.pivot(index="row", columns="t", values="survival").to_numpy()
        assert np.all(np.diff(per_row, axis=1) <= 0)


class TestValidation:
    """Tests for config validation and exit codes."""

    def test_missing_seed(self, simulated_csv, tmp_path, capsys):
        """Test that a stochastic command without a seed exits 2 naming the field."""
        code = main(["forest", "--input", simulated_csv, "--output", str(tmp_path / "forest")])
        assert code == EXIT_INVALID
        err = capsys.readouterr().err
        assert "seed" in err
        assert not os.path.exists(tmp_path / "forest" / "forest.json")

    def test_missing_input(self, tmp_path, capsys):
        """Test that a non-existent input file is rejected."""
        code = main(["cqr", "--input", str(tmp_path / "absent.csv"), "--output", str(tmp_path / "cqr")])
        assert code == EXIT_INVALID
        assert "input" in capsys.readouterr().err

    def test_unknown_method_option(self, simulated_csv, tmp_path, capsys):
        """Test that an unknown option inside method is a validation error."""
        code = main([
            "cqr", "--input", simulated_csv, "--output", str(tmp_path / "cqr"), "--method", '{"bogus": 1}',
        ])
        assert code == EXIT_INVALID
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == "ValidationError"

    @pytest.mark.parametrize(
        "error, expected",
        [
            (SchemaError("missing column", column="time"), EXIT_INVALID),
            (ConvergenceError("no convergence"), EXIT_NUMERICAL),
            (RuntimeError("boom"), EXIT_FAILURE),
        ],
    )
    def test_error_mapping(self, simulated_csv, tmp_path, monkeypatch, capsys, error, expected):
        """Test the exception to exit code mapping with the error JSON on stderr."""
        def failing(config, writer):
            raise error

        monkeypatch.setitem(PIPELINES, Command.CQR, failing)
        config = RunConfig(command="cqr", input=simulated_csv, output=str(tmp_path / "cqr"))
        assert run(config) == expected
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == type(error).__name__
        assert payload["message"] == str(error)


class TestDeterminism:
    """Seeded runs reproduce byte for byte."""

    FOREST_METHOD = '{"B": 4, "max_depth": 3, "min_events": 10}'

    def _forest(self, simulated_csv, output, threads):
        code = main([
            "forest", "--input", simulated_csv, "--output", str(output), "--seed", "7",
            "--threads", str(threads), "--method", self.FOREST_METHOD,
        ])
        assert code == EXIT_OK
        return _read_bytes(output / "forest.json")

    def test_rerun_identical(self, simulated_csv, tmp_path):
        """Test that the same config twice gives identical result JSON."""
        assert self._forest(simulated_csv, tmp_path / "a", 1) == self._forest(simulated_csv, tmp_path / "b", 1)

    def test_thread_count_irrelevant(self, simulated_csv, tmp_path):
        """Test that the worker count does not change the result."""
        assert self._forest(simulated_csv, tmp_path / "one", 1) == self._forest(simulated_csv, tmp_path / "two", 2)

    def test_forest_round_trip_through_predict(self, simulated_csv, tmp_path):
        """Test that a forest written by the CLI is read back by predict."""
        self._forest(simulated_csv, tmp_path / "forest", 1)
        config = _write_config(tmp_path / "predict.json", {"times": [0.5, 1.0]})
        code = main([
            "predict", "--config", config, "--input", simulated_csv,
            "--model", str(tmp_path / "forest" / "forest.json"), "--output", str(tmp_path / "pred"),
        ])
        assert code == EXIT_OK
        curves = pd.read_csv(tmp_path / "pred" / "survival.csv")
        assert len(curves) == 150 * 2
        assert curves["survival"].between(0, 1).all()


class TestErrorTracking:
    """Tests for Sentry reporting."""

    def test_numerical_failure_is_captured(self, simulated_csv, tmp_path, monkeypatch):
        """Test that numerical failures reach Sentry while validation errors do not."""
        def diverging(config, writer):
            raise ConvergenceError("no convergence")

        def invalid(config, writer):
            raise SchemaError("missing column")

        config = RunConfig(command="cqr", input=simulated_csv, output=str(tmp_path / "cqr"))
        with patch("src.main.sentry_sdk.capture_exception") as capture:
            monkeypatch.setitem(PIPELINES, Command.CQR, invalid)
            assert run(config) == EXIT_INVALID
            capture.assert_not_called()

            monkeypatch.setitem(PIPELINES, Command.CQR, diverging)
            assert run(config) == EXIT_NUMERICAL
            capture.assert_called_once()
