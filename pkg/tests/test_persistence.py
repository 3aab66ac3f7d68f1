# File: hdsurv/tests/test_persistence.py

import hashlib
import json
import os

import joblib
import numpy as np
import pandas as pd

from src.utils.persistence import ArtifactWriter, dumps, file_digest, to_jsonable


class TestSerialization:
    """Tests for JSON conversion helpers."""

    def test_numpy_values(self):
        """Test that numpy scalars and arrays become plain Python values."""
        converted = to_jsonable({"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True), 1: (np.int32(2),)})
        assert converted == {"a": [0, 1, 2], "b": 0.5, "c": True, "1": [2]}

    def test_sorted_keys(self):
        """Test that key order does not change the output."""
        assert dumps({"b": 1, "a": 2}) == dumps({"a": 2, "b": 1})

    def test_objects_with_to_dict(self):
        """Test that result objects are serialized through to_dict."""
        class Result:
            def to_dict(self):
                return {"beta": np.ones(2)}

        assert json.loads(dumps(Result())) == {"beta": [1.0, 1.0]}


class TestArtifactWriter:
    """Tests for the ArtifactWriter class."""

    def test_json_round_trip(self, tmp_path):
        """Test that written JSON is read back and no temp file remains."""
        writer = ArtifactWriter(str(tmp_path / "out"))
        writer.write_json("result.json", {"x": np.array([1.5, 2.5])})
        assert writer.load_json("result.json") == {"x": [1.5, 2.5]}
        assert not os.path.exists(writer.path("result.json.tmp"))
        assert writer.load_json("absent.json") is None

    def test_csv_keeps_full_precision(self, tmp_path):
        """Test that floats survive the CSV round trip exactly."""
        writer = ArtifactWriter(str(tmp_path))
        values = np.random.default_rng(0).standard_normal(5)
        writer.write_csv("table.csv", pd.DataFrame({"v": values}))
        assert np.array_equal(pd.read_csv(writer.path("table.csv"))["v"].to_numpy(), values)

    def test_joblib_artifact(self, tmp_path):
        """Test pickled artifacts."""
        writer = ArtifactWriter(str(tmp_path))
        writer.write_joblib("model.joblib", {"weights": [1, 2]})
        assert joblib.load(writer.path("model.joblib")) == {"weights": [1, 2]}
        assert "model.joblib" in writer.written

    def test_manifest(self, tmp_path):
        """Test the manifest contents."""
        source = tmp_path / "input.csv"
        source.write_text("time,event\n1,1\n")
        writer = ArtifactWriter(str(tmp_path / "run"))
        writer.write_json("fit.json", {"beta": [0.0]})
        writer.write_manifest("fit", None, 1, str(source), 0.25, "0.1.0", {"counters": {"fits": 1}})
        manifest = writer.load_json("manifest.json")
        assert manifest["input_sha256"] == hashlib.sha256(b"time,event\n1,1\n").hexdigest()
        assert manifest["input_sha256"] == file_digest(str(source))
        assert manifest["outputs"] == ["fit.json"]
        assert manifest["versions"]["hdsurv"] == "0.1.0"
        assert manifest["metrics"] == {"counters": {"fits": 1}}
