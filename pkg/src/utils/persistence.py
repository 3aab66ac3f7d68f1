"""
Artifact persistence for fitting runs.
Writes result JSON, tidy CSVs and run manifests atomically so an interrupted
run never leaves a half-written artifact behind.

File: hdsurv/src/utils/persistence.py
"""
import hashlib
import json
import logging
import os
import platform
from importlib import metadata
from typing import Any, Dict, Iterable, Optional

import joblib
import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

VERSIONED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "joblib", "pydantic")


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy containers and scalars into plain Python values.

    Args:
        value: Arbitrary nested structure

    Returns:
        Structure accepted by json.dumps
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if hasattr(value, "to_dict") and callable(value.to_dict):
        return to_jsonable(value.to_dict())
    return value


def dumps(payload: Any) -> str:
    """Serialize deterministically (sorted keys, fixed indent)."""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=True)


def file_digest(path: str) -> str:
    """
    Compute the sha256 of a file's content.

    Args:
        path: File path

    Returns:
        Hex digest
    """
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def package_versions(names: Iterable[str] = VERSIONED_PACKAGES) -> Dict[str, str]:
    """Return installed versions of the numerical stack."""
    versions = {"python": platform.python_version()}
    for name in names:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class ArtifactWriter:
    """Writes run artifacts into one output directory."""

    def __init__(self, output_dir: str) -> None:
        """
        Initialize the writer.

        Args:
            output_dir: Directory receiving artifacts (created if missing)
        """
        self.output_dir = output_dir
        self.written: Dict[str, str] = {}
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _atomic_write(self, name: str, text: str) -> str:
        target = self.path(name)
        temp_file = f"{target}.tmp"
        with open(temp_file, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        # Atomic rename to avoid corruption
        os.replace(temp_file, target)
        self.written[name] = target
        logger.debug(f"Artifact written to {target}")
        return target

    def write_json(self, name: str, payload: Any) -> str:
        """
        Write a JSON artifact.

        Args:
            name: File name inside the output directory
            payload: Result object or dictionary

        Returns:
            Path written
        """
        return self._atomic_write(name, dumps(payload) + "\n")

    def write_csv(self, name: str, frame: pd.DataFrame) -> str:
        """
        Write a tidy CSV artifact.

        Args:
            name: File name inside the output directory
            frame: Table to write

        Returns:
            Path written
        """
        return self._atomic_write(
            name, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
        )

    def write_joblib(self, name: str, obj: Any) -> str:
        """Pickle a fitted object that has no JSON form (e.g. scikit-learn trees)."""
        target = self.path(name)
        temp_file = f"{target}.tmp"
        joblib.dump(obj, temp_file)
        os.replace(temp_file, target)
        self.written[name] = target
        return target

    def write_manifest(
        self,
        command: str,
        seed: Optional[int],
        threads: int,
        input_path: Optional[str],
        wall_time: float,
        app_version: str,
        metrics: Optional[Dict[str, Any]] = None,
    ) -> str:
        """
        Write the provenance manifest next to the outputs.

        Args:
            command: Pipeline name
            seed: Master seed (None for deterministic commands)
            threads: Worker count used
            input_path: Input CSV, hashed for provenance
            wall_time: Elapsed seconds
            app_version: Toolkit version
            metrics: Metrics snapshot

        Returns:
            Path written
        """
        manifest = {
            "command": command,
            "seed": seed,
            "threads": threads,
            "input": input_path,
            "input_sha256": file_digest(input_path) if input_path else None,
            "versions": {"hdsurv": app_version, **package_versions()},
            "wall_time_seconds": wall_time,
            "outputs": sorted(self.written),
            "metrics": metrics or {},
        }
        return self.write_json("manifest.json", manifest)

    def load_json(self, name: str) -> Optional[Dict[str, Any]]:
        """
        Load a JSON artifact if present.

        Args:
            name: File name inside the output directory

        Returns:
            Parsed dictionary or None
        """
        target = self.path(name)
        if not os.path.exists(target):
            return None
        try:
            with open(target, "r", encoding="utf-8") as f:
                return json.load(f)
        except Exception as e:
            logger.error(f"Error loading artifact {target}: {str(e)}", exc_info=True)
            return None
