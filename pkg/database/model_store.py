"""
Model files and report files (canonical JSON for models, CSV for sweeps and traces)
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd
from jsonschema import Draft202012Validator

from engine.clustering import IterationTrace
from engine.config import FORMAT_CONFIG
from engine.errors import InvalidInput, IoError, ModelFormatError
from engine.evaluation import EvalReport, SearchResult, reports_to_frame, silhouette_chart
from engine.features import SelectionReport
from engine.models import KMeansModel
from utils.canonical_json import canonical_dumps

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SUPPORTED_VERSIONS = (1,)

MODEL_FILE_SCHEMA = {
    "type": "object",
    "required": ["format_version", "model", "selection_report", "created_at"],
    "properties": {
        "format_version": {"type": "integer"},
        "created_at": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["k", "centroids", "schema", "inertia", "iterations_run", "seed", "converged"],
            "properties": {
                "k": {"type": "integer", "minimum": 1},
                "centroids": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "schema": {
                    "type": "object",
                    "required": ["feature_names", "scaler_mean", "scaler_std"],
                },
                "inertia": {"type": "number", "minimum": 0},
                "iterations_run": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "converged": {"type": "boolean"},
            },
        },
        "selection_report": {
            "type": "object",
            "required": ["kept", "dropped"],
        },
    },
}
_model_file_validator = Draft202012Validator(MODEL_FILE_SCHEMA)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds").replace("+00:00", "Z")


@dataclass(frozen=True, eq=False)
class ModelFile:
    model: KMeansModel
    selection_report: SelectionReport
    created_at: str = field(default_factory=utc_now)
    format_version: int = FORMAT_CONFIG["model_format_version"]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelFile):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": self.format_version,
            "model": self.model.to_dict(),
            "selection_report": self.selection_report.to_dict(),
            "created_at": self.created_at,
        }

    def dumps(self) -> str:
        return canonical_dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelFile":
        error = next(iter(_model_file_validator.iter_errors(data)), None)
        if error is not None:
            where = "/".join(str(p) for p in error.absolute_path) or "file"
            raise ModelFormatError(f"{where}: {error.message}")
        version = data["format_version"]
        if version not in SUPPORTED_VERSIONS:
            raise ModelFormatError(f"unsupported format_version {version}")
        try:
            model = KMeansModel.from_dict(data["model"])
            report = SelectionReport.from_dict(data["selection_report"])
        except (InvalidInput, KeyError, ValueError) as e:
            raise ModelFormatError(f"invalid model content: {e}") from e
        return cls(model=model, selection_report=report, created_at=data["created_at"], format_version=version)


def save_model(model_file: ModelFile, path: PathLike) -> Path:
    """
    Write a ModelFile as canonical JSON

    Args:
        model_file: Model and its provenance
        path: Output path

    Returns:
        Path written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model_file.dumps(), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write model file {path}: {e}") from e
    logger.info(f"Saved model k={model_file.model.k} to {path}")
    return path


def load_model(path: PathLike) -> ModelFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read model file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path} is not valid JSON: {e.msg}") from e
    return ModelFile.from_dict(data)


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n", float_format=None)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def write_sweep_csv(reports: Sequence[EvalReport], path: PathLike) -> Path:
    """Header: k,silhouette,inertia,sample_size,wall_time_ms,seed"""
    return _write_frame(reports_to_frame(reports), path)


def write_sweep_chart(reports: Sequence[EvalReport], path: PathLike) -> Path:
    """Silhouette-vs-k chart as standalone HTML (or Vega-Lite JSON for .json)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    silhouette_chart(reports).save(str(path))
    return path


def write_trace_csv(traces: Sequence[IterationTrace], path: PathLike) -> Path:
    frame = pd.DataFrame(
        [[t.restart, t.iteration, t.inertia, t.max_shift] for t in traces],
        columns=FORMAT_CONFIG["trace_columns"],
    )
    return _write_frame(frame, path)


def write_stage_reports(result: SearchResult, output_dir: PathLike) -> List[Path]:
    """One CSV per stage: stage_1.csv, stage_2.csv, ..."""
    output_dir = Path(output_dir)
    paths = []
    for number, (_, reports) in enumerate(result.stage_reports, start=1):
        paths.append(write_sweep_csv(reports, output_dir / f"stage_{number}.csv"))
    return paths

