"""
Dataset ingest: JSONL/CSV parsing, segment summarization and feature statistics
"""

import json
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jsonschema import Draft202012Validator

from utils.canonical_json import canonical_dumps
from utils.parallel import chunk_bounds, map_ordered, pairwise_reduce
from .config import FORMAT_CONFIG, PARALLEL_CONFIG
from .errors import (
    DuplicateTrackId,
    EmptyDataset,
    InvalidInput,
    IoError,
    ParseError,
    SchemaError,
)
from .models import SegmentSequence, TrackRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMATS = ("jsonl", "csv")
CSV_REQUIRED_COLUMNS = ("track_id", "artist_id")
CSV_META_COLUMNS = ("track_id", "artist_id", "artist_name", "title", "artist_terms", "similar_artists")

# Layout of one JSONL line
RECORD_SCHEMA = {
    "type": "object",
    "required": ["track_id", "artist_id"],
    "properties": {
        "track_id": {"type": "string", "pattern": r"^[A-Za-z0-9_-]+$"},
        "artist_id": {"type": "string", "minLength": 1},
        "artist_name": {"type": ["string", "null"]},
        "title": {"type": ["string", "null"]},
        "artist_terms": {"type": "array", "items": {"type": "string"}},
        "similar_artists": {"type": "array", "items": {"type": "string"}},
        "features": {
            "type": "object",
            "additionalProperties": {"type": ["number", "string", "null"]},
        },
        "segments": {
            "type": ["object", "null"],
            "required": ["timbre"],
            "properties": {
                "timbre": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}},
                },
                "confidence": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
    },
}
_record_validator = Draft202012Validator(RECORD_SCHEMA)


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature presence counts and moments over one dataset"""

    feature_name: str
    count_present: int
    count_missing: int
    mean: float
    variance: float
    min: float
    max: float
    kind: str = "numeric"

    @property
    def missing_fraction(self) -> float:
        total = self.count_present + self.count_missing
        return self.count_missing / total if total else 1.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "feature_name": self.feature_name,
            "count_present": self.count_present,
            "count_missing": self.count_missing,
            "mean": self.mean,
            "variance": self.variance,
            "min": self.min,
            "max": self.max,
            "kind": self.kind,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "FeatureStats":
        return cls(**data)


def detect_format(path: PathLike, format: Optional[str] = None) -> str:
    if format is not None:
        fmt = format.lower()
    else:
        fmt = Path(path).suffix.lower().lstrip(".")
        fmt = {"json": "jsonl", "ndjson": "jsonl"}.get(fmt, fmt)
    if fmt not in FORMATS:
        raise InvalidInput(f"unsupported dataset format {fmt!r} (expected one of {FORMATS})")
    return fmt


def _iter_jsonl(path: Path) -> Iterator[Tuple[int, TrackRecord]]:
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=line_no) from e

            error = next(iter(_record_validator.iter_errors(data)), None)
            if error is not None:
                where = "/".join(str(p) for p in error.absolute_path) or "record"
                raise ParseError(f"{where}: {error.message}", line=line_no)

            try:
                yield line_no, TrackRecord.from_dict(data)
            except InvalidInput as e:
                raise ParseError(str(e), line=line_no) from e


def _split_list(cell: str) -> Tuple[str, ...]:
    sep = FORMAT_CONFIG["list_separator"]
    return tuple(part.strip() for part in cell.split(sep) if part.strip())


def _parse_cell(cell: str) -> Union[float, str, None]:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return float(cell)
    except ValueError:
        return cell


def _iter_csv(path: Path, chunk_size: int = 10000) -> Iterator[Tuple[int, TrackRecord]]:
    try:
        header = pd.read_csv(path, nrows=0, dtype=str, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"{path}: CSV has no header row") from e
    columns = [str(c) for c in header.columns]
    missing = [c for c in CSV_REQUIRED_COLUMNS if c not in columns]
    if missing:
        raise SchemaError(f"{path}: CSV header is missing columns {missing}")
    feature_columns = [c for c in columns if c not in CSV_META_COLUMNS]

    reader = pd.read_csv(
        path,
        dtype=str,
        keep_default_na=False,
        chunksize=chunk_size,
        encoding="utf-8",
    )
    offset = 0
    try:
        for chunk in reader:
            for position, row in enumerate(chunk.itertuples(index=False, name=None)):
                line_no = offset + position + 2  # header is line 1
                cells = dict(zip(columns, row))
                numeric: Dict[str, Optional[float]] = {}
                text: Dict[str, str] = {}
                for name in feature_columns:
                    value = _parse_cell(cells[name])
                    if isinstance(value, str):
                        text[name] = value
                    else:
                        numeric[name] = value
                try:
                    record = TrackRecord(
                        track_id=cells["track_id"].strip(),
                        artist_id=cells["artist_id"].strip(),
                        artist_name=cells.get("artist_name", ""),
                        title=cells.get("title", ""),
                        artist_terms=_split_list(cells.get("artist_terms", "")),
                        similar_artists=_split_list(cells.get("similar_artists", "")),
                        features=numeric,
                        text_features=text,
                    )
                except InvalidInput as e:
                    raise ParseError(str(e), line=line_no) from e
                yield line_no, record
            offset += len(chunk)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(f"malformed CSV row: {e}", line=int(match.group(1)) if match else None) from e


def iter_dataset(path: PathLike, format: Optional[str] = None) -> Iterator[TrackRecord]:
    """
    Stream records from a dataset file, one record in memory at a time

    Duplicate detection is left to the caller (see load_dataset).
    """
    path = Path(path)
    fmt = detect_format(path, format)
    if not path.is_file():
        raise IoError(f"dataset file not found: {path}")
    try:
        rows = _iter_jsonl(path) if fmt == "jsonl" else _iter_csv(path)
        for _, record in rows:
            yield record
    except UnicodeDecodeError as e:
        raise IoError(f"{path}: not valid UTF-8 ({e.reason})") from e
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def load_dataset(path: PathLike, format: Optional[str] = None) -> List[TrackRecord]:
    """
    Load all records of a JSONL or CSV dataset in file order

    Args:
        path: Dataset file
        format: "jsonl" or "csv"; inferred from the suffix when None

    Returns:
        List of TrackRecord

    Raises:
        IoError, ParseError, DuplicateTrackId, SchemaError
    """
    records: List[TrackRecord] = []
    seen = set()
    for record in iter_dataset(path, format):
        if record.track_id in seen:
            raise DuplicateTrackId(record.track_id)
        seen.add(record.track_id)
        records.append(record)
    logger.info(f"Loaded {len(records)} records from {path}")
    return records


def load_datasets(
    paths: Sequence[PathLike], format: Optional[str] = None, workers: Optional[int] = None
) -> List[TrackRecord]:
    """Parse several files in parallel; merge in path-sorted order"""
    ordered = sorted(Path(p) for p in paths)
    parts = map_ordered(lambda p: load_dataset(p, format), ordered, workers)
    records: List[TrackRecord] = []
    seen = set()
    for part in parts:
        for record in part:
            if record.track_id in seen:
                raise DuplicateTrackId(record.track_id)
            seen.add(record.track_id)
            records.append(record)
    return records


def _format_real(value: float) -> str:
    return repr(float(value))


def write_dataset(records: Sequence[TrackRecord], path: PathLike, format: Optional[str] = None) -> Path:
    """
    Write records as canonical JSONL, CSV (pipe-joined lists) or Excel

    Segment sequences only survive the JSONL format.

    Args:
        records: Records to write
        path: Output file
        format: "jsonl", "csv" or "xlsx"; inferred from the suffix when None

    Returns:
        Path written
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    path.parent.mkdir(parents=True, exist_ok=True)

    if fmt in ("jsonl", "json", "ndjson"):
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for record in records:
                f.write(canonical_dumps(record.to_dict()))
                f.write("\n")
        return path

    if fmt not in ("csv", "xlsx"):
        raise InvalidInput(f"unsupported export format {fmt!r}")

    if any(r.segments is not None for r in records):
        logger.warning(f"Segment sequences are not representable in {fmt}; run summarization first")

    sep = FORMAT_CONFIG["list_separator"]
    feature_names = sorted({name for r in records for name in r.feature_names()})
    rows = []
    for r in records:
        row = {
            "track_id": r.track_id,
            "artist_id": r.artist_id,
            "artist_name": r.artist_name,
            "title": r.title,
            "artist_terms": sep.join(r.artist_terms),
            "similar_artists": sep.join(r.similar_artists),
        }
        for name in feature_names:
            if name in r.features:
                row[name] = _format_real(r.features[name])
            else:
                row[name] = r.text_features.get(name, "")
        rows.append(row)
    df = pd.DataFrame(rows, columns=list(CSV_META_COLUMNS) + feature_names, dtype=object)

    if fmt == "csv":
        df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    else:
        df.to_excel(path, index=False, engine="openpyxl")
    return path


def summarize_segments(seq: SegmentSequence) -> Dict[str, float]:
    """
    Condense a segment sequence into fixed-length features

    Args:
        seq: Segment sequence of width w

    Returns:
        timbre_mean_0..timbre_mean_{w-1} (component means, absent when the sequence
        is empty), segments_count, and segments_confidence_mean when confidences exist
    """
    summary: Dict[str, float] = {}
    n = len(seq)
    if n:
        # fsum is correctly rounded, so the means ignore time-step order exactly
        for j, column in enumerate(zip(*seq.timbre)):
            summary[f"timbre_mean_{j}"] = math.fsum(column) / n
        if seq.confidence:
            summary["segments_confidence_mean"] = math.fsum(seq.confidence) / n
    summary["segments_count"] = float(n)
    return summary


def summarize_record(record: TrackRecord) -> TrackRecord:
    """Merge segment summaries into features; explicit record features win"""
    if record.segments is None:
        return record
    merged = summarize_segments(record.segments)
    merged.update(record.features)
    return replace(record, features=merged)


def summarize_dataset(records: Sequence[TrackRecord]) -> List[TrackRecord]:
    return [summarize_record(r) for r in records]


@dataclass
class _Moments:
    """Mergeable (count, mean, M2, min, max) accumulator"""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf
    text: int = 0

    @classmethod
    def of(cls, values: np.ndarray, text: int) -> "_Moments":
        if values.size == 0:
            return cls(text=text)
        mean = float(values.mean())
        return cls(
            count=int(values.size),
            mean=mean,
            m2=float(((values - mean) ** 2).sum()),
            min=float(values.min()),
            max=float(values.max()),
            text=text,
        )

    def merge(self, other: "_Moments") -> "_Moments":
        # Chan et al. parallel update
        n = self.count + other.count
        if n == 0:
            return _Moments(text=self.text + other.text)
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return _Moments(n, mean, m2, min(self.min, other.min), max(self.max, other.max), self.text + other.text)


def _chunk_moments(records: Sequence[TrackRecord]) -> Dict[str, _Moments]:
    values: Dict[str, List[float]] = {}
    texts: Dict[str, int] = {}
    for r in records:
        for name, value in r.features.items():
            values.setdefault(name, []).append(value)
        for name in r.text_features:
            texts[name] = texts.get(name, 0) + 1
    names = set(values) | set(texts)
    return {
        name: _Moments.of(np.asarray(values.get(name, []), dtype=np.float64), texts.get(name, 0))
        for name in names
    }


def _merge_maps(a: Dict[str, _Moments], b: Dict[str, _Moments]) -> Dict[str, _Moments]:
    merged = dict(a)
    for name, moments in b.items():
        merged[name] = merged[name].merge(moments) if name in merged else moments
    return merged


def compute_stats(
    records: Sequence[TrackRecord],
    workers: Optional[int] = None,
    chunk_size: Optional[int] = None,
) -> List[FeatureStats]:
    """
    Compute per-feature statistics over a dataset

    Rows are split into fixed-size chunks whose partial accumulators are merged
    by a fixed tree, so the result does not depend on `workers`.

    Args:
        records: Non-empty list of records (already summarized if they carry segments)
        workers: Thread count for chunk processing

    Returns:
        One FeatureStats per observed feature, sorted by name
    """
    if not records:
        raise EmptyDataset("cannot compute statistics of an empty dataset")

    size = chunk_size or PARALLEL_CONFIG["chunk_size"]
    chunks = chunk_bounds(len(records), size)
    partials = map_ordered(lambda b: _chunk_moments(records[b[0]:b[1]]), chunks, workers)
    totals = pairwise_reduce(partials, _merge_maps)

    n = len(records)
    stats = []
    for name in sorted(totals):
        m = totals[name]
        if m.text:
            # any string value makes the whole feature non-numeric
            stats.append(FeatureStats(name, m.count + m.text, n - m.count - m.text, 0.0, 0.0, 0.0, 0.0, kind="text"))
            continue
        if m.count == 0:
            stats.append(FeatureStats(name, 0, n, 0.0, 0.0, 0.0, 0.0))
            continue
        variance = max(m.m2 / m.count, 0.0) if m.count > 1 else 0.0
        mean = min(max(m.mean, m.min), m.max)
        stats.append(FeatureStats(name, m.count, n - m.count, mean, variance, m.min, m.max))
    return stats


def stats_to_frame(stats: Sequence[FeatureStats]) -> pd.DataFrame:
    """Tabular view of FeatureStats for printing and export"""
    frame = pd.DataFrame([s.to_dict() for s in stats])
    if not frame.empty:
        frame["missing_fraction"] = [s.missing_fraction for s in stats]
    return frame
