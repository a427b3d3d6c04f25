"""
Feature selection and scaling: prune, impute, z-score, build the FeatureMatrix
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.parallel import chunk_bounds, map_ordered
from .config import FILE_PATHS, PARALLEL_CONFIG, SCALER_CONFIG, SELECTION_CONFIG
from .errors import AllFeaturesDropped, DegenerateFeature, InvalidConfig, InvalidInput
from .ingest import FeatureStats, compute_stats
from .models import FeatureMatrix, FeatureSchema, TrackRecord

logger = logging.getLogger(__name__)

DROP_REASONS = ("manual", "non_numeric", "zero_variance", "sparse")

# Fallback kalau file config tidak ada
PRUNED_FEATURES_FALLBACK = [
    "song_length",
    "bars_confidence_mean",
    "sections_confidence_mean",
    "segments_confidence_mean",
    "loudness_confidence_mean",
]


def load_pruned_features(path: Optional[str] = None) -> List[str]:
    """
    Load the pruned-feature drop list from the JSON config file

    Args:
        path: JSON file with a "pruned_features" list (default from FILE_PATHS)

    Returns:
        Feature names to drop manually
    """
    path = path or FILE_PATHS["pruned_features"]
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return list(data.get("pruned_features", []))
    logger.warning(f"{path} not found, using built-in pruned feature list")
    return list(PRUNED_FEATURES_FALLBACK)


@dataclass(frozen=True)
class SelectionConfig:
    variance_epsilon: float = SELECTION_CONFIG["variance_epsilon"]
    max_missing_fraction: float = SELECTION_CONFIG["max_missing_fraction"]
    manual_drop: Tuple[str, ...] = ()
    manual_keep: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "manual_drop", tuple(self.manual_drop))
        object.__setattr__(self, "manual_keep", tuple(self.manual_keep))
        if self.variance_epsilon < 0:
            raise InvalidConfig("variance_epsilon must be >= 0")
        if not 0.0 <= self.max_missing_fraction <= 1.0:
            raise InvalidConfig("max_missing_fraction must be in [0, 1]")
        overlap = sorted(set(self.manual_drop) & set(self.manual_keep))
        if overlap:
            raise InvalidConfig(f"features both dropped and kept manually: {overlap}")


@dataclass(frozen=True)
class SelectionReport:
    kept: Tuple[str, ...]
    dropped: Tuple[Tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kept", tuple(self.kept))
        object.__setattr__(self, "dropped", tuple((str(n), str(r)) for n, r in self.dropped))
        names = [n for n, _ in self.dropped]
        if set(names) & set(self.kept) or len(set(names)) != len(names):
            raise InvalidInput("kept and dropped features must be disjoint")
        bad = [r for _, r in self.dropped if r not in DROP_REASONS]
        if bad:
            raise InvalidInput(f"unknown drop reasons {bad}")

    def reason_counts(self) -> Dict[str, int]:
        counts = {reason: 0 for reason in DROP_REASONS}
        for _, reason in self.dropped:
            counts[reason] += 1
        return counts

    def dropped_names(self, reason: Optional[str] = None) -> List[str]:
        return [n for n, r in self.dropped if reason is None or r == reason]

    def to_dict(self) -> Dict[str, object]:
        return {
            "kept": list(self.kept),
            "dropped": [{"feature_name": n, "reason": r} for n, r in self.dropped],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "SelectionReport":
        return cls(
            kept=tuple(data["kept"]),
            dropped=tuple((d["feature_name"], d["reason"]) for d in data["dropped"]),
        )


def _drop_reason(stat: FeatureStats, config: SelectionConfig, manual_drop: set) -> Optional[str]:
    if stat.feature_name in manual_drop:
        return "manual"
    if stat.kind != "numeric":
        return "non_numeric"
    if stat.variance < config.variance_epsilon or stat.count_present == 0:
        return "zero_variance"
    if stat.missing_fraction > config.max_missing_fraction:
        return "sparse"
    return None


def select_features(stats: Sequence[FeatureStats], config: SelectionConfig) -> SelectionReport:
    """
    Apply the pruning rules to per-feature statistics

    A feature is dropped iff a rule matches and it is not in manual_keep.
    Text features cannot be kept: they have no numeric scale.

    Args:
        stats: Output of compute_stats
        config: Thresholds and manual lists

    Returns:
        SelectionReport with kept names sorted lexicographically

    Raises:
        AllFeaturesDropped: nothing survives
    """
    if not stats:
        raise InvalidInput("select_features needs at least one FeatureStats")

    manual_drop = set(config.manual_drop)
    manual_keep = set(config.manual_keep)
    observed = {s.feature_name for s in stats}
    unknown = sorted((manual_drop | manual_keep) - observed)
    if unknown:
        logger.info(f"Manual feature lists name unobserved features: {unknown}")

    kept: List[str] = []
    dropped: List[Tuple[str, str]] = []
    for stat in sorted(stats, key=lambda s: s.feature_name):
        reason = _drop_reason(stat, config, manual_drop)
        if reason is not None and stat.feature_name in manual_keep:
            if reason == "non_numeric":
                logger.warning(f"Cannot keep text feature {stat.feature_name!r}; dropping it")
            else:
                reason = None
        if reason is None:
            kept.append(stat.feature_name)
        else:
            dropped.append((stat.feature_name, reason))

    if not kept:
        raise AllFeaturesDropped(f"all {len(stats)} features were dropped by selection")

    report = SelectionReport(kept=tuple(kept), dropped=tuple(dropped))
    logger.info(f"Selected {len(kept)} features, dropped {len(dropped)}: {report.reason_counts()}")
    return report


def dense_values(records: Sequence[TrackRecord], names: Sequence[str]) -> np.ndarray:
    """n x d raw values with NaN for missing entries"""
    values = np.full((len(records), len(names)), np.nan)
    for i, record in enumerate(records):
        features = record.features
        for j, name in enumerate(names):
            value = features.get(name)
            if value is not None:
                values[i, j] = value
    return values


def fit_scaler(
    records: Sequence[TrackRecord],
    kept: Sequence[str],
    report: Optional[SelectionReport] = None,
) -> FeatureSchema:
    """
    Compute z-score parameters from the present values of every kept feature

    Args:
        records: Training records
        kept: Selected feature names (any order)
        report: Selection report recorded as schema provenance

    Returns:
        FeatureSchema with lexicographically sorted features

    Raises:
        DegenerateFeature: a kept feature has no present values or zero variance
    """
    names = sorted(set(kept))
    if not names:
        raise InvalidInput("fit_scaler needs at least one kept feature")

    values = dense_values(records, names)
    params: Dict[str, Tuple[float, float]] = {}
    for j, name in enumerate(names):
        column = values[:, j]
        column = column[~np.isnan(column)]
        if column.size == 0:
            raise DegenerateFeature(name, "no present values")
        mean = float(column.mean())
        std = float(np.sqrt(((column - mean) ** 2).mean()))
        if std == 0.0 or not math.isfinite(std):
            raise DegenerateFeature(name)
        params[name] = (mean, max(std, SCALER_CONFIG["min_std"]))

    provenance = report.reason_counts() if report is not None else {}
    return FeatureSchema.build(params, provenance)


def build_matrix(
    records: Sequence[TrackRecord],
    schema: FeatureSchema,
    workers: Optional[int] = None,
) -> FeatureMatrix:
    """
    Scale records into a FeatureMatrix; missing values become 0 (the training mean)

    Args:
        records: Records in output row order
        schema: Fitted schema
        workers: Thread count; rows are filled by position so output is identical

    Returns:
        FeatureMatrix with row i = records[i]
    """
    names = schema.feature_names
    mean = schema.mean_array
    std = schema.std_array

    def scale(bounds: Tuple[int, int]) -> np.ndarray:
        block = (dense_values(records[bounds[0]:bounds[1]], names) - mean) / std
        return np.nan_to_num(block, nan=0.0)

    chunks = chunk_bounds(len(records), PARALLEL_CONFIG["chunk_size"])
    blocks = map_ordered(scale, chunks, workers)
    rows = np.vstack(blocks) if blocks else np.zeros((0, len(names)))
    return FeatureMatrix(schema, rows, tuple(r.track_id for r in records))


def prepare_matrix(
    records: Sequence[TrackRecord],
    selection: SelectionConfig,
    workers: Optional[int] = None,
) -> Tuple[FeatureMatrix, SelectionReport, List[FeatureStats]]:
    """
    Chain compute_stats -> select_features -> fit_scaler -> build_matrix

    Records must already be summarized (see ingest.summarize_dataset).
    """
    stats = compute_stats(records, workers=workers)
    report = select_features(stats, selection)
    schema = fit_scaler(records, report.kept, report)
    matrix = build_matrix(records, schema, workers=workers)
    return matrix, report, stats
