"""
Shared data types: tracks, schemas, feature matrices, models and cluster indexes

All types are immutable after construction. Every type converts to and from a
plain dict; `utils.canonical_json` turns those dicts into byte-stable JSON.
"""

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from utils.canonical_json import content_hash
from .errors import InvalidInput


TRACK_ID_PATTERN = re.compile(r"[A-Za-z0-9_-]+")
SEED_MAX = 2 ** 64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidInput(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise InvalidInput(f"seed {seed} is outside the unsigned 64-bit range")
    return seed


def _unique_in_order(values: Iterable[str]) -> Tuple[str, ...]:
    seen = set()
    result = []
    for value in values:
        if value not in seen:
            seen.add(value)
            result.append(value)
    return tuple(result)


def _as_real(name: str, value: Any) -> Optional[float]:
    """None and non-finite numbers mean 'missing'"""
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise InvalidInput(f"feature {name!r} must be a number, got {type(value).__name__}")
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class SegmentSequence:
    """Per-time-step timbre vectors (and optional confidences) of one track"""

    timbre: Tuple[Tuple[float, ...], ...] = ()
    confidence: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        timbre = tuple(tuple(float(v) for v in step) for step in self.timbre)
        widths = {len(step) for step in timbre}
        if len(widths) > 1:
            raise InvalidInput(f"timbre vectors have mixed widths {sorted(widths)}")
        if widths and widths.pop() < 1:
            raise InvalidInput("timbre vectors must have width >= 1")
        object.__setattr__(self, "timbre", timbre)

        if self.confidence is not None:
            confidence = tuple(float(v) for v in self.confidence)
            if len(confidence) != len(timbre):
                raise InvalidInput(
                    f"confidence has {len(confidence)} entries, timbre has {len(timbre)}"
                )
            if any(not 0.0 <= v <= 1.0 for v in confidence):
                raise InvalidInput("confidence values must lie in [0, 1]")
            object.__setattr__(self, "confidence", confidence)

    @property
    def width(self) -> Optional[int]:
        return len(self.timbre[0]) if self.timbre else None

    def __len__(self) -> int:
        return len(self.timbre)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"timbre": [list(step) for step in self.timbre]}
        if self.confidence is not None:
            data["confidence"] = list(self.confidence)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SegmentSequence":
        confidence = data.get("confidence")
        return cls(
            timbre=tuple(tuple(step) for step in data.get("timbre", [])),
            confidence=None if confidence is None else tuple(confidence),
        )


@dataclass(frozen=True)
class TrackRecord:
    """
    One song: IDs, artist metadata and raw features

    artist_terms are lowercased and deduplicated; similar_artists are deduplicated
    and never contain the track's own artist. Missing numeric features are simply
    absent from `features`.
    """

    track_id: str
    artist_id: str
    artist_name: str = ""
    title: str = ""
    artist_terms: Tuple[str, ...] = ()
    similar_artists: Tuple[str, ...] = ()
    features: Mapping[str, float] = field(default_factory=dict, hash=False)
    segments: Optional[SegmentSequence] = None
    text_features: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not isinstance(self.track_id, str) or not TRACK_ID_PATTERN.fullmatch(self.track_id):
            raise InvalidInput(f"invalid track_id {self.track_id!r}")
        if not isinstance(self.artist_id, str) or not self.artist_id:
            raise InvalidInput(f"track {self.track_id}: artist_id must be a non-empty string")

        terms = _unique_in_order(str(t).strip().lower() for t in self.artist_terms)
        object.__setattr__(self, "artist_terms", tuple(t for t in terms if t))

        similar = _unique_in_order(str(a) for a in self.similar_artists)
        object.__setattr__(
            self, "similar_artists", tuple(a for a in similar if a and a != self.artist_id)
        )

        features = {}
        for name, value in self.features.items():
            real = _as_real(name, value)
            if real is not None:
                features[str(name)] = real
        object.__setattr__(self, "features", dict(sorted(features.items())))
        object.__setattr__(
            self, "text_features", dict(sorted((str(k), str(v)) for k, v in self.text_features.items()))
        )
        object.__setattr__(self, "artist_name", self.artist_name or "")
        object.__setattr__(self, "title", self.title or "")

    def feature_names(self) -> List[str]:
        return sorted(set(self.features) | set(self.text_features))

    def to_dict(self) -> Dict[str, Any]:
        """JSONL record layout; text features share the `features` map"""
        merged: Dict[str, Any] = dict(self.features)
        merged.update(self.text_features)
        data: Dict[str, Any] = {
            "track_id": self.track_id,
            "artist_id": self.artist_id,
            "artist_name": self.artist_name,
            "title": self.title,
            "artist_terms": list(self.artist_terms),
            "similar_artists": list(self.similar_artists),
            "features": merged,
        }
        if self.segments is not None:
            data["segments"] = self.segments.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrackRecord":
        numeric: Dict[str, Optional[float]] = {}
        text: Dict[str, str] = {}
        for name, value in (data.get("features") or {}).items():
            if isinstance(value, str):
                text[name] = value
            else:
                numeric[name] = value
        segments = data.get("segments")
        return cls(
            track_id=data.get("track_id"),
            artist_id=data.get("artist_id"),
            artist_name=data.get("artist_name") or "",
            title=data.get("title") or "",
            artist_terms=tuple(data.get("artist_terms") or ()),
            similar_artists=tuple(data.get("similar_artists") or ()),
            features=numeric,
            segments=None if segments is None else SegmentSequence.from_dict(segments),
            text_features=text,
        )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered selected features plus z-score parameters; the train/inference contract"""

    feature_names: Tuple[str, ...]
    scaler_mean: Tuple[float, ...]
    scaler_std: Tuple[float, ...]
    provenance: Mapping[str, int] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        mean = tuple(float(v) for v in self.scaler_mean)
        std = tuple(float(v) for v in self.scaler_std)
        if not names:
            raise InvalidInput("schema needs at least one feature")
        if not len(names) == len(mean) == len(std):
            raise InvalidInput("feature_names, scaler_mean and scaler_std differ in length")
        if len(set(names)) != len(names):
            raise InvalidInput("duplicate feature names in schema")
        if list(names) != sorted(names):
            raise InvalidInput("schema feature names must be sorted")
        if not all(math.isfinite(v) for v in mean):
            raise InvalidInput("scaler_mean must be finite")
        if not all(math.isfinite(v) and v > 0 for v in std):
            raise InvalidInput("scaler_std entries must be finite and > 0")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "scaler_mean", mean)
        object.__setattr__(self, "scaler_std", std)
        object.__setattr__(
            self, "provenance", dict(sorted((str(k), int(v)) for k, v in self.provenance.items()))
        )

    @classmethod
    def build(
        cls,
        params: Mapping[str, Tuple[float, float]],
        provenance: Optional[Mapping[str, int]] = None,
    ) -> "FeatureSchema":
        """
        Build a schema from name -> (mean, std), independent of input order

        Args:
            params: Scaler parameters per feature
            provenance: Dropped-feature counts per reason

        Returns:
            FeatureSchema with lexicographically sorted feature names
        """
        names = sorted(params)
        return cls(
            feature_names=tuple(names),
            scaler_mean=tuple(params[n][0] for n in names),
            scaler_std=tuple(params[n][1] for n in names),
            provenance=dict(provenance or {}),
        )

    @classmethod
    def identity(cls, n_features: int) -> "FeatureSchema":
        """Schema with mean 0 / std 1 for already-scaled numeric data"""
        names = tuple(f"x{i:04d}" for i in range(n_features))
        return cls(names, (0.0,) * n_features, (1.0,) * n_features)

    def __len__(self) -> int:
        return len(self.feature_names)

    @cached_property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.scaler_mean, dtype=np.float64)

    @cached_property
    def std_array(self) -> np.ndarray:
        return np.asarray(self.scaler_std, dtype=np.float64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature_names": list(self.feature_names),
            "scaler_mean": list(self.scaler_mean),
            "scaler_std": list(self.scaler_std),
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FeatureSchema":
        return cls(
            feature_names=tuple(data["feature_names"]),
            scaler_mean=tuple(data["scaler_mean"]),
            scaler_std=tuple(data["scaler_std"]),
            provenance=data.get("provenance") or {},
        )


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Scaled n x d matrix; row i belongs to row_ids[i]"""

    schema: FeatureSchema
    rows: np.ndarray
    row_ids: Tuple[str, ...]

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64, copy=True)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, len(self.schema))
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise InvalidInput(
                f"matrix shape {rows.shape} does not match {len(self.schema)} schema features"
            )
        row_ids = tuple(self.row_ids)
        if len(row_ids) != rows.shape[0]:
            raise InvalidInput(f"{len(row_ids)} row ids for {rows.shape[0]} rows")
        if not np.all(np.isfinite(rows)):
            raise InvalidInput("feature matrix contains NaN or infinite entries")
        object.__setattr__(self, "rows", _readonly(rows))
        object.__setattr__(self, "row_ids", row_ids)

    @classmethod
    def from_array(cls, rows: Any, row_ids: Optional[Sequence[str]] = None) -> "FeatureMatrix":
        """Wrap an already-scaled array under an identity schema"""
        array = np.asarray(rows, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if row_ids is None:
            row_ids = [f"R{i}" for i in range(array.shape[0])]
        return cls(FeatureSchema.identity(array.shape[1]), array, tuple(row_ids))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.row_ids == other.row_ids
            and np.array_equal(self.rows, other.rows)
        )

    __hash__ = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema.to_dict(),
            "rows": self.rows.tolist(),
            "row_ids": list(self.row_ids),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FeatureMatrix":
        schema = FeatureSchema.from_dict(data["schema"])
        rows = np.asarray(data["rows"], dtype=np.float64).reshape(-1, len(schema))
        return cls(schema, rows, tuple(data["row_ids"]))


@dataclass(frozen=True, eq=False)
class KMeansModel:
    """k centroids in scaled space plus the schema and training provenance"""

    k: int
    centroids: np.ndarray
    schema: FeatureSchema
    inertia: float
    iterations_run: int
    seed: int
    converged: bool

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) < 1:
            raise InvalidInput(f"k must be >= 1, got {self.k}")
        centroids = np.array(self.centroids, dtype=np.float64, copy=True)
        if centroids.shape != (int(self.k), len(self.schema)):
            raise InvalidInput(
                f"centroids shape {centroids.shape} != ({self.k}, {len(self.schema)})"
            )
        if not np.all(np.isfinite(centroids)):
            raise InvalidInput("centroids must be finite")
        if np.unique(centroids, axis=0).shape[0] != centroids.shape[0]:
            raise InvalidInput("centroid rows must be pairwise distinct")
        inertia = float(self.inertia)
        if not math.isfinite(inertia) or inertia < 0:
            raise InvalidInput(f"inertia must be finite and >= 0, got {inertia}")
        if int(self.iterations_run) < 0:
            raise InvalidInput("iterations_run must be >= 0")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "centroids", _readonly(centroids))
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "iterations_run", int(self.iterations_run))
        object.__setattr__(self, "seed", check_seed(self.seed))
        object.__setattr__(self, "converged", bool(self.converged))

    @cached_property
    def model_id(self) -> str:
        """Content hash; lets a ClusterIndex detect a model mismatch"""
        return content_hash(self.to_dict())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KMeansModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "schema": self.schema.to_dict(),
            "inertia": self.inertia,
            "iterations_run": self.iterations_run,
            "seed": self.seed,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KMeansModel":
        schema = FeatureSchema.from_dict(data["schema"])
        centroids = np.asarray(data["centroids"], dtype=np.float64).reshape(-1, len(schema))
        return cls(
            k=data["k"],
            centroids=centroids,
            schema=schema,
            inertia=data["inertia"],
            iterations_run=data["iterations_run"],
            seed=data["seed"],
            converged=data["converged"],
        )


@dataclass(frozen=True)
class ClusterIndex:
    """Inverted cluster -> tracks map built over one dataset"""

    model_id: str
    assignments: Mapping[str, int] = field(hash=False)
    members: Mapping[int, Tuple[str, ...]] = field(hash=False)

    def __post_init__(self):
        members = {int(c): tuple(ids) for c, ids in sorted(self.members.items(), key=lambda kv: int(kv[0]))}
        if list(members) != list(range(len(members))):
            raise InvalidInput("member clusters must be numbered 0..k-1")
        assignments = {str(t): int(c) for t, c in self.assignments.items()}
        if sum(len(ids) for ids in members.values()) != len(assignments):
            raise InvalidInput("member lists and assignments differ in size")
        for cluster, ids in members.items():
            for track_id in ids:
                if assignments.get(track_id) != cluster:
                    raise InvalidInput(f"track {track_id} is not assigned to cluster {cluster}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "assignments", assignments)

    @property
    def k(self) -> int:
        return len(self.members)

    def cluster_of(self, track_id: str) -> Optional[int]:
        return self.assignments.get(track_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model_id": self.model_id,
            "assignments": dict(self.assignments),
            "members": {str(c): list(ids) for c, ids in self.members.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ClusterIndex":
        return cls(
            model_id=data["model_id"],
            assignments=data["assignments"],
            members={int(c): tuple(ids) for c, ids in data["members"].items()},
        )
