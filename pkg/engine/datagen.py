"""
Synthetic MSD-shaped datasets with planted clusters, genres and similar-artist graphs
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Tuple, Union

import numpy as np

from utils.canonical_json import canonical_dumps
from .config import DEFAULT_SEED, GEN_CONFIG
from .errors import ConfigError
from .models import SEED_MAX, SegmentSequence, TrackRecord

logger = logging.getLogger(__name__)

LOCATIONS = ["london", "new york", "berlin", "tokyo", "sao paulo", "lagos", "sydney", "jakarta"]


@dataclass(frozen=True)
class GenConfig:
    """Generator parameters; every random draw flows from `seed`"""

    n_tracks: int
    n_artists: int
    n_clusters_true: int
    n_features: int = GEN_CONFIG["n_features"]
    separation: float = GEN_CONFIG["separation"]
    noise_features: int = 0
    genre_vocab_per_cluster: int = GEN_CONFIG["genre_vocab_per_cluster"]
    missing_rate: float = 0.0
    seed: int = DEFAULT_SEED
    within_std: float = GEN_CONFIG["within_std"]
    noise_std: float = GEN_CONFIG["noise_std"]
    constant_features: int = 0
    sparse_features: int = 0
    text_features: bool = False
    segments_per_track: int = 0

    def validate(self) -> None:
        """Raise ConfigError on the first violated invariant"""
        checks = [
            (self.n_tracks >= 1, "n_tracks must be >= 1"),
            (self.n_artists >= 1, "n_artists must be >= 1"),
            (self.n_artists <= self.n_tracks, "n_artists must be <= n_tracks"),
            (self.n_clusters_true >= 1, "n_clusters_true must be >= 1"),
            (self.n_clusters_true <= self.n_artists, "n_clusters_true must be <= n_artists"),
            (self.n_features >= 1, "n_features must be >= 1"),
            (0 <= self.noise_features <= self.n_features, "noise_features must be in [0, n_features]"),
            (self.separation > 0 and math.isfinite(self.separation), "separation must be > 0"),
            (self.genre_vocab_per_cluster >= 1, "genre_vocab_per_cluster must be >= 1"),
            (0.0 <= self.missing_rate < 1.0, "missing_rate must be in [0, 1)"),
            (0 <= self.seed <= SEED_MAX, "seed must be an unsigned 64-bit integer"),
            (self.within_std > 0, "within_std must be > 0"),
            (self.noise_std >= 0, "noise_std must be >= 0"),
            (self.constant_features >= 0, "constant_features must be >= 0"),
            (self.sparse_features >= 0, "sparse_features must be >= 0"),
            (self.segments_per_track >= 0, "segments_per_track must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def n_informative(self) -> int:
        return self.n_features - self.noise_features


@dataclass(frozen=True)
class GroundTruth:
    """Planted labels per track and per artist, plus each cluster's genre vocabulary"""

    track_labels: Mapping[str, int] = field(hash=False)
    artist_labels: Mapping[str, int] = field(hash=False)
    vocabularies: Tuple[Tuple[str, ...], ...] = ()


def planted_centers(rng: np.random.Generator, g: int, dims: int, distance: float) -> np.ndarray:
    """
    Place g centres whose pairwise distance is at least `distance`

    With dims >= g the centres form a regular simplex (all pairwise distances
    equal) under a random rotation; otherwise random centres are rescaled so the
    closest pair sits exactly at `distance`.
    """
    if g == 1 or dims == 0:
        return np.zeros((g, dims))
    if dims >= g:
        basis = np.eye(g, dims) * (distance / math.sqrt(2.0))
        rotation, _ = np.linalg.qr(rng.normal(size=(dims, dims)))
        return basis @ rotation
    centers = rng.normal(size=(g, dims))
    gaps = [np.linalg.norm(centers[a] - centers[b]) for a in range(g) for b in range(a + 1, g)]
    return centers * (distance / max(min(gaps), 1e-12))


def _similar_artist_lists(
    rng: np.random.Generator, artist_cluster: np.ndarray, artist_ids: List[str]
) -> List[Tuple[str, ...]]:
    n_artists = len(artist_ids)
    per_artist = min(GEN_CONFIG["similar_artists_per_artist"], n_artists - 1)
    by_cluster: Dict[int, np.ndarray] = {
        int(c): np.flatnonzero(artist_cluster == c) for c in np.unique(artist_cluster)
    }
    lists = []
    for a in range(n_artists):
        same = by_cluster[int(artist_cluster[a])]
        same = same[same != a]
        chosen: List[int] = []
        for _ in range(per_artist):
            if same.size and rng.random() < GEN_CONFIG["intra_cluster_edge_rate"]:
                b = int(same[rng.integers(same.size)])
            else:
                b = int(rng.integers(n_artists - 1))
                b = b + 1 if b >= a else b
            if b not in chosen:
                chosen.append(b)
        lists.append(tuple(artist_ids[b] for b in chosen))
    return lists


def generate(config: GenConfig) -> Tuple[List[TrackRecord], GroundTruth]:
    """
    Generate a dataset with planted clusters

    Args:
        config: Generator configuration

    Returns:
        (records, ground truth); identical for identical configs

    Raises:
        ConfigError: config violates an invariant
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    g = config.n_clusters_true
    spread = config.separation * config.within_std

    # Artists -> clusters: every cluster gets at least one artist
    artist_cluster = rng.permutation(np.arange(config.n_artists) % g)
    artist_ids = [f"AR{a:06d}" for a in range(config.n_artists)]

    vocabularies = tuple(
        tuple(f"genre{c:02d} style{j:02d}" for j in range(config.genre_vocab_per_cluster))
        for c in range(g)
    )
    max_terms = min(config.genre_vocab_per_cluster, GEN_CONFIG["max_terms_per_artist"])
    artist_terms = []
    for a in range(config.n_artists):
        vocab = vocabularies[int(artist_cluster[a])]
        size = int(rng.integers(1, max_terms + 1))
        picks = rng.choice(len(vocab), size=size, replace=False)
        artist_terms.append(tuple(vocab[int(i)] for i in sorted(picks)))
    similar = _similar_artist_lists(rng, artist_cluster, artist_ids)

    # Tracks -> artists: every artist gets at least one track
    track_artist = np.concatenate([
        np.arange(config.n_artists),
        rng.integers(config.n_artists, size=config.n_tracks - config.n_artists),
    ])
    track_artist = rng.permutation(track_artist)
    track_cluster = artist_cluster[track_artist]

    centers = planted_centers(rng, g, config.n_informative, spread)
    informative = centers[track_cluster] + rng.normal(
        scale=config.within_std, size=(config.n_tracks, config.n_informative)
    )
    noise = rng.normal(scale=config.noise_std, size=(config.n_tracks, config.noise_features))
    values = np.hstack([informative, noise])
    names = [f"feature_{j:03d}" for j in range(config.n_informative)]
    names += [f"noise_{j:03d}" for j in range(config.noise_features)]

    present = rng.random(values.shape) >= config.missing_rate

    constant_values = rng.uniform(-10, 10, size=config.constant_features)
    n_sparse_present = int(round(GEN_CONFIG["sparse_present_fraction"] * config.n_tracks))
    sparse_present = [
        set(rng.permutation(config.n_tracks)[:n_sparse_present].tolist())
        for _ in range(config.sparse_features)
    ]
    sparse_values = rng.normal(size=(config.n_tracks, config.sparse_features))

    timbre_width = GEN_CONFIG["timbre_width"]
    timbre_centers = planted_centers(rng, g, timbre_width, spread)

    records = []
    track_labels: Dict[str, int] = {}
    for i in range(config.n_tracks):
        a = int(track_artist[i])
        cluster = int(track_cluster[i])
        track_id = f"TR{i:08d}"
        features = {names[j]: float(values[i, j]) for j in range(len(names)) if present[i, j]}
        for j, value in enumerate(constant_values):
            features[f"constant_{j:03d}"] = float(value)
        for j, rows in enumerate(sparse_present):
            if i in rows:
                features[f"sparse_{j:03d}"] = float(sparse_values[i, j])

        segments = None
        if config.segments_per_track:
            steps = timbre_centers[cluster] + rng.normal(
                scale=config.within_std, size=(config.segments_per_track, timbre_width)
            )
            confidence = rng.uniform(0.0, 1.0, size=config.segments_per_track)
            segments = SegmentSequence(
                timbre=tuple(tuple(float(v) for v in step) for step in steps),
                confidence=tuple(float(v) for v in confidence),
            )

        text = {"artist_location": LOCATIONS[a % len(LOCATIONS)]} if config.text_features else {}
        records.append(TrackRecord(
            track_id=track_id,
            artist_id=artist_ids[a],
            artist_name=f"Artist {a}",
            title=f"Song {i}",
            artist_terms=artist_terms[a],
            similar_artists=similar[a],
            features=features,
            segments=segments,
            text_features=text,
        ))
        track_labels[track_id] = cluster

    truth = GroundTruth(
        track_labels=track_labels,
        artist_labels={artist_ids[a]: int(artist_cluster[a]) for a in range(config.n_artists)},
        vocabularies=vocabularies,
    )
    logger.info(
        f"Generated {config.n_tracks} tracks, {config.n_artists} artists, "
        f"{g} planted clusters, {len(names)} base features"
    )
    return records, truth


def truth_path_for(dataset_path: Union[str, Path]) -> Path:
    """data.jsonl -> data.truth.jsonl"""
    path = Path(dataset_path)
    return path.with_name(f"{path.stem}.truth.jsonl")


def write_truth(truth: GroundTruth, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for track_id, label in truth.track_labels.items():
            f.write(canonical_dumps({"track_id": track_id, "planted_label": label}))
            f.write("\n")
    return path
