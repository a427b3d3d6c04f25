"""
Recommendation: input songs -> clusters -> similar-artist counts -> top-n artists -> songs
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import AbstractSet, Dict, Iterable, List, Mapping, Sequence

import pandas as pd

from .config import FORMAT_CONFIG, RECOMMEND_CONFIG
from .errors import IndexMismatch, InvalidConfig, InvalidInput, UnknownCluster, UnknownTrack
from .models import ClusterIndex, KMeansModel, TrackRecord

logger = logging.getLogger(__name__)

# Anything with mapping access track_id -> TrackRecord (e.g. database.track_store.TrackStore)
TrackLookup = Mapping[str, TrackRecord]


@dataclass(frozen=True)
class RecommendConfig:
    top_n_artists: int = RECOMMEND_CONFIG["top_n_artists"]
    max_songs: int = RECOMMEND_CONFIG["max_songs"]
    exclude_input_artists: bool = RECOMMEND_CONFIG["exclude_input_artists"]

    def __post_init__(self):
        if self.top_n_artists < 1:
            raise InvalidConfig("top_n_artists must be >= 1")
        if self.max_songs < 1:
            raise InvalidConfig("max_songs must be >= 1")


@dataclass(frozen=True)
class Recommendation:
    track_id: str
    artist_id: str
    title: str
    artist_name: str
    source_cluster: int
    artist_support: int
    genre_overlap: float
    rank: int = 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "track_id": self.track_id,
            "artist_id": self.artist_id,
            "title": self.title,
            "artist_name": self.artist_name,
            "source_cluster": self.source_cluster,
            "artist_support": self.artist_support,
            "genre_overlap": self.genre_overlap,
            "rank": self.rank,
        }


def genre_overlap(terms_a: AbstractSet[str], terms_b: AbstractSet[str]) -> float:
    """Jaccard similarity; two empty sets score 0"""
    a, b = set(terms_a), set(terms_b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def _check_clusters(index: ClusterIndex, clusters: Iterable[int]) -> List[int]:
    requested = sorted(set(int(c) for c in clusters))
    if not requested:
        raise InvalidInput("at least one cluster is required")
    for c in requested:
        if not 0 <= c < index.k:
            raise UnknownCluster(c, index.k)
    return requested


def count_similar_artists(
    index: ClusterIndex, records: TrackLookup, clusters: Iterable[int]
) -> Dict[str, int]:
    """
    Count how often each artist is listed as similar by the members of `clusters`

    Returns:
        artist_id -> count, keys in first-seen order (clusters ascending, members in row order)
    """
    counts: Counter = Counter()
    for c in _check_clusters(index, clusters):
        for track_id in index.members[c]:
            counts.update(records[track_id].similar_artists)
    return dict(counts)


def top_n_artists(counts: Mapping[str, int], n: int) -> List[str]:
    """Artists by (count desc, artist_id asc), truncated to n"""
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [artist for artist, _ in ranked[:n]]


def recommend(
    model: KMeansModel,
    index: ClusterIndex,
    records: TrackLookup,
    input_track_ids: Sequence[str],
    config: RecommendConfig,
) -> List[Recommendation]:
    """
    Recommend songs disjoint from the input songs

    Args:
        model: Model the index was built with
        index: Cluster index over the track store
        records: Track store
        input_track_ids: Songs the user likes
        config: Recommendation settings

    Returns:
        Recommendations ordered by (artist rank, track_id); may be empty

    Raises:
        UnknownTrack, IndexMismatch
    """
    if index.model_id != model.model_id:
        raise IndexMismatch("cluster index was built with a different model")
    inputs = list(dict.fromkeys(input_track_ids))
    if not inputs:
        raise InvalidInput("at least one input track is required")
    for track_id in inputs:
        if index.cluster_of(track_id) is None or track_id not in records:
            raise UnknownTrack(track_id)

    input_set = set(inputs)
    input_artists = {records[t].artist_id for t in inputs}
    input_terms = set().union(*(records[t].artist_terms for t in inputs))
    clusters = sorted({index.assignments[t] for t in inputs})

    counts = count_similar_artists(index, records, clusters)
    chosen = top_n_artists(counts, config.top_n_artists)
    rank_of = {artist: rank for rank, artist in enumerate(chosen)}
    logger.info(f"Input clusters {clusters}; chosen artists {chosen}")

    candidates = []
    for c in clusters:
        for track_id in index.members[c]:
            if track_id in input_set:
                continue
            record = records[track_id]
            if config.exclude_input_artists and record.artist_id in input_artists:
                continue
            if record.artist_id in rank_of:
                candidates.append((rank_of[record.artist_id], track_id, c))

    candidates.sort(key=lambda item: (item[0], item[1]))
    results = []
    for rank, track_id, cluster in candidates[: config.max_songs]:
        record = records[track_id]
        results.append(Recommendation(
            track_id=track_id,
            artist_id=record.artist_id,
            title=record.title,
            artist_name=record.artist_name,
            source_cluster=cluster,
            artist_support=counts[record.artist_id],
            genre_overlap=genre_overlap(set(record.artist_terms), input_terms),
            rank=rank,
        ))
    logger.info(f"{len(candidates)} candidate tracks, returning {len(results)}")
    return results


def recommendations_to_json(recommendations: Sequence[Recommendation]) -> str:
    return json.dumps([r.to_dict() for r in recommendations], indent=2, ensure_ascii=False)


def recommendations_to_frame(
    recommendations: Sequence[Recommendation],
    records: TrackLookup,
    input_track_ids: Sequence[str],
) -> pd.DataFrame:
    """
    Table layout: input song/genres, recommended
    song/artist/genres. Input columns are filled on the first row only.
    """
    inputs = list(dict.fromkeys(input_track_ids))
    input_genres = sorted(set().union(*(records[t].artist_terms for t in inputs))) if inputs else []
    rows = []
    for position, rec in enumerate(recommendations):
        first = position == 0
        rows.append({
            "input_track": ", ".join(inputs) if first else "",
            "input_genres": " ".join(input_genres) if first else "",
            "rec_track": rec.track_id,
            "rec_artist": rec.artist_id,
            "rec_genres": " ".join(records[rec.track_id].artist_terms),
            "genre_overlap": round(rec.genre_overlap, 4),
        })
    return pd.DataFrame(rows, columns=FORMAT_CONFIG["recommend_columns"])
