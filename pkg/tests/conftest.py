import numpy as np
import pytest

from engine.datagen import GenConfig, generate
from engine.features import SelectionReport
from engine.models import ClusterIndex, FeatureSchema, KMeansModel, TrackRecord


def make_record(track_id, artist_id="A1", features=None, **kwargs):
    return TrackRecord(track_id=track_id, artist_id=artist_id, features=features or {}, **kwargs)


@pytest.fixture
def make_track():
    return make_record


@pytest.fixture
def hand_records():
    """
    T1..T4 share cluster 0, T5 sits alone in cluster 1.
    T1 (artist A) lists similar artists X and Y.
    """
    return [
        make_record("T1", "A", {"x0000": 0.0}, title="Song One", artist_name="Alpha",
                    artist_terms=("rock", "pop"), similar_artists=("X", "Y")),
        make_record("T2", "X", {"x0000": 0.5}, title="Song Two", artist_name="Ex",
                    artist_terms=("rock",), similar_artists=("Y",)),
        make_record("T3", "Y", {"x0000": -0.5}, title="Song Three", artist_name="Why",
                    artist_terms=("pop", "indie"), similar_artists=("X",)),
        make_record("T4", "Z", {"x0000": 1.0}, title="Song Four", artist_name="Zed",
                    artist_terms=("metal",), similar_artists=("W",)),
        make_record("T5", "W", {"x0000": 10.0}, title="Song Five", artist_name="Double",
                    artist_terms=("jazz",), similar_artists=("Z",)),
    ]


@pytest.fixture
def hand_model():
    """Two centroids on the x0000 axis under an identity schema"""
    return KMeansModel(
        k=2,
        centroids=np.array([[0.0], [10.0]]),
        schema=FeatureSchema.identity(1),
        inertia=1.5,
        iterations_run=1,
        seed=0,
        converged=True,
    )


@pytest.fixture
def hand_index(hand_model):
    return ClusterIndex(
        model_id=hand_model.model_id,
        assignments={"T1": 0, "T2": 0, "T3": 0, "T4": 0, "T5": 1},
        members={0: ("T1", "T2", "T3", "T4"), 1: ("T5",)},
    )


@pytest.fixture
def hand_report():
    return SelectionReport(kept=("x0000",))


@pytest.fixture
def planted():
    """Factory: planted dataset plus ground truth"""
    def _planted(n_tracks=300, clusters=3, features=6, seed=11, **kwargs):
        kwargs.setdefault("n_artists", max(clusters, n_tracks // 10))
        config = GenConfig(
            n_tracks=n_tracks,
            n_clusters_true=clusters,
            n_features=features,
            seed=seed,
            **kwargs,
        )
        return generate(config)
    return _planted
