import numpy as np
import pytest

from engine.clustering import FitConfig, kmeans_fit
from engine.errors import AllFeaturesDropped, IoError
from engine.features import SelectionConfig, prepare_matrix
from engine.ingest import write_dataset
from engine.pipeline import TrainingPipeline


@pytest.fixture
def dataset(tmp_path, planted):
    records, _ = planted(n_tracks=300, clusters=3, features=4, constant_features=1)
    return records, write_dataset(records, tmp_path / "data.jsonl")


def test_run_success(dataset):
    records, path = dataset
    pipeline = TrainingPipeline(FitConfig(k=3, seed=2), record_trace=True)
    result = pipeline.run([path])

    assert result["status"] == "SUCCESS"
    model = result["model"]
    assert model.k == 3
    assert result["selection_report"].dropped == (("constant_000", "zero_variance"),)

    stats = result["statistics"]
    assert stats["files_read"] == 1
    assert stats["tracks_loaded"] == 300
    assert (stats["features_seen"], stats["features_kept"], stats["features_dropped"]) == (5, 4, 1)
    assert stats["inertia"] == model.inertia
    assert set(stats["elapsed_ms"]) == {"load", "prepare", "fit"}
    assert pipeline.traces
    assert pipeline.matrix.n_rows == 300


def test_matches_the_stage_functions(dataset):
    records, path = dataset
    config = FitConfig(k=3, seed=7)
    model = TrainingPipeline(config).train([path])
    matrix, _, _ = prepare_matrix(records, SelectionConfig())
    assert model == kmeans_fit(matrix, config)


def test_no_trace_unless_asked(dataset):
    _, path = dataset
    pipeline = TrainingPipeline(FitConfig(k=2))
    pipeline.train([path])
    assert pipeline.traces == []


def test_run_reports_errors(tmp_path):
    result = TrainingPipeline(FitConfig(k=2)).run([tmp_path / "missing.jsonl"])
    assert result["status"] == "ERROR"
    assert result["error_name"] == "IoError"
    assert "model" not in result
    assert result["statistics"]["tracks_loaded"] == 0


def test_train_raises(tmp_path, make_track):
    path = write_dataset([make_track(f"T{i}", "A", {"x": 1.0}) for i in range(4)], tmp_path / "flat.jsonl")
    with pytest.raises(AllFeaturesDropped):
        TrainingPipeline(FitConfig(k=2)).train([path])
    with pytest.raises(IoError):
        TrainingPipeline(FitConfig(k=2)).train([tmp_path / "nope.jsonl"])


def test_multiple_files_are_concatenated(tmp_path, planted):
    records, _ = planted(n_tracks=200, clusters=2, features=3)
    first = write_dataset(records[:120], tmp_path / "a.jsonl")
    second = write_dataset(records[120:], tmp_path / "b.jsonl")
    pipeline = TrainingPipeline(FitConfig(k=2, seed=1))
    model = pipeline.train([first, second])
    assert pipeline.stats["files_read"] == 2
    assert pipeline.matrix.row_ids == tuple(r.track_id for r in records)
    assert np.isfinite(model.inertia)
