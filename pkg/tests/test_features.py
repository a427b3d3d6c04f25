import json

import numpy as np
import pytest

from engine.errors import AllFeaturesDropped, DegenerateFeature, InvalidConfig, InvalidInput
from engine.features import (
    PRUNED_FEATURES_FALLBACK,
    SelectionConfig,
    SelectionReport,
    build_matrix,
    fit_scaler,
    load_pruned_features,
    prepare_matrix,
    select_features,
)
from engine.ingest import FeatureStats, compute_stats
from engine.models import TrackRecord


def stat(name, present=10, missing=0, variance=1.0, kind="numeric"):
    return FeatureStats(name, present, missing, 0.0, variance, -1.0, 1.0, kind=kind)


class TestSelectFeatures:
    def test_zero_variance_and_sparse_rules(self):
        report = select_features(
            [stat("a"), stat("b", variance=0.0), stat("c", present=4, missing=6)],
            SelectionConfig(),
        )
        assert report.kept == ("a",)
        assert report.dropped == (("b", "zero_variance"), ("c", "sparse"))

    def test_sparse_threshold_is_strict(self):
        report = select_features([stat("a"), stat("b", present=5, missing=5)], SelectionConfig())
        assert report.kept == ("a", "b")

    def test_manual_drop_wins_over_other_rules(self):
        report = select_features(
            [stat("a"), stat("b", variance=0.0)],
            SelectionConfig(manual_drop=("b",)),
        )
        assert report.dropped == (("b", "manual"),)

    def test_manual_keep_overrides_rules(self):
        report = select_features(
            [stat("a"), stat("b", present=1, missing=9)],
            SelectionConfig(manual_keep=("b",)),
        )
        assert report.kept == ("a", "b")
        assert report.dropped == ()

    def test_text_features_cannot_be_kept(self):
        report = select_features(
            [stat("a"), stat("loc", kind="text")],
            SelectionConfig(manual_keep=("loc",)),
        )
        assert report.dropped == (("loc", "non_numeric"),)

    def test_kept_is_sorted_regardless_of_input_order(self):
        report = select_features([stat("z"), stat("m"), stat("a")], SelectionConfig())
        assert report.kept == ("a", "m", "z")

    def test_everything_dropped(self):
        with pytest.raises(AllFeaturesDropped):
            select_features([stat("a", variance=0.0)], SelectionConfig())

    def test_manual_drop_of_pruned_list(self):
        names = ["song_length", "bars_confidence_mean", "tempo", "loudness"]
        report = select_features([stat(n) for n in names], SelectionConfig(manual_drop=PRUNED_FEATURES_FALLBACK))
        assert report.kept == ("loudness", "tempo")
        assert sorted(report.dropped_names("manual")) == ["bars_confidence_mean", "song_length"]

    def test_overlapping_manual_lists(self):
        with pytest.raises(InvalidConfig):
            SelectionConfig(manual_drop=("a",), manual_keep=("a",))

    @pytest.mark.parametrize("kwargs", [{"variance_epsilon": -1.0}, {"max_missing_fraction": 1.5}])
    def test_invalid_thresholds(self, kwargs):
        with pytest.raises(InvalidConfig):
            SelectionConfig(**kwargs)

    def test_report_round_trip_and_counts(self):
        report = SelectionReport(kept=("a",), dropped=(("b", "sparse"), ("c", "manual")))
        assert SelectionReport.from_dict(report.to_dict()) == report
        assert report.reason_counts() == {"manual": 1, "non_numeric": 0, "zero_variance": 0, "sparse": 1}

    def test_report_rejects_overlap(self):
        with pytest.raises(InvalidInput):
            SelectionReport(kept=("a",), dropped=(("a", "sparse"),))


def test_injected_decoys_are_dropped(planted):
    records, _ = planted(n_tracks=400, features=5, constant_features=1, sparse_features=1)
    report = select_features(compute_stats(records), SelectionConfig())
    assert dict(report.dropped) == {"constant_000": "zero_variance", "sparse_000": "sparse"}
    assert len(report.kept) == 5


def test_sixty_percent_missing_feature_is_sparse():
    records = [
        TrackRecord(f"T{i}", "A", features={"x": float(i), "y": float(i % 3), **({"m": float(i)} if i < 4 else {})})
        for i in range(10)
    ]
    report = select_features(compute_stats(records), SelectionConfig())
    assert dict(report.dropped) == {"m": "sparse"}


def test_load_pruned_features(tmp_path):
    path = tmp_path / "pruned.json"
    path.write_text(json.dumps({"pruned_features": ["song_length"]}), encoding="utf-8")
    assert load_pruned_features(str(path)) == ["song_length"]
    assert load_pruned_features(str(tmp_path / "missing.json")) == PRUNED_FEATURES_FALLBACK


class TestScaler:
    def test_z_scores(self):
        records = [TrackRecord(f"T{i}", "A", features={"x": v}) for i, v in enumerate([1.0, 2.0, 3.0])]
        schema = fit_scaler(records, ["x"])
        assert schema.scaler_mean == (2.0,)
        assert schema.scaler_std == pytest.approx((np.sqrt(2.0 / 3.0),))
        matrix = build_matrix(records, schema)
        assert matrix.rows[:, 0] == pytest.approx([-1.2247448713915890, 0.0, 1.2247448713915890])

    def test_missing_values_become_zero(self):
        records = [
            TrackRecord("T1", "A", features={"x": 1.0, "y": 4.0}),
            TrackRecord("T2", "A", features={"x": 3.0}),
            TrackRecord("T3", "A", features={"x": 5.0, "y": 6.0}),
        ]
        schema = fit_scaler(records, ["y", "x"])
        assert schema.feature_names == ("x", "y")
        matrix = build_matrix(records, schema)
        assert matrix.rows[1, 1] == 0.0
        assert matrix.row_ids == ("T1", "T2", "T3")

    def test_constant_kept_feature(self):
        records = [TrackRecord(f"T{i}", "A", features={"x": 1.0}) for i in range(3)]
        with pytest.raises(DegenerateFeature) as info:
            fit_scaler(records, ["x"])
        assert info.value.feature == "x"

    def test_feature_without_values(self):
        records = [TrackRecord("T1", "A", features={"x": 1.0})]
        with pytest.raises(DegenerateFeature):
            fit_scaler(records, ["y"])

    def test_matrix_independent_of_workers(self, planted):
        records, _ = planted(n_tracks=5000, features=6)
        schema = fit_scaler(records, [f"feature_{j:03d}" for j in range(6)])
        reference = build_matrix(records, schema, workers=1)
        assert build_matrix(records, schema, workers=8) == reference
        assert reference.n_rows == 5000


def test_prepare_matrix_chain(planted):
    records, _ = planted(n_tracks=200, features=3, constant_features=1)
    matrix, report, stats = prepare_matrix(records, SelectionConfig())
    assert matrix.schema.feature_names == report.kept
    assert matrix.schema.provenance == {"manual": 0, "non_numeric": 0, "sparse": 0, "zero_variance": 1}
    assert len(stats) == 4
    assert np.allclose(matrix.rows.mean(axis=0), 0.0)


def test_selection_is_idempotent(planted):
    records, _ = planted(
        n_tracks=400, features=5, constant_features=1, sparse_features=1, text_features=True, missing_rate=0.1
    )
    stats = compute_stats(records)
    first = select_features(stats, SelectionConfig())
    again = select_features([s for s in stats if s.feature_name in first.kept], SelectionConfig())
    assert again.kept == first.kept
    assert again.dropped == ()


def test_looser_missing_threshold_keeps_a_superset():
    rng = np.random.default_rng(4)
    stats = [stat("full")] + [
        stat(f"f{i}", present=int(p), missing=100 - int(p)) for i, p in enumerate(rng.integers(0, 101, size=30))
    ]
    thresholds = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
    kept = [set(select_features(stats, SelectionConfig(max_missing_fraction=t)).kept) for t in thresholds]
    for tight, loose in zip(kept, kept[1:]):
        assert tight <= loose


def test_training_columns_are_standardized(planted):
    records, _ = planted(n_tracks=500, features=4, noise_features=1)
    names = sorted(records[0].features)
    matrix = build_matrix(records, fit_scaler(records, names))
    assert np.all(np.abs(matrix.rows.mean(axis=0)) <= 1e-9)
    assert np.all(np.abs(matrix.rows.std(axis=0) - 1.0) <= 1e-9)
