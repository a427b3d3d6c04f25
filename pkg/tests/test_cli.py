import json

import pandas as pd
import pytest
from click.testing import CliRunner

from app.cli import cli, parse_k_spec, parse_stage_spec
from database.model_store import ModelFile, load_model, save_model
from engine.errors import InvalidConfig, PlanError
from engine.ingest import load_dataset, write_dataset


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, ["--log-level", "WARNING", *args], obj={})


@pytest.fixture
def planted_file(runner, tmp_path):
    path = tmp_path / "planted.jsonl"
    result = invoke(
        runner, "gen", "--tracks", "600", "--clusters", "3", "--features", "4",
        "--separation", "8.0", "--seed", "5", "--out", str(path),
    )
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def hand_files(tmp_path, hand_records, hand_model, hand_report):
    data = write_dataset(hand_records, tmp_path / "hand.jsonl")
    model = save_model(ModelFile(model=hand_model, selection_report=hand_report), tmp_path / "hand_model.json")
    return data, model


class TestSpecParsing:
    def test_k_spec(self):
        assert parse_k_spec("2..5") == [2, 3, 4, 5]
        assert parse_k_spec("2,3, 7") == [2, 3, 7]
        assert parse_k_spec("5") == [5]

    @pytest.mark.parametrize("spec", ["", "a..b", "5..2", "x"])
    def test_bad_k_spec(self, spec):
        with pytest.raises(InvalidConfig):
            parse_k_spec(spec)

    def test_stage_spec(self):
        grid = parse_stage_spec("0.1:grid:2,3,4", 0, 0)
        assert (grid.fraction, grid.strategy, grid.k_candidates) == (0.1, "grid", (2, 3, 4))
        rand = parse_stage_spec("1.0:random:2..10:4", 1, 0)
        assert (rand.k_range, rand.budget) == ((2, 10), 4)

    @pytest.mark.parametrize("spec", ["0.1", "0.1:grid", "x:grid:2", "1.0:random:2..5", "1.0:bayes:2,3"])
    def test_bad_stage_spec(self, spec):
        with pytest.raises(PlanError):
            parse_stage_spec(spec, 0, 0)


class TestGen:
    def test_same_seed_same_bytes(self, runner, tmp_path):
        paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
        for path in paths:
            result = invoke(runner, "gen", "--tracks", "50", "--clusters", "2", "--seed", "9", "--out", str(path))
            assert result.exit_code == 0
            assert result.stdout.strip() == str(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert (tmp_path / "a.truth.jsonl").read_bytes() == (tmp_path / "b.truth.jsonl").read_bytes()

    def test_invalid_config_exits_2(self, runner, tmp_path):
        result = invoke(runner, "gen", "--tracks", "50", "--clusters", "0", "--out", str(tmp_path / "x.jsonl"))
        assert result.exit_code == 2
        assert "ConfigError:" in result.stderr


class TestTrain:
    def test_train_writes_loadable_model(self, runner, planted_file, tmp_path):
        model_path = tmp_path / "model.json"
        trace_path = tmp_path / "trace.csv"
        result = invoke(
            runner, "train", "--data", str(planted_file), "--k", "3",
            "--model-out", str(model_path), "--trace-out", str(trace_path),
        )
        assert result.exit_code == 0, result.output
        assert "converged=true" in result.stdout
        model_file = load_model(model_path)
        assert model_file.model.k == 3
        assert result.stdout.startswith(f"model_id={model_file.model.model_id} k=3")
        assert model_file.selection_report.kept == model_file.model.schema.feature_names
        trace = pd.read_csv(trace_path)
        assert list(trace.columns) == ["restart", "iteration", "inertia", "max_shift"]

    def test_invalid_k_exits_2(self, runner, planted_file, tmp_path):
        result = invoke(runner, "train", "--data", str(planted_file), "--k", "0", "--model-out", str(tmp_path / "m.json"))
        assert result.exit_code == 2
        assert "InvalidConfig" in result.stderr

    def test_workers_do_not_change_the_model(self, runner, planted_file, tmp_path):
        models = []
        for workers in ("1", "8"):
            path = tmp_path / f"model_{workers}.json"
            result = runner.invoke(
                cli,
                ["--log-level", "WARNING", "--workers", workers, "train", "--data", str(planted_file),
                 "--k", "3", "--model-out", str(path)],
                obj={},
            )
            assert result.exit_code == 0, result.output
            data = json.loads(path.read_text(encoding="utf-8"))
            del data["created_at"]
            models.append(data)
        assert models[0] == models[1]

    def test_missing_data_file(self, runner, tmp_path):
        result = invoke(
            runner, "train", "--data", str(tmp_path / "none.jsonl"), "--k", "2",
            "--model-out", str(tmp_path / "m.json"),
        )
        assert result.exit_code == 1
        assert "IoError:" in result.stderr


class TestSweepAndSearch:
    def test_sweep_peaks_at_planted_k(self, runner, planted_file, tmp_path):
        csv_path = tmp_path / "sweep.csv"
        result = invoke(runner, "sweep", "--data", str(planted_file), "--k", "2..8", "--csv-out", str(csv_path))
        assert result.exit_code == 0, result.output
        assert result.stdout.strip() == "best_k=3"
        assert csv_path.read_text().splitlines()[0] == "k,silhouette,inertia,sample_size,wall_time_ms,seed"
        frame = pd.read_csv(csv_path)
        assert frame["k"].tolist() == list(range(2, 9))

    def test_single_k_to_stdout(self, runner, planted_file):
        result = invoke(runner, "sweep", "--data", str(planted_file), "--k", "5", "--sample-size", "200")
        assert result.exit_code == 0, result.output
        lines = result.stdout.strip().splitlines()
        assert lines[0] == "k,silhouette,inertia,sample_size,wall_time_ms,seed"
        assert len(lines) == 2
        assert lines[1].startswith("5,")

    def test_sweep_chart(self, runner, planted_file, tmp_path):
        chart = tmp_path / "chart.json"
        result = invoke(runner, "sweep", "--data", str(planted_file), "--k", "2,3",
                        "--csv-out", str(tmp_path / "s.csv"), "--chart-out", str(chart))
        assert result.exit_code == 0, result.output
        assert chart.exists()

    def test_search_writes_stage_files(self, runner, planted_file, tmp_path):
        out_dir = tmp_path / "stages"
        result = invoke(
            runner, "search", "--data", str(planted_file),
            "--stage", "0.5:grid:2,3,4,5", "--stage", "1.0:random:2..5:2", "--out-dir", str(out_dir),
        )
        assert result.exit_code == 0, result.output
        assert result.stdout.strip().startswith("best_k=")
        assert sorted(p.name for p in out_dir.iterdir()) == ["stage_1.csv", "stage_2.csv"]
        assert len(pd.read_csv(out_dir / "stage_1.csv")) == 4

    def test_non_increasing_fractions_exit_2(self, runner, planted_file):
        result = invoke(
            runner, "search", "--data", str(planted_file),
            "--stage", "0.5:grid:2,3", "--stage", "0.5:grid:2,3", "--stage", "1.0:grid:2,3",
        )
        assert result.exit_code == 2
        assert "PlanError:" in result.stderr


class TestRecommend:
    def test_hand_example(self, runner, hand_files):
        data, model = hand_files
        result = invoke(runner, "recommend", "--model", str(model), "--data", str(data),
                        "--track", "T1", "--n", "2", "--format", "json")
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert [row["track_id"] for row in payload] == ["T2", "T3"]
        assert [row["rank"] for row in payload] == [0, 1]

    def test_table_output(self, runner, hand_files):
        data, model = hand_files
        result = invoke(runner, "recommend", "--model", str(model), "--data", str(data), "--track", "T1", "--n", "2")
        assert result.exit_code == 0, result.output
        assert "T2" in result.stdout
        assert "rec_genres" in result.stdout

    def test_no_recommendations(self, runner, hand_files):
        data, model = hand_files
        result = invoke(runner, "recommend", "--model", str(model), "--data", str(data), "--track", "T5")
        assert result.exit_code == 0
        assert result.stdout == ""
        assert "No recommendations" in result.stderr

    def test_unknown_track(self, runner, hand_files):
        data, model = hand_files
        result = invoke(runner, "recommend", "--model", str(model), "--data", str(data), "--track", "T404")
        assert result.exit_code == 1
        assert "UnknownTrack:" in result.stderr
        assert "T404" in result.stderr

    def test_bad_model_file(self, runner, hand_files, tmp_path):
        data, _ = hand_files
        broken = tmp_path / "broken.json"
        broken.write_text('{"format_version": 1}', encoding="utf-8")
        result = invoke(runner, "recommend", "--model", str(broken), "--data", str(data), "--track", "T1")
        assert result.exit_code == 1
        assert "ModelFormatError:" in result.stderr


class TestInspection:
    def test_analyze(self, runner, hand_files):
        data, _ = hand_files
        result = invoke(runner, "analyze", "--data", str(data))
        assert result.exit_code == 0, result.output
        stats = json.loads(result.stdout)
        assert [s["feature_name"] for s in stats] == ["x0000"]
        assert stats[0]["count_present"] == 5

    def test_analyze_table(self, runner, hand_files):
        data, _ = hand_files
        result = invoke(runner, "analyze", "--data", str(data), "--format", "table")
        assert result.exit_code == 0, result.output
        header, row = result.stdout.strip().splitlines()
        assert header.split()[:2] == ["feature_name", "count_present"]
        assert row.split()[:2] == ["x0000", "5"]

    def test_select_with_pruned_drop_list(self, runner, tmp_path, make_track):
        records = [
            make_track(f"T{i}", "A", {"song_length": float(i), "tempo": float(i * 2 % 7)})
            for i in range(10)
        ]
        data = write_dataset(records, tmp_path / "d.jsonl")
        result = invoke(runner, "select", "--data", str(data), "--pruned-drop")
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["kept"] == ["tempo"]
        assert {"feature_name": "song_length", "reason": "manual"} in report["dropped"]

    @pytest.mark.parametrize("fmt", ["csv", "xlsx"])
    def test_export(self, runner, hand_files, hand_records, tmp_path, fmt):
        data, _ = hand_files
        out = tmp_path / f"export.{fmt}"
        result = invoke(runner, "export", "--data", str(data), "--out", str(out))
        assert result.exit_code == 0, result.output
        assert out.exists()
        if fmt == "csv":
            assert load_dataset(out) == hand_records
