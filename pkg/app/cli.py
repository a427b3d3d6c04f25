"""
Command-line entry point untuk pipeline rekomendasi lagu
Usage: python -m app.cli <command> [options]
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import click

from database.model_store import (
    ModelFile,
    load_model,
    save_model,
    write_stage_reports,
    write_sweep_chart,
    write_sweep_csv,
    write_trace_csv,
)
from database.track_store import TrackStore
from engine.clustering import FitConfig, VARIANTS, build_index, derive_seed
from engine.config import DEFAULT_SEED, FIT_CONFIG, RECOMMEND_CONFIG, SEARCH_CONFIG, SELECTION_CONFIG
from engine.datagen import GenConfig, generate, truth_path_for, write_truth
from engine.errors import InvalidConfig, PipelineError, PlanError
from engine.evaluation import SearchPlan, SearchStage, best_report, reports_to_frame, staged_search, sweep_k
from engine.features import SelectionConfig, build_matrix, load_pruned_features, prepare_matrix, select_features
from engine.ingest import compute_stats, load_datasets, summarize_dataset, write_dataset
from engine.pipeline import TrainingPipeline
from engine.recommend import RecommendConfig, recommend, recommendations_to_frame, recommendations_to_json
from utils.logging_setup import setup_logging

logger = logging.getLogger(__name__)


class PipelineGroup(click.Group):
    """Maps PipelineError to `<Name>: <message>` on stderr and its exit code"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except PipelineError as e:
            click.echo(f"{e.name}: {e}", err=True)
            for note in getattr(e, "__notes__", []):
                click.echo(f"  {note}", err=True)
            ctx.exit(e.exit_code)


def parse_k_spec(spec: str) -> List[int]:
    """
    "2..8" -> [2, ..., 8], "2,3,5" -> [2, 3, 5], "5" -> [5]

    Raises:
        InvalidConfig: malformed spec or empty range
    """
    text = spec.strip()
    try:
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidConfig(f"cannot parse k values {spec!r}") from None
    if not values:
        raise InvalidConfig(f"k values {spec!r} are empty")
    return values


def parse_stage_spec(spec: str, index: int, seed: int) -> SearchStage:
    """
    "0.1:grid:2,3,4" or "1.0:random:2..10:4" (fraction:strategy:k values[:budget])

    Raises:
        PlanError: malformed spec
    """
    parts = spec.split(":")
    try:
        fraction = float(parts[0])
        strategy = parts[1]
        stage_seed = derive_seed(seed, index)
        if strategy == "grid" and len(parts) == 3:
            return SearchStage(fraction, "grid", k_candidates=tuple(parse_k_spec(parts[2])), seed=stage_seed)
        if strategy == "random" and len(parts) == 4:
            ks = parse_k_spec(parts[2])
            return SearchStage(
                fraction, "random", k_range=(min(ks), max(ks)), budget=int(parts[3]), seed=stage_seed
            )
    except (IndexError, ValueError, InvalidConfig):
        pass
    raise PlanError(f"cannot parse stage {spec!r} (expected fraction:grid:ks or fraction:random:lo..hi:budget)")


def selection_options(fn):
    """Feature-selection flags shared by select, train, sweep and search"""
    options = [
        click.option("--drop", "drop", multiple=True, help="Feature to drop manually (repeatable)"),
        click.option("--keep", "keep", multiple=True, help="Feature to keep regardless of rules (repeatable)"),
        click.option("--pruned-drop", is_flag=True, help="Also drop the pruned-feature list from config"),
        click.option("--pruned-features", type=click.Path(dir_okay=False), default=None,
                     help="JSON file with the manual drop list used by --pruned-drop"),
        click.option("--max-missing", type=float, default=SELECTION_CONFIG["max_missing_fraction"],
                     show_default=True, help="Drop features missing in more than this fraction"),
        click.option("--variance-eps", type=float, default=SELECTION_CONFIG["variance_epsilon"],
                     show_default=True, help="Drop features with variance below this"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def fit_options(fn):
    """K-means flags shared by train, sweep and search"""
    options = [
        click.option("--max-iterations", type=int, default=FIT_CONFIG["max_iterations"], show_default=True),
        click.option("--tolerance", type=float, default=FIT_CONFIG["tolerance"], show_default=True),
        click.option("--n-init", type=int, default=FIT_CONFIG["n_init"], show_default=True),
        click.option("--variant", type=click.Choice(VARIANTS), default=FIT_CONFIG["variant"], show_default=True),
        click.option("--batch-size", type=int, default=FIT_CONFIG["batch_size"], show_default=True),
        click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def data_option(fn):
    return click.option(
        "--data", "data", multiple=True, required=True, type=click.Path(dir_okay=False),
        help="Dataset file (JSONL or CSV, repeatable)",
    )(fn)


def _selection_config(drop, keep, pruned_drop, pruned_features, max_missing, variance_eps) -> SelectionConfig:
    manual_drop = list(drop)
    if pruned_drop:
        manual_drop += [name for name in load_pruned_features(pruned_features) if name not in manual_drop]
    return SelectionConfig(
        variance_epsilon=variance_eps,
        max_missing_fraction=max_missing,
        manual_drop=tuple(manual_drop),
        manual_keep=tuple(keep),
    )


def _fit_config(k, max_iterations, tolerance, n_init, variant, batch_size, seed) -> FitConfig:
    config = FitConfig(
        k=k, max_iterations=max_iterations, tolerance=tolerance, seed=seed,
        n_init=n_init, variant=variant, batch_size=batch_size,
    )
    config.validate()
    return config


def _load_records(ctx: click.Context, data: Sequence[str]):
    return summarize_dataset(load_datasets(data, workers=ctx.obj["workers"]))


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False))


@click.group(cls=PipelineGroup)
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--log-file", type=click.Path(dir_okay=False), default=None, help="Also write logs to this file")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Thread cap (default: machine parallelism); results never depend on it")
@click.pass_context
def cli(ctx: click.Context, log_level: str, log_file: Optional[str], workers: Optional[int]):
    """Content-based song recommendation pipeline"""
    setup_logging(log_level, log_file)
    ctx.ensure_object(dict)
    ctx.obj["workers"] = workers


@cli.command()
@click.option("--tracks", type=int, required=True)
@click.option("--artists", type=int, default=None, help="Default: tracks / 10 (at least --clusters)")
@click.option("--clusters", type=int, required=True, help="Number of planted clusters")
@click.option("--features", type=int, default=GenConfig.n_features, show_default=True)
@click.option("--separation", type=float, default=GenConfig.separation, show_default=True)
@click.option("--noise-features", type=int, default=0, show_default=True)
@click.option("--vocab", type=int, default=GenConfig.genre_vocab_per_cluster, show_default=True,
              help="Genre terms per planted cluster")
@click.option("--missing-rate", type=float, default=0.0, show_default=True)
@click.option("--constant-features", type=int, default=0, show_default=True)
@click.option("--sparse-features", type=int, default=0, show_default=True)
@click.option("--text-features", is_flag=True, help="Add an artist_location text feature")
@click.option("--segments", type=int, default=0, show_default=True, help="Timbre segments per track")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen(tracks, artists, clusters, features, separation, noise_features, vocab, missing_rate,
        constant_features, sparse_features, text_features, segments, seed, out):
    """Generate a synthetic dataset with planted clusters (+ truth sidecar)"""
    if artists is None:
        artists = min(tracks, max(clusters, tracks // 10))
    config = GenConfig(
        n_tracks=tracks, n_artists=artists, n_clusters_true=clusters, n_features=features,
        separation=separation, noise_features=noise_features, genre_vocab_per_cluster=vocab,
        missing_rate=missing_rate, seed=seed, constant_features=constant_features,
        sparse_features=sparse_features, text_features=text_features, segments_per_track=segments,
    )
    records, truth = generate(config)
    path = write_dataset(records, out)
    truth_path = write_truth(truth, truth_path_for(path))
    logger.info(f"Wrote {len(records)} tracks to {path} and labels to {truth_path}")
    click.echo(str(path))


@cli.command()
@data_option
@click.option("--format", "output_format", type=click.Choice(["json", "table"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write JSON here instead of stdout")
@click.pass_context
def analyze(ctx, data, output_format, out):
    """Per-feature statistics (FeatureStats JSON or a table)"""
    workers = ctx.obj["workers"]
    store = TrackStore(_load_records(ctx, data))
    logger.info(f"Dataset statistics: {store.get_statistics()}")
    if output_format == "table":
        click.echo(store.feature_table(workers).to_string(index=False))
        return
    payload = [s.to_dict() for s in compute_stats(store.records(), workers=workers)]
    if out:
        Path(out).write_text(json.dumps(payload, indent=2, allow_nan=False), encoding="utf-8")
        logger.info(f"Wrote statistics of {len(payload)} features to {out}")
    else:
        _echo_json(payload)


@cli.command()
@data_option
@selection_options
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def select(ctx, data, drop, keep, pruned_drop, pruned_features, max_missing, variance_eps, out):
    """Apply the feature-selection rules (SelectionReport JSON)"""
    selection = _selection_config(drop, keep, pruned_drop, pruned_features, max_missing, variance_eps)
    stats = compute_stats(_load_records(ctx, data), workers=ctx.obj["workers"])
    report = select_features(stats, selection)
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    else:
        _echo_json(report.to_dict())


@cli.command()
@data_option
@click.option("--k", "k", type=int, required=True, help="Number of clusters")
@selection_options
@fit_options
@click.option("--model-out", type=click.Path(dir_okay=False), required=True)
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None, help="Iteration-trace CSV")
@click.pass_context
def train(ctx, data, k, drop, keep, pruned_drop, pruned_features, max_missing, variance_eps,
          max_iterations, tolerance, n_init, variant, batch_size, seed, model_out, trace_out):
    """Train a k-means model and write it as canonical JSON"""
    fit_config = _fit_config(k, max_iterations, tolerance, n_init, variant, batch_size, seed)
    selection = _selection_config(drop, keep, pruned_drop, pruned_features, max_missing, variance_eps)
    pipeline = TrainingPipeline(fit_config, selection, ctx.obj["workers"], record_trace=trace_out is not None)
    model = pipeline.train(data)
    save_model(ModelFile(model=model, selection_report=pipeline.report), model_out)
    if trace_out:
        write_trace_csv(pipeline.traces, trace_out)
    click.echo(f"model_id={model.model_id} k={model.k} inertia={model.inertia!r} converged={str(model.converged).lower()}")


@cli.command()
@data_option
@click.option("--k", "k_spec", required=True, help='k values: "2..8", "2,3,5" or "5"')
@click.option("--sample-size", type=click.IntRange(min=1), default=None, help="Silhouette sample (default: all rows)")
@selection_options
@fit_options
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None, help="Sweep CSV (default: stdout)")
@click.option("--chart-out", type=click.Path(dir_okay=False), default=None, help="Silhouette chart (.html or .json)")
@click.pass_context
def sweep(ctx, data, k_spec, sample_size, drop, keep, pruned_drop, pruned_features, max_missing, variance_eps,
          max_iterations, tolerance, n_init, variant, batch_size, seed, csv_out, chart_out):
    """Silhouette score for every k"""
    ks = parse_k_spec(k_spec)
    base = _fit_config(1, max_iterations, tolerance, n_init, variant, batch_size, seed)
    selection = _selection_config(drop, keep, pruned_drop, pruned_features, max_missing, variance_eps)
    workers = ctx.obj["workers"]
    matrix, _, _ = prepare_matrix(_load_records(ctx, data), selection, workers)
    reports = sweep_k(matrix, ks, base, sample_size, workers)
    if chart_out:
        write_sweep_chart(reports, chart_out)
    if csv_out:
        write_sweep_csv(reports, csv_out)
        click.echo(f"best_k={best_report(reports).k}")
    else:
        click.echo(reports_to_frame(reports).to_csv(index=False, lineterminator="\n"), nl=False)


@cli.command()
@data_option
@click.option("--stage", "stages", multiple=True,
              help='Stage spec "fraction:grid:2,3,4" or "fraction:random:2..10:4" (repeatable, in order)')
@click.option("--k-min", type=int, default=SEARCH_CONFIG["k_min"], show_default=True)
@click.option("--k-max", type=int, default=SEARCH_CONFIG["k_max"], show_default=True)
@click.option("--budget", type=int, default=SEARCH_CONFIG["random_budget"], show_default=True,
              help="k values drawn by the random stage of the default plan")
@click.option("--sample-size", type=click.IntRange(min=1), default=None)
@selection_options
@fit_options
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="One CSV per stage")
@click.pass_context
def search(ctx, data, stages, k_min, k_max, budget, sample_size, drop, keep, pruned_drop, pruned_features,
           max_missing, variance_eps, max_iterations, tolerance, n_init, variant, batch_size, seed, out_dir):
    """Staged search for k (default: 10% grid, 25% grid, 100% random)"""
    if stages:
        plan = SearchPlan(tuple(parse_stage_spec(spec, i, seed) for i, spec in enumerate(stages)))
    else:
        plan = SearchPlan.default(k_min, k_max, budget, seed)
    base = _fit_config(1, max_iterations, tolerance, n_init, variant, batch_size, seed)
    selection = _selection_config(drop, keep, pruned_drop, pruned_features, max_missing, variance_eps)
    records = load_datasets(data, workers=ctx.obj["workers"])
    result = staged_search(records, plan, selection, base, sample_size, ctx.obj["workers"])
    if out_dir:
        for path in write_stage_reports(result, out_dir):
            logger.info(f"Wrote {path}")
    click.echo(f"best_k={result.best_k}")


@cli.command("recommend")
@click.option("--model", "model_path", type=click.Path(dir_okay=False), required=True)
@data_option
@click.option("--track", "tracks", multiple=True, required=True, help="Input track_id (repeatable)")
@click.option("--n", "top_n", type=int, default=RECOMMEND_CONFIG["top_n_artists"], show_default=True,
              help="Top similar artists to draw songs from")
@click.option("--max-songs", type=int, default=RECOMMEND_CONFIG["max_songs"], show_default=True)
@click.option("--exclude-input-artists", is_flag=True)
@click.option("--format", "output_format", type=click.Choice(["table", "json"]), default="table", show_default=True)
@click.pass_context
def recommend_command(ctx, model_path, data, tracks, top_n, max_songs, exclude_input_artists, output_format):
    """Recommend songs for a set of input tracks"""
    config = RecommendConfig(top_n_artists=top_n, max_songs=max_songs, exclude_input_artists=exclude_input_artists)
    workers = ctx.obj["workers"]
    model = load_model(model_path).model
    store = TrackStore(_load_records(ctx, data))
    matrix = build_matrix(store.records(), model.schema, workers)
    index = build_index(model, matrix, workers)
    results = recommend(model, index, store, list(tracks), config)

    if output_format == "json":
        click.echo(recommendations_to_json(results))
    elif results:
        click.echo(recommendations_to_frame(results, store, list(tracks)).to_string(index=False))
    else:
        click.echo("No recommendations", err=True)


@cli.command()
@data_option
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--format", "output_format", type=click.Choice(["jsonl", "csv", "xlsx"]), default=None,
              help="Default: from the --out suffix")
@click.option("--summarize", is_flag=True, help="Replace segment sequences with summary features")
@click.pass_context
def export(ctx, data, out, output_format, summarize):
    """Re-write datasets as JSONL, CSV or Excel"""
    records = load_datasets(data, workers=ctx.obj["workers"])
    if summarize:
        records = summarize_dataset(records)
    path = TrackStore(records).export(out, output_format)
    click.echo(str(path))


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
