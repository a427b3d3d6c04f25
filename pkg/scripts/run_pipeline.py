"""
Standalone script untuk menjalankan pipeline end-to-end (gen -> train -> sweep -> recommend)
Usage: python scripts/run_pipeline.py [--tracks 100000 --k 20]
"""

import argparse
import os
import sys
import time

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import logging

from database.model_store import ModelFile, save_model, write_sweep_csv
from database.track_store import TrackStore
from engine.clustering import FitConfig, build_index
from engine.config import FILE_PATHS
from engine.datagen import GenConfig, generate, write_truth, truth_path_for
from engine.evaluation import best_report, sweep_k
from engine.features import build_matrix
from engine.ingest import write_dataset
from engine.pipeline import TrainingPipeline
from engine.recommend import RecommendConfig, recommend, recommendations_to_frame
from utils.logging_setup import setup_logging

logger = logging.getLogger(__name__)


def print_statistics(stats: dict, timings: dict):
    """Print run statistics in a nice format"""
    print("\n" + "=" * 60)
    print("PIPELINE STATISTICS")
    print("=" * 60)
    print(f"Files read: {stats.get('files_read', 0)}")
    print(f"Tracks loaded: {stats.get('tracks_loaded', 0)}")
    print(f"\nFeatures seen: {stats.get('features_seen', 0)}")
    print(f"Features kept: {stats.get('features_kept', 0)}")
    print(f"Features dropped: {stats.get('features_dropped', 0)}")
    print(f"\nIterations run: {stats.get('iterations_run', 0)}")
    print(f"Inertia: {stats.get('inertia')}")
    print(f"Converged: {stats.get('converged')}")
    print("\nTimings (s):")
    for step, seconds in timings.items():
        print(f"  {step:<10} {seconds:8.2f}")
    print("=" * 60 + "\n")


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="End-to-end desk/scale run")
    parser.add_argument("--tracks", type=int, default=100000)
    parser.add_argument("--clusters", type=int, default=20, help="Planted clusters")
    parser.add_argument("--features", type=int, default=54)
    parser.add_argument("--k", type=int, default=20)
    parser.add_argument("--sweep", default="10,15,20,25,30", help="Comma-separated k values")
    parser.add_argument("--sample-size", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out-dir", default=FILE_PATHS["run_output_dir"])
    return parser.parse_args(argv)


def main(argv=None):
    """Main function"""
    args = parse_args(argv)
    setup_logging("INFO", FILE_PATHS["pipeline_log"])

    print("\n🚀 Starting song recommendation pipeline")
    print("=" * 60)
    timings = {}

    # 1. Generate
    started = time.perf_counter()
    config = GenConfig(
        n_tracks=args.tracks,
        n_artists=max(args.clusters, args.tracks // 10),
        n_clusters_true=args.clusters,
        n_features=args.features,
        seed=args.seed,
    )
    records, truth = generate(config)
    data_path = write_dataset(records, os.path.join(args.out_dir, "tracks.jsonl"))
    write_truth(truth, truth_path_for(data_path))
    timings["gen"] = time.perf_counter() - started

    # 2. Train
    started = time.perf_counter()
    pipeline = TrainingPipeline(FitConfig(k=args.k, seed=args.seed), workers=args.workers)
    result = pipeline.run([data_path])
    timings["train"] = time.perf_counter() - started

    if result["status"] == "ERROR":
        print(f"\n❌ Training failed with {result['error_name']}:")
        print(f"   {result.get('error', 'Unknown error')}")
        return 1

    model = result["model"]
    save_model(ModelFile(model=model, selection_report=result["selection_report"]),
               os.path.join(args.out_dir, "model.json"))

    # 3. Sweep
    started = time.perf_counter()
    ks = [int(k) for k in args.sweep.split(",")]
    reports = sweep_k(pipeline.matrix, ks, FitConfig(k=1, seed=args.seed), args.sample_size, args.workers)
    write_sweep_csv(reports, os.path.join(args.out_dir, "sweep.csv"))
    timings["sweep"] = time.perf_counter() - started

    # 4. One recommendation query
    started = time.perf_counter()
    store = TrackStore(records)
    index = build_index(model, build_matrix(store.records(), model.schema, args.workers), args.workers)
    query = [store.records()[0].track_id]
    recommendations = recommend(model, index, store, query, RecommendConfig())
    timings["recommend"] = time.perf_counter() - started

    print("\n✅ Pipeline completed successfully!")
    print(f"📊 Best k in sweep: {best_report(reports).k}")
    dataset = store.get_statistics()
    print(f"🎼 Dataset: {dataset['tracks']} tracks, {dataset['artists']} artists, {dataset['with_terms']} with genre terms")
    print_statistics(result["statistics"], timings)

    if recommendations:
        print(f"\n🎵 Recommendations for {query[0]}:")
        print("-" * 60)
        print(recommendations_to_frame(recommendations, store, query).to_string(index=False))
        print("-" * 60)
    else:
        print(f"\n⚠️ No recommendations for {query[0]}.")

    print("\n✨ Done!")
    return 0


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
