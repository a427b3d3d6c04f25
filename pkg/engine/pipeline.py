"""
Training pipeline: ingest -> summarize -> stats -> select -> scale -> fit
"""

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from .clustering import FitConfig, IterationTrace, kmeans_fit
from .errors import PipelineError
from .features import SelectionConfig, fit_scaler, build_matrix, select_features
from .ingest import compute_stats, load_datasets, summarize_dataset
from .models import FeatureMatrix, KMeansModel, TrackRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class TrainingPipeline:
    """Chains the pipeline stages for one training run and keeps run statistics"""

    def __init__(
        self,
        fit_config: FitConfig,
        selection: Optional[SelectionConfig] = None,
        workers: Optional[int] = None,
        record_trace: bool = False,
    ):
        """
        Initialize pipeline

        Args:
            fit_config: K-means settings (k, seed, restarts, variant)
            selection: Feature-selection settings
            workers: Thread cap; results do not depend on it
            record_trace: Keep every IterationTrace in self.traces
        """
        self.fit_config = fit_config
        self.selection = selection or SelectionConfig()
        self.workers = workers
        self.record_trace = record_trace
        self.traces: List[IterationTrace] = []
        self.report = None
        self.matrix: Optional[FeatureMatrix] = None

        # Statistics
        self.stats = {
            "files_read": 0,
            "tracks_loaded": 0,
            "features_seen": 0,
            "features_kept": 0,
            "features_dropped": 0,
            "iterations_run": 0,
            "inertia": None,
            "converged": None,
            "elapsed_ms": {},
        }

    def _timed(self, stage: str, started: float) -> None:
        self.stats["elapsed_ms"][stage] = int(round((time.perf_counter() - started) * 1000))

    def load(self, paths: Sequence[PathLike]) -> List[TrackRecord]:
        """Read and summarize every dataset file"""
        started = time.perf_counter()
        records = summarize_dataset(load_datasets(paths, workers=self.workers))
        self.stats["files_read"] = len(paths)
        self.stats["tracks_loaded"] = len(records)
        self._timed("load", started)
        logger.info(f"Loaded {len(records)} tracks from {len(paths)} file(s)")
        return records

    def prepare(self, records: Sequence[TrackRecord]) -> FeatureMatrix:
        """Stats -> selection -> scaler -> matrix"""
        started = time.perf_counter()
        stats = compute_stats(records, workers=self.workers)
        self.report = select_features(stats, self.selection)
        schema = fit_scaler(records, self.report.kept, self.report)
        self.matrix = build_matrix(records, schema, workers=self.workers)

        self.stats["features_seen"] = len(stats)
        self.stats["features_kept"] = len(self.report.kept)
        self.stats["features_dropped"] = len(self.report.dropped)
        self._timed("prepare", started)
        for reason, count in self.report.reason_counts().items():
            if count:
                logger.info(f"Dropped {count} feature(s): {reason}")
        logger.info(f"Feature matrix: {self.matrix.n_rows} rows x {self.matrix.n_features} features")
        return self.matrix

    def fit(self, matrix: FeatureMatrix) -> KMeansModel:
        started = time.perf_counter()
        hook = self.traces.append if self.record_trace else None
        model = kmeans_fit(matrix, self.fit_config, on_iteration=hook, workers=self.workers)
        self.stats["iterations_run"] = model.iterations_run
        self.stats["inertia"] = model.inertia
        self.stats["converged"] = model.converged
        self._timed("fit", started)
        return model

    def train(self, paths: Sequence[PathLike]) -> KMeansModel:
        """
        Run every stage; errors propagate

        Args:
            paths: Dataset files (JSONL or CSV)

        Returns:
            Fitted KMeansModel (the selection report stays on self.report)
        """
        records = self.load(paths)
        matrix = self.prepare(records)
        return self.fit(matrix)

    def run(self, paths: Sequence[PathLike]) -> Dict:
        """
        Main method untuk menjalankan training

        Returns:
            Dictionary berisi model, selection report dan statistics
        """
        logger.info("=" * 50)
        logger.info("Starting training run...")
        logger.info(f"k={self.fit_config.k}, variant={self.fit_config.variant}, seed={self.fit_config.seed}")
        logger.info("=" * 50)

        try:
            model = self.train(paths)

            logger.info("=" * 50)
            logger.info("Training completed successfully!")
            logger.info(f"Inertia: {model.inertia:.6g} after {model.iterations_run} iterations")
            logger.info("=" * 50)

            return {
                "status": "SUCCESS",
                "model": model,
                "selection_report": self.report,
                "statistics": self.stats,
            }

        except PipelineError as e:
            logger.error(f"Training failed with {e.name}: {e}", exc_info=True)
            return {"status": "ERROR", "error": str(e), "error_name": e.name, "statistics": self.stats}
