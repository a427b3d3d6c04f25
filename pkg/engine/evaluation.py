"""
Silhouette scoring, silhouette-vs-k sweeps and the staged 10% -> 25% -> 100% search
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import altair as alt
import numpy as np
import pandas as pd

from utils.parallel import chunk_bounds, map_ordered
from .clustering import FitConfig, TraceHook, derive_seed, kmeans_fit, kmeans_predict
from .config import DEFAULT_SEED, FORMAT_CONFIG, PARALLEL_CONFIG, SEARCH_CONFIG
from .errors import InvalidConfig, InvalidInput, PipelineError, PlanError, SingleCluster, TooFewPoints
from .features import SelectionConfig, prepare_matrix
from .ingest import summarize_dataset
from .models import FeatureMatrix, TrackRecord

logger = logging.getLogger(__name__)

STRATEGIES = ("grid", "random")


@dataclass(frozen=True)
class EvalReport:
    k: int
    silhouette: float
    inertia: float
    sample_size: int
    wall_time_ms: int
    seed: int

    def __post_init__(self):
        if not -1.0 <= self.silhouette <= 1.0:
            raise InvalidInput(f"silhouette {self.silhouette} outside [-1, 1]")

    def to_dict(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in FORMAT_CONFIG["sweep_columns"]}


def _silhouette_block(
    rows: np.ndarray,
    evaluated: np.ndarray,
    sorted_rows: np.ndarray,
    sorted_sq: np.ndarray,
    position: np.ndarray,
    cluster: np.ndarray,
    sizes: np.ndarray,
    starts: np.ndarray,
) -> np.ndarray:
    points = rows[evaluated]
    d2 = (points * points).sum(axis=1)[:, None] + sorted_sq[None, :] - 2.0 * points @ sorted_rows.T
    dist = np.sqrt(np.maximum(d2, 0.0))
    local = np.arange(evaluated.size)
    dist[local, position[evaluated]] = 0.0

    # columns are grouped by cluster, so one reduceat gives per-cluster sums
    sums = np.add.reduceat(dist, starts, axis=1)
    own = cluster[evaluated]
    own_size = sizes[own]
    a = sums[local, own] / np.maximum(own_size - 1, 1)
    means = sums / sizes[None, :]
    means[local, own] = np.inf
    b = means.min(axis=1)

    denom = np.maximum(a, b)
    scores = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    scores[own_size == 1] = 0.0
    return scores


def silhouette_samples(
    matrix: FeatureMatrix,
    assignments: Sequence[int],
    indices: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Per-point silhouette s(i) for the given row indices (all rows when None)

    b(i) and a(i) are always measured against every row of the matrix.
    Singletons score 0.
    """
    labels = np.asarray(assignments)
    n = matrix.n_rows
    if labels.shape != (n,):
        raise InvalidInput(f"{labels.size} assignments for {n} rows")
    if n < 2:
        raise TooFewPoints("silhouette needs at least 2 points")
    _, cluster = np.unique(labels, return_inverse=True)
    sizes = np.bincount(cluster)
    if sizes.size < 2:
        raise SingleCluster("silhouette needs at least 2 distinct clusters")

    order = np.argsort(cluster, kind="stable")
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(n)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    rows = matrix.rows
    sorted_rows = rows[order]
    sorted_sq = (sorted_rows * sorted_rows).sum(axis=1)

    evaluated = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    chunks = chunk_bounds(evaluated.size, PARALLEL_CONFIG["silhouette_chunk_size"])
    parts = map_ordered(
        lambda b: _silhouette_block(
            rows, evaluated[b[0]:b[1]], sorted_rows, sorted_sq, position, cluster, sizes, starts
        ),
        chunks,
        workers,
    )
    return np.concatenate(parts) if parts else np.zeros(0)


def sample_indices(n: int, sample_size: Optional[int], seed: int) -> np.ndarray:
    """Sorted uniform sample without replacement; every row when sample_size >= n"""
    if sample_size is not None and sample_size < 1:
        raise InvalidInput("sample_size must be >= 1")
    if sample_size is None or sample_size >= n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=sample_size, replace=False))


def silhouette_score(
    matrix: FeatureMatrix,
    assignments: Sequence[int],
    sample_size: Optional[int] = None,
    seed: int = DEFAULT_SEED,
    workers: Optional[int] = None,
) -> float:
    """
    Mean silhouette over all rows, or over a seeded sample of rows

    Args:
        matrix: Feature matrix
        assignments: Cluster index per row
        sample_size: Number of evaluated rows (None = all)
        seed: Sampling seed

    Returns:
        Score in [-1, 1]

    Raises:
        SingleCluster, TooFewPoints
    """
    indices = sample_indices(matrix.n_rows, sample_size, seed)
    scores = silhouette_samples(matrix, assignments, indices, workers)
    score = math.fsum(scores.tolist()) / scores.size
    return min(1.0, max(-1.0, score))


def _check_k_values(k_values: Sequence[int], n: int) -> List[int]:
    ks = [int(k) for k in k_values]
    if not ks:
        raise InvalidConfig("k_values must not be empty")
    bad = [k for k in ks if k < 2 or k > n]
    if bad:
        raise InvalidConfig(f"k values {bad} are outside [2, {n}]")
    return ks


def sweep_k(
    matrix: FeatureMatrix,
    k_values: Sequence[int],
    fit_config_base: FitConfig,
    sample_size: Optional[int] = None,
    workers: Optional[int] = None,
    on_iteration: Optional[TraceHook] = None,
) -> List[EvalReport]:
    """
    Fit and score one model per k

    Per-k seeds derive from the base seed and k, so each report is independent of
    the rest of the list. k values run in parallel; reports keep input order.

    Returns:
        One EvalReport per k, in input order
    """
    ks = _check_k_values(k_values, matrix.n_rows)
    fit_config_base.validate()
    inner_workers = 1 if len(ks) > 1 else workers

    def evaluate(k: int) -> EvalReport:
        seed = derive_seed(fit_config_base.seed, k)
        started = time.perf_counter()
        try:
            model = kmeans_fit(matrix, fit_config_base.with_k(k, seed), on_iteration, inner_workers)
            labels = kmeans_predict(model, matrix, inner_workers)
            score = silhouette_score(matrix, labels, sample_size, seed, inner_workers)
        except PipelineError as e:
            e.k = k
            e.add_note(f"while evaluating k={k}")
            raise
        elapsed = int(round((time.perf_counter() - started) * 1000))
        logger.info(f"k={k}: silhouette {score:.4f}, inertia {model.inertia:.6g} ({elapsed} ms)")
        return EvalReport(
            k=k,
            silhouette=score,
            inertia=model.inertia,
            sample_size=min(sample_size, matrix.n_rows) if sample_size else matrix.n_rows,
            wall_time_ms=elapsed,
            seed=seed,
        )

    return map_ordered(evaluate, ks, workers)


def best_report(reports: Sequence[EvalReport]) -> EvalReport:
    """Highest silhouette; ties go to the smaller k"""
    return min(reports, key=lambda r: (-r.silhouette, r.k))


def reports_to_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in reports], columns=FORMAT_CONFIG["sweep_columns"])


def silhouette_chart(reports: Sequence[EvalReport], title: str = "Silhouette score vs number of clusters") -> alt.Chart:
    """Line chart of the sweep curve"""
    frame = reports_to_frame(reports)
    return (
        alt.Chart(frame, title=title)
        .mark_line(point=True)
        .encode(
            x=alt.X("k:Q", title="number of clusters (k)"),
            y=alt.Y("silhouette:Q", title="silhouette score"),
            tooltip=["k", "silhouette", "inertia", "sample_size"],
        )
    )


@dataclass(frozen=True)
class SearchStage:
    fraction: float
    strategy: str
    k_candidates: Optional[Tuple[int, ...]] = None
    k_range: Optional[Tuple[int, int]] = None
    budget: Optional[int] = None
    seed: int = DEFAULT_SEED

    def pool(self) -> List[int]:
        if self.strategy == "grid":
            return sorted(set(self.k_candidates))
        lo, hi = self.k_range
        return list(range(lo, hi + 1))


@dataclass(frozen=True)
class SearchPlan:
    stages: Tuple[SearchStage, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def validate(self) -> None:
        if not self.stages:
            raise PlanError("plan needs at least one stage")
        previous = 0.0
        for i, stage in enumerate(self.stages, start=1):
            if not 0.0 < stage.fraction <= 1.0:
                raise PlanError(f"stage {i}: fraction {stage.fraction} not in (0, 1]")
            if stage.fraction <= previous:
                raise PlanError(f"stage {i}: fractions must be strictly increasing")
            previous = stage.fraction
            if stage.strategy not in STRATEGIES:
                raise PlanError(f"stage {i}: unknown strategy {stage.strategy!r}")
            if stage.strategy == "grid":
                if not stage.k_candidates or min(stage.k_candidates) < 2:
                    raise PlanError(f"stage {i}: grid stages need k candidates >= 2")
            else:
                if stage.k_range is None or stage.budget is None:
                    raise PlanError(f"stage {i}: random stages need k_range and budget")
                lo, hi = stage.k_range
                if lo < 2 or hi < lo:
                    raise PlanError(f"stage {i}: invalid k_range {stage.k_range}")
                if stage.budget < 1:
                    raise PlanError(f"stage {i}: budget must be >= 1")
        if self.stages[-1].fraction != 1.0:
            raise PlanError("final stage must use the whole dataset (fraction 1.0)")

    @classmethod
    def default(
        cls,
        k_min: int = SEARCH_CONFIG["k_min"],
        k_max: int = SEARCH_CONFIG["k_max"],
        budget: int = SEARCH_CONFIG["random_budget"],
        seed: int = DEFAULT_SEED,
    ) -> "SearchPlan":
        """Grid on 10%, grid on 25%, random search on everything"""
        grid = tuple(range(k_min, k_max + 1))
        stages = []
        for index, (fraction, strategy) in enumerate(SEARCH_CONFIG["stages"]):
            stage_seed = derive_seed(seed, index)
            if strategy == "grid":
                stages.append(SearchStage(fraction, "grid", k_candidates=grid, seed=stage_seed))
            else:
                stages.append(SearchStage(
                    fraction, "random", k_range=(k_min, k_max), budget=budget, seed=stage_seed
                ))
        return cls(tuple(stages))


@dataclass(frozen=True)
class SearchResult:
    best_k: int
    stage_reports: Tuple[Tuple[SearchStage, Tuple[EvalReport, ...]], ...]


def narrow(reports: Sequence[EvalReport]) -> List[int]:
    """Top ceil(half) candidates by silhouette (ties to smaller k)"""
    ranked = sorted(reports, key=lambda r: (-r.silhouette, r.k))
    return sorted(r.k for r in ranked[: math.ceil(len(ranked) / 2)])


def staged_search(
    records: Sequence[TrackRecord],
    plan: SearchPlan,
    selection: SelectionConfig,
    fit_base: FitConfig,
    sample_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> SearchResult:
    """
    Run the staged search: each stage subsamples, re-selects features and sweeps k

    Stage t+1 only considers the top half of stage t's candidates.

    Returns:
        SearchResult with best_k from the final stage and every stage's reports

    Raises:
        PlanError, propagated fit errors
    """
    plan.validate()
    records = summarize_dataset(records)
    n = len(records)
    survivors: Optional[List[int]] = None
    stage_reports = []

    for number, stage in enumerate(plan.stages, start=1):
        rng = np.random.default_rng(stage.seed)
        pool = stage.pool()
        if survivors is not None:
            pool = [k for k in pool if k in survivors]
        if not pool:
            raise PlanError(f"stage {number}: no candidates left after narrowing")

        if stage.strategy == "random":
            draw = rng.choice(len(pool), size=min(stage.budget, len(pool)), replace=False)
            candidates = sorted(pool[int(i)] for i in draw)
        else:
            candidates = pool

        if stage.fraction >= 1.0:
            subset = list(records)
        else:
            size = math.ceil(stage.fraction * n)
            subset = [records[int(i)] for i in np.sort(rng.choice(n, size=size, replace=False))]
        if len(subset) < max(candidates):
            raise PlanError(
                f"stage {number}: {len(subset)} rows cannot support k={max(candidates)}"
            )

        logger.info("=" * 50)
        logger.info(
            f"Stage {number}: {stage.strategy} search on {stage.fraction:.0%} "
            f"({len(subset)} rows), k candidates {candidates}"
        )
        matrix, report, _ = prepare_matrix(subset, selection, workers)
        logger.info(f"Stage {number}: {len(report.kept)} features kept")
        reports = sweep_k(matrix, candidates, fit_base, sample_size, workers)
        stage_reports.append((stage, tuple(reports)))
        survivors = narrow(reports)

    best_k = best_report(stage_reports[-1][1]).k
    logger.info(f"Staged search selected best_k={best_k}")
    return SearchResult(best_k=best_k, stage_reports=tuple(stage_reports))
