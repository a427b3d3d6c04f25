"""
K-means fitting (Lloyd with k-means++ seeding, optional mini-batch) and assignment

Distances are computed per fixed-size row chunk and partial sums are reduced in
ascending chunk order, so a fit gives bit-identical centroids for any worker count.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from utils.parallel import chunk_bounds, map_ordered
from .config import DEFAULT_SEED, FIT_CONFIG, PARALLEL_CONFIG
from .errors import InvalidConfig, SchemaMismatch, TooFewPoints
from .models import SEED_MAX, ClusterIndex, FeatureMatrix, KMeansModel

logger = logging.getLogger(__name__)

VARIANTS = ("lloyd", "minibatch")
SHIFT_EPSILON = 1e-12


@dataclass(frozen=True)
class FitConfig:
    k: int
    max_iterations: int = FIT_CONFIG["max_iterations"]
    tolerance: float = FIT_CONFIG["tolerance"]
    seed: int = DEFAULT_SEED
    n_init: int = FIT_CONFIG["n_init"]
    variant: str = FIT_CONFIG["variant"]
    batch_size: int = FIT_CONFIG["batch_size"]

    def validate(self) -> None:
        if isinstance(self.k, bool) or self.k < 1:
            raise InvalidConfig(f"k must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if not self.tolerance >= 0:
            raise InvalidConfig("tolerance must be >= 0")
        if self.n_init < 1:
            raise InvalidConfig("n_init must be >= 1")
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if not 0 <= self.seed <= SEED_MAX:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")

    def with_k(self, k: int, seed: Optional[int] = None) -> "FitConfig":
        return replace(self, k=k, seed=self.seed if seed is None else seed)


@dataclass(frozen=True)
class IterationTrace:
    restart: int
    iteration: int
    inertia: float
    max_shift: float


TraceHook = Callable[[IterationTrace], None]


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of (seed, keys...)"""
    state = np.random.SeedSequence([int(seed), *(int(k) for k in keys)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _assign_block(block: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    diff = block[:, None, :] - centroids[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    # argmin keeps the first minimum: ties go to the lowest cluster index
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(block.shape[0]), labels]


def assign(
    rows: np.ndarray, centroids: np.ndarray, workers: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nearest-centroid labels and squared distances for every row

    Returns:
        (labels, squared distance to the assigned centroid)
    """
    chunks = chunk_bounds(rows.shape[0], PARALLEL_CONFIG["chunk_size"])
    parts = map_ordered(lambda b: _assign_block(rows[b[0]:b[1]], centroids), chunks, workers)
    if not parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    labels = np.concatenate([p[0] for p in parts]).astype(np.int64)
    d2 = np.concatenate([p[1] for p in parts])
    return labels, d2


def ordered_sum(values: np.ndarray) -> float:
    """Sum by fixed chunks in ascending order"""
    total = 0.0
    for start, stop in chunk_bounds(values.shape[0], PARALLEL_CONFIG["chunk_size"]):
        total += float(values[start:stop].sum())
    return total


def _cluster_sums(
    rows: np.ndarray, labels: np.ndarray, k: int, workers: Optional[int]
) -> Tuple[np.ndarray, np.ndarray]:
    def partial(bounds: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        block = rows[bounds[0]:bounds[1]]
        block_labels = labels[bounds[0]:bounds[1]]
        sums = np.zeros((k, rows.shape[1]))
        for c in np.unique(block_labels):
            sums[c] = block[block_labels == c].sum(axis=0)
        return np.bincount(block_labels, minlength=k), sums

    chunks = chunk_bounds(rows.shape[0], PARALLEL_CONFIG["chunk_size"])
    counts = np.zeros(k, dtype=np.int64)
    sums = np.zeros((k, rows.shape[1]))
    for part_counts, part_sums in map_ordered(partial, chunks, workers):
        counts += part_counts
        sums += part_sums
    return counts, sums


def repair_empty_clusters(labels: np.ndarray, d2: np.ndarray, k: int) -> List[int]:
    """
    Give every empty cluster the point farthest from its centroid (in place)

    Only points whose cluster keeps another member are eligible; ties go to the
    lowest row index.

    Returns:
        Clusters that were repaired
    """
    counts = np.bincount(labels, minlength=k)
    repaired = []
    for c in np.flatnonzero(counts == 0):
        eligible = np.where(counts[labels] > 1, d2, -np.inf)
        p = int(np.argmax(eligible))
        if not np.isfinite(eligible[p]):
            break
        counts[labels[p]] -= 1
        labels[p] = c
        counts[c] = 1
        d2[p] = 0.0
        repaired.append(int(c))
    return repaired


def max_relative_shift(old: np.ndarray, new: np.ndarray) -> float:
    moved = np.linalg.norm(new - old, axis=1)
    scale = np.linalg.norm(old, axis=1) + SHIFT_EPSILON
    return float((moved / scale).max())


def kmeans_plus_plus(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: next centre drawn with probability proportional to D(x)^2"""
    n = rows.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((rows - rows[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        cumulative = np.cumsum(d2)
        total = float(cumulative[-1])
        if total <= 0.0:
            raise TooFewPoints(f"fewer than {k} distinct rows to seed from")
        j = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        if j >= n:
            # rounding pushed the draw past the end; take the last row with weight
            j = int(np.flatnonzero(d2 > 0.0)[-1])
        chosen.append(j)
        d2 = np.minimum(d2, ((rows - rows[j]) ** 2).sum(axis=1))
    return rows[chosen].copy()


@dataclass
class _RunResult:
    centroids: np.ndarray
    inertia: float
    iterations: int
    converged: bool


def _run_lloyd(
    rows: np.ndarray,
    config: FitConfig,
    rng: np.random.Generator,
    restart: int,
    workers: Optional[int],
    on_iteration: Optional[TraceHook],
) -> _RunResult:
    k = config.k
    centroids = kmeans_plus_plus(rows, k, rng)
    labels, d2 = assign(rows, centroids, workers)
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        inertia = ordered_sum(d2)
        repair_empty_clusters(labels, d2, k)
        counts, sums = _cluster_sums(rows, labels, k, workers)
        new_centroids = sums / counts[:, None]
        shift = max_relative_shift(centroids, new_centroids)
        centroids = new_centroids
        labels, d2 = assign(rows, centroids, workers)
        if on_iteration is not None:
            on_iteration(IterationTrace(restart, iteration, inertia, shift))
        if shift < config.tolerance and np.bincount(labels, minlength=k).min() > 0:
            converged = True
            break

    if np.bincount(labels, minlength=k).min() == 0:
        logger.warning(f"Restart {restart}: a centroid has no members after {iteration} iterations")
    return _RunResult(centroids, ordered_sum(d2), iteration, converged)


def _run_minibatch(
    rows: np.ndarray,
    config: FitConfig,
    rng: np.random.Generator,
    restart: int,
    workers: Optional[int],
    on_iteration: Optional[TraceHook],
) -> _RunResult:
    """Per-centre learning rate 1/count; a batch update equals a running mean"""
    n = rows.shape[0]
    k = config.k
    batch_size = min(config.batch_size, n)
    centroids = kmeans_plus_plus(rows, k, rng)
    seen = np.zeros(k)
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        batch = rows[np.sort(rng.choice(n, size=batch_size, replace=False))]
        labels, d2 = assign(batch, centroids, workers)
        new_centroids = centroids.copy()
        for c in np.unique(labels):
            members = batch[labels == c]
            new_centroids[c] = (seen[c] * centroids[c] + members.sum(axis=0)) / (seen[c] + len(members))
            seen[c] += len(members)
        shift = max_relative_shift(centroids, new_centroids)
        centroids = new_centroids
        if on_iteration is not None:
            on_iteration(IterationTrace(restart, iteration, float(d2.mean()), shift))
        if shift < config.tolerance:
            converged = True
            break

    _, d2 = assign(rows, centroids, workers)
    return _RunResult(centroids, ordered_sum(d2), iteration, converged)


def kmeans_fit(
    matrix: FeatureMatrix,
    config: FitConfig,
    on_iteration: Optional[TraceHook] = None,
    workers: Optional[int] = None,
) -> KMeansModel:
    """
    Fit k-means with n_init seeded restarts; the lowest inertia wins

    Args:
        matrix: Scaled feature matrix with n >= k rows
        config: Fit configuration
        on_iteration: Called once per iteration with an IterationTrace
        workers: Thread count for the chunked assignment/update steps

    Returns:
        KMeansModel (ties between restarts go to the lowest restart index)

    Raises:
        InvalidConfig, TooFewPoints
    """
    config.validate()
    rows = matrix.rows
    n = rows.shape[0]
    if n < config.k:
        raise TooFewPoints(f"{n} rows cannot form {config.k} clusters")
    if np.unique(rows, axis=0).shape[0] < config.k:
        raise TooFewPoints(f"fewer than {config.k} distinct rows")

    runner = _run_lloyd if config.variant == "lloyd" else _run_minibatch
    best: Optional[_RunResult] = None
    for restart in range(config.n_init):
        rng = np.random.default_rng(derive_seed(config.seed, restart))
        result = runner(rows, config, rng, restart, workers, on_iteration)
        logger.debug(
            f"k={config.k} restart {restart}: inertia {result.inertia:.6g} "
            f"after {result.iterations} iterations (converged={result.converged})"
        )
        if best is None or result.inertia < best.inertia:
            best = result

    logger.info(
        f"Fitted k={config.k} ({config.variant}): inertia {best.inertia:.6g}, "
        f"{best.iterations} iterations, converged={best.converged}"
    )
    return KMeansModel(
        k=config.k,
        centroids=best.centroids,
        schema=matrix.schema,
        inertia=best.inertia,
        iterations_run=best.iterations,
        seed=config.seed,
        converged=best.converged,
    )


def _check_schema(model: KMeansModel, matrix: FeatureMatrix) -> None:
    if matrix.schema != model.schema:
        raise SchemaMismatch("feature matrix schema differs from the model schema")


def kmeans_predict(
    model: KMeansModel, rows: FeatureMatrix, workers: Optional[int] = None
) -> List[int]:
    """Nearest centroid per row; ties to the lowest cluster index"""
    _check_schema(model, rows)
    labels, _ = assign(rows.rows, model.centroids, workers)
    return labels.tolist()


def build_index(
    model: KMeansModel, matrix: FeatureMatrix, workers: Optional[int] = None
) -> ClusterIndex:
    """
    Build the cluster -> tracks map over a dataset

    Member lists keep matrix row order.
    """
    labels = kmeans_predict(model, matrix, workers)
    members: List[List[str]] = [[] for _ in range(model.k)]
    assignments = {}
    for track_id, label in zip(matrix.row_ids, labels):
        members[label].append(track_id)
        assignments[track_id] = label
    return ClusterIndex(
        model_id=model.model_id,
        assignments=assignments,
        members={c: tuple(ids) for c, ids in enumerate(members)},
    )
