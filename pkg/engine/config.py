"""
Konfigurasi default untuk pipeline rekomendasi lagu
"""

# Seed default untuk semua perintah (tidak pernah dari jam dinding)
DEFAULT_SEED = 0

# Feature selection
SELECTION_CONFIG = {
    "variance_epsilon": 1e-12,      # drop if variance < epsilon
    "max_missing_fraction": 0.5,    # drop if missing fraction > threshold
}

# Scaling
SCALER_CONFIG = {
    "min_std": 1e-9,
}

# K-means fitting
FIT_CONFIG = {
    "max_iterations": 100,
    "tolerance": 1e-4,              # relative centroid shift
    "n_init": 4,
    "variant": "lloyd",
    "batch_size": 1024,
}

# Rekomendasi
RECOMMEND_CONFIG = {
    "top_n_artists": 5,
    "max_songs": 10,
    "exclude_input_artists": False,
}

# Synthetic data generator
GEN_CONFIG = {
    "n_features": 54,
    "separation": 8.0,
    "within_std": 1.0,
    "noise_std": 1.0,
    "genre_vocab_per_cluster": 5,
    "max_terms_per_artist": 5,
    "similar_artists_per_artist": 10,
    "intra_cluster_edge_rate": 0.9,
    "sparse_present_fraction": 0.4,
    "timbre_width": 12,
}

# Staged search (10% grid -> 25% grid -> 100% random)
SEARCH_CONFIG = {
    "k_min": 2,
    "k_max": 10,
    "random_budget": 4,
    "stages": [
        (0.10, "grid"),
        (0.25, "grid"),
        (1.0, "random"),
    ],
}

# Parallel work
PARALLEL_CONFIG = {
    "chunk_size": 2048,             # rows per chunk; never depends on worker count
    "silhouette_chunk_size": 256,   # evaluated rows per distance block
}

# Format files
FORMAT_CONFIG = {
    "model_format_version": 1,
    "sweep_columns": ["k", "silhouette", "inertia", "sample_size", "wall_time_ms", "seed"],
    "trace_columns": ["restart", "iteration", "inertia", "max_shift"],
    "recommend_columns": [
        "input_track", "input_genres", "rec_track", "rec_artist", "rec_genres", "genre_overlap",
    ],
    "list_separator": "|",
}

# File paths
FILE_PATHS = {
    "pruned_features": "config/msd_pruned_features.json",
    "pipeline_log": "logs/pipeline.log",
    "run_output_dir": "data/runs",
}
