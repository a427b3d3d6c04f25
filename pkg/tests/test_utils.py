import json
import logging

import numpy as np
import pytest

from utils.canonical_json import canonical_dumps, content_hash, to_jsonable
from utils.logging_setup import setup_logging
from utils.parallel import chunk_bounds, map_ordered, pairwise_reduce, resolve_workers


class TestCanonicalJson:
    def test_sorted_keys_and_compact_separators(self):
        assert canonical_dumps({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_shortest_round_trip_floats(self):
        text = canonical_dumps({"x": 0.1, "y": 1 / 3})
        assert text == '{"x":0.1,"y":0.3333333333333333}'
        assert json.loads(text)["y"] == 1 / 3

    def test_numpy_values(self):
        data = {"a": np.float64(0.5), "b": np.int64(3), "c": np.array([1.0, 2.0]), "d": np.bool_(True)}
        assert to_jsonable(data) == {"a": 0.5, "b": 3, "c": [1.0, 2.0], "d": True}

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            canonical_dumps({"x": float("nan")})

    def test_hash_ignores_key_order(self):
        assert content_hash({"a": 1, "b": 2}) == content_hash({"b": 2, "a": 1})
        assert content_hash({"a": 1}) != content_hash({"a": 2})


class TestParallel:
    def test_chunk_bounds(self):
        assert chunk_bounds(5, 2) == [(0, 2), (2, 4), (4, 5)]
        assert chunk_bounds(0, 3) == []

    def test_chunk_bounds_rejects_zero(self):
        with pytest.raises(ValueError):
            chunk_bounds(5, 0)

    @pytest.mark.parametrize("workers", [1, 2, 8, None])
    def test_map_ordered_keeps_order(self, workers):
        assert map_ordered(lambda x: x * x, list(range(20)), workers) == [x * x for x in range(20)]

    def test_resolve_workers(self):
        assert resolve_workers(3) == 3
        assert resolve_workers(0) == 1
        assert resolve_workers(None) >= 1

    def test_pairwise_reduce_tree_shape(self):
        assert pairwise_reduce(["a", "b", "c", "d", "e"], lambda x, y: f"({x}{y})") == "(((ab)(cd))e)"

    def test_pairwise_reduce_empty(self):
        with pytest.raises(ValueError):
            pairwise_reduce([], lambda x, y: x)


def test_setup_logging_writes_file(tmp_path):
    log_file = tmp_path / "logs" / "pipeline.log"
    setup_logging("DEBUG", str(log_file))
    logging.getLogger("engine.test").debug("hello from the pipeline")
    for handler in logging.getLogger().handlers:
        handler.flush()
    content = log_file.read_text(encoding="utf-8")
    assert "engine.test - DEBUG - hello from the pipeline" in content
    setup_logging("WARNING")
