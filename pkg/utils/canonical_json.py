"""
Canonical JSON: sorted keys, no whitespace, shortest round-trip floats
"""

import hashlib
import json
from typing import Any

import numpy as np


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy scalars/arrays and tuples into plain JSON types

    Args:
        obj: Nested structure of dicts, lists, tuples, numbers and strings

    Returns:
        Structure containing only dict/list/str/int/float/bool/None
    """
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # repr(float) is the shortest string that round-trips
        return float(obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_dumps(obj: Any) -> str:
    return json.dumps(
        to_jsonable(obj),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def content_hash(obj: Any) -> str:
    """SHA-256 hex digest of the canonical JSON encoding"""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()
