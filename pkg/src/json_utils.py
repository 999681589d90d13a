"""
JSON helpers: complex matrix codec and canonical hashing of inputs.
"""

import hashlib
import json
import math
from typing import Any

import numpy as np


def encode_complex(z: complex) -> list[float]:
    """Encode a complex number as [re, im]."""
    z = complex(z)
    return [float(z.real), float(z.imag)]


def decode_complex(value: Any) -> complex:
    """Decode [re, im] (or a bare real) into a complex number."""
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"Expected [re, im] pair, got {value!r}")


def encode_complex_matrix(matrix: np.ndarray) -> list[list[list[float]]]:
    """
    Encode a complex matrix as nested rows of [re, im] pairs.

    Args:
        matrix: 2-D array (1-D arrays are treated as a single column)

    Returns:
        Nested list suitable for JSON
    """
    arr = np.asarray(matrix, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [[encode_complex(z) for z in row] for row in arr]


def decode_complex_matrix(data: Any) -> np.ndarray:
    """
    Decode nested rows of [re, im] pairs into a complex matrix.

    Raises:
        ValueError: If rows are ragged or entries malformed
    """
    if not isinstance(data, (list, tuple)) or len(data) == 0:
        raise ValueError("Matrix must be a non-empty list of rows")
    rows = [[decode_complex(z) for z in row] for row in data]
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise ValueError(f"Ragged matrix rows: widths {sorted(widths)}")
    return np.array(rows, dtype=complex)


def _finite_only(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): _finite_only(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_only(v) for v in obj]
    return obj


def canonical_json(obj: Any, indent: int | None = None) -> str:
    """Serialize with sorted keys and infinities as strings so output is byte-stable."""
    return json.dumps(_finite_only(obj), sort_keys=True, indent=indent,
                      separators=(",", ":") if indent is None else None,
                      allow_nan=False)


def content_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of obj."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
