"""
PDQLS CORE MODULE: CODEC
========================
This file is part of THE VAULT - shared substrate for every pipeline.

JSON envelopes for matrices, vectors and reports. Doubles are always
written with 17 significant digits so a value survives a round trip
bit for bit and repeated runs produce identical files.
"""

import json
import math
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from core.errors import ValidationError

Number = Union[int, float]


def format_double(x: float) -> str:
    """Render a double with 17 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _encode(obj: Any) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_double(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode({"re": obj.real, "im": obj.imag})
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()]
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if hasattr(obj, "to_json"):
        return _encode(obj.to_json())
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Deterministic JSON text with 17-digit doubles."""
    return _encode(obj)


def dump(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(obj) + "\n")


def load(path) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def matrix_to_json(m: np.ndarray) -> Dict[str, Any]:
    """
    Square matrix (row-major) or vector to {"dim", "re", "im"}.

    Args:
        m: 2-D square or 1-D array

    Returns:
        JSON-ready dict
    """
    m = np.asarray(m, dtype=complex)
    flat = m.reshape(-1)
    return {
        "dim": int(m.shape[0]),
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }


def matrix_from_json(doc: Dict[str, Any]) -> np.ndarray:
    """Inverse of matrix_to_json; a payload of dim entries is a vector."""
    try:
        dim = int(doc["dim"])
        re = np.asarray(doc["re"], dtype=float)
        im = np.asarray(doc.get("im", [0.0] * len(doc["re"])), dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed matrix document: {e}")
    if re.shape != im.shape:
        raise ValidationError("re/im length mismatch", {"re": re.size, "im": im.size})
    values = re + 1j * im
    if values.size == dim:
        return values
    if values.size == dim * dim:
        return values.reshape(dim, dim)
    raise ValidationError(
        "payload length matches neither a vector nor a square matrix",
        {"dim": dim, "length": int(values.size)},
    )


def sparse_to_json(positions: Sequence[int], values: Sequence[complex]) -> Dict[str, Any]:
    values = np.asarray(values, dtype=complex)
    return {
        "positions": [int(p) for p in positions],
        "re": [float(v) for v in values.real],
        "im": [float(v) for v in values.imag],
    }


def sparse_from_json(doc: Dict[str, Any]) -> Dict[int, complex]:
    """Parse {"positions", "re", "im"} into a position -> value map."""
    positions: List[int] = [int(p) for p in doc["positions"]]
    re = doc["re"]
    im = doc.get("im", [0.0] * len(re))
    if not (len(positions) == len(re) == len(im)):
        raise ValidationError("sparse vector arrays differ in length")
    out: Dict[int, complex] = {}
    for p, r, i in zip(positions, re, im):
        if p in out:
            raise ValidationError(f"duplicate sparse position {p}")
        out[p] = complex(r, i)
    return out
