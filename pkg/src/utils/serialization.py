"""
Result files: binary matrices and weights, CSV tables, JSON reports and run manifests

Binary layout (little-endian):
    matrix : int64 N, int64 N, int64 L, then N*N float64 row-major
    params : int64 layer count, then per layer int64 rows, int64 cols, rows*cols float64
             (a vector layer is stored with cols = 1)
"""

import json
import logging
import os
from dataclasses import is_dataclass, asdict
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from src.config import APP_VERSION, config
from src.utils.exceptions import ValidationError

logger = logging.getLogger(__name__)

_INT = np.dtype("<i8")
_FLOAT = np.dtype("<f8")


def _ensure_parent(path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)


def write_matrix_binary(M: np.ndarray, path: str, depth: int = 0):
    """Write a square matrix with an (N, N, L) header"""
    M = np.ascontiguousarray(M, dtype=_FLOAT)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"Expected a square matrix, got shape {M.shape}")
    _ensure_parent(path)
    with open(path, "wb") as fh:
        fh.write(np.array([M.shape[0], M.shape[1], depth], dtype=_INT).tobytes())
        fh.write(M.tobytes(order="C"))


def read_matrix_binary(path: str) -> Tuple[np.ndarray, int]:
    """Read a matrix written by write_matrix_binary; returns (matrix, L)"""
    with open(path, "rb") as fh:
        header = np.frombuffer(fh.read(3 * _INT.itemsize), dtype=_INT)
        if header.size != 3:
            raise ValidationError(f"Truncated matrix header in {path}")
        rows, cols, depth = (int(v) for v in header)
        payload = np.frombuffer(fh.read(), dtype=_FLOAT)
    if payload.size != rows * cols:
        raise ValidationError(f"Expected {rows * cols} values in {path}, found {payload.size}")
    return payload.reshape(rows, cols).copy(), depth


def write_params_binary(weights: List[np.ndarray], path: str):
    """Write per-layer weight blocks with shape headers"""
    _ensure_parent(path)
    with open(path, "wb") as fh:
        fh.write(np.array([len(weights)], dtype=_INT).tobytes())
        for w in weights:
            block = np.ascontiguousarray(w, dtype=_FLOAT)
            rows, cols = (block.shape[0], 1) if block.ndim == 1 else block.shape
            fh.write(np.array([rows, cols], dtype=_INT).tobytes())
            fh.write(block.tobytes(order="C"))


def read_params_binary(path: str) -> List[np.ndarray]:
    """Read weight blocks; blocks with one column come back as vectors"""
    with open(path, "rb") as fh:
        data = fh.read()
    offset = _INT.itemsize
    count = int(np.frombuffer(data[:offset], dtype=_INT)[0])
    weights = []
    for _ in range(count):
        rows, cols = (int(v) for v in np.frombuffer(data[offset:offset + 2 * _INT.itemsize], dtype=_INT))
        offset += 2 * _INT.itemsize
        size = rows * cols * _FLOAT.itemsize
        block = np.frombuffer(data[offset:offset + size], dtype=_FLOAT).copy()
        if block.size != rows * cols:
            raise ValidationError(f"Truncated weight block in {path}")
        offset += size
        weights.append(block if cols == 1 else block.reshape(rows, cols))
    return weights


def write_matrix_csv(M: np.ndarray, path: str):
    """Write a matrix as headerless CSV at full precision"""
    _ensure_parent(path)
    pd.DataFrame(np.asarray(M)).to_csv(path, header=False, index=False, float_format=config.output.float_format)


def write_table_csv(frame: pd.DataFrame, path: str):
    _ensure_parent(path)
    frame.to_csv(path, index=False, float_format=config.output.float_format)


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return _to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(data: Any, path: str):
    _ensure_parent(path)
    with open(path, "w") as fh:
        json.dump(_to_jsonable(data), fh, indent=2, sort_keys=True)


def read_json(path: str) -> Any:
    with open(path) as fh:
        return json.load(fh)


def write_manifest(subcommand: str, arguments: Dict[str, Any], output_dir: str, extra: Dict[str, Any] = None) -> str:
    """
    Record the resolved configuration of a run

    Returns:
        Path of the written manifest.json
    """
    manifest = {
        "subcommand": subcommand,
        "arguments": arguments,
        "version": APP_VERSION,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(output_dir, "manifest.json")
    write_json(manifest, path)
    logger.info(f"Wrote manifest to {path}")
    return path
