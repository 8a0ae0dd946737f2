"""Binary matrix files, trajectory bundles, and CSV helpers.

Matrix layout: magic bytes ``ESDG``, format version (u32), rows (u32),
cols (u32), then little-endian float64 data in column-major order.
Total byte length is 16 + 8*rows*cols.  Trajectories pair a matrix file
(one column per frame) with a JSON sidecar of times and metadata.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

__all__ = [
    "write_matrix",
    "read_matrix",
    "write_trajectory",
    "read_trajectory",
    "write_csv",
]

MAGIC = b"ESDG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_matrix(path, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rows, cols))
        fh.write(np.asfortranarray(matrix, dtype="<f8").tobytes(order="F"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a matrix file (bad magic {magic!r})")
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version}")
        data = fh.read(8 * rows * cols)
    if len(data) != 8 * rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols, order="F").copy()


def write_trajectory(prefix, times: np.ndarray, states: np.ndarray,
                     metadata: dict) -> None:
    """Persist a sampled trajectory: <prefix>.mat + <prefix>.json.

    ``states`` rows are frames; they are stored one frame per column.
    """
    prefix = Path(prefix)
    write_matrix(prefix.with_suffix(".mat"), np.asarray(states).T)
    sidecar = dict(metadata)
    sidecar["times"] = list(map(float, times))
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def read_trajectory(prefix):
    """Returns (times, states (frames, ndof), metadata)."""
    prefix = Path(prefix)
    states = read_matrix(prefix.with_suffix(".mat")).T
    with open(prefix.with_suffix(".json")) as fh:
        meta = json.load(fh)
    times = np.asarray(meta.pop("times"), dtype=float)
    if times.size != states.shape[0]:
        raise ValueError(f"{prefix}: sidecar frame count does not match matrix")
    return times, states, meta


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
