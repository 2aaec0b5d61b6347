"""Binary matrix persistence and row-level checkpointing.

File layout (little-endian): 4-byte magic "DKM1", u16 version, u8 flags
(bit 0: kernel-clamped), u8 distance kind, u32 rows, u32 cols, then
rows*cols float32 values row-major.  A JSON sidecar at ``<path>.meta.json``
carries row_ids, col_ids, the scorer descriptor hash, the template hash,
and a creation timestamp.
"""

from __future__ import annotations

import datetime
import json
import os
import struct

import numpy as np

from .data import Matrix
from .utility import DistanceKind

MAGIC = b"DKM1"
VERSION = 1
_HEADER = struct.Struct("<HBBII")  # version, flags, distance, rows, cols

FLAG_KERNEL = 0x01

_DISTANCE_CODES = {DistanceKind.EUCLID_LEN_NORM.value: 0, DistanceKind.KL.value: 1}
_DISTANCE_NAMES = {v: k for k, v in _DISTANCE_CODES.items()}


class MatrixFormatError(ValueError):
    """Raised for bad magic, mismatched dimensions, or corrupt payloads."""


def matrix_payload(matrix: Matrix) -> bytes:
    """Serialize header + values; excludes the timestamped sidecar."""
    flags = FLAG_KERNEL if matrix.meta.get("kernel") else 0
    dist = _DISTANCE_CODES.get(matrix.meta.get("distance", ""), 0)
    header = MAGIC + _HEADER.pack(VERSION, flags, dist, matrix.rows, matrix.cols)
    body = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    return header + body


def save_matrix(matrix: Matrix, path) -> None:
    path = os.fspath(path)
    with open(path, "wb") as fh:
        fh.write(matrix_payload(matrix))
    sidecar = {
        "row_ids": list(matrix.row_ids),
        "col_ids": list(matrix.col_ids),
        "scorer_hash": matrix.meta.get("scorer_hash", ""),
        "template_hash": matrix.meta.get("template_hash", ""),
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_matrix(path) -> Matrix:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise MatrixFormatError(f"{path}: file too short for header")
    if blob[: len(MAGIC)] != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, flags, dist, rows, cols = _HEADER.unpack_from(blob, len(MAGIC))
    if version != VERSION:
        raise MatrixFormatError(f"{path}: unsupported version {version}")
    if dist not in _DISTANCE_NAMES:
        raise MatrixFormatError(f"{path}: unknown distance code {dist}")
    expected = len(MAGIC) + _HEADER.size + rows * cols * 4
    if len(blob) != expected:
        raise MatrixFormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected} "
            f"for {rows}x{cols}"
        )
    values = np.frombuffer(
        blob, dtype="<f4", offset=len(MAGIC) + _HEADER.size
    ).reshape(rows, cols).copy()
    if not np.isfinite(values).all():
        raise MatrixFormatError(f"{path}: non-finite values in payload")

    meta_path = path + ".meta.json"
    try:
        with open(meta_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
    except FileNotFoundError:
        raise MatrixFormatError(f"{path}: missing sidecar {meta_path}") from None
    row_ids = sidecar.get("row_ids", [])
    col_ids = sidecar.get("col_ids", [])
    if len(row_ids) != rows or len(col_ids) != cols:
        raise MatrixFormatError(
            f"{path}: sidecar ids ({len(row_ids)}, {len(col_ids)}) do not "
            f"match header ({rows}, {cols})"
        )
    meta = {
        "distance": _DISTANCE_NAMES[dist],
        "kernel": bool(flags & FLAG_KERNEL),
        "scorer_hash": sidecar.get("scorer_hash", ""),
        "template_hash": sidecar.get("template_hash", ""),
    }
    return Matrix(values, row_ids, col_ids, meta)


class RowCheckpoint:
    """Flushes completed row prefixes so interrupted runs can resume.

    The checkpoint is keyed on scorer/template hashes, distance kind, and id
    lists; a mismatch discards the stale state rather than resuming it.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self._meta_path = self.path + ".meta.json"

    def _key(self, meta: dict, row_ids, col_ids) -> dict:
        return {
            "scorer_hash": meta.get("scorer_hash", ""),
            "template_hash": meta.get("template_hash", ""),
            "distance": meta.get("distance", ""),
            "row_ids": list(row_ids),
            "col_ids": list(col_ids),
        }

    def resume(self, values: np.ndarray, meta: dict, row_ids, col_ids) -> int:
        """Load completed rows into ``values``; return the next row index."""
        if not (os.path.exists(self.path) and os.path.exists(self._meta_path)):
            return 0
        with open(self._meta_path, encoding="utf-8") as fh:
            state = json.load(fh)
        if state.get("key") != self._key(meta, row_ids, col_ids):
            self.discard()
            return 0
        rows_done = int(state.get("rows_done", 0))
        n_cols = values.shape[1]
        data = np.fromfile(self.path, dtype="<f4")
        if data.size < rows_done * n_cols:
            self.discard()
            return 0
        values[:rows_done] = data[: rows_done * n_cols].reshape(rows_done, n_cols)
        return rows_done

    def flush(self, values: np.ndarray, meta: dict, row_ids, col_ids,
              rows_done: int) -> None:
        tmp = self.path + ".tmp"
        np.ascontiguousarray(values[:rows_done], dtype="<f4").tofile(tmp)
        os.replace(tmp, self.path)
        with open(self._meta_path, "w", encoding="utf-8") as fh:
            json.dump(
                {"key": self._key(meta, row_ids, col_ids), "rows_done": rows_done},
                fh,
            )

    def discard(self) -> None:
        for p in (self.path, self._meta_path):
            if os.path.exists(p):
                os.remove(p)
