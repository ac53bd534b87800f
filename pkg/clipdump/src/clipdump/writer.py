"""Writer for the shared CLAPEMB1 embedding-file format.

Layout (little-endian): magic ``CLAPEMB1``, u32 dim, u32 count, u32
metadata length, canonical JSON array of per-row records (sorted keys, no
whitespace, optional fields omitted), then count*dim float32 values
row-major. Files are written atomically (temp + rename), never partially.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"CLAPEMB1"


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embeddings(path, rows: np.ndarray, meta: list[dict]) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise ValueError("rows contain non-finite values")
    count, dim = rows.shape
    if len(meta) != count:
        raise ValueError(f"meta length {len(meta)} != row count {count}")
    records = []
    for m in meta:
        rec = {k: v for k, v in m.items() if v is not None}
        if "id" not in rec or "label" not in rec:
            raise ValueError("metadata records need 'id' and 'label'")
        records.append(rec)
    meta_bytes = json.dumps(
        records, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    blob = b"".join([
        MAGIC,
        struct.pack("<III", dim, count, len(meta_bytes)),
        meta_bytes,
        rows.tobytes(),
    ])
    atomic_write_bytes(path, blob)
