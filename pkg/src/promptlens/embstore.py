"""Binary container for named embedding sets (the ``CLAPEMB1`` format).

File layout, all integers little-endian:

    magic   8 bytes     b"CLAPEMB1"
    dim     u32         feature dimension
    count   u32         number of rows
    meta_len u32        byte length of the metadata block
    meta    meta_len    UTF-8 JSON array of per-row records, row order
    payload count*dim   float32 values, row-major

Metadata records carry ``id`` (unique string), ``label`` (int, -1 means
unlabeled) and optionally ``text`` and ``class_name``. Serialization is
canonical (sorted keys, no insignificant whitespace, optional fields
omitted when absent) so rewriting the same set is byte-identical.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAGIC = b"CLAPEMB1"
_HEADER = struct.Struct("<III")  # dim, count, meta_len

_META_KEYS = {"id", "label", "text", "class_name"}


class EmbeddingSetError(ValueError):
    """Base error for embedding-set validation and I/O format problems."""


class ValidationError(EmbeddingSetError):
    """An in-memory set violates its invariants."""


class FormatError(EmbeddingSetError):
    """A file does not conform to the CLAPEMB1 layout."""


@dataclass
class RowMeta:
    id: str
    label: int = -1
    text: Optional[str] = None
    class_name: Optional[str] = None

    def to_record(self) -> dict:
        rec = {"id": self.id, "label": self.label}
        if self.text is not None:
            rec["text"] = self.text
        if self.class_name is not None:
            rec["class_name"] = self.class_name
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RowMeta":
        if not isinstance(rec, dict):
            raise FormatError("metadata record is not an object")
        unknown = set(rec) - _META_KEYS
        if unknown:
            raise FormatError(f"unknown metadata keys: {sorted(unknown)}")
        if "id" not in rec or "label" not in rec:
            raise FormatError("metadata record missing 'id' or 'label'")
        return cls(
            id=rec["id"],
            label=rec["label"],
            text=rec.get("text"),
            class_name=rec.get("class_name"),
        )


@dataclass
class EmbeddingSet:
    """A count x dim float32 matrix with per-row metadata."""

    dim: int
    rows: np.ndarray
    meta: list[RowMeta] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2:
            raise ValidationError(f"rows must be 2-D, got shape {self.rows.shape}")
        self.validate()

    # -- invariants -------------------------------------------------------

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        count = self.rows.shape[0]
        if self.rows.shape[1] != self.dim:
            raise ValidationError(
                f"row width {self.rows.shape[1]} != dim {self.dim}"
            )
        if len(self.meta) != count:
            raise ValidationError(
                f"meta length {len(self.meta)} != row count {count}"
            )
        if not np.all(np.isfinite(self.rows)):
            raise ValidationError("rows contain non-finite values")
        ids = [m.id for m in self.meta]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate row ids")
        for m in self.meta:
            if not isinstance(m.id, str):
                raise ValidationError("row id must be a string")
            if not isinstance(m.label, int) or m.label < -1:
                raise ValidationError(f"bad label {m.label!r} (must be int >= -1)")
        present = sorted({m.label for m in self.meta if m.label >= 0})
        if present != list(range(len(present))):
            raise ValidationError(f"labels not dense from 0: {present}")

    # -- convenience ------------------------------------------------------

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.array([m.label for m in self.meta], dtype=np.int64)

    @property
    def n_classes(self) -> int:
        lab = [m.label for m in self.meta if m.label >= 0]
        return max(lab) + 1 if lab else 0

    def rows64(self) -> np.ndarray:
        """Payload as float64 (all arithmetic downstream runs in 64-bit)."""
        return self.rows.astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.meta == other.meta
            and np.array_equal(self.rows, other.rows)
        )


def select_by_label(s: EmbeddingSet, label: int) -> EmbeddingSet:
    """Subset of rows whose label equals ``label``, preserving row order."""
    keep = [i for i, m in enumerate(s.meta) if m.label == label]
    # built without validate(): label denseness is a property of full sets,
    # not of single-label selections
    sub = EmbeddingSet.__new__(EmbeddingSet)
    sub.dim = s.dim
    sub.rows = s.rows[keep].copy() if keep else np.zeros((0, s.dim), np.float32)
    sub.meta = [s.meta[i] for i in keep]
    return sub


def _canonical_meta_bytes(meta: list[RowMeta]) -> bytes:
    records = [m.to_record() for m in meta]
    return json.dumps(
        records, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
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


def write_embedding_set(s: EmbeddingSet, path) -> None:
    s.validate()
    meta_bytes = _canonical_meta_bytes(s.meta)
    payload = np.ascontiguousarray(s.rows, dtype="<f4").tobytes()
    blob = b"".join(
        [MAGIC, _HEADER.pack(s.dim, s.count, len(meta_bytes)), meta_bytes, payload]
    )
    atomic_write_bytes(path, blob)


def read_embedding_set(path) -> EmbeddingSet:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + _HEADER.size:
        raise FormatError("file too short for header")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic {data[:len(MAGIC)]!r}")
    dim, count, meta_len = _HEADER.unpack_from(data, len(MAGIC))
    off = len(MAGIC) + _HEADER.size
    if len(data) < off + meta_len:
        raise FormatError("truncated metadata block")
    try:
        records = json.loads(data[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"metadata is not valid JSON: {e}") from e
    if not isinstance(records, list):
        raise FormatError("metadata is not a JSON array")
    if len(records) != count:
        raise FormatError(
            f"metadata/count mismatch: {len(records)} records, count={count}"
        )
    off += meta_len
    expected = count * dim * 4
    got = len(data) - off
    if got < expected:
        raise FormatError(f"truncated payload: {got} bytes, expected {expected}")
    if got > expected:
        raise FormatError(f"trailing bytes after payload: {got - expected}")
    rows = np.frombuffer(data[off:], dtype="<f4").reshape(count, dim).copy()
    meta = [RowMeta.from_record(r) for r in records]
    try:
        return EmbeddingSet(dim=dim, rows=rows, meta=meta)
    except ValidationError as e:
        raise FormatError(f"file contents violate set invariants: {e}") from e
