"""JSONL manifest parsing and validation.

Text mode rows: {id, class_name, label, text}. Image mode rows:
{id, path, label}. Ids must be unique; labels >= 0 must be dense from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass


class ManifestError(ValueError):
    pass


_TEXT_KEYS = {"id", "class_name", "label", "text"}
_IMAGE_KEYS = {"id", "path", "label"}


@dataclass
class TextRow:
    id: str
    class_name: str
    label: int
    text: str


@dataclass
class ImageRow:
    id: str
    path: str
    label: int


def _parse_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: invalid JSON: {e}") from e
            if not isinstance(record, dict):
                raise ManifestError(f"line {lineno}: expected a JSON object")
            yield lineno, record


def _validate_common(rows) -> None:
    ids = [r.id for r in rows]
    if len(set(ids)) != len(ids):
        seen, dupes = set(), set()
        for i in ids:
            (dupes if i in seen else seen).add(i)
        raise ManifestError(f"duplicate ids: {sorted(dupes)[:5]}")
    labels = sorted({r.label for r in rows if r.label >= 0})
    if labels != list(range(len(labels))):
        raise ManifestError(f"labels not dense from 0: {labels[:10]}")
    for r in rows:
        if r.label < -1:
            raise ManifestError(f"row {r.id!r}: label must be >= -1")


def read_text_manifest(path) -> list[TextRow]:
    rows = []
    for lineno, record in _parse_lines(path):
        missing = _TEXT_KEYS - set(record)
        if missing:
            raise ManifestError(f"line {lineno}: missing keys {sorted(missing)}")
        extra = set(record) - _TEXT_KEYS
        if extra:
            raise ManifestError(f"line {lineno}: unknown keys {sorted(extra)}")
        rows.append(TextRow(**record))
    if not rows:
        raise ManifestError("empty manifest")
    _validate_common(rows)
    return rows


def read_image_manifest(path) -> list[ImageRow]:
    rows = []
    for lineno, record in _parse_lines(path):
        missing = _IMAGE_KEYS - set(record)
        if missing:
            raise ManifestError(f"line {lineno}: missing keys {sorted(missing)}")
        extra = set(record) - _IMAGE_KEYS
        if extra:
            raise ManifestError(f"line {lineno}: unknown keys {sorted(extra)}")
        rows.append(ImageRow(**record))
    if not rows:
        raise ManifestError("empty manifest")
    _validate_common(rows)
    return rows
