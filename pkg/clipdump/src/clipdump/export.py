"""Manifest-driven export: encode every row, write one CLAPEMB1 file.

A provenance sidecar (``<out>.meta.json``) records the model id and output
shape; the embedding file itself stays exactly on the shared format.
"""

from __future__ import annotations

import json

from .encoders import get_encoder
from .manifest import read_image_manifest, read_text_manifest
from .writer import atomic_write_bytes, write_embeddings


def _write_sidecar(out_path, model_id: str, dim: int, count: int) -> None:
    blob = json.dumps(
        {"count": count, "dim": dim, "model": model_id},
        sort_keys=True, indent=2,
    )
    atomic_write_bytes(f"{out_path}.meta.json", (blob + "\n").encode("utf-8"))


def export_text(manifest_path, model_id: str, out_path, batch_size: int = 64) -> int:
    rows = read_text_manifest(manifest_path)
    encoder = get_encoder(model_id)
    embeddings = encoder.encode_texts(
        [r.text for r in rows], ids=[r.id for r in rows], batch_size=batch_size
    )
    meta = [
        {"id": r.id, "label": r.label, "text": r.text, "class_name": r.class_name}
        for r in rows
    ]
    write_embeddings(out_path, embeddings, meta)
    _write_sidecar(out_path, model_id, embeddings.shape[1], len(rows))
    return len(rows)


def export_images(manifest_path, model_id: str, out_path, batch_size: int = 64) -> int:
    rows = read_image_manifest(manifest_path)
    encoder = get_encoder(model_id)
    embeddings = encoder.encode_images(
        [r.path for r in rows], ids=[r.id for r in rows], batch_size=batch_size
    )
    meta = [{"id": r.id, "label": r.label} for r in rows]
    write_embeddings(out_path, embeddings, meta)
    _write_sidecar(out_path, model_id, embeddings.shape[1], len(rows))
    return len(rows)
