"""Embedding backends.

Two families are dispatched by model id:

* ``hash-<dim>`` — a dependency-free deterministic reference encoder.
  Text becomes a sum of per-token (and bigram) random projections keyed by
  a stable hash, so prompts sharing words land near each other; images
  become a fixed random projection of a 16x16 grayscale thumbnail. Useful
  for offline pipelines, conformance tests, and fixtures.
* anything else — a frozen CLIP checkpoint loaded through ``transformers``
  (e.g. ``openai/clip-vit-base-patch16``), encoding with the text/image
  projection heads. Requires the ``clip`` extra and the checkpoint being
  available locally or downloadable.

Embeddings are returned unnormalized in every backend; the training side
owns normalization.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

# projection dims of common checkpoints, asserted after load
KNOWN_DIMS = {
    "openai/clip-vit-base-patch16": 512,
    "openai/clip-vit-base-patch32": 512,
    "openai/clip-vit-large-patch14": 768,
}

_HASH_ID = re.compile(r"^hash-(\d+)$")
_TOKEN = re.compile(r"[a-z0-9]+")


class RowErrors(ValueError):
    """Per-row failures collected during an export."""

    def __init__(self, message: str, rows: list[tuple[str, str]]):
        self.rows = rows
        listing = "; ".join(f"{rid}: {msg}" for rid, msg in rows[:10])
        suffix = "" if len(rows) <= 10 else f" (+{len(rows) - 10} more)"
        super().__init__(f"{message}: {listing}{suffix}")


def find_overflows(ids, texts, count_tokens, max_len) -> list[tuple[str, str]]:
    """Rows whose tokenized length exceeds the encoder limit."""
    bad = []
    for rid, text in zip(ids, texts):
        n = count_tokens(text)
        if n > max_len:
            bad.append((rid, f"{n} tokens exceeds the {max_len}-token limit"))
    return bad


def _stable_seed(key: str) -> int:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class HashEncoder:
    """Deterministic reference encoder; same dim for text and images."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def model_id(self) -> str:
        return f"hash-{self.dim}"

    def _vector(self, key: str) -> np.ndarray:
        vec = self._token_cache.get(key)
        if vec is None:
            rng = np.random.default_rng(_stable_seed(key))
            vec = rng.standard_normal(self.dim).astype(np.float32)
            self._token_cache[key] = vec
        return vec

    def encode_texts(self, texts, ids=None, batch_size: int = 64) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            tokens = _TOKEN.findall(text.lower())
            acc = np.zeros(self.dim, dtype=np.float64)
            for tok in tokens:
                acc += self._vector("t:" + tok)
            for a, b in zip(tokens, tokens[1:]):
                acc += 0.5 * self._vector(f"b:{a} {b}")
            out[i] = acc.astype(np.float32)
        return out

    def encode_images(self, paths, ids=None, batch_size: int = 64) -> np.ndarray:
        from PIL import Image, UnidentifiedImageError

        ids = list(ids) if ids is not None else [str(p) for p in paths]
        rng = np.random.default_rng(_stable_seed(f"image-proj-{self.dim}"))
        proj = rng.standard_normal((256, self.dim)).astype(np.float64)
        out = np.zeros((len(paths), self.dim), dtype=np.float32)
        errors = []
        for i, path in enumerate(paths):
            try:
                with Image.open(path) as img:
                    thumb = img.convert("L").resize((16, 16), Image.BILINEAR)
            except (OSError, UnidentifiedImageError, ValueError) as e:
                errors.append((ids[i], str(e)))
                continue
            pixels = np.asarray(thumb, dtype=np.float64).reshape(-1) / 255.0 - 0.5
            out[i] = (pixels @ proj).astype(np.float32)
        if errors:
            raise RowErrors("unreadable image files", errors)
        return out


class ClipEncoder:
    """Frozen CLIP checkpoint via transformers; text and image towers."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ModuleNotFoundError as e:
            raise RuntimeError(
                "the transformers/torch backend is not installed; "
                "install the 'clip' extra or use a hash-<dim> model id"
            ) from e
        self._torch = torch
        self.model_id = model_id
        self.model = CLIPModel.from_pretrained(model_id).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.dim = int(self.model.config.projection_dim)
        expected = KNOWN_DIMS.get(model_id)
        if expected is not None and expected != self.dim:
            raise ValueError(
                f"{model_id}: checkpoint projection dim {self.dim} != "
                f"expected {expected}"
            )

    def encode_texts(self, texts, ids=None, batch_size: int = 64) -> np.ndarray:
        torch = self._torch
        ids = list(ids) if ids is not None else [str(i) for i in range(len(texts))]
        tokenizer = self.processor.tokenizer
        max_len = int(self.model.config.text_config.max_position_embeddings)
        overflows = find_overflows(
            ids, texts, lambda t: len(tokenizer(t)["input_ids"]), max_len
        )
        if overflows:
            raise RowErrors("prompts exceed the tokenizer limit", overflows)
        chunks = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                batch = texts[start : start + batch_size]
                inputs = self.processor(
                    text=list(batch), return_tensors="pt", padding=True
                )
                feats = self.model.get_text_features(**inputs)
                chunks.append(feats.cpu().numpy().astype(np.float32))
        return np.vstack(chunks)

    def encode_images(self, paths, ids=None, batch_size: int = 64) -> np.ndarray:
        from PIL import Image, UnidentifiedImageError

        torch = self._torch
        ids = list(ids) if ids is not None else [str(p) for p in paths]
        images, errors = [], []
        for rid, path in zip(ids, paths):
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB"))
            except (OSError, UnidentifiedImageError, ValueError) as e:
                errors.append((rid, str(e)))
        if errors:
            raise RowErrors("unreadable image files", errors)
        chunks = []
        with torch.no_grad():
            for start in range(0, len(images), batch_size):
                batch = images[start : start + batch_size]
                inputs = self.processor(images=batch, return_tensors="pt")
                feats = self.model.get_image_features(**inputs)
                chunks.append(feats.cpu().numpy().astype(np.float32))
        return np.vstack(chunks)


def get_encoder(model_id: str):
    m = _HASH_ID.match(model_id)
    if m:
        return HashEncoder(int(m.group(1)))
    return ClipEncoder(model_id)
