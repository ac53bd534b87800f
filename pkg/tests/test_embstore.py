import json
import struct

import numpy as np
import pytest

from promptlens.embstore import (
    EmbeddingSet,
    FormatError,
    RowMeta,
    ValidationError,
    read_embedding_set,
    select_by_label,
    write_embedding_set,
)


def make_set(rng, count=5, dim=3, labeled=True):
    labels = rng.integers(0, 3, size=count) if labeled else np.full(count, -1)
    if labeled:
        # keep labels dense from 0
        labels = np.sort(labels)
        uniq = {v: i for i, v in enumerate(sorted(set(labels.tolist())))}
        labels = np.array([uniq[v] for v in labels.tolist()])
    meta = [
        RowMeta(
            id=f"row{i}",
            label=int(labels[i]),
            text=f"t{i}" if i % 2 == 0 else None,
            class_name="thing" if i % 3 == 0 else None,
        )
        for i in range(count)
    ]
    rows = rng.standard_normal((count, dim)).astype(np.float32)
    return EmbeddingSet(dim=dim, rows=rows, meta=meta)


def test_file_size_matches_layout(tmp_path):
    s = EmbeddingSet(
        dim=2,
        rows=np.zeros((1, 2), np.float32),
        meta=[RowMeta(id="a", label=-1)],
    )
    path = tmp_path / "one.clapemb"
    write_embedding_set(s, path)
    meta_json = json.dumps(
        [{"id": "a", "label": -1}], sort_keys=True, separators=(",", ":")
    ).encode()
    assert path.stat().st_size == 8 + 4 + 4 + 4 + len(meta_json) + 8


def test_round_trip_randomized(tmp_path):
    rng = np.random.default_rng(7)
    for case in range(100):
        count = int(rng.integers(0, 12))
        dim = int(rng.integers(1, 9))
        s = make_set(rng, count=count, dim=dim, labeled=bool(rng.integers(2)) and count > 0)
        path = tmp_path / f"case{case}.clapemb"
        write_embedding_set(s, path)
        assert read_embedding_set(path) == s


def test_canonical_bytes_across_rewrites(tmp_path):
    rng = np.random.default_rng(11)
    s = make_set(rng)
    p1, p2 = tmp_path / "a.clapemb", tmp_path / "b.clapemb"
    write_embedding_set(s, p1)
    write_embedding_set(s, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_nan_rejected():
    rows = np.array([[np.nan, 0.0]], np.float32)
    with pytest.raises(ValidationError, match="non-finite"):
        EmbeddingSet(dim=2, rows=rows, meta=[RowMeta(id="a")])


def test_duplicate_ids_rejected():
    rows = np.zeros((2, 1), np.float32)
    with pytest.raises(ValidationError, match="duplicate"):
        EmbeddingSet(dim=1, rows=rows, meta=[RowMeta(id="a"), RowMeta(id="a")])


def test_labels_must_be_dense():
    rows = np.zeros((2, 1), np.float32)
    with pytest.raises(ValidationError, match="dense"):
        EmbeddingSet(dim=1, rows=rows, meta=[RowMeta(id="a", label=0), RowMeta(id="b", label=2)])


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.clapemb"
    path.write_bytes(b"CLAPEMB2" + b"\x00" * 20)
    with pytest.raises(FormatError, match="magic"):
        read_embedding_set(path)


def test_truncated_payload(tmp_path):
    rng = np.random.default_rng(3)
    s = make_set(rng, count=4, dim=4)
    path = tmp_path / "t.clapemb"
    write_embedding_set(s, path)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(FormatError, match="truncated payload"):
        read_embedding_set(path)


def test_trailing_garbage(tmp_path):
    rng = np.random.default_rng(3)
    s = make_set(rng, count=2, dim=2)
    path = tmp_path / "t.clapemb"
    write_embedding_set(s, path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(FormatError, match="trailing"):
        read_embedding_set(path)


def test_meta_count_mismatch(tmp_path):
    # hand-build a file whose count disagrees with the metadata array
    meta = json.dumps([{"id": "a", "label": -1}]).encode()
    blob = b"CLAPEMB1" + struct.pack("<III", 1, 2, len(meta)) + meta + b"\x00" * 8
    path = tmp_path / "m.clapemb"
    path.write_bytes(blob)
    with pytest.raises(FormatError, match="mismatch"):
        read_embedding_set(path)


def test_header_corruption_detected(tmp_path):
    rng = np.random.default_rng(5)
    s = make_set(rng, count=3, dim=2)
    path = tmp_path / "h.clapemb"
    write_embedding_set(s, path)
    good = path.read_bytes()
    for field_off in (8, 12, 16):  # dim, count, meta_len
        bad = bytearray(good)
        bad[field_off] ^= 0xFF
        path.write_bytes(bytes(bad))
        with pytest.raises(FormatError):
            read_embedding_set(path)


def test_unknown_meta_key_rejected(tmp_path):
    meta = json.dumps([{"id": "a", "label": -1, "extra": 1}]).encode()
    blob = b"CLAPEMB1" + struct.pack("<III", 1, 1, len(meta)) + meta + b"\x00" * 4
    path = tmp_path / "u.clapemb"
    path.write_bytes(blob)
    with pytest.raises(FormatError, match="unknown metadata"):
        read_embedding_set(path)


def test_select_by_label_preserves_order():
    rows = np.arange(6, dtype=np.float32).reshape(3, 2)
    meta = [RowMeta(id=f"r{i}", label=l) for i, l in enumerate([0, 1, 0])]
    s = EmbeddingSet(dim=2, rows=rows, meta=meta)
    sub = select_by_label(s, 0)
    assert [m.id for m in sub.meta] == ["r0", "r2"]
    assert np.array_equal(sub.rows, rows[[0, 2]])
    assert select_by_label(s, 5).count == 0


def test_select_on_unlabeled_set():
    rows = np.zeros((2, 1), np.float32)
    s = EmbeddingSet(dim=1, rows=rows, meta=[RowMeta(id="a"), RowMeta(id="b")])
    assert select_by_label(s, 0).count == 0
