import json

import numpy as np
import pytest

from clipdump.cli import main
from clipdump.encoders import (
    KNOWN_DIMS,
    HashEncoder,
    RowErrors,
    find_overflows,
    get_encoder,
)
from clipdump.export import export_images, export_text
from clipdump.manifest import ManifestError, read_image_manifest, read_text_manifest

# consumer-side validation of the shared file format
from promptlens.embstore import read_embedding_set

REFERENCE_MODEL = "hash-512"
VITB16 = "openai/clip-vit-base-patch16"


def write_manifest(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return path


def text_records():
    return [
        {"id": "dog_pc", "class_name": "dog", "label": 0, "text": "a photo of a dog"},
        {"id": "dog_c", "class_name": "dog", "label": 0, "text": "a dog"},
        {"id": "plane_c", "class_name": "airplane", "label": 1, "text": "an airplane"},
    ]


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


# -- manifest validation -------------------------------------------------------


def test_text_manifest_round_trip(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", text_records())
    rows = read_text_manifest(m)
    assert [r.id for r in rows] == ["dog_pc", "dog_c", "plane_c"]


def test_duplicate_ids_rejected(tmp_path):
    records = text_records()
    records[1]["id"] = records[0]["id"]
    m = write_manifest(tmp_path / "m.jsonl", records)
    with pytest.raises(ManifestError, match="duplicate ids"):
        read_text_manifest(m)


def test_non_dense_labels_rejected(tmp_path):
    records = text_records()
    records[2]["label"] = 5
    m = write_manifest(tmp_path / "m.jsonl", records)
    with pytest.raises(ManifestError, match="dense"):
        read_text_manifest(m)


def test_missing_and_unknown_keys(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", [{"id": "a", "label": 0}])
    with pytest.raises(ManifestError, match="missing keys"):
        read_text_manifest(m)
    m2 = write_manifest(
        tmp_path / "m2.jsonl",
        [dict(text_records()[0], extra=1)],
    )
    with pytest.raises(ManifestError, match="unknown keys"):
        read_text_manifest(m2)


def test_image_manifest_schema(tmp_path):
    m = write_manifest(
        tmp_path / "im.jsonl",
        [{"id": "i0", "path": "x.png", "label": 0}],
    )
    rows = read_image_manifest(m)
    assert rows[0].path == "x.png"


# -- reference encoder ---------------------------------------------------------


def test_reference_encoder_dim_and_determinism():
    enc = get_encoder(REFERENCE_MODEL)
    texts = [r["text"] for r in text_records()]
    a = enc.encode_texts(texts)
    b = HashEncoder(512).encode_texts(texts)
    assert a.shape == (3, 512)
    assert np.array_equal(a, b)


def test_reference_encoder_semantic_ordering():
    enc = HashEncoder(512)
    dog_pc, dog_c, plane = enc.encode_texts(
        ["a photo of a dog", "a dog", "an airplane"]
    )
    assert cosine(dog_pc, dog_c) > cosine(dog_pc, plane)


def test_known_checkpoint_dims_pin_vitb16():
    assert KNOWN_DIMS[VITB16] == 512


def test_overflow_helper():
    bad = find_overflows(
        ["a", "b"], ["one two", "one two three four"],
        count_tokens=lambda t: len(t.split()), max_len=3,
    )
    assert bad == [("b", "4 tokens exceeds the 3-token limit")]
    with pytest.raises(RowErrors, match="limit"):
        raise RowErrors("prompts exceed the tokenizer limit", bad)


# -- text export (S1 conformance) ------------------------------------------------


def test_export_text_passes_primary_validation(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", text_records())
    out = tmp_path / "texts.clapemb"
    count = export_text(m, REFERENCE_MODEL, out)
    assert count == 3
    s = read_embedding_set(out)  # primary-side validation
    assert s.dim == 512
    assert s.count == 3
    assert [r.id for r in s.meta] == ["dog_pc", "dog_c", "plane_c"]
    assert s.meta[0].text == "a photo of a dog"
    assert s.meta[0].class_name == "dog"
    # sanity ordering survives the file round trip
    rows = s.rows64()
    assert cosine(rows[0], rows[1]) > cosine(rows[0], rows[2])
    # provenance sidecar records the model id
    sidecar = json.loads((tmp_path / "texts.clapemb.meta.json").read_text())
    assert sidecar == {"count": 3, "dim": 512, "model": REFERENCE_MODEL}


def test_export_is_deterministic(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", text_records())
    out_a, out_b = tmp_path / "a.clapemb", tmp_path / "b.clapemb"
    export_text(m, REFERENCE_MODEL, out_a)
    export_text(m, REFERENCE_MODEL, out_b)
    assert out_a.read_bytes() == out_b.read_bytes()


def test_cli_text_export(tmp_path, capsys):
    m = write_manifest(tmp_path / "m.jsonl", text_records())
    out = tmp_path / "x.clapemb"
    rc = main(["text", "--manifest", str(m), "--model", REFERENCE_MODEL,
               "--out", str(out)])
    assert rc == 0
    assert read_embedding_set(out).count == 3


def test_cli_duplicate_id_exit_code(tmp_path, capsys):
    records = text_records()
    records[1]["id"] = records[0]["id"]
    m = write_manifest(tmp_path / "m.jsonl", records)
    rc = main(["text", "--manifest", str(m), "--model", REFERENCE_MODEL,
               "--out", str(tmp_path / "x.clapemb")])
    assert rc == 1
    assert "duplicate" in capsys.readouterr().err


def test_cli_missing_manifest_is_io_error(tmp_path):
    rc = main(["text", "--manifest", str(tmp_path / "nope.jsonl"),
               "--model", REFERENCE_MODEL, "--out", str(tmp_path / "x.clapemb")])
    assert rc == 2


# -- image export ------------------------------------------------------------------


def make_images(tmp_path, n=4):
    from PIL import Image

    rng = np.random.default_rng(0)
    paths = []
    for i in range(n):
        arr = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
        p = tmp_path / f"img{i}.png"
        Image.fromarray(arr).save(p)
        paths.append(str(p))
    return paths


def test_export_images_conformance(tmp_path):
    paths = make_images(tmp_path)
    records = [
        {"id": f"i{k}", "path": p, "label": k % 2} for k, p in enumerate(paths)
    ]
    m = write_manifest(tmp_path / "im.jsonl", records)
    out = tmp_path / "imgs.clapemb"
    count = export_images(m, REFERENCE_MODEL, out)
    assert count == 4
    s = read_embedding_set(out)
    assert s.count == 4
    assert s.dim == 512  # matches the text dim for the same model id
    assert [r.label for r in s.meta] == [0, 1, 0, 1]
    # re-export is byte-identical
    out2 = tmp_path / "imgs2.clapemb"
    export_images(m, REFERENCE_MODEL, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_unreadable_image_reports_rows_and_writes_nothing(tmp_path, capsys):
    paths = make_images(tmp_path, n=2)
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"not an image")
    records = [
        {"id": "ok0", "path": paths[0], "label": 0},
        {"id": "bad", "path": str(broken), "label": 1},
        {"id": "ok1", "path": paths[1], "label": 0},
    ]
    m = write_manifest(tmp_path / "im.jsonl", records)
    out = tmp_path / "imgs.clapemb"
    rc = main(["images", "--manifest", str(m), "--model", REFERENCE_MODEL,
               "--out", str(out)])
    assert rc == 1
    assert "bad" in capsys.readouterr().err
    assert not out.exists()  # never written partially


# -- real checkpoint path (network/cache gated) ----------------------------------------


def _clip_available():
    try:
        from clipdump.encoders import ClipEncoder

        ClipEncoder(VITB16)
        return True
    except Exception:
        return False


@pytest.mark.skipif(not _clip_available(), reason="ViT-B/16 checkpoint unavailable")
def test_vitb16_export_conformance(tmp_path):
    m = write_manifest(tmp_path / "m.jsonl", text_records())
    out = tmp_path / "clip.clapemb"
    export_text(m, VITB16, out)
    s = read_embedding_set(out)
    assert s.dim == 512
    rows = s.rows64()
    assert cosine(rows[0], rows[1]) > cosine(rows[0], rows[2])
