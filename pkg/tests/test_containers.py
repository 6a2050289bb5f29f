import json
import struct

import numpy as np
import pytest

from covfuzz.containers import (
    Dataset,
    NNWC_MAGIC,
    file_digest,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from covfuzz.errors import (
    EmptyModelError,
    MalformedHeaderError,
    ShapeMismatchError,
    TruncatedBlobError,
    UnsupportedLayerError,
)
from covfuzz.fixtures import build_model
from covfuzz.model import forward


def _write_raw(path, magic, header, blob=b""):
    raw = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(blob)


def test_model_roundtrip_bit_exact(tmp_path):
    model = build_model("micro-cnn", 3)
    path = tmp_path / "m.nnwc"
    save_model(path, model)
    loaded = load_model(path)
    assert loaded.name == model.name
    assert loaded.parameter_count == model.parameter_count
    x = np.random.default_rng(0).random(model.input_shape).astype(np.float32)
    assert np.array_equal(forward(model, x).logits, forward(loaded, x).logits)


def test_save_is_deterministic(tmp_path):
    model = build_model("dense-only", 9)
    save_model(tmp_path / "a.nnwc", model)
    save_model(tmp_path / "b.nnwc", model)
    assert file_digest(tmp_path / "a.nnwc") == file_digest(tmp_path / "b.nnwc")


def test_lenet_fixture_loads_with_7206_parameters(lenet):
    assert lenet.model.parameter_count == 7206


def test_bad_magic_is_malformed_header(tmp_path):
    path = tmp_path / "bad.nnwc"
    path.write_bytes(b"NOPE0000" + b"\x00" * 16)
    with pytest.raises(MalformedHeaderError):
        load_model(path)


def test_header_not_json_is_malformed(tmp_path):
    path = tmp_path / "bad.nnwc"
    raw = b"{not json"
    path.write_bytes(NNWC_MAGIC + struct.pack("<I", len(raw)) + raw)
    with pytest.raises(MalformedHeaderError):
        load_model(path)


def test_zero_layers_is_empty_model(tmp_path):
    path = tmp_path / "empty.nnwc"
    _write_raw(path, NNWC_MAGIC,
               {"name": "e", "input_shape": [4], "label_count": 2, "layers": []})
    with pytest.raises(EmptyModelError):
        load_model(path)


def test_unsupported_layer_kind(tmp_path):
    path = tmp_path / "odd.nnwc"
    _write_raw(path, NNWC_MAGIC,
               {"name": "o", "input_shape": [4], "label_count": 2,
                "layers": [{"kind": "attention"}]})
    with pytest.raises(UnsupportedLayerError, match="attention"):
        load_model(path)


def test_dense_bias_length_mismatch_is_shape_error(tmp_path):
    weight = np.zeros((2, 4), dtype="<f4").tobytes()
    bias = np.zeros(3, dtype="<f4").tobytes()  # should be 2
    header = {
        "name": "bad", "input_shape": [4], "label_count": 2,
        "layers": [{
            "kind": "dense", "weight_shape": [2, 4],
            "weight": {"offset": 0, "length": len(weight)},
            "bias": {"offset": len(weight), "length": len(bias)},
        }],
    }
    path = tmp_path / "bias.nnwc"
    _write_raw(path, NNWC_MAGIC, header, weight + bias)
    with pytest.raises(ShapeMismatchError):
        load_model(path)


def test_truncated_blob(tmp_path):
    weight = np.zeros((2, 4), dtype="<f4").tobytes()
    header = {
        "name": "t", "input_shape": [4], "label_count": 2,
        "layers": [{
            "kind": "dense", "weight_shape": [2, 4],
            "weight": {"offset": 0, "length": len(weight)},
            "bias": {"offset": len(weight), "length": 8},
        }],
    }
    path = tmp_path / "trunc.nnwc"
    _write_raw(path, NNWC_MAGIC, header, weight)  # bias blob missing
    with pytest.raises(TruncatedBlobError):
        load_model(path)


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    ds = Dataset(images=rng.random((7, 4, 4, 1)).astype(np.float32),
                 labels=np.arange(7, dtype=np.uint8))
    path = tmp_path / "d.tds"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)


def test_dataset_without_labels(tmp_path):
    ds = Dataset(images=np.zeros((3, 2, 2, 1), dtype=np.float32))
    path = tmp_path / "d.tds"
    save_dataset(path, ds)
    assert load_dataset(path).labels is None


def test_idx_pair_loads_scaled(tmp_path):
    pixels = np.arange(2 * 4 * 4, dtype=np.uint8).reshape(2, 4, 4)
    img_path = tmp_path / "images.idx"
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, 2, 4, 4))
        f.write(pixels.tobytes())
    lbl_path = tmp_path / "labels.idx"
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, 2))
        f.write(bytes([3, 9]))
    ds = load_dataset(img_path, labels_path=lbl_path)
    assert ds.images.shape == (2, 4, 4, 1)
    assert ds.images.max() <= 1.0
    np.testing.assert_allclose(ds.images[0, 0, 1, 0], 1.0 / 255.0)
    assert list(ds.labels) == [3, 9]


def test_unknown_magic_rejected(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"WHATEVER123")
    with pytest.raises(MalformedHeaderError):
        load_dataset(path)
