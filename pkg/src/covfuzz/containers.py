"""Readers and writers for the on-disk container formats.

Weight container (`.nnwc`): 8-byte magic ``NNWC0001``, a 4-byte little-endian
unsigned header length, a UTF-8 JSON header (name, input shape, label count,
ordered layer list with byte offset/length per parameter blob), then the
parameter blobs as little-endian float32, concatenated in header order.

Dataset container (`.tds`): magic ``TDS00001``, same header framing with
sample count, sample shape and a label flag, then all samples as float32 in
[0, 1] followed by one uint8 label per sample when present.

MNIST-style IDX files (big-endian magic 0x00000803 for images, 0x00000801
for labels) are also accepted; pixel values are divided by 255.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyModelError,
    MalformedHeaderError,
    ShapeMismatchError,
    TruncatedBlobError,
    UnsupportedLayerError,
)
from .model import Conv2d, Dense, Flatten, MaxPool2d, Model, Relu, Softmax

NNWC_MAGIC = b"NNWC0001"
TDS_MAGIC = b"TDS00001"
PROFILE_MAGIC = b"NPROF001"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedBlobError(f"{what}: expected {n} bytes, got {len(data)}")
    return data


def read_header(f, magic: bytes) -> dict:
    """Check the magic and parse the JSON header that follows it."""
    got = f.read(len(magic))
    if got != magic:
        raise MalformedHeaderError(f"bad magic: expected {magic!r}, got {got!r}")
    raw_len = f.read(4)
    if len(raw_len) != 4:
        raise MalformedHeaderError("truncated header length field")
    (header_len,) = struct.unpack("<I", raw_len)
    raw = f.read(header_len)
    if len(raw) != header_len:
        raise MalformedHeaderError(f"header declares {header_len} bytes, file has {len(raw)}")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError("header must be a JSON object")
    return header


def write_header(f, magic: bytes, header: dict) -> None:
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    f.write(magic)
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _blob_ref(header_layer: dict, key: str, layer_idx: int) -> tuple[int, int]:
    ref = header_layer.get(key)
    if not isinstance(ref, dict) or "offset" not in ref or "length" not in ref:
        raise MalformedHeaderError(f"layer {layer_idx}: missing blob reference '{key}'")
    return int(ref["offset"]), int(ref["length"])


def _read_blob(blob: bytes, offset: int, length: int, shape: tuple, what: str) -> np.ndarray:
    if offset < 0 or length < 0 or offset + length > len(blob):
        raise TruncatedBlobError(
            f"{what}: blob [{offset}, {offset + length}) exceeds section of {len(blob)} bytes"
        )
    expected = int(np.prod(shape)) * 4 if shape else 4
    if length != int(np.prod(shape)) * 4:
        raise ShapeMismatchError(
            f"{what}: blob length {length} does not match shape {shape} ({expected} bytes)"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=offset)
    return arr.reshape(shape).astype(np.float32)


def load_model(path) -> Model:
    """Load an `.nnwc` weight container and validate it end to end."""
    path = Path(path)
    with open(path, "rb") as f:
        header = read_header(f, NNWC_MAGIC)
        blob = f.read()

    for key in ("name", "input_shape", "label_count", "layers"):
        if key not in header:
            raise MalformedHeaderError(f"header missing field '{key}'")
    layer_entries = header["layers"]
    if not isinstance(layer_entries, list):
        raise MalformedHeaderError("'layers' must be a list")
    if not layer_entries:
        raise EmptyModelError(f"container {path.name} declares zero layers")

    layers = []
    for i, entry in enumerate(layer_entries):
        kind = entry.get("kind")
        if kind == "conv2d":
            kshape = tuple(entry["kernel_shape"])
            if len(kshape) != 4:
                raise ShapeMismatchError(f"layer {i}: conv2d kernel_shape must be 4-d")
            koff, klen = _blob_ref(entry, "kernel", i)
            boff, blen = _blob_ref(entry, "bias", i)
            kernel = _read_blob(blob, koff, klen, kshape, f"layer {i} kernel")
            bias = _read_blob(blob, boff, blen, (kshape[0],), f"layer {i} bias")
            layers.append(Conv2d(kernel, bias, stride=int(entry.get("stride", 1))))
        elif kind == "dense":
            wshape = tuple(entry["weight_shape"])
            if len(wshape) != 2:
                raise ShapeMismatchError(f"layer {i}: dense weight_shape must be 2-d")
            woff, wlen = _blob_ref(entry, "weight", i)
            boff, blen = _blob_ref(entry, "bias", i)
            weight = _read_blob(blob, woff, wlen, wshape, f"layer {i} weight")
            bias = _read_blob(blob, boff, blen, (wshape[0],), f"layer {i} bias")
            layers.append(Dense(weight, bias))
        elif kind == "relu":
            layers.append(Relu())
        elif kind == "maxpool2d":
            layers.append(MaxPool2d(int(entry["window"]), int(entry["stride"])))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise UnsupportedLayerError(f"layer {i}: unsupported kind '{kind}'")

    return Model(
        name=str(header["name"]),
        input_shape=tuple(header["input_shape"]),
        label_count=int(header["label_count"]),
        layers=layers,
    )


def save_model(path, model: Model) -> None:
    """Write a model to an `.nnwc` container (bit-reproducible)."""
    entries = []
    blobs = []
    offset = 0

    def add_blob(arr: np.ndarray) -> dict:
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        ref = {"offset": offset, "length": len(raw)}
        blobs.append(raw)
        offset += len(raw)
        return ref

    for layer in model.layers:
        if isinstance(layer, Conv2d):
            entries.append(
                {
                    "kind": "conv2d",
                    "kernel_shape": list(layer.kernel.shape),
                    "stride": layer.stride,
                    "kernel": add_blob(layer.kernel),
                    "bias": add_blob(layer.bias),
                }
            )
        elif isinstance(layer, Dense):
            entries.append(
                {
                    "kind": "dense",
                    "weight_shape": list(layer.weight.shape),
                    "weight": add_blob(layer.weight),
                    "bias": add_blob(layer.bias),
                }
            )
        elif isinstance(layer, Relu):
            entries.append({"kind": "relu"})
        elif isinstance(layer, MaxPool2d):
            entries.append({"kind": "maxpool2d", "window": layer.window, "stride": layer.stride})
        elif isinstance(layer, Flatten):
            entries.append({"kind": "flatten"})
        elif isinstance(layer, Softmax):
            entries.append({"kind": "softmax"})
        else:
            raise UnsupportedLayerError(f"cannot serialize layer kind {type(layer).__name__}")

    header = {
        "name": model.name,
        "input_shape": list(model.input_shape),
        "label_count": model.label_count,
        "layers": entries,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        write_header(f, NNWC_MAGIC, header)
        for raw in blobs:
            f.write(raw)


@dataclass
class Dataset:
    """A batch of float32 samples in [0, 1] with optional uint8 labels."""

    images: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
            if len(self.labels) != len(self.images):
                raise ShapeMismatchError(
                    f"{len(self.labels)} labels for {len(self.images)} samples"
                )

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images, dtype="<f4").tobytes())
        if self.labels is not None:
            h.update(self.labels.tobytes())
        return h.hexdigest()


def save_dataset(path, dataset: Dataset) -> None:
    header = {
        "sample_count": len(dataset),
        "sample_shape": list(dataset.sample_shape),
        "has_labels": dataset.labels is not None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        write_header(f, TDS_MAGIC, header)
        f.write(np.ascontiguousarray(dataset.images, dtype="<f4").tobytes())
        if dataset.labels is not None:
            f.write(dataset.labels.tobytes())


def _load_tds(f) -> Dataset:
    header = read_header(f, TDS_MAGIC)
    count = int(header["sample_count"])
    shape = tuple(header["sample_shape"])
    per_sample = int(np.prod(shape)) if shape else 1
    raw = _read_exact(f, count * per_sample * 4, "sample blob")
    images = np.frombuffer(raw, dtype="<f4").reshape((count,) + shape).astype(np.float32)
    labels = None
    if header.get("has_labels"):
        labels = np.frombuffer(_read_exact(f, count, "label blob"), dtype=np.uint8).copy()
    return Dataset(images=images, labels=labels)


def _load_idx_images(f) -> np.ndarray:
    head = _read_exact(f, 4, "IDX magic")
    (magic,) = struct.unpack(">I", head)
    if magic != IDX_IMAGES_MAGIC:
        raise MalformedHeaderError(f"not an IDX image file (magic 0x{magic:08x})")
    n, rows, cols = struct.unpack(">III", _read_exact(f, 12, "IDX dims"))
    raw = _read_exact(f, n * rows * cols, "IDX pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols, 1)
    return pixels.astype(np.float32) / np.float32(255.0)


def _load_idx_labels(f) -> np.ndarray:
    head = _read_exact(f, 4, "IDX magic")
    (magic,) = struct.unpack(">I", head)
    if magic != IDX_LABELS_MAGIC:
        raise MalformedHeaderError(f"not an IDX label file (magic 0x{magic:08x})")
    (n,) = struct.unpack(">I", _read_exact(f, 4, "IDX count"))
    return np.frombuffer(_read_exact(f, n, "IDX labels"), dtype=np.uint8).copy()


def load_dataset(path, labels_path=None) -> Dataset:
    """Load a `.tds` container or an IDX image file (optionally paired with
    an IDX label file)."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(8)
        f.seek(0)
        if magic == TDS_MAGIC:
            dataset = _load_tds(f)
        elif len(magic) >= 4 and struct.unpack(">I", magic[:4])[0] == IDX_IMAGES_MAGIC:
            dataset = Dataset(images=_load_idx_images(f))
        else:
            raise MalformedHeaderError(f"{path.name}: unrecognized container magic")
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            dataset = Dataset(images=dataset.images, labels=_load_idx_labels(f))
    return dataset


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
