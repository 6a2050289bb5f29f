"""Deterministic desk-scale fixture assets: seeded-weight models in the
LeNet family plus procedural micro-datasets, so the whole suite runs with no
downloads.

The `lenet1-shape` architecture is sized to carry exactly 7206 parameters
under valid padding: conv 1->4 (5x5), pool 2/2, conv 4->12 (5x5), pool 2/1,
dense 588->10. Weights are untrained; every test here is about the fuzzer,
not model accuracy. Weight scales are calibrated so the coverage criteria
start with headroom (neuron coverage strictly below 100% on the synthetic
train split, k-multisection below 20%).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .containers import Dataset, file_digest, save_dataset, save_model
from .coverage import make_tracker, profile_training_set
from .errors import ConfigError
from .model import Conv2d, Dense, Flatten, MaxPool2d, Model, Relu, Softmax, forward_batch

ARCHITECTURES = ("lenet1-shape", "micro-cnn", "dense-only")


@dataclass
class FixtureSpec:
    architecture: str = "lenet1-shape"
    weight_seed: int = 7
    data_seed: int = 11
    train_count: int = 100
    test_count: int = 100
    generator: str = "blobs-stripes"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture '{self.architecture}'")
        if self.train_count < 1 or self.test_count < 1:
            raise ConfigError("fixture datasets must be non-empty")

    def sample_shape(self) -> tuple:
        return {
            "lenet1-shape": (28, 28, 1),
            "micro-cnn": (8, 8, 1),
            "dense-only": (16,),
        }[self.architecture]


def _uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return (rng.uniform(-0.5, 0.5, size=shape) * scale).astype(np.float32)


def _conv(rng, out_c, in_c, k, stride=1) -> Conv2d:
    fan_in = in_c * k * k
    scale = 2.0 / np.sqrt(fan_in)
    return Conv2d(
        _uniform(rng, (out_c, in_c, k, k), scale),
        _uniform(rng, (out_c,), 0.1),
        stride=stride,
    )


def _dense(rng, out_n, in_n) -> Dense:
    scale = 2.0 / np.sqrt(in_n)
    return Dense(_uniform(rng, (out_n, in_n), scale), _uniform(rng, (out_n,), 0.1))


def build_model(architecture: str, weight_seed: int) -> Model:
    rng = np.random.default_rng(weight_seed)
    if architecture == "lenet1-shape":
        layers = [
            _conv(rng, 4, 1, 5),
            Relu(),
            MaxPool2d(2, 2),
            _conv(rng, 12, 4, 5),
            Relu(),
            MaxPool2d(2, 1),
            Flatten(),
            _dense(rng, 10, 588),
            Softmax(),
        ]
        return Model("lenet1-shape", (28, 28, 1), 10, layers)
    if architecture == "micro-cnn":
        layers = [
            _conv(rng, 3, 1, 3),
            Relu(),
            MaxPool2d(2, 2),
            Flatten(),
            _dense(rng, 10, 27),
            Softmax(),
        ]
        return Model("micro-cnn", (8, 8, 1), 10, layers)
    if architecture == "dense-only":
        layers = [
            _dense(rng, 12, 16),
            Relu(),
            _dense(rng, 10, 12),
            Softmax(),
        ]
        return Model("dense-only", (16,), 10, layers)
    raise ConfigError(f"unknown architecture '{architecture}'")


_BLOB_ANCHORS = [(0.3, 0.3), (0.3, 0.7), (0.7, 0.3), (0.7, 0.7), (0.5, 0.5)]


def _synth_image(cls: int, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if cls < 5:
        ay, ax = _BLOB_ANCHORS[cls]
        cy = ay * h + rng.normal(0, 0.04 * h)
        cx = ax * w + rng.normal(0, 0.04 * w)
        sigma = max((0.10 + 0.015 * cls) * h + rng.normal(0, 0.01 * h), 0.5)
        img = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
    else:
        k = cls - 5
        period = 3.0 + k
        phase = rng.uniform(0, period)
        coord = (yy, xx, yy + xx)[k % 3]
        img = 0.5 + 0.5 * np.sin(2.0 * np.pi * (coord + phase) / period)
    img = img + rng.normal(0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synth_dataset(count: int, sample_shape: tuple, seed: int) -> Dataset:
    """Procedural blob/stripe images, one generator class per label (i % 10)."""
    rng = np.random.default_rng(seed)
    if len(sample_shape) == 3:
        h, w, c = sample_shape
    else:
        side = int(round(float(np.prod(sample_shape)) ** 0.5))
        h, w, c = side, side, 1
    images = np.empty((count,) + sample_shape, dtype=np.float32)
    labels = np.empty(count, dtype=np.uint8)
    for i in range(count):
        cls = i % 10
        img = _synth_image(cls, rng, h, w).astype(np.float32)
        if len(sample_shape) == 3:
            images[i] = np.repeat(img[:, :, None], c, axis=2)
        else:
            images[i] = img.reshape(sample_shape)
        labels[i] = cls
    return Dataset(images=images, labels=labels)


def _criteria_headroom(model: Model, train: Dataset) -> bool:
    records = forward_batch(model, train.images)
    nc = make_tracker("nc", model)
    nc.commit(records)
    if nc.value >= 1.0:
        return False
    profile = profile_training_set(model, train)
    kmn = make_tracker("kmn", model, profile=profile)
    kmn.commit(records)
    return 0.0 < kmn.value < 0.2


def generate_fixture(spec: FixtureSpec, out_dir) -> dict:
    """Write the weight container, train/test datasets, and a digest manifest.

    Identical specs produce bit-identical files. Weight seeds are salted
    deterministically until the coverage-headroom calibration passes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shape = spec.sample_shape()
    train = synth_dataset(spec.train_count, shape, spec.data_seed)
    test = synth_dataset(spec.test_count, shape, spec.data_seed + 1)

    model = None
    salt_used = None
    for salt in range(20):
        candidate = build_model(spec.architecture, spec.weight_seed + salt)
        if _criteria_headroom(candidate, train):
            model, salt_used = candidate, salt
            break
    if model is None:
        raise ConfigError(
            f"no weight seed in {spec.weight_seed}..{spec.weight_seed + 19} gives the "
            f"coverage criteria headroom for '{spec.architecture}'"
        )

    model_path = out_dir / f"{spec.architecture}.nnwc"
    train_path = out_dir / "train.tds"
    test_path = out_dir / "test.tds"
    save_model(model_path, model)
    save_dataset(train_path, train)
    save_dataset(test_path, test)

    manifest = {
        "spec": asdict(spec),
        "weight_salt": salt_used,
        "parameter_count": model.parameter_count,
        "total_neurons": model.total_neurons,
        "files": {
            model_path.name: file_digest(model_path),
            train_path.name: file_digest(train_path),
            test_path.name: file_digest(test_path),
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
