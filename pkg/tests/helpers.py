"""Shared builders for randomized test models."""

from __future__ import annotations

import numpy as np

from covfuzz.model import Conv2d, Dense, Flatten, MaxPool2d, Model, Relu, Softmax


def _u(rng, shape, scale=1.0):
    return (rng.uniform(-0.5, 0.5, size=shape) * scale).astype(np.float32)


def random_micro_model(rng: np.random.Generator) -> Model:
    """A small random conv/dense stack on a <= 8x8 input."""
    h = int(rng.integers(5, 9))
    w = int(rng.integers(5, 9))
    c = int(rng.integers(1, 3))
    labels = int(rng.integers(2, 6))
    layers = []
    shape = (h, w, c)

    blocks = int(rng.integers(1, 3))
    for _ in range(blocks):
        if len(shape) != 3 or shape[0] < 3 or shape[1] < 3:
            break
        k = int(rng.integers(2, min(4, shape[0], shape[1]) + 1))
        out_c = int(rng.integers(2, 5))
        conv = Conv2d(_u(rng, (out_c, shape[2], k, k), 0.8), _u(rng, (out_c,), 0.2))
        layers.append(conv)
        shape = conv.output_shape(shape)
        if rng.random() < 0.8:
            layers.append(Relu())
        if shape[0] >= 3 and shape[1] >= 3 and rng.random() < 0.5:
            pool = MaxPool2d(2, int(rng.integers(1, 3)))
            layers.append(pool)
            shape = pool.output_shape(shape)

    layers.append(Flatten())
    flat = int(np.prod(shape))
    if rng.random() < 0.5:
        hidden = int(rng.integers(3, 8))
        layers.append(Dense(_u(rng, (hidden, flat), 0.6), _u(rng, (hidden,), 0.2)))
        layers.append(Relu())
        flat = hidden
    layers.append(Dense(_u(rng, (labels, flat), 0.6), _u(rng, (labels,), 0.2)))
    if rng.random() < 0.5:
        layers.append(Softmax())
    return Model("random-micro", (h, w, c), labels, layers)


def random_input(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.random(shape).astype(np.float32)
