"""Deterministic forward-pass engine for small convolutional networks.

Layers operate on batch-first float32 arrays: images are (B, H, W, C),
flat features are (B, F). Only valid (zero-free) padding is supported.
Every pass records one scalar activation per neuron so the coverage
trackers can consume them: convolution layers contribute one neuron per
output channel (spatial mean of the post-ReLU feature map), dense layers
one neuron per unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyModelError, ShapeMismatchError


class Conv2d:
    kind = "conv2d"

    def __init__(self, kernel: np.ndarray, bias: np.ndarray, stride: int = 1):
        self.kernel = np.ascontiguousarray(kernel, dtype=np.float32)
        self.bias = np.ascontiguousarray(bias, dtype=np.float32)
        self.stride = int(stride)
        if self.kernel.ndim != 4:
            raise ShapeMismatchError(f"conv2d kernel must be 4-d, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ShapeMismatchError(
                f"conv2d bias length {self.bias.shape} does not match out channels "
                f"{self.kernel.shape[0]}"
            )
        if self.stride < 1:
            raise ShapeMismatchError("conv2d stride must be >= 1")

    @property
    def param_count(self) -> int:
        return self.kernel.size + self.bias.size

    def output_shape(self, input_shape: tuple) -> tuple:
        if len(input_shape) != 3:
            raise ShapeMismatchError(f"conv2d expects (H, W, C) input, got {input_shape}")
        h, w, c = input_shape
        out_c, in_c, kh, kw = self.kernel.shape
        if in_c != c:
            raise ShapeMismatchError(f"conv2d kernel expects {in_c} channels, input has {c}")
        if kh > h or kw > w:
            raise ShapeMismatchError(f"conv2d kernel {kh}x{kw} larger than input {h}x{w}")
        oh = (h - kh) // self.stride + 1
        ow = (w - kw) // self.stride + 1
        return (oh, ow, out_c)

    def apply(self, x: np.ndarray) -> np.ndarray:
        kh, kw = self.kernel.shape[2], self.kernel.shape[3]
        # (B, OH', OW', C, kh, kw) view over all unit-stride windows
        windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
        windows = windows[:, :: self.stride, :: self.stride]
        out = np.einsum(
            "bhwckl,ockl->bhwo", windows, self.kernel, dtype=np.float32, casting="same_kind"
        )
        return out + self.bias


class Dense:
    kind = "dense"

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.ascontiguousarray(weight, dtype=np.float32)
        self.bias = np.ascontiguousarray(bias, dtype=np.float32)
        if self.weight.ndim != 2:
            raise ShapeMismatchError(f"dense weight must be 2-d, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatchError(
                f"dense bias length {self.bias.shape} does not match out size "
                f"{self.weight.shape[0]}"
            )

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size

    def output_shape(self, input_shape: tuple) -> tuple:
        if len(input_shape) != 1:
            raise ShapeMismatchError(f"dense expects flat input, got {input_shape}")
        if input_shape[0] != self.weight.shape[1]:
            raise ShapeMismatchError(
                f"dense weight expects {self.weight.shape[1]} features, input has {input_shape[0]}"
            )
        return (self.weight.shape[0],)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias


class Relu:
    kind = "relu"
    param_count = 0

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, np.float32(0.0))


class MaxPool2d:
    kind = "maxpool2d"
    param_count = 0

    def __init__(self, window: int, stride: int):
        self.window = int(window)
        self.stride = int(stride)
        if self.window < 1 or self.stride < 1:
            raise ShapeMismatchError("maxpool2d window and stride must be >= 1")

    def output_shape(self, input_shape: tuple) -> tuple:
        if len(input_shape) != 3:
            raise ShapeMismatchError(f"maxpool2d expects (H, W, C) input, got {input_shape}")
        h, w, c = input_shape
        if self.window > h or self.window > w:
            raise ShapeMismatchError(f"maxpool2d window {self.window} larger than input {h}x{w}")
        oh = (h - self.window) // self.stride + 1
        ow = (w - self.window) // self.stride + 1
        return (oh, ow, c)

    def apply(self, x: np.ndarray) -> np.ndarray:
        windows = sliding_window_view(x, (self.window, self.window), axis=(1, 2))
        windows = windows[:, :: self.stride, :: self.stride]
        return windows.max(axis=(4, 5))


class Flatten:
    kind = "flatten"
    param_count = 0

    def output_shape(self, input_shape: tuple) -> tuple:
        size = 1
        for extent in input_shape:
            size *= extent
        return (size,)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x).reshape(x.shape[0], -1)


class Softmax:
    kind = "softmax"
    param_count = 0

    def output_shape(self, input_shape: tuple) -> tuple:
        if len(input_shape) != 1:
            raise ShapeMismatchError(f"softmax expects flat input, got {input_shape}")
        return input_shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        shifted = x - x.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


Layer = Conv2d | Dense | Relu | MaxPool2d | Flatten | Softmax

NEURON_BEARING = (Conv2d, Dense)


@dataclass
class Model:
    """Ordered layer list with fixed input shape; immutable after load."""

    name: str
    input_shape: tuple
    label_count: int
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(int(e) for e in self.input_shape)
        if not self.layers:
            raise EmptyModelError(f"model '{self.name}' has no layers")
        self.validate()

    def validate(self) -> tuple:
        """Chain layer shapes; returns the final output shape."""
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from exc
            for extent in shape:
                if extent < 1:
                    raise ShapeMismatchError(
                        f"layer {i} ({layer.kind}) produces empty shape {shape}"
                    )
        if shape != (self.label_count,):
            raise ShapeMismatchError(
                f"model output shape {shape} does not match label count {self.label_count}"
            )
        return shape

    @property
    def parameter_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def neuron_layers(self) -> list[tuple[int, int]]:
        """(layer index, neuron count) for every neuron-bearing layer, in order.

        Conv layers contribute one neuron per output channel; dense layers one
        per unit. The enumeration is stable for a fixed model.
        """
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            shape = layer.output_shape(shape)
            if isinstance(layer, Conv2d):
                out.append((i, shape[2]))
            elif isinstance(layer, Dense):
                out.append((i, shape[0]))
        return out

    @property
    def total_neurons(self) -> int:
        return sum(count for _, count in self.neuron_layers())

    def layer_shapes(self) -> list[tuple]:
        """Output shape of every layer, in order."""
        shape = self.input_shape
        shapes = []
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes


@dataclass
class ActivationRecord:
    """Per-layer neuron activations for one input, plus classifier outputs."""

    activations: dict  # layer index -> 1-d float32 vector of neuron activations
    penultimate: np.ndarray  # flat input to the final dense layer
    logits: np.ndarray
    predicted_label: int

    def flat(self) -> np.ndarray:
        """All neuron activations concatenated in layer order."""
        return np.concatenate(list(self.activations.values()))


def _final_dense_index(model: Model) -> int | None:
    for i in range(len(model.layers) - 1, -1, -1):
        if isinstance(model.layers[i], Dense):
            return i
    return None


def forward_arrays(model: Model, xb: np.ndarray) -> tuple[dict, np.ndarray, np.ndarray]:
    """Run a (B, *input_shape) batch through the model.

    Returns (neuron activations as {layer index: (B, n)}, penultimate (B, F),
    logits (B, label_count)). This is the vectorized core that `forward` and
    `forward_batch` slice per-sample records from.
    """
    xb = np.ascontiguousarray(xb, dtype=np.float32)
    if xb.shape[1:] != model.input_shape:
        raise ShapeMismatchError(
            f"input shape {xb.shape[1:]} does not match model input {model.input_shape}"
        )
    outputs = []
    cur = xb
    for layer in model.layers:
        cur = layer.apply(cur)
        outputs.append(cur)

    neuron_acts: dict[int, np.ndarray] = {}
    for i, layer in enumerate(model.layers):
        if not isinstance(layer, NEURON_BEARING):
            continue
        src = outputs[i]
        if i + 1 < len(model.layers) and isinstance(model.layers[i + 1], Relu):
            src = outputs[i + 1]
        if isinstance(layer, Conv2d):
            neuron_acts[i] = src.mean(axis=(1, 2))
        else:
            neuron_acts[i] = src

    dense_idx = _final_dense_index(model)
    if dense_idx is None:
        pen_src = outputs[-2] if len(outputs) > 1 else xb
    elif dense_idx == 0:
        pen_src = xb
    else:
        pen_src = outputs[dense_idx - 1]
    penultimate = np.ascontiguousarray(pen_src).reshape(pen_src.shape[0], -1)

    logits = outputs[-1]
    if isinstance(model.layers[-1], Softmax):
        logits = outputs[-2] if len(outputs) > 1 else xb
    return neuron_acts, penultimate, logits


def _records_from_arrays(neuron_acts, penultimate, logits) -> list[ActivationRecord]:
    batch = penultimate.shape[0]
    labels = logits.argmax(axis=1)
    records = []
    for b in range(batch):
        acts = {i: np.ascontiguousarray(v[b]) for i, v in neuron_acts.items()}
        records.append(
            ActivationRecord(
                activations=acts,
                penultimate=np.ascontiguousarray(penultimate[b]),
                logits=np.ascontiguousarray(logits[b]),
                predicted_label=int(labels[b]),
            )
        )
    return records


def forward(model: Model, x: np.ndarray) -> ActivationRecord:
    """Forward pass for a single input shaped like model.input_shape."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != model.input_shape:
        raise ShapeMismatchError(
            f"input shape {x.shape} does not match model input {model.input_shape}"
        )
    arrays = forward_arrays(model, x[None, ...])
    return _records_from_arrays(*arrays)[0]


def forward_batch(model: Model, batch) -> list[ActivationRecord]:
    """Elementwise `forward` over a batch; order preserved.

    Accepts a list of per-sample arrays or one (B, *input_shape) array. A
    shape failure names the offending element index.
    """
    if isinstance(batch, np.ndarray) and batch.ndim == len(model.input_shape) + 1:
        samples = [batch[i] for i in range(batch.shape[0])]
    else:
        samples = list(batch)
    if not samples:
        return []
    for i, sample in enumerate(samples):
        if np.asarray(sample).shape != model.input_shape:
            raise ShapeMismatchError(
                f"batch element {i}: shape {np.asarray(sample).shape} does not match "
                f"model input {model.input_shape}"
            )
    xb = np.stack([np.asarray(s, dtype=np.float32) for s in samples])
    arrays = forward_arrays(model, xb)
    return _records_from_arrays(*arrays)
