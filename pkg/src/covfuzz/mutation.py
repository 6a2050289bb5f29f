"""Localized image mutations over a region grid, plus the seed-distance rule.

An image is tiled by a small grid of rectangular regions (the last row and
column absorb any remainder). A complete action is a (region index, mutation
index) pair; applying it transforms the same region of every image in a
batch identically. All operators are pure: inputs are never written.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import defaults
from .errors import ConfigError, ShapeMismatchError


class CompleteAction(NamedTuple):
    region: int
    mutation: int


class Rect(NamedTuple):
    """Half-open pixel rectangle [r0, r1) x [c0, c1)."""

    r0: int
    r1: int
    c0: int
    c1: int


def enumerate_regions(image_shape: tuple, rows: int, cols: int) -> list[Rect]:
    """Tile the image exactly; remainder pixels go to the last row/column.

    Regions are enumerated row-major: index = row * cols + col.
    """
    h, w = int(image_shape[0]), int(image_shape[1])
    if rows < 1 or cols < 1:
        raise ConfigError("region grid must be at least 1x1")
    if rows > h or cols > w:
        raise ConfigError(f"grid {rows}x{cols} larger than image {h}x{w}")
    base_h, base_w = h // rows, w // cols
    rects = []
    for r in range(rows):
        r0 = r * base_h
        r1 = (r + 1) * base_h if r < rows - 1 else h
        for c in range(cols):
            c0 = c * base_w
            c1 = (c + 1) * base_w if c < cols - 1 else w
            rects.append(Rect(r0, r1, c0, c1))
    return rects


@dataclass(frozen=True)
class MutationKind:
    name: str
    op: str  # brightness | contrast | blur
    amount: float = 0.0  # signed delta for brightness, factor for contrast
    kernel: int = defaults.BLUR_KERNEL


def standard_mutations(
    delta: float = defaults.BRIGHTNESS_DELTA,
    gamma: float = defaults.CONTRAST_GAMMA,
    blur_kernel: int = defaults.BLUR_KERNEL,
) -> list[MutationKind]:
    """The five stock mutations, in fixed enumeration order."""
    return [
        MutationKind("brightness+", "brightness", +delta),
        MutationKind("brightness-", "brightness", -delta),
        MutationKind("contrast+", "contrast", gamma),
        MutationKind("contrast-", "contrast", 1.0 / gamma),
        MutationKind("blur", "blur", kernel=blur_kernel),
    ]


def _blur_region(batch: np.ndarray, rect: Rect, kernel: int) -> np.ndarray:
    """Mean-filter the region. Taps may read up to kernel//2 pixels beyond the
    region (true pixels inside the image, edge-replicated outside it); writes
    stay strictly inside the region."""
    pad = kernel // 2
    h, w = batch.shape[1], batch.shape[2]
    read_r0, read_r1 = max(rect.r0 - pad, 0), min(rect.r1 + pad, h)
    read_c0, read_c1 = max(rect.c0 - pad, 0), min(rect.c1 + pad, w)
    window = batch[:, read_r0:read_r1, read_c0:read_c1, :]
    pad_spec = (
        (0, 0),
        (pad - (rect.r0 - read_r0), pad - (read_r1 - rect.r1)),
        (pad - (rect.c0 - read_c0), pad - (read_c1 - rect.c1)),
        (0, 0),
    )
    window = np.pad(window, pad_spec, mode="edge")
    tiles = sliding_window_view(window, (kernel, kernel), axis=(1, 2))
    return tiles.mean(axis=(4, 5), dtype=np.float32)


def apply_mutation(
    batch: np.ndarray, action: CompleteAction, rects: list[Rect], kinds: list[MutationKind]
) -> np.ndarray:
    """Apply one (region, mutation) pair uniformly to every image.

    Returns a new batch; all output pixels are clamped to [0, 1].
    """
    batch = np.asarray(batch, dtype=np.float32)
    region, mutation = int(action[0]), int(action[1])
    if not 0 <= region < len(rects):
        raise IndexError(f"region index {region} out of range 0..{len(rects) - 1}")
    if not 0 <= mutation < len(kinds):
        raise IndexError(f"mutation index {mutation} out of range 0..{len(kinds) - 1}")
    rect = rects[region]
    kind = kinds[mutation]

    out = batch.copy()
    seg = out[:, rect.r0 : rect.r1, rect.c0 : rect.c1, :]
    if kind.op == "brightness":
        seg = seg + np.float32(kind.amount)
    elif kind.op == "contrast":
        seg = np.float32(0.5) + np.float32(kind.amount) * (seg - np.float32(0.5))
    elif kind.op == "blur":
        seg = _blur_region(batch, rect, kind.kernel)
    else:
        raise ConfigError(f"unknown mutation op '{kind.op}'")
    out[:, rect.r0 : rect.r1, rect.c0 : rect.c1, :] = np.clip(seg, 0.0, 1.0)
    return out


def within_distance(
    mutated: np.ndarray,
    seed: np.ndarray,
    metric: str = defaults.DISTANCE_METRIC,
    epsilon: float = defaults.DISTANCE_EPSILON,
    alpha: float = defaults.DISTANCE_ALPHA,
    beta: float = defaults.DISTANCE_BETA,
) -> bool:
    """True iff the mutated image stays strictly inside the distance budget."""
    mutated = np.asarray(mutated)
    seed = np.asarray(seed)
    if mutated.shape != seed.shape:
        raise ShapeMismatchError(f"shapes differ: {mutated.shape} vs {seed.shape}")
    diff = mutated.astype(np.float32) - seed.astype(np.float32)
    if metric == "linf":
        return float(np.abs(diff).max(initial=0.0)) < epsilon
    if metric == "l2":
        return float(np.sqrt((diff * diff).sum())) < epsilon
    if metric == "deephunter":
        # Few changed pixels: any magnitude; otherwise fall back to a max-norm
        # bound of beta.
        changed = int(np.count_nonzero(diff))
        if changed < alpha * diff.size:
            return True
        return float(np.abs(diff).max(initial=0.0)) < beta
    raise ConfigError(f"unknown distance metric '{metric}'")


def batch_within_distance(mutated_batch, seed_batch, **kwargs) -> bool:
    """A batch passes iff every image passes."""
    mutated_batch = np.asarray(mutated_batch)
    seed_batch = np.asarray(seed_batch)
    if mutated_batch.shape != seed_batch.shape:
        raise ShapeMismatchError(
            f"batch shapes differ: {mutated_batch.shape} vs {seed_batch.shape}"
        )
    return all(
        within_distance(mutated_batch[i], seed_batch[i], **kwargs)
        for i in range(mutated_batch.shape[0])
    )


@dataclass
class MutatorConfig:
    """Grid, mutation set, and distance rule for one campaign."""

    grid_rows: int = defaults.REGION_GRID[0]
    grid_cols: int = defaults.REGION_GRID[1]
    brightness_delta: float = defaults.BRIGHTNESS_DELTA
    contrast_gamma: float = defaults.CONTRAST_GAMMA
    blur_kernel: int = defaults.BLUR_KERNEL
    metric: str = defaults.DISTANCE_METRIC
    epsilon: float = defaults.DISTANCE_EPSILON
    alpha: float = defaults.DISTANCE_ALPHA
    beta: float = defaults.DISTANCE_BETA
    kinds: list = field(init=False)

    def __post_init__(self):
        self.kinds = standard_mutations(
            self.brightness_delta, self.contrast_gamma, self.blur_kernel
        )

    @property
    def region_count(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def mutation_count(self) -> int:
        return len(self.kinds)

    def rects(self, image_shape: tuple) -> list[Rect]:
        return enumerate_regions(image_shape, self.grid_rows, self.grid_cols)

    def apply(self, batch: np.ndarray, action: CompleteAction) -> np.ndarray:
        return apply_mutation(batch, action, self.rects(batch.shape[1:]), self.kinds)

    def batch_ok(self, mutated_batch, seed_batch) -> bool:
        return batch_within_distance(
            mutated_batch,
            seed_batch,
            metric=self.metric,
            epsilon=self.epsilon,
            alpha=self.alpha,
            beta=self.beta,
        )
