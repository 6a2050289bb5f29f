"""Coverage criteria as interchangeable stateful trackers.

Each tracker owns the committed covered-class set for the current test set T
and answers the central query cov(T ∪ batch) − cov(T) without mutating that
state. Ratio criteria (neuron, k-multisection, boundary, strong-activation)
report |covered| / total_classes; the penultimate-vector criterion reports a
plain count of stored vectors.

Class identifiers are flat integers: neurons are numbered 0..N−1 in layer
order, k-multisection classes are neuron*k + section, boundary classes are
neuron*2 + {0: lower, 1: upper}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import defaults
from .containers import PROFILE_MAGIC, Dataset, read_header, write_header
from .errors import ConfigError, ProfileMismatchError
from .model import ActivationRecord, Model, forward_batch


@dataclass
class NeuronProfile:
    """Per-neuron activation bounds observed over the training set."""

    layout: list  # [(layer index, neuron count)] in model order
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.layout = [(int(i), int(n)) for i, n in self.layout]
        self.low = np.ascontiguousarray(self.low, dtype=np.float32)
        self.high = np.ascontiguousarray(self.high, dtype=np.float32)
        total = sum(n for _, n in self.layout)
        if self.low.shape != (total,) or self.high.shape != (total,):
            raise ProfileMismatchError(
                f"profile bounds shaped {self.low.shape}/{self.high.shape} "
                f"for {total} neurons"
            )
        if np.any(self.low > self.high):
            raise ProfileMismatchError("profile has low > high")

    @property
    def total_neurons(self) -> int:
        return int(self.low.shape[0])


def profile_training_set(model: Model, train, chunk: int = 256) -> NeuronProfile:
    """Exact per-neuron min/max activation over every training sample."""
    images = train.images if isinstance(train, Dataset) else np.asarray(train)
    if len(images) == 0:
        raise ConfigError("cannot profile an empty training set")
    layout = model.neuron_layers()
    low = None
    high = None
    for start in range(0, len(images), chunk):
        records = forward_batch(model, images[start : start + chunk])
        mat = activation_matrix(records, layout)
        lo = mat.min(axis=0)
        hi = mat.max(axis=0)
        low = lo if low is None else np.minimum(low, lo)
        high = hi if high is None else np.maximum(high, hi)
    return NeuronProfile(layout=layout, low=low, high=high)


def activation_matrix(records: list, layout: list) -> np.ndarray:
    """Stack records into a (batch, total neurons) float32 matrix.

    Raises ProfileMismatchError when a record's layer layout disagrees with
    the expected one.
    """
    rows = []
    for r, rec in enumerate(records):
        parts = []
        for layer_idx, count in layout:
            vec = rec.activations.get(layer_idx)
            if vec is None or vec.shape != (count,):
                raise ProfileMismatchError(
                    f"record {r}: layer {layer_idx} expects {count} neurons, "
                    f"got {None if vec is None else vec.shape}"
                )
            parts.append(vec)
        rows.append(np.concatenate(parts))
    return np.stack(rows).astype(np.float32, copy=False)


def _layer_slices(layout: list) -> list:
    slices = []
    start = 0
    for _, count in layout:
        slices.append(slice(start, start + count))
        start += count
    return slices


class CoverageTracker:
    """Common bookkeeping for the set-based criteria."""

    kind = "abstract"

    def __init__(self, layout: list, total_classes: int):
        self.layout = [(int(i), int(n)) for i, n in layout]
        self.covered: set[int] = set()
        self._total_classes = int(total_classes)

    @property
    def total_classes(self) -> int | None:
        return self._total_classes

    @property
    def covered_count(self) -> int:
        return len(self.covered)

    @property
    def value(self) -> float:
        return len(self.covered) / self._total_classes

    def classes_covered_by(self, records: list) -> set:
        raise NotImplementedError

    def coverage_increase(self, records: list) -> float:
        if not records:
            return 0.0
        new = self.classes_covered_by(records)
        union = len(self.covered | new)
        return union / self._total_classes - len(self.covered) / self._total_classes

    def commit(self, records: list) -> "CoverageTracker":
        if records:
            self.covered |= self.classes_covered_by(records)
        return self

    def hyperparameters(self) -> dict:
        return {}

    def report(self) -> dict:
        return {
            "criterion": self.kind,
            "hyperparameters": self.hyperparameters(),
            "value": self.value,
            "covered": self.covered_count,
            "total_classes": self.total_classes,
        }


class NeuronCoverage(CoverageTracker):
    """Neurons whose (scaled) activation exceeds a threshold for some input."""

    kind = "nc"

    def __init__(self, layout: list, threshold: float = defaults.NC_THRESHOLD, scaled: bool = True):
        super().__init__(layout, total_classes=sum(n for _, n in layout))
        self.threshold = float(threshold)
        self.scaled = bool(scaled)
        self._slices = _layer_slices(self.layout)

    def classes_covered_by(self, records: list) -> set:
        mat = activation_matrix(records, self.layout)
        if self.scaled:
            scaled = np.zeros_like(mat)
            for sl in self._slices:
                seg = mat[:, sl]
                lo = seg.min(axis=1, keepdims=True)
                hi = seg.max(axis=1, keepdims=True)
                span = hi - lo
                nz = span[:, 0] > 0
                scaled[nz, sl] = (seg[nz] - lo[nz]) / span[nz]
            mat = scaled
        hit = (mat > self.threshold).any(axis=0)
        return set(np.flatnonzero(hit).tolist())

    def hyperparameters(self) -> dict:
        return {"threshold": self.threshold, "scaled": self.scaled}


class _ProfiledTracker(CoverageTracker):
    def __init__(self, profile: NeuronProfile, total_classes: int):
        super().__init__(profile.layout, total_classes)
        self.profile = profile


class KMultisectionCoverage(_ProfiledTracker):
    """Sections of each neuron's training-set activation range that were hit.

    Activations outside [low, high] hit no section; the top section is closed
    at high. A degenerate range (low == high) keeps a single reachable
    section, covered by an activation equal to the bound.
    """

    kind = "kmn"

    def __init__(self, profile: NeuronProfile, k: int = defaults.KMN_SECTIONS):
        super().__init__(profile, total_classes=profile.total_neurons * int(k))
        self.k = int(k)
        if self.k < 1:
            raise ConfigError("k must be >= 1")

    def classes_covered_by(self, records: list) -> set:
        mat = activation_matrix(records, self.layout)
        low, high = self.profile.low, self.profile.high
        span = high - low
        in_range = (mat >= low) & (mat <= high)
        with np.errstate(divide="ignore", invalid="ignore"):
            sec = np.floor((mat - low) / span * self.k)
        sec = np.where(np.isfinite(sec), sec, 0.0)  # degenerate span -> section 0
        sec = np.clip(sec, 0, self.k - 1).astype(np.int64)
        neuron_ids = np.arange(mat.shape[1], dtype=np.int64)
        class_ids = neuron_ids * self.k + sec
        return set(np.unique(class_ids[in_range]).tolist())

    def hyperparameters(self) -> dict:
        return {"k": self.k}


class BoundaryCoverage(_ProfiledTracker):
    """Activations strictly outside the training-set bounds, both sides."""

    kind = "nbc"

    def __init__(self, profile: NeuronProfile):
        super().__init__(profile, total_classes=2 * profile.total_neurons)

    def classes_covered_by(self, records: list) -> set:
        mat = activation_matrix(records, self.layout)
        neuron_ids = np.arange(mat.shape[1], dtype=np.int64)
        lower_hit = (mat < self.profile.low).any(axis=0)
        upper_hit = (mat > self.profile.high).any(axis=0)
        classes = set((neuron_ids[lower_hit] * 2).tolist())
        classes |= set((neuron_ids[upper_hit] * 2 + 1).tolist())
        return classes


class StrongActivationCoverage(_ProfiledTracker):
    """Activations strictly above the training-set maximum, upper side only."""

    kind = "snac"

    def __init__(self, profile: NeuronProfile):
        super().__init__(profile, total_classes=profile.total_neurons)

    def classes_covered_by(self, records: list) -> set:
        mat = activation_matrix(records, self.layout)
        hit = (mat > self.profile.high).any(axis=0)
        return set(np.flatnonzero(hit).tolist())


class TensorFuzzCoverage:
    """Penultimate-layer vectors pairwise farther than a distance threshold.

    Coverage value is the count of stored vectors. A batch is processed
    sequentially: a vector is new iff its squared Euclidean distance to every
    already-stored vector (committed plus earlier additions from the same
    call) exceeds the threshold.
    """

    kind = "tfc"

    def __init__(self, threshold: float):
        self.threshold = float(threshold)
        self.stored: list[np.ndarray] = []

    @property
    def total_classes(self) -> None:
        return None

    @property
    def covered_count(self) -> int:
        return len(self.stored)

    @property
    def value(self) -> float:
        return float(len(self.stored))

    def _new_vectors(self, records: list) -> list:
        accepted: list[np.ndarray] = []
        for rec in records:
            vec = np.asarray(rec.penultimate, dtype=np.float32)
            is_new = True
            for old in self.stored:
                if old.shape != vec.shape:
                    raise ProfileMismatchError(
                        f"penultimate vector {vec.shape} vs stored {old.shape}"
                    )
                diff = vec - old
                if float(diff @ diff) <= self.threshold:
                    is_new = False
                    break
            if is_new:
                for prev in accepted:
                    diff = vec - prev
                    if float(diff @ diff) <= self.threshold:
                        is_new = False
                        break
            if is_new:
                accepted.append(vec)
        return accepted

    def classes_covered_by(self, records: list) -> list:
        return self._new_vectors(records)

    def coverage_increase(self, records: list) -> float:
        return float(len(self._new_vectors(records)))

    def commit(self, records: list) -> "TensorFuzzCoverage":
        self.stored.extend(self._new_vectors(records))
        return self

    def hyperparameters(self) -> dict:
        return {"threshold": self.threshold}

    def report(self) -> dict:
        return {
            "criterion": self.kind,
            "hyperparameters": self.hyperparameters(),
            "value": self.value,
            "covered": self.covered_count,
            "total_classes": None,
        }


class NullCoverage:
    """Always-zero criterion, useful for exercising the reward-free regime."""

    kind = "null"

    total_classes = None
    covered_count = 0
    value = 0.0

    def classes_covered_by(self, records: list) -> set:
        return set()

    def coverage_increase(self, records: list) -> float:
        return 0.0

    def commit(self, records: list) -> "NullCoverage":
        return self

    def hyperparameters(self) -> dict:
        return {}

    def report(self) -> dict:
        return {
            "criterion": self.kind,
            "hyperparameters": {},
            "value": 0.0,
            "covered": 0,
            "total_classes": None,
        }


PROFILE_FREE_KINDS = {"nc", "tfc", "null"}


def make_tracker(kind: str, model: Model, profile: NeuronProfile | None = None, **params):
    """Build a tracker by criterion name; profiled criteria require a profile."""
    kind = kind.lower()
    layout = model.neuron_layers()
    if kind == "nc":
        return NeuronCoverage(
            layout,
            threshold=params.get("threshold", defaults.NC_THRESHOLD),
            scaled=params.get("scaled", True),
        )
    if kind in ("kmn", "nbc", "snac"):
        if profile is None:
            raise ConfigError(f"criterion '{kind}' requires a training-set profile")
        if profile.layout != layout:
            raise ProfileMismatchError("profile layout does not match model")
        if kind == "kmn":
            return KMultisectionCoverage(profile, k=params.get("k", defaults.KMN_SECTIONS))
        if kind == "nbc":
            return BoundaryCoverage(profile)
        return StrongActivationCoverage(profile)
    if kind == "tfc":
        threshold = params.get("threshold")
        if threshold is None:
            threshold = defaults.TFC_THRESHOLDS[params.get("model_profile", "lenet1")]
        return TensorFuzzCoverage(threshold=threshold)
    if kind == "null":
        return NullCoverage()
    raise ConfigError(f"unknown coverage criterion '{kind}'")


def save_profile(path, profile: NeuronProfile, model_name: str, dataset_digest: str) -> None:
    header = {
        "model_name": model_name,
        "dataset_digest": dataset_digest,
        "layout": [[i, n] for i, n in profile.layout],
    }
    with open(path, "wb") as f:
        write_header(f, PROFILE_MAGIC, header)
        f.write(np.ascontiguousarray(profile.low, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(profile.high, dtype="<f4").tobytes())


def load_profile(path) -> tuple[NeuronProfile, str, str]:
    with open(path, "rb") as f:
        header = read_header(f, PROFILE_MAGIC)
        layout = [(int(i), int(n)) for i, n in header["layout"]]
        total = sum(n for _, n in layout)
        low = np.frombuffer(f.read(total * 4), dtype="<f4").astype(np.float32)
        high = np.frombuffer(f.read(total * 4), dtype="<f4").astype(np.float32)
    profile = NeuronProfile(layout=layout, low=low, high=high)
    return profile, str(header["model_name"]), str(header["dataset_digest"])
