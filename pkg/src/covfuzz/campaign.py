"""Campaign orchestration: the outer fuzzing loop, reporting, and replay.

A campaign iterates seed batches until the termination condition (target
new-input count and/or wall-clock timeout), searches each batch for the
best coverage-increasing mutation sequence, commits winners into the test
set, and writes a fully reproducible artifact directory:

    config.json        resolved configuration (output location omitted)
    report.json        deterministic campaign report
    timing.json        wall clock (kept out of report.json on purpose)
    corpus/batch_*.tds committed batches with inherited ground-truth labels
    provenance.jsonl   (seed indices, action sequence) per committed batch
    trace.jsonl        optional per-candidate search trace

Two runs with the same config and seed produce byte-identical reports,
provenance, and corpora.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import defaults
from .chooser import choose_clustered, choose_random, kmeans_fit
from .containers import Dataset, file_digest, load_dataset, load_model, save_dataset
from .coverage import (
    PROFILE_FREE_KINDS,
    load_profile,
    make_tracker,
    profile_training_set,
    save_profile,
)
from .errors import ConfigError
from .mcts import (
    SearchBudget,
    random_search_batch_with,
    search_batch_with,
)
from .model import Model, forward_batch
from .mutation import CompleteAction, MutatorConfig


class CriterionConfig(BaseModel):
    kind: Literal["nc", "kmn", "nbc", "snac", "tfc", "null"]
    threshold: Optional[float] = None  # nc override or tfc squared distance
    scaled: bool = True  # nc: min-max scale per layer per input
    k: int = defaults.KMN_SECTIONS
    model_profile: Optional[str] = None  # tfc threshold table lookup

    def tracker_params(self) -> dict:
        if self.kind == "nc":
            threshold = defaults.NC_THRESHOLD if self.threshold is None else self.threshold
            return {"threshold": threshold, "scaled": self.scaled}
        if self.kind == "kmn":
            return {"k": self.k}
        if self.kind == "tfc":
            params: dict = {}
            if self.threshold is not None:
                params["threshold"] = self.threshold
            if self.model_profile is not None:
                params["model_profile"] = self.model_profile
            return params
        return {}


class ChooserConfig(BaseModel):
    kind: Literal["random", "clustered"] = "random"
    batch_size: int = Field(default=defaults.BATCH_SIZE, gt=0)
    k: int = Field(default=defaults.KMEANS_CLUSTERS, ge=1)


class MutatorSettings(BaseModel):
    grid_rows: int = defaults.REGION_GRID[0]
    grid_cols: int = defaults.REGION_GRID[1]
    brightness_delta: float = defaults.BRIGHTNESS_DELTA
    contrast_gamma: float = defaults.CONTRAST_GAMMA
    blur_kernel: int = defaults.BLUR_KERNEL
    metric: Literal["linf", "l2", "deephunter"] = defaults.DISTANCE_METRIC
    epsilon: float = defaults.DISTANCE_EPSILON
    alpha: float = defaults.DISTANCE_ALPHA
    beta: float = defaults.DISTANCE_BETA

    def to_config(self) -> MutatorConfig:
        return MutatorConfig(**self.model_dump())


class BudgetConfig(BaseModel):
    max_depth_levels: int = Field(default=defaults.MAX_DEPTH_LEVELS, ge=2)
    iterations_per_root: int = Field(default=defaults.ITERATIONS_PER_ROOT, ge=1)
    exploration: float = defaults.EXPLORATION_CONSTANT
    first_level_sweep: bool = False

    def to_budget(self) -> SearchBudget:
        return SearchBudget(**self.model_dump())


class CampaignConfig(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_path: str
    test_path: str
    train_path: Optional[str] = None  # needed by the profiled criteria
    criterion: CriterionConfig
    chooser: ChooserConfig = ChooserConfig()
    mutator: MutatorSettings = MutatorSettings()
    budget: BudgetConfig = BudgetConfig()
    target_new_inputs: Optional[int] = Field(default=None, gt=0)
    timeout_seconds: Optional[float] = Field(default=None, ge=0)
    seed: int = 0
    output_dir: str = "campaign-out"
    profile_cache: Optional[str] = None
    trace: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.target_new_inputs is None and self.timeout_seconds is None:
            raise ValueError("set target_new_inputs and/or timeout_seconds")
        if self.criterion.kind in ("kmn", "nbc", "snac") and self.train_path is None:
            raise ValueError(f"criterion '{self.criterion.kind}' needs train_path for profiling")
        return self

    def validate_files(self) -> None:
        for label, path in (("model_path", self.model_path), ("test_path", self.test_path),
                            ("train_path", self.train_path)):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label}: no such file: {path}")

    def canonical_json(self) -> str:
        """Stable serialization, independent of where outputs are written."""
        data = self.model_dump(exclude={"output_dir"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))


class IterationRecord(BaseModel):
    batch_indices: list[int]
    cluster: Optional[int] = None
    best_increase: float
    committed: bool
    evaluations: int
    applications: int
    corpus_file: Optional[str] = None


class AdversarialStats(BaseModel):
    count: int
    total: int
    percent: float


class CampaignReport(BaseModel):
    mode: Literal["mcts", "baseline"]
    seed: int
    config_digest: str
    model_digest: str
    criterion: dict
    initial_coverage: float
    final_coverage: float
    coverage_increase: float
    initial_covered: int
    final_covered: int
    total_classes: Optional[int]
    new_inputs: int
    batches_attempted: int
    batches_committed: int
    iterations: list[IterationRecord]
    adversarial: AdversarialStats
    complete: bool
    wall_clock_seconds: Optional[float] = None

    def deterministic_json(self) -> str:
        data = self.model_dump(exclude={"wall_clock_seconds"})
        return json.dumps(data, sort_keys=True, indent=2) + "\n"


def _sha256_str(text: str) -> str:
    import hashlib

    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _load_or_build_profile(model: Model, train: Dataset, model_path: str,
                           cache_dir: Optional[str]):
    digest = train.digest()
    cache_file = None
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        cache_file = Path(cache_dir) / f"{model.name}_{digest[:16]}.nprof"
        if cache_file.is_file():
            profile, name, stored_digest = load_profile(cache_file)
            if name == model.name and stored_digest == digest:
                return profile
    profile = profile_training_set(model, train)
    if cache_file is not None:
        save_profile(cache_file, profile, model.name, digest)
    return profile


def _forward_chunked(model: Model, images: np.ndarray, chunk: int = 256) -> list:
    records = []
    for start in range(0, len(images), chunk):
        records.extend(forward_batch(model, images[start : start + chunk]))
    return records


def count_adversarial(images: np.ndarray, labels: np.ndarray, seed_correct: np.ndarray,
                      model: Model) -> AdversarialStats:
    """Label flips among corpus entries whose seed the model got right.

    `labels` carry the seed's ground truth (inherited by mutation);
    `seed_correct[i]` says whether the model classified entry i's seed
    correctly. Total is the full corpus size.
    """
    total = int(len(images))
    if total == 0:
        return AdversarialStats(count=0, total=0, percent=0.0)
    preds = np.array([r.predicted_label for r in _forward_chunked(model, images)])
    flips = (preds != labels) & np.asarray(seed_correct, dtype=bool)
    count = int(flips.sum())
    return AdversarialStats(count=count, total=total, percent=100.0 * count / total)


class _CampaignState:
    """Growing test set T with per-entry ground truth and seed bookkeeping."""

    def __init__(self, model: Model, test: Dataset):
        if test.labels is None:
            raise ConfigError("test set must carry labels (adversarial accounting needs them)")
        self.model = model
        self.images = test.images.copy()
        self.labels = test.labels.astype(np.int64)
        preds = np.array([r.predicted_label for r in _forward_chunked(model, self.images)])
        self.predictions = preds
        self.correct = preds == self.labels
        self.original_count = len(test)

    def append(self, batch: np.ndarray, seed_indices: np.ndarray) -> None:
        inherited = self.labels[seed_indices]
        # A mutated input's "seed correctness" refers to the entry it was
        # mutated from, which may itself be a generated input.
        seed_ok = self.correct[seed_indices]
        preds = np.array([r.predicted_label for r in _forward_chunked(self.model, batch)])
        self.images = np.concatenate([self.images, batch])
        self.labels = np.concatenate([self.labels, inherited])
        self.predictions = np.concatenate([self.predictions, preds])
        self.correct = np.concatenate([self.correct, seed_ok & (preds == inherited)])


def run_campaign(config: CampaignConfig, mode: Literal["mcts", "baseline"] = "mcts",
                 ) -> CampaignReport:
    """Run one full campaign and write its artifact directory."""
    config.validate_files()
    started = time.monotonic()
    out_dir = Path(config.output_dir)
    corpus_dir = out_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)

    model = load_model(config.model_path)
    test = load_dataset(config.test_path)
    profile = None
    if config.criterion.kind not in PROFILE_FREE_KINDS:
        train = load_dataset(config.train_path)
        profile = _load_or_build_profile(model, train, config.model_path, config.profile_cache)
    tracker = make_tracker(config.criterion.kind, model, profile=profile,
                           **config.criterion.tracker_params())

    state = _CampaignState(model, test)
    initial_records = _forward_chunked(model, state.images)
    tracker.commit(initial_records)
    initial_coverage = tracker.value
    initial_covered = tracker.covered_count

    mconfig = config.mutator.to_config()
    budget = config.budget.to_budget()
    rng = np.random.default_rng(config.seed)
    kmeans_state = None
    if config.chooser.kind == "clustered":
        kmeans_state = kmeans_fit(state.images, config.chooser.k, rng)

    with open(out_dir / "config.json", "w", encoding="utf-8") as f:
        f.write(json.dumps(config.model_dump(exclude={"output_dir"}), sort_keys=True,
                           indent=2) + "\n")

    search = search_batch_with if mode == "mcts" else random_search_batch_with

    def evaluate(candidate):
        return tracker.coverage_increase(forward_batch(model, candidate))

    iterations: list[IterationRecord] = []
    corpus_batches: list[dict] = []
    new_inputs = 0
    committed = 0
    complete = False
    trace_file = open(out_dir / "trace.jsonl", "w", encoding="utf-8") if config.trace else None
    provenance_file = open(out_dir / "provenance.jsonl", "w", encoding="utf-8")

    def out_of_budget() -> bool:
        if config.target_new_inputs is not None and new_inputs >= config.target_new_inputs:
            return True
        if config.timeout_seconds is not None:
            return time.monotonic() - started >= config.timeout_seconds
        return False

    try:
        while not out_of_budget():
            if config.chooser.kind == "clustered":
                selection = choose_clustered(state.images, state.labels, kmeans_state,
                                             config.chooser.batch_size, rng)
            else:
                selection = choose_random(state.images, state.labels,
                                          config.chooser.batch_size, rng)

            observer = None
            if trace_file is not None:
                batch_no = len(iterations)

                def observer(event, _batch_no=batch_no):
                    if event["event"] not in ("evaluation", "rejected"):
                        return
                    line = {
                        "batch": _batch_no,
                        "event": event["event"],
                        "iteration": event.get("iteration"),
                        "actions": [list(a) for a in event["actions"]],
                        "reward": event.get("reward"),
                        "best": event.get("best"),
                    }
                    trace_file.write(json.dumps(line, sort_keys=True) + "\n")

            result = search(selection.images, evaluate, mconfig, budget, rng,
                            observer=observer)

            record = IterationRecord(
                batch_indices=[int(i) for i in selection.indices],
                cluster=selection.cluster,
                best_increase=result.increase,
                committed=False,
                evaluations=result.evaluations,
                applications=result.applications,
            )

            if result.increase > 0:
                records = forward_batch(model, result.batch)
                actual = tracker.coverage_increase(records)
                if actual > 0:  # re-validated against the committed state
                    tracker.commit(records)
                    corpus_name = f"corpus/batch_{committed:04d}.tds"
                    save_dataset(out_dir / corpus_name,
                                 Dataset(images=result.batch,
                                         labels=state.labels[selection.indices].astype(np.uint8)))
                    provenance_file.write(json.dumps({
                        "batch": committed,
                        "corpus_file": corpus_name,
                        "seed_indices": [int(i) for i in selection.indices],
                        "actions": [list(a) for a in result.actions],
                        "increase": actual,
                        "coverage_after": tracker.value,
                    }, sort_keys=True) + "\n")
                    corpus_batches.append({
                        "images": result.batch,
                        "labels": state.labels[selection.indices],
                        "seed_indices": selection.indices,
                    })
                    state.append(result.batch, selection.indices)
                    if kmeans_state is not None:
                        kmeans_state.extend(result.batch)
                    new_inputs += len(result.batch)
                    committed += 1
                    record.committed = True
                    record.corpus_file = corpus_name
            iterations.append(record)
        complete = True
    finally:
        provenance_file.close()
        if trace_file is not None:
            trace_file.close()

        if corpus_batches:
            corpus_images = np.concatenate([b["images"] for b in corpus_batches])
            corpus_labels = np.concatenate([b["labels"] for b in corpus_batches])
            seed_correct = np.concatenate([
                state.correct[b["seed_indices"]] for b in corpus_batches
            ])
            adversarial = count_adversarial(corpus_images, corpus_labels, seed_correct, model)
        else:
            adversarial = AdversarialStats(count=0, total=0, percent=0.0)

        report = CampaignReport(
            mode=mode,
            seed=config.seed,
            config_digest=_sha256_str(config.canonical_json()),
            model_digest=file_digest(config.model_path),
            criterion=tracker.report(),
            initial_coverage=initial_coverage,
            final_coverage=tracker.value,
            coverage_increase=tracker.value - initial_coverage,
            initial_covered=initial_covered,
            final_covered=tracker.covered_count,
            total_classes=tracker.total_classes,
            new_inputs=new_inputs,
            batches_attempted=len(iterations),
            batches_committed=committed,
            iterations=iterations,
            adversarial=adversarial,
            complete=complete,
            wall_clock_seconds=time.monotonic() - started,
        )
        with open(out_dir / "report.json", "w", encoding="utf-8") as f:
            f.write(report.deterministic_json())
        with open(out_dir / "timing.json", "w", encoding="utf-8") as f:
            json.dump({"wall_clock_seconds": report.wall_clock_seconds}, f)
            f.write("\n")
    return report


def run_baseline_campaign(config: CampaignConfig) -> CampaignReport:
    """Identical loop with uniform-random mutation selection."""
    return run_campaign(config, mode="baseline")


def measure_coverage(model_path: str, dataset_path: str, criterion: CriterionConfig,
                     train_path: Optional[str] = None,
                     profile_cache: Optional[str] = None) -> dict:
    """Coverage of a dataset under one criterion (no fuzzing)."""
    model = load_model(model_path)
    data = load_dataset(dataset_path)
    profile = None
    if criterion.kind not in PROFILE_FREE_KINDS:
        if train_path is None:
            raise ConfigError(f"criterion '{criterion.kind}' needs a training set for profiling")
        profile = _load_or_build_profile(model, load_dataset(train_path), model_path,
                                         profile_cache)
    tracker = make_tracker(criterion.kind, model, profile=profile,
                           **criterion.tracker_params())
    tracker.commit(_forward_chunked(model, data.images))
    return tracker.report()


def replay_campaign(campaign_dir) -> dict:
    """Re-derive every corpus image from its provenance and check bit-exactness,
    then recompute the final coverage from scratch and compare."""
    campaign_dir = Path(campaign_dir)
    with open(campaign_dir / "config.json", encoding="utf-8") as f:
        config_data = json.load(f)
    config = CampaignConfig(**config_data, output_dir=str(campaign_dir))
    with open(campaign_dir / "report.json", encoding="utf-8") as f:
        report = json.load(f)

    model = load_model(config.model_path)
    test = load_dataset(config.test_path)
    mconfig = config.mutator.to_config()

    entries = []
    provenance_path = campaign_dir / "provenance.jsonl"
    if provenance_path.is_file():
        with open(provenance_path, encoding="utf-8") as f:
            entries = [json.loads(line) for line in f if line.strip()]

    t_images = test.images.copy()
    batches_checked = 0
    replay_exact = True
    distance_ok = True
    for entry in entries:
        stored = load_dataset(campaign_dir / entry["corpus_file"])
        seeds = t_images[np.asarray(entry["seed_indices"], dtype=np.int64)]
        replayed = seeds
        for region, mutation in entry["actions"]:
            replayed = mconfig.apply(replayed, CompleteAction(region, mutation))
        if not np.array_equal(replayed, stored.images):
            replay_exact = False
        if not mconfig.batch_ok(stored.images, seeds):
            distance_ok = False
        t_images = np.concatenate([t_images, stored.images])
        batches_checked += 1

    profile = None
    if config.criterion.kind not in PROFILE_FREE_KINDS:
        profile = _load_or_build_profile(model, load_dataset(config.train_path),
                                         config.model_path, config.profile_cache)
    tracker = make_tracker(config.criterion.kind, model, profile=profile,
                           **config.criterion.tracker_params())
    tracker.commit(_forward_chunked(model, test.images))
    for entry in entries:
        stored = load_dataset(campaign_dir / entry["corpus_file"])
        tracker.commit(_forward_chunked(model, stored.images))
    coverage_match = tracker.value == report["final_coverage"]

    return {
        "batches_checked": batches_checked,
        "replay_exact": replay_exact,
        "distance_ok": distance_ok,
        "recomputed_coverage": tracker.value,
        "reported_coverage": report["final_coverage"],
        "coverage_match": coverage_match,
        "ok": replay_exact and distance_ok and coverage_match,
    }


def run_repeated(config: CampaignConfig, repeat: int,
                 mode: Literal["mcts", "baseline"] = "mcts") -> dict:
    """Run `repeat` campaigns with seeds seed+0..repeat-1 into numbered
    subdirectories; returns reports plus mean/std aggregates."""
    base_out = Path(config.output_dir)
    reports = []
    for i in range(repeat):
        sub = config.model_copy(update={
            "seed": config.seed + i,
            "output_dir": str(base_out / f"run_{i}" if repeat > 1 else base_out),
        })
        reports.append(run_campaign(sub, mode=mode))
    increases = np.array([r.coverage_increase for r in reports], dtype=np.float64)
    percents = np.array([r.adversarial.percent for r in reports], dtype=np.float64)
    counts = np.array([r.new_inputs for r in reports], dtype=np.float64)
    return {
        "reports": reports,
        "coverage_increase_mean": float(increases.mean()),
        "coverage_increase_std": float(increases.std(ddof=1)) if repeat > 1 else 0.0,
        "adversarial_percent_mean": float(percents.mean()),
        "adversarial_percent_std": float(percents.std(ddof=1)) if repeat > 1 else 0.0,
        "new_inputs_mean": float(counts.mean()),
    }
