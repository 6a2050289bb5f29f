"""Coverage-guided fuzzing for small convolutional networks.

Core pieces: a deterministic inference engine exposing per-neuron
activations, five coverage criteria as interchangeable trackers, a localized
image mutator over a region grid, a UCT tree search that picks mutation
sequences by coverage reward, and a campaign orchestrator with a
random-fuzzing baseline arm.
"""

__version__ = "0.1.0"

from . import defaults
from .campaign import (
    CampaignConfig,
    CampaignReport,
    CriterionConfig,
    count_adversarial,
    measure_coverage,
    replay_campaign,
    run_baseline_campaign,
    run_campaign,
    run_repeated,
)
from .chooser import choose_clustered, choose_random, kmeans_fit
from .containers import Dataset, load_dataset, load_model, save_dataset, save_model
from .coverage import (
    NeuronProfile,
    make_tracker,
    profile_training_set,
)
from .fixtures import FixtureSpec, generate_fixture
from .mcts import (
    SearchBudget,
    SearchResult,
    random_search_batch,
    search_batch,
)
from .model import ActivationRecord, Model, forward, forward_batch
from .mutation import (
    CompleteAction,
    MutatorConfig,
    apply_mutation,
    enumerate_regions,
    standard_mutations,
    within_distance,
)

__all__ = [
    "ActivationRecord",
    "CampaignConfig",
    "CampaignReport",
    "CompleteAction",
    "CriterionConfig",
    "Dataset",
    "FixtureSpec",
    "Model",
    "MutatorConfig",
    "NeuronProfile",
    "SearchBudget",
    "SearchResult",
    "apply_mutation",
    "choose_clustered",
    "choose_random",
    "count_adversarial",
    "defaults",
    "enumerate_regions",
    "forward",
    "forward_batch",
    "generate_fixture",
    "kmeans_fit",
    "load_dataset",
    "load_model",
    "make_tracker",
    "measure_coverage",
    "profile_training_set",
    "random_search_batch",
    "replay_campaign",
    "run_baseline_campaign",
    "run_campaign",
    "run_repeated",
    "save_dataset",
    "save_model",
    "search_batch",
    "standard_mutations",
    "within_distance",
]
