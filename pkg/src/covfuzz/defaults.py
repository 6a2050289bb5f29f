"""Default hyperparameters, collected in one place for introspection.

Campaign configs fall back to these values; tests assert them so a drift
in any default is caught immediately.
"""

# Neuron coverage: threshold applied to per-layer, per-input min-max scaled
# activations.
NC_THRESHOLD = 0.75

# k-multisection coverage: number of sections the training-set activation
# range of each neuron is divided into.
KMN_SECTIONS = 10000

# Image region grid (rows, cols) -> 9 regions.
REGION_GRID = (3, 3)

# Tree search budget: total tree depth in levels (two levels make one
# complete region+mutation action) and iteration count per root position.
MAX_DEPTH_LEVELS = 8
ITERATIONS_PER_ROOT = 25

# Exploration constant in the UCT node score.
EXPLORATION_CONSTANT = 2.0 ** 0.5

# Squared-distance thresholds for the penultimate-vector criterion, one per
# supported model profile.
TFC_THRESHOLDS = {
    "lenet1": 30.0 ** 2,
    "lenet4": 13.0 ** 2,
    "lenet5": 11.0 ** 2,
    "cifar": 3.0 ** 2,
}

# Mutation magnitudes (fractions of the [0, 1] dynamic range).
BRIGHTNESS_DELTA = 0.05
CONTRAST_GAMMA = 1.25
BLUR_KERNEL = 3

# Seed-distance constraint.
DISTANCE_METRIC = "linf"
DISTANCE_EPSILON = 0.25
# Compound-rule knobs: pixel-count fraction below which any magnitude is
# allowed, and the max-norm bound applied otherwise.
DISTANCE_ALPHA = 0.02
DISTANCE_BETA = 0.25

# Input chooser.
BATCH_SIZE = 64
KMEANS_CLUSTERS = 10
KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-4
