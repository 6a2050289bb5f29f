"""Tree search over (region, mutation) sequences for one seed batch.

The game tree alternates decision roles: nodes at even absolute levels choose
a region (Player I), nodes at odd levels choose a mutation for that region
(Player II), so two levels make one complete action. Nodes are scored with
UCT and the search advances its root periodically, keeping the subtree. The
reward of a candidate batch is its coverage increase against the committed
test set; the best-rewarded candidate seen anywhere is tracked and returned.

Candidates that break the seed-distance constraint are never evaluated or
backpropagated; the child that produced one is marked terminal and excluded
from further selection, which keeps the search from burning budget behind
the distance wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .errors import SearchExhaustedError
from .model import Model, forward_batch
from .mutation import CompleteAction, MutatorConfig


@dataclass
class SearchBudget:
    max_depth_levels: int = defaults.MAX_DEPTH_LEVELS
    iterations_per_root: int = defaults.ITERATIONS_PER_ROOT
    exploration: float = defaults.EXPLORATION_CONSTANT
    # When set, every fresh root position first evaluates all of its
    # (region, mutation) completions once before the UCT iterations run.
    first_level_sweep: bool = False

    def __post_init__(self):
        if self.max_depth_levels < 2 or self.iterations_per_root < 1:
            raise ValueError("budget must allow at least one complete action and one iteration")


class MctsNode:
    """One decision point; holds UCT statistics and a lazily built batch."""

    __slots__ = ("level", "action_from_parent", "parent", "children", "n", "value_sum",
                 "terminal", "_batch")

    def __init__(self, level: int, action_from_parent: int | None = None, parent=None,
                 batch: np.ndarray | None = None):
        self.level = level
        self.action_from_parent = action_from_parent
        self.parent = parent
        self.children: dict[int, MctsNode] = {}
        self.n = 0
        self.value_sum = 0.0
        self.terminal = False
        self._batch = batch

    @property
    def chooses_region(self) -> bool:
        return self.level % 2 == 0

    @property
    def value(self) -> float:
        return self.value_sum / self.n if self.n else 0.0

    def action_count(self, config: MutatorConfig) -> int:
        return config.region_count if self.chooses_region else config.mutation_count

    def batch(self, config: MutatorConfig) -> np.ndarray:
        """The seed batch with every complete action on the root path applied.

        Odd-level nodes carry a dangling region choice and share their
        parent's batch; even-level nodes apply the pair completed by their
        incoming edge.
        """
        if self._batch is None:
            if self.level % 2 == 1:
                self._batch = self.parent.batch(config)
            else:
                pair = CompleteAction(self.parent.action_from_parent, self.action_from_parent)
                self._batch = config.apply(self.parent.batch(config), pair)
        return self._batch

    def complete_actions(self) -> tuple[list[CompleteAction], int | None]:
        """(complete pairs on the path from the original root, dangling region)."""
        edges = []
        node = self
        while node.parent is not None:
            edges.append(node.action_from_parent)
            node = node.parent
        edges.reverse()
        pairs = [CompleteAction(edges[i], edges[i + 1]) for i in range(0, len(edges) - 1, 2)]
        dangling = edges[-1] if len(edges) % 2 == 1 else None
        return pairs, dangling


def uct_potential(node: MctsNode, parent_visits: int, exploration: float) -> float:
    """v + e * sqrt(ln N / n); unvisited nodes always rank first."""
    if node.n == 0:
        return math.inf
    return node.value + exploration * math.sqrt(math.log(parent_visits) / node.n)


def _argmax_tiebreak(items: list, scores: list[float], rng: np.random.Generator):
    best = max(scores)
    maxima = [item for item, s in zip(items, scores) if s == best]
    if len(maxima) == 1:
        return maxima[0]
    return maxima[int(rng.integers(len(maxima)))]


def select(root: MctsNode, config: MutatorConfig, budget: SearchBudget,
           rng: np.random.Generator) -> MctsNode | None:
    """Descend by UCT until a node with an unexpanded action or at max depth.

    Returns None when no live path remains anywhere under the root.
    """
    while True:
        node = root
        while True:
            if node.level >= budget.max_depth_levels:
                return node
            if len(node.children) < node.action_count(config):
                return node
            live = [c for c in node.children.values() if not c.terminal]
            if not live:
                # Dead end: every child is behind the distance wall. Mark it
                # and restart the descent from the root.
                node.terminal = True
                if node is root:
                    return None
                break
            visits = max(node.n, 1)
            scores = [uct_potential(c, visits, budget.exploration) for c in live]
            node = _argmax_tiebreak(live, scores, rng)


def expand(node: MctsNode, config: MutatorConfig, budget: SearchBudget,
           rng: np.random.Generator) -> MctsNode:
    """Create one child for a seeded-RNG-chosen unexpanded action."""
    if node.level >= budget.max_depth_levels:
        raise SearchExhaustedError(f"node at level {node.level} is at max depth")
    unexpanded = [a for a in range(node.action_count(config)) if a not in node.children]
    if not unexpanded:
        raise SearchExhaustedError("node is fully expanded")
    action = unexpanded[int(rng.integers(len(unexpanded)))]
    child = MctsNode(level=node.level + 1, action_from_parent=action, parent=node)
    node.children[action] = child
    return child


def simulate_to_complete_action(node: MctsNode, config: MutatorConfig,
                                rng: np.random.Generator) -> CompleteAction:
    """Finish the current pair: pick a random mutation for a dangling region,
    or return the pair the node's incoming edge already completed."""
    if node.level % 2 == 1:
        mutation = int(rng.integers(config.mutation_count))
        return CompleteAction(node.action_from_parent, mutation)
    return CompleteAction(node.parent.action_from_parent, node.action_from_parent)


def backpropagate(node: MctsNode, reward: float, root: MctsNode) -> None:
    """Add one visit and the reward to every node from `node` up to the
    current root, inclusive."""
    cur = node
    while cur is not None:
        cur.n += 1
        cur.value_sum += reward
        if cur is root:
            break
        cur = cur.parent


def advance_root(root: MctsNode, rng: np.random.Generator) -> MctsNode:
    """Move to the child with the greatest mean reward, keeping its subtree.

    Unvisited children rank lowest; ties break by seeded RNG. Raises
    SearchExhaustedError when no live child exists.
    """
    live = [c for c in root.children.values() if not c.terminal]
    if not live:
        raise SearchExhaustedError("root has no live child to advance into")
    scores = [c.value if c.n > 0 else -math.inf for c in live]
    return _argmax_tiebreak(live, scores, rng)


@dataclass
class SearchResult:
    batch: np.ndarray
    increase: float
    actions: list = field(default_factory=list)
    evaluations: int = 0
    applications: int = 0


def nominal_applications(budget: SearchBudget, config: MutatorConfig) -> int:
    """Upper bound on mutation applications one batch search may spend; the
    random baseline consumes exactly this budget.

    Root positions sit at levels 0..max_depth_levels-1. With the first-level
    sweep enabled, an even-level (region-choice) root completes all
    regions x mutations pairs once; an odd-level root only its mutations.
    """
    total = budget.max_depth_levels * budget.iterations_per_root
    if budget.first_level_sweep:
        for level in range(budget.max_depth_levels):
            if level % 2 == 0:
                total += config.region_count * config.mutation_count
            else:
                total += config.mutation_count
    return total


def _candidate_for(node: MctsNode, pair: CompleteAction, config: MutatorConfig) -> np.ndarray:
    if node.level % 2 == 1:
        return config.apply(node.batch(config), pair)
    return node.batch(config)


def search_batch_with(seed_batch: np.ndarray, evaluate, config: MutatorConfig,
                      budget: SearchBudget, rng: np.random.Generator,
                      observer=None) -> SearchResult:
    """Run the full per-batch search against an arbitrary reward callable.

    `evaluate` maps a candidate batch to its coverage increase (>= 0). The
    result carries the best batch, its increase, and the action sequence that
    reproduces it; with no increase found it returns the seed batch and 0.
    """
    seed_batch = np.asarray(seed_batch, dtype=np.float32)
    root = MctsNode(level=0, batch=seed_batch)
    best_batch, best_increase, best_actions = seed_batch, 0.0, []
    evaluations = 0
    applications = 0
    iteration = 0

    def consider(candidate, reward, actions):
        nonlocal best_batch, best_increase, best_actions
        if reward > best_increase:
            best_batch, best_increase, best_actions = candidate, reward, list(actions)

    def run_candidate(node: MctsNode, pair: CompleteAction) -> None:
        """Materialize, distance-check, evaluate, and backpropagate one
        candidate; violators are cut off with no evaluation."""
        nonlocal evaluations, applications, iteration
        iteration += 1
        candidate = _candidate_for(node, pair, config)
        applications += 1
        pairs, _ = node.complete_actions()
        if node.level % 2 == 1:
            pairs = pairs + [pair]
        if not config.batch_ok(candidate, seed_batch):
            node.terminal = True
            if observer is not None:
                observer({"event": "rejected", "iteration": iteration, "node": node,
                          "actions": pairs})
            return
        reward = float(evaluate(candidate))
        evaluations += 1
        consider(candidate, reward, pairs)
        backpropagate(node, reward, root)
        if observer is not None:
            observer({"event": "evaluation", "iteration": iteration, "node": node,
                      "actions": pairs, "reward": reward, "best": best_increase})

    def ensure_child(parent: MctsNode, action: int) -> MctsNode:
        child = parent.children.get(action)
        if child is None:
            child = MctsNode(level=parent.level + 1, action_from_parent=action, parent=parent)
            parent.children[action] = child
        return child

    def sweep(node: MctsNode) -> None:
        """Evaluate every complete-action extension of the root once."""
        if node.chooses_region:
            for region in range(config.region_count):
                child = ensure_child(node, region)
                if child.terminal or child.level >= budget.max_depth_levels:
                    continue
                for mutation in range(config.mutation_count):
                    grand = ensure_child(child, mutation)
                    if not grand.terminal:
                        run_candidate(grand, CompleteAction(region, mutation))
        else:
            for mutation in range(config.mutation_count):
                child = ensure_child(node, mutation)
                if not child.terminal:
                    run_candidate(child, CompleteAction(node.action_from_parent, mutation))

    while root.level < budget.max_depth_levels:
        if observer is not None:
            observer({"event": "root", "node": root, "level": root.level})
        if budget.first_level_sweep:
            sweep(root)

        for _ in range(budget.iterations_per_root):
            leaf = select(root, config, budget, rng)
            if leaf is None:
                break
            if leaf.level >= budget.max_depth_levels:
                node = leaf
            else:
                node = expand(leaf, config, budget, rng)
                if observer is not None:
                    observer({"event": "expansion", "node": node, "parent": leaf})
            pair = simulate_to_complete_action(node, config, rng)
            run_candidate(node, pair)

        try:
            root = advance_root(root, rng)
        except SearchExhaustedError:
            break

    return SearchResult(batch=best_batch, increase=best_increase, actions=best_actions,
                        evaluations=evaluations, applications=applications)


def search_batch(seed_batch: np.ndarray, tracker, model: Model, config: MutatorConfig,
                 budget: SearchBudget, rng: np.random.Generator,
                 observer=None) -> SearchResult:
    """Search one seed batch, rewarding coverage increase over the committed
    state of `tracker`."""

    def evaluate(candidate: np.ndarray) -> float:
        return tracker.coverage_increase(forward_batch(model, candidate))

    return search_batch_with(seed_batch, evaluate, config, budget, rng, observer=observer)


def random_search_batch_with(seed_batch: np.ndarray, evaluate, config: MutatorConfig,
                             budget: SearchBudget, rng: np.random.Generator,
                             observer=None) -> SearchResult:
    """Random-fuzzing baseline: uniform (region, mutation) walks under the
    same action space, distance rule, and application budget as the tree
    search."""
    seed_batch = np.asarray(seed_batch, dtype=np.float32)
    best_batch, best_increase, best_actions = seed_batch, 0.0, []
    max_pairs = budget.max_depth_levels // 2
    budget_apps = nominal_applications(budget, config)
    evaluations = 0
    applications = 0

    while applications < budget_apps:
        current = seed_batch
        actions: list[CompleteAction] = []
        for _ in range(max_pairs):
            if applications >= budget_apps:
                break
            pair = CompleteAction(int(rng.integers(config.region_count)),
                                  int(rng.integers(config.mutation_count)))
            current = config.apply(current, pair)
            applications += 1
            actions.append(pair)
            if not config.batch_ok(current, seed_batch):
                break
            reward = float(evaluate(current))
            evaluations += 1
            if observer is not None:
                observer({"event": "evaluation", "actions": list(actions), "reward": reward,
                          "best": max(best_increase, reward)})
            if reward > best_increase:
                best_batch, best_increase, best_actions = current, reward, list(actions)

    return SearchResult(batch=best_batch, increase=best_increase, actions=best_actions,
                        evaluations=evaluations, applications=applications)


def random_search_batch(seed_batch: np.ndarray, tracker, model: Model, config: MutatorConfig,
                        budget: SearchBudget, rng: np.random.Generator,
                        observer=None) -> SearchResult:
    def evaluate(candidate: np.ndarray) -> float:
        return tracker.coverage_increase(forward_batch(model, candidate))

    return random_search_batch_with(seed_batch, evaluate, config, budget, rng,
                                    observer=observer)
