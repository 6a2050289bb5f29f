import math

import numpy as np
import pytest

from covfuzz.errors import SearchExhaustedError
from covfuzz.mcts import (
    MctsNode,
    SearchBudget,
    advance_root,
    backpropagate,
    expand,
    nominal_applications,
    random_search_batch_with,
    search_batch_with,
    select,
    simulate_to_complete_action,
    uct_potential,
)
from covfuzz.mutation import CompleteAction, MutatorConfig


CONFIG = MutatorConfig()  # 9 regions x 5 mutations


def seed_batch(n=2, side=9):
    rng = np.random.default_rng(99)
    return (0.25 + 0.5 * rng.random((n, side, side, 1))).astype(np.float32)


def zero_reward(_batch):
    return 0.0


def one_hot_evaluator(seeds, config, target):
    expected = config.apply(seeds, CompleteAction(*target))

    def evaluate(batch):
        return 1.0 if batch.shape == expected.shape and np.array_equal(batch, expected) else 0.0

    return evaluate


# --- UCT ---------------------------------------------------------------------


def test_uct_zero_log_term():
    node = MctsNode(level=1)
    node.n, node.value_sum = 1, 0.0
    assert uct_potential(node, parent_visits=1, exploration=math.sqrt(2)) == 0.0


def test_uct_derived_value():
    node = MctsNode(level=1)
    node.n, node.value_sum = 4, 2.0  # v = 0.5
    got = uct_potential(node, parent_visits=16, exploration=math.sqrt(2))
    assert got == pytest.approx(1.6774100, abs=1e-6)


def test_uct_unvisited_always_preferred():
    visited = MctsNode(level=1)
    visited.n, visited.value_sum = 10, 10.0
    fresh = MctsNode(level=1)
    assert uct_potential(fresh, 10, 1.0) > uct_potential(visited, 10, 1.0)


# --- selection / expansion ------------------------------------------------------


def test_select_fresh_root_returns_root():
    root = MctsNode(level=0, batch=seed_batch())
    rng = np.random.default_rng(0)
    assert select(root, CONFIG, SearchBudget(), rng) is root


def test_select_exploitation_only_descends_to_rewarding_child():
    root = MctsNode(level=0, batch=seed_batch())
    rng = np.random.default_rng(0)
    for action in range(CONFIG.region_count):
        child = MctsNode(level=1, action_from_parent=action, parent=root)
        child.n = 1
        root.children[action] = child
    root.n = 9
    root.children[3].value_sum = 1.0
    budget = SearchBudget(exploration=0.0)
    got = select(root, CONFIG, budget, rng)
    assert got is root.children[3]


def test_select_never_returns_node_beyond_max_depth():
    budget = SearchBudget(max_depth_levels=2)
    root = MctsNode(level=0, batch=seed_batch())
    rng = np.random.default_rng(0)
    for _ in range(40):
        leaf = select(root, CONFIG, budget, rng)
        assert leaf.level <= 2
        if leaf.level < 2:
            child = expand(leaf, CONFIG, budget, rng)
            backpropagate(child, 0.0, root)


def test_expand_creates_unique_children_until_exhausted():
    root = MctsNode(level=0, batch=seed_batch())
    rng = np.random.default_rng(42)
    budget = SearchBudget()
    seen = set()
    for _ in range(CONFIG.region_count):
        child = expand(root, CONFIG, budget, rng)
        assert child.n == 0 and child.value_sum == 0.0
        seen.add(child.action_from_parent)
    assert seen == set(range(9))
    with pytest.raises(SearchExhaustedError):
        expand(root, CONFIG, budget, rng)


def test_expand_at_max_depth_errors():
    node = MctsNode(level=8)
    with pytest.raises(SearchExhaustedError):
        expand(node, CONFIG, SearchBudget(max_depth_levels=8), np.random.default_rng(0))


# --- simulation -----------------------------------------------------------------


def test_simulation_completes_dangling_region():
    root = MctsNode(level=0, batch=seed_batch())
    child = MctsNode(level=1, action_from_parent=4, parent=root)
    rng = np.random.default_rng(5)
    pair = simulate_to_complete_action(child, CONFIG, rng)
    assert pair.region == 4
    assert 0 <= pair.mutation < CONFIG.mutation_count
    again = simulate_to_complete_action(child, CONFIG, np.random.default_rng(5))
    assert again == pair  # reproducible under the same seed


def test_simulation_returns_complete_pair_verbatim():
    root = MctsNode(level=0, batch=seed_batch())
    region_child = MctsNode(level=1, action_from_parent=2, parent=root)
    pair_child = MctsNode(level=2, action_from_parent=1, parent=region_child)
    pair = simulate_to_complete_action(pair_child, CONFIG, np.random.default_rng(0))
    assert pair == CompleteAction(2, 1)


# --- backpropagation --------------------------------------------------------------


def build_chain(depth):
    nodes = [MctsNode(level=0, batch=seed_batch())]
    for level in range(1, depth + 1):
        node = MctsNode(level=level, action_from_parent=0, parent=nodes[-1])
        nodes[-1].children[0] = node
        nodes.append(node)
    return nodes


def test_backprop_updates_whole_path():
    nodes = build_chain(3)
    backpropagate(nodes[-1], 1.0, nodes[0])
    for node in nodes:
        assert node.n == 1 and node.value == 1.0


def test_backprop_mean_of_two_rewards():
    nodes = build_chain(2)
    backpropagate(nodes[-1], 0.0, nodes[0])
    backpropagate(nodes[-1], 1.0, nodes[0])
    assert nodes[-1].value == 0.5


def test_root_visits_count_completed_iterations():
    root = MctsNode(level=0, batch=seed_batch())
    rng = np.random.default_rng(17)
    budget = SearchBudget()
    completed = 0
    for _ in range(25):
        leaf = select(root, CONFIG, budget, rng)
        child = expand(leaf, CONFIG, budget, rng)
        backpropagate(child, 0.0, root)
        completed += 1
    assert root.n == completed


def test_backprop_stops_at_current_root():
    nodes = build_chain(4)
    new_root = nodes[2]
    backpropagate(nodes[-1], 1.0, new_root)
    assert nodes[0].n == 0 and nodes[1].n == 0
    assert all(n.n == 1 for n in nodes[2:])


# --- root advancement ---------------------------------------------------------------


def test_advance_root_picks_greatest_value():
    root = MctsNode(level=0, batch=seed_batch())
    for action, value in enumerate([0.1, 0.4, 0.2]):
        child = MctsNode(level=1, action_from_parent=action, parent=root)
        child.n, child.value_sum = 10, value * 10
        root.children[action] = child
    got = advance_root(root, np.random.default_rng(0))
    assert got is root.children[1]


def test_advance_root_all_unvisited_is_seeded_tie():
    root = MctsNode(level=0, batch=seed_batch())
    for action in range(3):
        root.children[action] = MctsNode(level=1, action_from_parent=action, parent=root)
    picks = {advance_root(root, np.random.default_rng(s)).action_from_parent
             for s in range(30)}
    assert picks <= {0, 1, 2} and len(picks) > 1


def test_advance_root_childless_signals_exhaustion():
    root = MctsNode(level=0, batch=seed_batch())
    with pytest.raises(SearchExhaustedError):
        advance_root(root, np.random.default_rng(0))


def test_advancing_twice_descends_two_levels():
    nodes = build_chain(2)
    for node in nodes[1:]:
        node.n = 1
    r1 = advance_root(nodes[0], np.random.default_rng(0))
    r2 = advance_root(r1, np.random.default_rng(0))
    assert r2.level == 2


# --- full search -----------------------------------------------------------------


def test_zero_reward_returns_seed_and_expands_first_level():
    seeds = seed_batch()
    events = []
    result = search_batch_with(seeds, zero_reward, CONFIG, SearchBudget(),
                               np.random.default_rng(3), observer=events.append)
    assert result.increase == 0.0
    assert np.array_equal(result.batch, seeds)
    assert result.actions == []
    roots = [e["node"] for e in events if e["event"] == "root"]
    first_root = roots[0]
    assert len(first_root.children) == CONFIG.region_count


def test_one_hot_game_found_deterministically_on_small_action_space():
    # 2x2 grid x 5 mutations = 20 pairs, all expanded within one 25-iteration root.
    config = MutatorConfig(grid_rows=2, grid_cols=2)
    seeds = seed_batch()
    target = (3, 2)
    for seed in range(10):
        result = search_batch_with(seeds, one_hot_evaluator(seeds, config, target), config,
                                   SearchBudget(max_depth_levels=2),
                                   np.random.default_rng(seed))
        assert result.increase == 1.0
        assert result.actions == [CompleteAction(*target)]
        assert np.array_equal(result.batch, config.apply(seeds, CompleteAction(*target)))


def test_one_hot_game_found_with_first_level_sweep():
    seeds = seed_batch()
    target = (7, 2)  # contrast: always inside the default distance budget
    budget = SearchBudget(max_depth_levels=2, first_level_sweep=True)
    for seed in range(5):
        result = search_batch_with(seeds, one_hot_evaluator(seeds, CONFIG, target), CONFIG,
                                   budget, np.random.default_rng(seed))
        assert result.increase == 1.0
        assert result.actions == [CompleteAction(*target)]


def test_depth_budget_limits_complete_actions():
    rng = np.random.default_rng(1)

    def noisy(_batch):
        return float(rng.random() * 0.1)

    result = search_batch_with(seed_batch(), noisy, CONFIG, SearchBudget(max_depth_levels=8),
                               np.random.default_rng(2))
    assert len(result.actions) <= 4


def test_search_is_deterministic_under_fixed_seed():
    seeds = seed_batch()
    rng_reward = np.random.default_rng(7)
    rewards = {}

    def keyed_reward(batch):
        key = batch.tobytes()
        if key not in rewards:
            rewards[key] = float(rng_reward.random() * 0.01)
        return rewards[key]

    a = search_batch_with(seeds, keyed_reward, CONFIG, SearchBudget(),
                          np.random.default_rng(11))
    b = search_batch_with(seeds, keyed_reward, CONFIG, SearchBudget(),
                          np.random.default_rng(11))
    assert a.increase == b.increase
    assert a.actions == b.actions
    assert np.array_equal(a.batch, b.batch)


def _walk(root):
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children.values())


def test_invariants_over_randomized_search():
    seeds = seed_batch()
    total_steps = 0
    for trial in range(4):
        reward_rng = np.random.default_rng(100 + trial)
        cache = {}

        def reward(batch):
            key = batch.tobytes()
            if key not in cache:
                cache[key] = float(reward_rng.random() * 0.05)
            return cache[key]

        events = []
        result = search_batch_with(seeds, reward, CONFIG, SearchBudget(),
                                   np.random.default_rng(trial), observer=events.append)
        evaluations = [e for e in events if e["event"] == "evaluation"]
        total_steps += len(evaluations)

        # Best-batch dominance over every evaluated candidate.
        assert all(e["reward"] <= result.increase for e in evaluations)

        roots = [e["node"] for e in events if e["event"] == "root"]
        original, final = roots[0], roots[-1]

        # Level alternation: structural role flips at every edge.
        for node in _walk(original):
            for child in node.children.values():
                assert child.level == node.level + 1
                assert child.chooses_region != node.chooses_region
                assert child.level <= 8

        # Visit conservation on the final root's subtree.
        starts = {}
        for e in evaluations:
            starts[id(e["node"])] = starts.get(id(e["node"]), 0) + 1
        for node in _walk(final):
            child_sum = sum(c.n for c in node.children.values())
            assert node.n == child_sum + starts.get(id(node), 0)

        # Distance safety of the returned batch.
        assert CONFIG.batch_ok(result.batch, seeds)
    assert total_steps > 200


# --- random baseline ---------------------------------------------------------------


def test_random_baseline_consumes_nominal_budget():
    seeds = seed_batch()
    budget = SearchBudget()
    result = random_search_batch_with(seeds, zero_reward, CONFIG, budget,
                                      np.random.default_rng(0))
    assert result.applications == nominal_applications(budget, CONFIG)
    assert result.increase == 0.0


def test_random_baseline_is_deterministic():
    seeds = seed_batch()

    def reward(batch):
        return float(batch.sum()) * 1e-6

    a = random_search_batch_with(seeds, reward, CONFIG, SearchBudget(),
                                 np.random.default_rng(5))
    b = random_search_batch_with(seeds, reward, CONFIG, SearchBudget(),
                                 np.random.default_rng(5))
    assert a.increase == b.increase and a.actions == b.actions


def test_random_baseline_respects_distance_budget():
    seeds = seed_batch()

    def reward(batch):
        return float(np.abs(batch - seeds).max())

    result = random_search_batch_with(seeds, reward, CONFIG, SearchBudget(),
                                      np.random.default_rng(8))
    assert CONFIG.batch_ok(result.batch, seeds)
