import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from amcts.environment import Path, generate_grid_scenario, generate_roadmap_scenario
from amcts.search_tree import (
    DegenerateStatistics,
    DuctParams,
    PathDomain,
    SearchTree,
    TreeNode,
    backpropagate,
    compress,
    duct_score,
    prune_to_child,
    rollout,
    select_and_expand,
)

from oracles import discounted_count, discounted_sum


def node_with(visits, reward_sum, now=0):
    n = TreeNode(None, 1, 0, [], None, now)
    n.disc_visits = visits
    n.disc_reward_sum = reward_sum
    return n


def grid_tree(seed=0, budget=3, **kw):
    sc = generate_grid_scenario(3, 3, {(0, 2): 1.0, (2, 2): 1.0, (1, 1): 1.0}, [(0, 0)])
    params = DuctParams(rollout_horizon=budget, **kw)
    return sc, SearchTree(PathDomain(sc.graph, budget), sc.starts[0], params, random.Random(seed))


# -- score ---------------------------------------------------------------------------


def test_score_hand_value():
    p = DuctParams(gamma=1.0, c_p=0.5)
    child, parent = node_with(4, 2), node_with(16, 0)
    expected = 0.5 + 2 * 0.5 * math.sqrt(math.log(16) / 4)
    assert duct_score(child, parent, p, 0) == pytest.approx(expected, abs=1e-12)
    assert duct_score(child, parent, p, 0) == pytest.approx(1.3326, abs=1e-4)


def test_score_without_exploration_is_the_mean():
    p = DuctParams(c_p=0.0)
    assert duct_score(node_with(3, 1.5), node_with(9, 0), p, 0) == 0.5


def test_score_rejects_unvisited_child():
    with pytest.raises(DegenerateStatistics):
        duct_score(node_with(0, 0), node_with(5, 0), DuctParams(), 0)


def test_score_gamma_one_is_plain_ucb():
    p = DuctParams(gamma=1.0, c_p=0.3, decay_on_read=True)
    c, par = node_with(7, 3.5), node_with(40, 0)
    ucb = 3.5 / 7 + 2 * 0.3 * math.sqrt(math.log(40) / 7)
    assert duct_score(c, par, p, 1000) == ucb


def test_parent_count_clamped_before_log():
    p = DuctParams(gamma=1.0, c_p=1.0)
    s = duct_score(node_with(1, 0.0), node_with(1, 0), p, 0)
    assert s == pytest.approx(2.0)


# -- backpropagation ---------------------------------------------------------------------


def test_reward_sum_decays_between_visits():
    p = DuctParams(gamma=0.9)
    n = TreeNode(None, 0, None, [], None, 0)
    backpropagate([n], 1.0, p, 1)
    backpropagate([n], 1.0, p, 3)
    assert n.disc_reward_sum == pytest.approx(1.81, abs=1e-12)
    assert n.disc_visits == pytest.approx(0.9**2 + 1, abs=1e-12)


def test_gamma_one_counts_plainly():
    p = DuctParams(gamma=1.0)
    n = TreeNode(None, 0, None, [], None, 0)
    for t in (1, 5, 9):
        backpropagate([n], 2.0, p, t)
    assert (n.disc_visits, n.disc_reward_sum) == (3.0, 6.0)


def test_zero_reward_only_decays():
    p = DuctParams(gamma=0.5)
    n = TreeNode(None, 0, None, [], None, 0)
    backpropagate([n], 4.0, p, 1)
    backpropagate([n], 0.0, p, 2)
    assert n.disc_visits == 1.5
    assert n.disc_reward_sum == 2.0


def test_non_finite_reward_rejected():
    n = TreeNode(None, 0, None, [], None, 0)
    with pytest.raises(ValueError):
        backpropagate([n], float("nan"), DuctParams(), 1)


@given(
    st.floats(0.5, 1.0),
    st.lists(st.tuples(st.integers(1, 6), st.floats(-5, 5)), min_size=1, max_size=40),
)
def test_lazy_decay_equals_direct_sum(gamma, steps):
    p = DuctParams(gamma=gamma)
    n = TreeNode(None, 0, None, [], None, 0)
    t, log = 0, []
    for gap, r in steps:
        t += gap
        backpropagate([n], r, p, t)
        log.append((t, r))
    now = t + 3
    assert n.decayed_visits(gamma, now) == pytest.approx(discounted_count([x for x, _ in log], gamma, now), abs=1e-9)
    assert n.decayed_reward_sum(gamma, now) == pytest.approx(discounted_sum(log, gamma, now), abs=1e-9)


# -- selection / expansion / rollout -----------------------------------------------------


def test_fresh_root_expands_one_child():
    sc = generate_grid_scenario(2, 2, {}, [(0, 0)])
    tree = SearchTree(PathDomain(sc.graph, 2), sc.starts[0], DuctParams(), random.Random(0))
    assert len(tree.root.untried_actions) == 2
    tree.t = 1
    path = select_and_expand(tree, tree.params, 1, tree.rng)
    assert len(path) == 2
    assert len(tree.root.children) == 1
    assert len(tree.root.untried_actions) == 1


def test_dominant_child_selected_and_ties_to_lowest():
    sc = generate_grid_scenario(2, 2, {}, [(0, 0)])
    p = DuctParams(gamma=1.0, c_p=0.0)
    tree = SearchTree(PathDomain(sc.graph, 1), sc.starts[0], p, random.Random(0))
    (a0, s0), (a1, s1) = tree.root.untried_actions
    tree.root.untried_actions = []
    for a, s, w in ((a0, s0, 1.0), (a1, s1, 1.0)):
        ch = TreeNode(s, 1, a, [], tree.root, 0)
        ch.disc_visits, ch.disc_reward_sum = 2.0, w
        tree.root.children[a] = ch
    tree.root.disc_visits = 4.0
    assert select_and_expand(tree, p, 0, tree.rng)[-1].incoming_action == min(a0, a1)
    tree.root.children[max(a0, a1)].disc_reward_sum = 1.9
    assert select_and_expand(tree, p, 0, tree.rng)[-1].incoming_action == max(a0, a1)


def test_rollout_at_budget_returns_prefix():
    sc, tree = grid_tree(budget=1)
    tree.iterate(lambda s: 0.0)
    leaf = next(iter(tree.root.children.values()))
    assert rollout(tree, leaf, tree.params, random.Random(0)) == (leaf.incoming_action,)


def test_single_edge_world_rollout():
    sc = generate_grid_scenario(1, 2, {(0, 1): 1.0}, [(0, 0)])
    tree = SearchTree(PathDomain(sc.graph, 1), sc.starts[0], DuctParams(rollout_horizon=1), random.Random(0))
    assert rollout(tree, tree.root, tree.params, random.Random(0)) == (0,)


def test_rollout_is_seeded():
    sc, tree = grid_tree(budget=5)
    a = rollout(tree, tree.root, tree.params, random.Random(11))
    b = rollout(tree, tree.root, tree.params, random.Random(11))
    assert a == b and len(a) == 5


def test_rollout_horizon_caps_length():
    sc, tree = grid_tree(budget=5)
    tree.params = DuctParams(rollout_horizon=2)
    assert len(rollout(tree, tree.root, tree.params, random.Random(0))) == 2


@given(st.integers(0, 500), st.integers(1, 4))
def test_rollouts_are_valid_paths_within_budget(seed, budget):
    sc = generate_roadmap_scenario(seed % 20, area_side=1000, n_regions=8, n_vertices=12, connect_radius=500, n_agents=1)
    tree = SearchTree(PathDomain(sc.graph, budget), sc.starts[0], DuctParams(rollout_horizon=budget), random.Random(seed))
    seen = []
    for _ in range(30):
        tree.iterate(lambda s: (seen.append(s), float(len(s)))[1])
    for s in seen:
        assert len(s) <= budget
        assert Path(0, sc.starts[0], s).is_valid(sc.graph)


# -- whole-tree invariants ------------------------------------------------------------


def _check_conservation(tree):
    g, now = tree.params.gamma, tree.t
    for node in tree.root.iter_subtree():
        if not node.children or node.untried_actions:
            continue
        kids = sum(c.decayed_visits(g, now) for c in node.children.values())
        own = node.decayed_visits(g, now)
        if node is tree.root:
            assert own == pytest.approx(kids, abs=1e-9)
        else:
            # one visit created the node itself, the rest went to children
            assert kids <= own + 1e-9


@given(st.integers(0, 1000), st.sampled_from([0.8, 0.9, 1.0]), st.booleans())
def test_count_conservation(seed, gamma, decay_on_read):
    sc, tree = grid_tree(seed, budget=3, gamma=gamma, decay_on_read=decay_on_read)
    rng = random.Random(seed)
    for _ in range(60):
        tree.iterate(lambda s: rng.random())
    _check_conservation(tree)


def test_count_conservation_exact_with_creation_visit():
    sc, tree = grid_tree(3, budget=3, gamma=0.9)
    creation = {}
    for _ in range(80):
        before = {id(n) for n in tree.root.iter_subtree()}
        tree.iterate(lambda s: 1.0)
        for n in tree.root.iter_subtree():
            if id(n) not in before:
                creation[id(n)] = tree.t
    g, now = 0.9, tree.t
    for node in tree.root.iter_subtree():
        if node is tree.root or not node.children or node.untried_actions:
            continue
        kids = sum(c.decayed_visits(g, now) for c in node.children.values())
        # terminal-depth nodes are revisited without a child; only check internal ones
        if node.depth < 3:
            assert node.decayed_visits(g, now) == pytest.approx(g ** (now - creation[id(node)]) + kids, abs=1e-9)


def test_stored_statistics_match_replayed_history():
    # record every backprop and recompute each node's statistics independently
    sc, tree = grid_tree(5, budget=3, gamma=0.85)
    history = {}
    rng = random.Random(5)
    for _ in range(100):
        tree.t += 1
        path = select_and_expand(tree, tree.params, tree.t, tree.rng)
        seq = rollout(tree, path[-1], tree.params, tree.rng)
        r = rng.random()
        backpropagate(path, r, tree.params, tree.t, seq, tree)
        for n in path:
            history.setdefault(id(n), []).append((tree.t, r))
    for node in tree.root.iter_subtree():
        log = history.get(id(node), [])
        # stored values sit at last_update_iter
        t0 = node.last_update_iter
        assert node.disc_visits == pytest.approx(discounted_count([t for t, _ in log], 0.85, t0), abs=1e-9)
        assert node.disc_reward_sum == pytest.approx(discounted_sum(log, 0.85, t0), abs=1e-9)


# -- compress / prune ----------------------------------------------------------------------


def test_compress_examples():
    sc, tree = grid_tree(1, budget=3)
    for _ in range(50):
        tree.iterate(lambda s: sc.value(sc.path_mask(s)))
    one = compress(tree, 1)
    assert len(one) == 1
    best = max((n for n in tree.root.iter_subtree() if n is not tree.root), key=lambda n: n.mean_reward())
    assert one.scores[0] == pytest.approx(best.mean_reward())
    full = compress(tree, 10_000)
    assert len(set(full.sequences)) == len(full.sequences)
    assert full.scores == sorted(full.scores, reverse=True)


def test_prune_keeps_subtree_statistics():
    sc, tree = grid_tree(2, budget=3)
    for _ in range(60):
        tree.iterate(lambda s: sc.value(sc.path_mask(s)))
    a = tree.best_action()
    child = tree.root.children[a]
    grand = max(child.children, key=lambda x: child.children[x].disc_visits)
    stats = (child.children[grand].disc_visits, child.children[grand].disc_reward_sum)
    prune_to_child(tree, a)
    assert tree.root is child and tree.offset == 1
    prune_to_child(tree, grand)
    assert (tree.root.disc_visits, tree.root.disc_reward_sum) == stats
    # feasible actions now respect the remaining budget of one edge
    tree.iterate(lambda s: 0.0)
    for node in tree.root.iter_subtree():
        assert node.depth <= 3


def test_prune_unknown_child_raises():
    sc, tree = grid_tree()
    with pytest.raises(KeyError):
        prune_to_child(tree, 999)


def test_prune_rebases_cached_sequences():
    sc, tree = grid_tree(4, budget=3)
    for _ in range(40):
        tree.iterate(lambda s: float(len(set(s))))
    a = tree.best_action()
    prune_to_child(tree, a)
    for s in compress(tree, 50).sequences:
        assert len(s) <= 2
