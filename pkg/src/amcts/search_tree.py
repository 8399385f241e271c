"""Discounted-UCT search tree.

Statistics are discounted lazily: every node stores its discounted visit
count and reward sum as of ``last_update_iter`` and is brought forward by
``gamma ** (now - last_update_iter)`` whenever it is touched or read.  This
is exactly the direct discounted sum over the iteration history, at O(1)
cost per touch.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Hashable, Protocol, Sequence

from .environment import RoadmapGraph

ActionSequence = tuple[int, ...]


@dataclass
class DuctParams:
    gamma: float = 0.9
    c_p: float = 0.4
    iterations_per_phase: int = 500
    rollout_horizon: int = 9
    # False freezes a node's statistics between its own visits, so an
    # unvisited sibling's exploration bonus no longer grows with time.
    decay_on_read: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.c_p < 0.0:
            raise ValueError("c_p must be non-negative")
        if self.iterations_per_phase < 0 or self.rollout_horizon < 0:
            raise ValueError("iteration and horizon counts must be non-negative")


class Domain(Protocol):
    """Action model a tree searches over."""

    def actions(self, state: Hashable, depth: int) -> list[tuple[int, Hashable]]:
        """Feasible ``(action, next_state)`` pairs, in ascending action order."""


class PathDomain:
    """One agent walking the roadmap for at most ``budget`` edges."""

    def __init__(self, graph: RoadmapGraph, budget: int):
        self.graph = graph
        self.budget = budget

    def actions(self, state, depth):
        if depth >= self.budget:
            return []
        return self.graph.adjacency[state]


class InterleavedDomain:
    """Joint walk of several agents; depth ``d`` moves agent ``d % n``.

    ``state`` is the tuple of agent vertices.
    """

    def __init__(self, graph: RoadmapGraph, n_agents: int, budget: int):
        self.graph = graph
        self.n_agents = n_agents
        self.budget = budget

    def actions(self, state, depth):
        if depth >= self.n_agents * self.budget:
            return []
        k = depth % self.n_agents
        out = []
        for e, nxt in self.graph.adjacency[state[k]]:
            out.append((e, state[:k] + (nxt,) + state[k + 1 :]))
        return out


class TreeNode:
    __slots__ = (
        "incoming_action",
        "state",
        "depth",
        "disc_visits",
        "disc_reward_sum",
        "last_update_iter",
        "children",
        "untried_actions",
        "parent",
        "best_reward",
        "best_sequence",
    )

    def __init__(self, state, depth: int, incoming_action: int | None, untried, parent=None, now: int = 0):
        self.incoming_action = incoming_action
        self.state = state
        self.depth = depth
        self.disc_visits = 0.0
        self.disc_reward_sum = 0.0
        self.last_update_iter = now
        self.children: dict[int, TreeNode] = {}
        # list of (action, next_state), ascending action
        self.untried_actions: list[tuple[int, Hashable]] = list(untried)
        self.parent = parent
        self.best_reward = -math.inf
        self.best_sequence: ActionSequence = ()

    def __repr__(self):
        return (
            f"TreeNode(a={self.incoming_action}, depth={self.depth}, "
            f"N={self.disc_visits:.3f}, W={self.disc_reward_sum:.3f})"
        )

    def decayed_visits(self, gamma: float, now: int) -> float:
        return self.disc_visits * gamma ** (now - self.last_update_iter)

    def decayed_reward_sum(self, gamma: float, now: int) -> float:
        return self.disc_reward_sum * gamma ** (now - self.last_update_iter)

    def mean_reward(self) -> float:
        # decay-invariant ratio
        if self.disc_visits <= 0.0:
            return 0.0
        return self.disc_reward_sum / self.disc_visits

    def touch(self, gamma: float, now: int) -> None:
        if now != self.last_update_iter:
            f = gamma ** (now - self.last_update_iter)
            self.disc_visits *= f
            self.disc_reward_sum *= f
            self.last_update_iter = now

    def iter_subtree(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children[a] for a in sorted(node.children, reverse=True))


class DegenerateStatistics(ArithmeticError):
    pass


def effective_visits(node: TreeNode, params: DuctParams, now: int) -> float:
    if params.decay_on_read:
        return node.decayed_visits(params.gamma, now)
    return node.disc_visits


def duct_score(child: TreeNode, parent: TreeNode, params: DuctParams, now: int) -> float:
    """Discounted mean reward plus ``2 c_p sqrt(log N_parent / N_child)``.

    The parent count is clamped to at least ``e`` before the log.
    """
    n_child = effective_visits(child, params, now)
    if n_child <= 0.0:
        raise DegenerateStatistics("child has no discounted visits")
    n_parent = max(effective_visits(parent, params, now), math.e)
    return child.mean_reward() + 2.0 * params.c_p * math.sqrt(math.log(n_parent) / n_child)


@dataclass
class CompressedPlanSet:
    agent_id: int
    sequences: list[ActionSequence] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.sequences)


class SearchTree:
    """A D-UCT tree owned by one planner.

    ``t`` is the cumulative iteration counter used as the discounting clock;
    it keeps running across pruning.  ``offset`` is the absolute depth of the
    current root; cached rollout sequences are rebased onto the new root
    when pruning.
    """

    def __init__(self, domain: Domain, root_state, params: DuctParams, rng: random.Random, base_depth: int = 0):
        self.domain = domain
        self.params = params
        self.rng = rng
        self.t = 0
        self.offset = base_depth
        self.root = self._new_node(root_state, base_depth, None, None)

    def _new_node(self, state, depth, action, parent) -> TreeNode:
        return TreeNode(state, depth, action, self.domain.actions(state, depth), parent, self.t)

    # -- one iteration -------------------------------------------------------

    def iterate(self, reward_fn: Callable[[ActionSequence], float]) -> float:
        self.t += 1
        path = select_and_expand(self, self.params, self.t, self.rng)
        seq = rollout(self, path[-1], self.params, self.rng)
        reward = reward_fn(seq)
        backpropagate(path, reward, self.params, self.t, seq, self)
        return reward

    # -- queries ---------------------------------------------------------------

    def action_prefix(self, node: TreeNode) -> ActionSequence:
        acts = []
        while node is not self.root and node is not None:
            acts.append(node.incoming_action)
            node = node.parent
        return tuple(reversed(acts))

    def best_action(self) -> int | None:
        """Root child with the highest discounted visit count; ties to lowest action."""
        best, best_n = None, -1.0
        for a in sorted(self.root.children):
            n = effective_visits(self.root.children[a], self.params, self.t)
            if n > best_n:
                best, best_n = a, n
        return best

    def root_scores(self) -> dict[int, float]:
        out = {}
        for a, ch in sorted(self.root.children.items()):
            if effective_visits(ch, self.params, self.t) > 0:
                out[a] = duct_score(ch, self.root, self.params, self.t)
        return out

    def size(self) -> int:
        return sum(1 for _ in self.root.iter_subtree())


def select_and_expand(tree: SearchTree, params: DuctParams, now: int, rng: random.Random) -> list[TreeNode]:
    node = tree.root
    path = [node]
    while True:
        if node.untried_actions:
            i = rng.randrange(len(node.untried_actions))
            node.untried_actions[i], node.untried_actions[-1] = node.untried_actions[-1], node.untried_actions[i]
            action, state = node.untried_actions.pop()
            child = TreeNode(state, node.depth + 1, action, tree.domain.actions(state, node.depth + 1), node, now)
            node.children[action] = child
            path.append(child)
            return path
        if not node.children:
            return path  # terminal leaf
        best, best_score = None, -math.inf
        for a in sorted(node.children):
            s = duct_score(node.children[a], node, params, now)
            if s > best_score:
                best, best_score = node.children[a], s
        node = best
        path.append(node)


def rollout(tree: SearchTree, leaf: TreeNode, params: DuctParams, rng: random.Random) -> ActionSequence:
    """Root-to-leaf prefix extended by uniformly random feasible actions.

    The random tail stops once the sequence holds ``rollout_horizon`` actions
    (or the domain runs out of actions, whichever comes first).
    """
    seq = list(tree.action_prefix(leaf))
    state, depth = leaf.state, leaf.depth
    actions = tree.domain.actions
    while len(seq) < params.rollout_horizon:
        opts = actions(state, depth)
        if not opts:
            break
        a, state = opts[rng.randrange(len(opts))]
        seq.append(a)
        depth += 1
    return tuple(seq)


def backpropagate(
    path: Sequence[TreeNode],
    reward: float,
    params: DuctParams,
    now: int,
    sequence: ActionSequence = (),
    tree: SearchTree | None = None,
) -> None:
    if not math.isfinite(reward):
        raise ValueError("reward must be finite")
    gamma = params.gamma
    for node in path:
        node.touch(gamma, now)
        node.disc_visits += 1.0
        node.disc_reward_sum += reward
        if sequence and reward > node.best_reward:
            node.best_reward = reward
            node.best_sequence = sequence


def compress(tree: SearchTree, M: int, now: int | None = None) -> CompressedPlanSet:
    """Best cached rollouts of the ``M`` nodes with highest discounted mean reward.

    Sequences are relative to the current root.  Duplicates are skipped.
    """
    nodes = [n for n in tree.root.iter_subtree() if n is not tree.root and n.disc_visits > 0 and n.best_sequence]
    nodes.sort(key=lambda n: (-n.mean_reward(), n.depth, n.best_sequence))
    out = CompressedPlanSet(agent_id=-1)
    seen = set()
    for n in nodes:
        if len(out.sequences) >= M:
            break
        seq = n.best_sequence
        if seq in seen:
            continue
        seen.add(seq)
        out.sequences.append(seq)
        out.scores.append(n.mean_reward())
    return out


def prune_to_child(tree: SearchTree, executed_action: int) -> SearchTree:
    child = tree.root.children.get(executed_action)
    if child is None:
        raise KeyError(f"action {executed_action} is not an expanded child of the root")
    child.parent = None
    tree.root = child
    tree.offset += 1
    _rebase(child)
    return tree


def _rebase(root: TreeNode) -> None:
    for node in root.iter_subtree():
        if node.best_sequence:
            node.best_sequence = node.best_sequence[1:]


def dump_tree(tree: SearchTree, max_depth: int | None = None) -> dict:
    def rec(node, d):
        out = {
            "action": node.incoming_action,
            "depth": node.depth,
            "visits": node.decayed_visits(tree.params.gamma, tree.t),
            "mean": node.mean_reward(),
        }
        if max_depth is None or d < max_depth:
            out["children"] = [rec(node.children[a], d + 1) for a in sorted(node.children)]
        return out

    return {"t": tree.t, "root": rec(tree.root, 0)}
