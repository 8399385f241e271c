"""A-MCTS and its baselines.

Each decentralized agent owns an :class:`AgentPlanner` (one D-UCT tree plus
its view of the team).  Planning inside a phase is synchronous: all agents
run ``exchange_every`` tree iterations, meet at a barrier where intentions
(and, for A-MCTS, regret-matching candidates) cross the bus, then continue.
Kinds differ only in the rollout reward and in the coordination step run at
the barrier.
"""

from __future__ import annotations

import bisect
import dataclasses
import enum
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .coordination import (
    DEFAULT_RM_ROUNDS,
    MatrixGame,
    greedy_coordination,
    run_regret_matching,
)
from .environment import Scenario
from .search_tree import (
    ActionSequence,
    CompressedPlanSet,
    DuctParams,
    InterleavedDomain,
    PathDomain,
    SearchTree,
    compress,
    effective_visits,
    prune_to_child,
)

log = logging.getLogger(__name__)


class PlannerKind(str, enum.Enum):
    A_MCTS = "a-mcts"
    DEC_MCTS = "dec-mcts"
    DEC_MCTS_RESET = "dec-mcts-reset"
    DEC_MCTS_GLOBAL = "dec-mcts-global"
    GREEDY_MCTS = "greedy-mcts"
    CENTRAL_MCTS = "central-mcts"

    @property
    def uses_best_response(self) -> bool:
        return self in (PlannerKind.A_MCTS, PlannerKind.GREEDY_MCTS)

    @property
    def marginal_reward(self) -> bool:
        return self in (PlannerKind.DEC_MCTS, PlannerKind.DEC_MCTS_RESET)


class StrandedAgent(RuntimeError):
    def __init__(self, agent_id: int):
        super().__init__(f"agent {agent_id} has no feasible action")
        self.agent_id = agent_id


@dataclass
class PlannerConfig:
    M: int = 10
    exchange_every: int = 50
    rm_rounds: int = DEFAULT_RM_ROUNDS
    loss_tolerance: float = 1
    belief_temperature: float = 1.0
    # "total" divides rollout rewards by the scenario's total value; a number
    # divides by that number (1.0 keeps raw region-value units)
    reward_scale: str | float = 1.0


@dataclass
class IntentionMessage:
    sender: int
    phase: int
    payload: CompressedPlanSet
    executed_mask: int
    # A-MCTS only: sender's RM solution, agent id -> full coverage mask
    candidate: dict[int, int] | None = None


@dataclass
class PeerBelief:
    executed_mask: int
    plans: CompressedPlanSet
    masks: list[int] = field(default_factory=list)
    cum_weights: list[float] = field(default_factory=list)

    def sample(self, rng: random.Random) -> int:
        if not self.masks:
            return self.executed_mask
        if len(self.masks) == 1:
            return self.masks[0]
        u = rng.random() * self.cum_weights[-1]
        return self.masks[min(bisect.bisect_right(self.cum_weights, u), len(self.masks) - 1)]


class Bus(Protocol):
    def begin_round(self) -> None: ...

    def deliver(self, message, recipient: int) -> bool: ...


def softmax(scores: Sequence[float], temperature: float = 1.0) -> list[float]:
    if not scores:
        return []
    top = max(scores)
    w = [math.exp((s - top) / temperature) for s in scores]
    z = sum(w)
    return [x / z for x in w]


class AgentPlanner:
    def __init__(
        self,
        agent_id: int,
        kind: PlannerKind,
        scenario: Scenario,
        start_vertex: int,
        budget: int,
        params: DuctParams,
        team: Sequence[int],
        config: PlannerConfig | None = None,
        rng: random.Random | None = None,
        rm_rng: random.Random | None = None,
    ):
        if kind is PlannerKind.CENTRAL_MCTS:
            raise ValueError("central planning is handled by CentralPlanner")
        self.agent_id = agent_id
        self.kind = kind
        self.scenario = scenario
        self.budget = budget
        self.params = params
        self.config = config or PlannerConfig()
        self.rng = rng or random.Random(agent_id)
        self.rm_rng = rm_rng or random.Random(f"rm:{agent_id}")
        self.position = start_vertex
        self.executed: list[int] = []
        self.executed_mask = 0
        self.known_active: set[int] = set(team) | {agent_id}
        self.beliefs: dict[int, PeerBelief] = {}
        self.loss_counters: dict[int, int] = {p: 0 for p in self.known_active if p != agent_id}
        self.best_response: dict[int, int] = {}
        self._br_others = 0
        self.own_plans = CompressedPlanSet(agent_id)
        self._candidates: list[dict[int, int]] = []
        self.reward_scale = _reward_scale(scenario, self.config.reward_scale)
        self.tree = self._fresh_tree()

    # -- tree lifecycle --------------------------------------------------------

    def _fresh_tree(self) -> SearchTree:
        domain = PathDomain(self.scenario.graph, self.budget)
        return SearchTree(domain, self.position, self.params, self.rng, base_depth=len(self.executed))

    @property
    def remaining_budget(self) -> int:
        return self.budget - len(self.executed)

    def on_failure_observed(self, phase: int | None = None) -> None:
        """Dec-MCTS-Reset: start over from a fresh root, keep beliefs."""
        if self.kind is not PlannerKind.DEC_MCTS_RESET:
            return
        self.tree = self._fresh_tree()

    # -- rewards ---------------------------------------------------------------

    def _own_mask(self, seq: ActionSequence) -> int:
        m = self.executed_mask
        masks = self.scenario.graph.edge_masks
        for e in seq:
            m |= masks[e]
        return m

    def _sample_others(self) -> int:
        m = 0
        for p in sorted(self.beliefs):
            m |= self.beliefs[p].sample(self.rng)
        return m

    def reward(self, seq: ActionSequence) -> float:
        value = self.scenario.value
        total = self.reward_scale
        own = self._own_mask(seq)
        if self.kind.uses_best_response:
            return value(own | self._br_others) / total
        others = self._sample_others()
        if self.kind.marginal_reward:
            return (value(own | others) - value(others)) / total
        return value(own | others) / total

    def iterate(self, n: int) -> None:
        for _ in range(n):
            self.tree.iterate(self.reward)

    # -- communication -----------------------------------------------------------

    def make_message(self, phase: int) -> IntentionMessage:
        plans = compress(self.tree, self.config.M)
        plans.agent_id = self.agent_id
        self.own_plans = plans
        return IntentionMessage(self.agent_id, phase, plans, self.executed_mask)

    def receive(self, message: IntentionMessage, phase: int | None = None) -> None:
        s = message.sender
        if s == self.agent_id:
            raise ValueError("agent cannot receive its own message")
        if s not in self.known_active:
            log.info("agent %d ignores message from unknown sender %d", self.agent_id, s)
            return
        self.loss_counters[s] = 0
        plans = message.payload
        masks = [message.executed_mask | self.scenario.path_mask(seq) for seq in plans.sequences]
        cum, acc = [], 0.0
        for w in softmax(plans.scores, self.config.belief_temperature):
            acc += w
            cum.append(acc)
        self.beliefs[s] = PeerBelief(message.executed_mask, plans, masks, cum)

    def receive_loss(self, sender: int, phase: int | None = None) -> bool:
        """Count one lost exchange with ``sender``; returns True if it is now presumed failed."""
        if sender not in self.known_active or sender == self.agent_id:
            return False
        self.loss_counters[sender] = self.loss_counters.get(sender, 0) + 1
        if self.loss_counters[sender] >= self.config.loss_tolerance:
            self.drop_peer(sender)
            self.on_failure_observed(phase)
            return True
        return False

    def drop_peer(self, peer: int) -> None:
        self.known_active.discard(peer)
        self.beliefs.pop(peer, None)
        self.loss_counters.pop(peer, None)
        self.best_response.pop(peer, None)
        self._refresh_br_others()

    # -- coordination ----------------------------------------------------------------

    def build_game(self) -> MatrixGame:
        """Game over the known-active team: own plans plus every peer's belief."""
        players, masks, payloads = [], [], []
        for p in sorted(self.known_active):
            if p == self.agent_id:
                seqs = list(self.own_plans.sequences)
                row = [self._own_mask(s) for s in seqs]
                ex = self.executed_mask
            else:
                b = self.beliefs.get(p)
                seqs = list(b.plans.sequences) if b else []
                row = list(b.masks) if b else []
                ex = b.executed_mask if b else 0
            if not row:
                seqs, row = [()], [ex]
            players.append(p)
            masks.append(row)
            payloads.append(seqs)
        return MatrixGame(players, masks, self.scenario.value, payloads)

    def coordinate(self) -> dict[int, int] | None:
        """Run this agent's coordination step; returns its candidate (A-MCTS) if any."""
        if not self.kind.uses_best_response:
            return None
        game = self.build_game()
        if self.kind is PlannerKind.A_MCTS:
            prof = run_regret_matching(game, self.config.rm_rounds, self.rm_rng)
        else:
            prof = greedy_coordination(game)
        cand = {p: game.masks[k][i] for k, (p, i) in enumerate(zip(prof.players, prof.indices))}
        self._game = game
        self._candidates = [cand]
        if self.kind is PlannerKind.GREEDY_MCTS:
            self._adopt(cand)
        return cand

    def receive_candidate(self, sender: int, candidate: dict[int, int]) -> None:
        if sender in self.known_active:
            self._candidates.append(candidate)

    def finalize_coordination(self) -> None:
        """Pick the payoff-dominant candidate under this agent's own view."""
        if self.kind is not PlannerKind.A_MCTS or not self._candidates:
            return
        own = self._candidates[0]
        value = self.scenario.value
        best, best_u = None, -math.inf
        for cand in self._candidates:
            filled = {p: cand.get(p, own.get(p, 0)) for p in own}
            u = value(_union(filled.values()))
            if u > best_u:
                best, best_u = filled, u
        self._adopt(best)
        self._candidates = []

    def _adopt(self, profile: dict[int, int]) -> None:
        self.best_response = {p: m for p, m in profile.items() if p in self.known_active}
        self._refresh_br_others()

    def _refresh_br_others(self) -> None:
        m = 0
        for p, mask in self.best_response.items():
            if p != self.agent_id and p in self.known_active:
                m |= mask
        self._br_others = m

    # -- execution -----------------------------------------------------------------

    def choose_action(self) -> int:
        if self.remaining_budget <= 0:
            raise StrandedAgent(self.agent_id)
        a = self.tree.best_action()
        if a is None:
            opts = self.scenario.graph.adjacency[self.position]
            if not opts:
                raise StrandedAgent(self.agent_id)
            self.iterate(1)
            a = self.tree.best_action()
        return a

    def execute(self, action: int) -> None:
        self.position = self.scenario.graph.other_end(action, self.position)
        self.executed.append(action)
        self.executed_mask |= self.scenario.graph.edge_masks[action]
        try:
            prune_to_child(self.tree, action)
        except KeyError:
            self.tree = self._fresh_tree()


def _reward_scale(scenario: Scenario, scale) -> float:
    if scale == "total":
        return scenario.total_value or 1.0
    scale = float(scale)
    if scale <= 0:
        raise ValueError("reward_scale must be positive")
    return scale


def _union(masks) -> int:
    m = 0
    for x in masks:
        m |= x
    return m


def barrier(planners: Sequence[AgentPlanner], bus: Bus, phase: int) -> None:
    """Compress, exchange, update beliefs and coordinate, in agent-id order."""
    planners = sorted(planners, key=lambda p: p.agent_id)
    bus.begin_round()
    messages = {p.agent_id: p.make_message(phase) for p in planners}
    delivered: dict[tuple[int, int], bool] = {}
    for r in planners:
        for s in sorted(r.known_active - {r.agent_id}):
            ok = s in messages and bus.deliver(messages[s], r.agent_id)
            delivered[(s, r.agent_id)] = ok
            if ok:
                r.receive(messages[s], phase)
            else:
                r.receive_loss(s, phase)
    cands = {p.agent_id: p.coordinate() for p in planners}
    if any(p.kind is PlannerKind.A_MCTS for p in planners):
        for r in planners:
            for s in sorted(r.known_active - {r.agent_id}):
                if delivered.get((s, r.agent_id)) and cands.get(s) is not None:
                    r.receive_candidate(s, cands[s])
        for p in planners:
            p.finalize_coordination()


def plan_phase(
    planners: Sequence[AgentPlanner],
    bus: Bus,
    iterations: int,
    exchange_every: int,
    phase: int = 0,
) -> dict[int, int]:
    """One synchronous planning phase for the given (active) agents.

    Barriers fall at iterations 0, ``exchange_every``, ... of the phase.
    Returns each agent's chosen next action.
    """
    if exchange_every <= 0:
        raise ValueError("exchange_every must be positive")
    done = 0
    while done < iterations:
        barrier(planners, bus, phase)
        k = min(exchange_every, iterations - done)
        for p in sorted(planners, key=lambda q: q.agent_id):
            p.iterate(k)
        done += k
    return {p.agent_id: p.choose_action() for p in planners}


class PerfectBus:
    """Lossless in-process delivery."""

    def begin_round(self) -> None:
        pass

    def deliver(self, message, recipient: int) -> bool:
        return True


class CentralPlanner:
    """Single interleaved tree for the whole team; depth ``d`` moves agent ``order[d % n]``."""

    def __init__(
        self,
        scenario: Scenario,
        starts: dict[int, int],
        budget: int,
        params: DuctParams,
        rng: random.Random | None = None,
        reward_scale: str | float = 1.0,
    ):
        self.scenario = scenario
        self.reward_scale = _reward_scale(scenario, reward_scale)
        self.budget = budget
        self.params = params
        self.rng = rng or random.Random(0)
        self.positions = dict(starts)
        self.executed: dict[int, list[int]] = {a: [] for a in starts}
        self.executed_masks: dict[int, int] = {a: 0 for a in starts}
        self.order = sorted(starts)
        self.steps = 0
        self.tree = self._fresh_tree()

    def _fresh_tree(self) -> SearchTree:
        n = len(self.order)
        domain = InterleavedDomain(self.scenario.graph, n, self.budget)
        state = tuple(self.positions[a] for a in self.order)
        # one joint step is n tree levels
        params = dataclasses.replace(self.params, rollout_horizon=self.params.rollout_horizon * n)
        return SearchTree(domain, state, params, self.rng, base_depth=self.steps * n)

    def decode(self, seq: ActionSequence) -> dict[int, ActionSequence]:
        n = len(self.order)
        return {a: tuple(seq[k::n]) for k, a in enumerate(self.order)}

    def reward(self, seq: ActionSequence) -> float:
        masks = self.scenario.graph.edge_masks
        m = 0
        for a in self.order:
            m |= self.executed_masks[a]
        for e in seq:
            m |= masks[e]
        return self.scenario.value(m) / self.reward_scale

    def set_active(self, active: Sequence[int]) -> None:
        order = sorted(a for a in active if a in self.positions)
        if order != self.order:
            self.order = order
            self.tree = self._fresh_tree()

    def plan(self, iterations: int) -> dict[int, int]:
        if not self.order:
            return {}
        for _ in range(iterations):
            self.tree.iterate(self.reward)
        node = self.tree.root
        actions = {}
        t = self.tree.t
        for a in self.order:
            if node is not None and node.children:
                best = max(sorted(node.children), key=lambda x: effective_visits(node.children[x], self.params, t))
                actions[a] = best
                node = node.children[best]
            else:
                opts = self.scenario.graph.adjacency[self.positions[a]]
                if not opts:
                    raise StrandedAgent(a)
                actions[a] = opts[self.rng.randrange(len(opts))][0]
                node = None
        return actions

    def execute(self, actions: dict[int, int]) -> None:
        masks = self.scenario.graph.edge_masks
        node = self.tree.root
        for a in self.order:
            e = actions[a]
            self.positions[a] = self.scenario.graph.other_end(e, self.positions[a])
            self.executed[a].append(e)
            self.executed_masks[a] |= masks[e]
            if node is not None:
                node = node.children.get(e)
        self.steps += 1
        if node is None:
            self.tree = self._fresh_tree()
            return
        for a in self.order:
            prune_to_child(self.tree, actions[a])


def central_plan(planner: CentralPlanner, iterations: int) -> dict[int, int]:
    return planner.plan(iterations)
