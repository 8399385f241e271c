"""Two-agent grid-world diamonds game showing how each reward reacts to a peer's failure.

Agent 0 starts in the top-left corner of a 4x3 grid with three moves.  One
diamond sits to its right and a column of three diamonds sits below it.  The
peer (agent 1) follows a fixed plan that sweeps the column, so with the peer
alive the best move is *right*; once the peer is gone it is *down*.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .environment import Scenario, generate_grid_scenario, grid_cell_index
from .planners import AgentPlanner, IntentionMessage, PlannerConfig, PlannerKind
from .search_tree import CompressedPlanSet, DuctParams

ROWS, COLS, BUDGET = 4, 3, 3
DIAMONDS = {(0, 1): 1.0, (1, 0): 1.0, (2, 0): 1.0, (3, 0): 1.0}
STARTS = [(0, 0), (1, 1)]


@dataclass
class DiamondsGame:
    scenario: Scenario
    peer_plan: tuple[int, ...]
    right: int
    down: int


def _edge(scenario: Scenario, a: tuple[int, int], b: tuple[int, int]) -> int:
    u, v = grid_cell_index(a, COLS), grid_cell_index(b, COLS)
    for e, (i, j) in enumerate(scenario.graph.edges):
        if {i, j} == {u, v}:
            return e
    raise KeyError((a, b))


def diamonds_game() -> DiamondsGame:
    sc = generate_grid_scenario(ROWS, COLS, DIAMONDS, STARTS)
    peer = (_edge(sc, (1, 1), (1, 0)), _edge(sc, (1, 0), (2, 0)), _edge(sc, (2, 0), (3, 0)))
    return DiamondsGame(sc, peer, _edge(sc, (0, 0), (0, 1)), _edge(sc, (0, 0), (1, 0)))


@dataclass
class FailureTrial:
    kind: PlannerKind
    seed: int
    converged_action: int | None
    converged_at: int
    after_failure: list[int] = field(default_factory=list)

    def kept(self) -> bool:
        return all(a == self.converged_action for a in self.after_failure)

    def final_action(self) -> int | None:
        return self.after_failure[-1] if self.after_failure else None


def failure_trial(
    kind: PlannerKind | str,
    seed: int,
    gamma: float = 0.75,
    c_p: float = 0.5,
    stable_for: int = 50,
    after: int = 100,
    exchange_every: int = 50,
    max_iterations: int = 5000,
) -> FailureTrial:
    """Run agent 0 until its root choice is stable, drop the peer, keep planning.

    The peer's single plan is re-sent every ``exchange_every`` iterations
    while it is alive; its failure is detected as one lost exchange.
    """
    kind = PlannerKind(kind)
    game = diamonds_game()
    sc = game.scenario
    params = DuctParams(gamma=gamma, c_p=c_p, iterations_per_phase=0, rollout_horizon=BUDGET)
    cfg = PlannerConfig(M=10, exchange_every=exchange_every, loss_tolerance=1, reward_scale="total")
    agent = AgentPlanner(
        0, kind, sc, sc.starts[0], BUDGET, params, [0, 1], cfg, random.Random(seed), random.Random(f"rm{seed}")
    )
    peer_msg = IntentionMessage(1, 0, CompressedPlanSet(1, [game.peer_plan], [1.0]), 0)

    def exchange():
        agent.make_message(0)
        agent.receive(peer_msg)
        agent.coordinate()
        agent.finalize_coordination()

    stable, last, it = 0, None, 0
    while it < max_iterations:
        if it % exchange_every == 0:
            exchange()
        agent.iterate(1)
        it += 1
        a = agent.tree.best_action()
        stable = stable + 1 if a == last else 0
        last = a
        if stable >= stable_for:
            break

    agent.receive_loss(1)
    trial = FailureTrial(kind, seed, last, it)
    for _ in range(after):
        if it % exchange_every == 0:
            agent.make_message(0)
            agent.coordinate()
            agent.finalize_coordination()
        agent.iterate(1)
        it += 1
        trial.after_failure.append(agent.tree.best_action())
    return trial
