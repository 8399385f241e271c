"""Mission loop: plan, execute one edge each, apply attrition, record IRC."""

from __future__ import annotations

import csv
import enum
import io
import math
import random
import time
from dataclasses import dataclass, field

from .environment import Scenario
from .planners import (
    AgentPlanner,
    CentralPlanner,
    PlannerConfig,
    PlannerKind,
    StrandedAgent,
    plan_phase,
)
from .search_tree import DuctParams

METRICS_SCHEMA_VERSION = 1
METRICS_COLUMNS = ("schema", "seed", "planner", "intensity", "step", "irc")


def make_rng(seed: int, *stream) -> random.Random:
    # str seeds hash through sha512, independent of PYTHONHASHSEED
    return random.Random(repr((seed,) + tuple(stream)))


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class FailureMode(str, enum.Enum):
    UNIFORM_RANDOM = "uniform"
    FORCED_AFTER = "forced"


@dataclass
class AttritionSchedule:
    """``failures[agent] = k``: the agent fails right after its ``k``-th executed action."""

    failures: dict[int, int] = field(default_factory=dict)
    intensity: float = 0.0

    def failing_at(self, step: int) -> list[int]:
        return sorted(a for a, k in self.failures.items() if k == step)


def build_attrition_schedule(
    seed: int,
    n_agents: int,
    intensity: float,
    budget: int,
    mode: FailureMode | str = FailureMode.UNIFORM_RANDOM,
    forced_step: int | None = None,
) -> AttritionSchedule:
    mode = FailureMode(mode)
    if not 0.0 <= intensity <= 1.0:
        raise ValueError("intensity must lie in [0, 1]")
    rng = make_rng(seed, "attrition")
    count = round_half_up(intensity * n_agents)
    chosen = sorted(rng.sample(range(n_agents), count))
    if mode is FailureMode.UNIFORM_RANDOM:
        failures = {a: rng.randint(0, budget) for a in chosen}
    else:
        if forced_step is None or not 0 <= forced_step <= budget:
            raise ValueError("forced_step must lie in [0, budget]")
        failures = {a: forced_step for a in chosen}
    return AttritionSchedule(failures, intensity)


@dataclass
class CommModel:
    loss_probability: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must lie in [0, 1]")


class LossyBus:
    """Independent Bernoulli loss per directed message and exchange round.

    The loss matrix for every ordered pair is drawn at the start of each
    round whether or not the pair communicates, so the pattern depends only
    on the seed and the round index.
    """

    def __init__(self, comm: CommModel, agent_ids):
        self.comm = comm
        self.ids = sorted(agent_ids)
        self.rng = make_rng(comm.seed, "comm")
        self.round = 0
        self._lost: dict[tuple[int, int], bool] = {}
        self.sent = 0
        self.dropped = 0

    def begin_round(self) -> None:
        self.round += 1
        p = self.comm.loss_probability
        draw = self.rng.random
        self._lost = {(s, r): draw() < p for s in self.ids for r in self.ids if s != r}

    def deliver(self, message, recipient: int) -> bool:
        self.sent += 1
        lost = self._lost.get((message.sender, recipient), False)
        if lost:
            self.dropped += 1
        return not lost


def deliver(bus: LossyBus, message, recipient: int) -> bool:
    return bus.deliver(message, recipient)


@dataclass
class MissionState:
    step: int
    positions: dict[int, int]
    remaining_budget: dict[int, int]
    active: set[int]
    executed_paths: dict[int, list[int]]
    total_available: float


@dataclass
class MetricsLog:
    seed: int
    planner: str
    intensity: float
    irc: list[float] = field(default_factory=list)
    phase_seconds: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    failed: dict[int, int] = field(default_factory=dict)
    # executed edge sequence per agent; kept in memory only, never written out
    paths: dict[int, list[int]] = field(default_factory=dict)

    @property
    def final_irc(self) -> float:
        return self.irc[-1] if self.irc else 0.0

    def rows(self) -> list[tuple]:
        out = [
            (METRICS_SCHEMA_VERSION, self.seed, self.planner, self.intensity, s + 1, f"{v:.12g}")
            for s, v in enumerate(self.irc)
        ]
        out.append((METRICS_SCHEMA_VERSION, self.seed, self.planner, self.intensity, "final", f"{self.final_irc:.12g}"))
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(METRICS_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()


def irc(scenario: Scenario, state: MissionState) -> float:
    """Fraction of total region value observed by currently active agents."""
    if state.total_available <= 0:
        raise ValueError("scenario has no available reward")
    masks = scenario.graph.edge_masks
    m = 0
    for a in state.active:
        for e in state.executed_paths[a]:
            m |= masks[e]
    return scenario.value(m) / state.total_available


@dataclass
class MissionConfig:
    n_agents: int = 20
    budget: int = 9
    params: DuctParams = field(default_factory=DuctParams)
    planner: PlannerConfig = field(default_factory=PlannerConfig)


def run_mission(
    scenario: Scenario,
    kind: PlannerKind | str,
    config: MissionConfig,
    schedule: AttritionSchedule,
    comm: CommModel,
    seed: int,
) -> MetricsLog:
    kind = PlannerKind(kind)
    n, B = config.n_agents, config.budget
    if scenario.total_value <= 0:
        raise ValueError("scenario has no available reward")
    if len(scenario.starts) < n:
        raise ValueError(f"scenario provides {len(scenario.starts)} start vertices for {n} agents")
    ids = list(range(n))
    state = MissionState(
        step=0,
        positions={a: scenario.starts[a] for a in ids},
        remaining_budget={a: B for a in ids},
        active=set(ids),
        executed_paths={a: [] for a in ids},
        total_available=scenario.total_value,
    )
    metrics = MetricsLog(seed, kind.value, schedule.intensity)

    if kind is PlannerKind.CENTRAL_MCTS:
        central = CentralPlanner(
            scenario, dict(state.positions), B, config.params, make_rng(seed, "central"), config.planner.reward_scale
        )
        agents = {}
    else:
        bus = LossyBus(CommModel(comm.loss_probability, seed if comm.seed is None else comm.seed), ids)
        agents = {
            a: AgentPlanner(
                a,
                kind,
                scenario,
                state.positions[a],
                B,
                config.params,
                ids,
                config.planner,
                make_rng(seed, "tree", a),
                make_rng(seed, "rm", a),
            )
            for a in ids
        }

    def fail(agents_down):
        for a in agents_down:
            if a in state.active:
                state.active.discard(a)
                metrics.failed[a] = state.step

    fail(schedule.failing_at(0))
    for step in range(1, B + 1):
        live = sorted(state.active)
        t0 = time.perf_counter()
        if not live:
            actions = {}
        elif kind is PlannerKind.CENTRAL_MCTS:
            central.set_active(live)
            actions = central.plan(config.params.iterations_per_phase)
        else:
            planners = [agents[a] for a in live]
            actions = {}
            try:
                actions = plan_phase(
                    planners, bus, config.params.iterations_per_phase, config.planner.exchange_every, phase=step
                )
            except StrandedAgent as exc:
                fail([exc.agent_id])
                planners = [p for p in planners if p.agent_id != exc.agent_id]
                actions = {p.agent_id: p.choose_action() for p in planners}
        metrics.phase_seconds.append(time.perf_counter() - t0)

        if kind is PlannerKind.CENTRAL_MCTS and actions:
            central.execute(actions)
        for a in sorted(actions):
            if kind is not PlannerKind.CENTRAL_MCTS:
                agents[a].execute(actions[a])
            state.positions[a] = scenario.graph.other_end(actions[a], state.positions[a])
            state.executed_paths[a].append(actions[a])
            state.remaining_budget[a] -= 1
        state.step = step
        fail(schedule.failing_at(step))
        metrics.irc.append(irc(scenario, state))
    metrics.paths = {a: list(p) for a, p in state.executed_paths.items()}
    return metrics
