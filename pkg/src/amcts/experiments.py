"""Seeded experiment runner, parameter sweeps and the RM optimality study.

Every output file is written with fixed column order, fixed float formatting
and sorted JSON keys so that a re-run with the same configuration produces
byte-identical files.  Wall-clock timings never reach the files.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Sequence

from scipy import stats

from .coordination import (
    DEFAULT_EXHAUSTIVE_CAP,
    DEFAULT_RM_ROUNDS,
    MatrixGame,
    exhaustive_optimal,
    is_psne,
    parallel_regret_matching,
    pfo_rno_values,
)
from .environment import Scenario, generate_roadmap_scenario, load_scenario
from .planners import PlannerConfig, PlannerKind
from .search_tree import DuctParams
from .simulation import (
    METRICS_COLUMNS,
    CommModel,
    FailureMode,
    MetricsLog,
    MissionConfig,
    build_attrition_schedule,
    make_rng,
    run_mission,
)

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("schema", "planner", "step", "n", "mean", "ci95")
SWEEP_COLUMNS = ("schema", "axis", "value", "planner", "n", "final_mean", "final_ci95")
OPTIMALITY_GAME_COLUMNS = ("schema", "n_agents", "M", "actions", "game_seed", "achieved", "optimal", "optimal_hit", "psne")
OPTIMALITY_CELL_COLUMNS = ("schema", "n_agents", "M", "actions", "games", "pfo", "rno", "psne_failures", "note")
RESULT_SCHEMA_VERSION = 1

ALL_PLANNERS = tuple(k.value for k in PlannerKind)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every violated field."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.12g}"


@dataclass
class ExperimentConfig:
    # scenario
    scenario_path: str | None = None
    scenario_seed: int | None = None  # None: regenerate per repetition seed
    n_regions: int = 200
    area_side: float = 4000.0
    region_radius: float = 50.0
    region_value: float = 1.0
    n_vertices: int = 400
    connect_radius: float = 1275.0
    start_mode: str = "random"
    # planners and search
    planners: list[str] = field(default_factory=lambda: list(ALL_PLANNERS))
    iterations: int = 500
    gamma: float = 0.9
    c_p: float = 0.4
    decay_on_read: bool = False
    rollout_horizon: int | None = None  # None: the actions budget
    M: int = 10
    exchange_every: int = 50
    rm_rounds: int = DEFAULT_RM_ROUNDS
    reward_scale: float = 1.0
    belief_temperature: float = 1.0
    # mission
    budget: int = 9
    n_agents: int = 20
    intensity: float = 0.5
    failure_mode: str = "uniform"
    forced_step: int | None = None
    loss_probability: float = 0.0
    loss_tolerance: int = 1
    # bookkeeping
    repetitions: int = 10
    base_seed: int = 0
    output: str | None = None

    def problems(self) -> list[str]:
        out = []

        def need(cond, msg):
            if not cond:
                out.append(msg)

        need(self.n_regions >= 0, "n_regions must be >= 0")
        need(self.area_side > 0, "area_side must be > 0")
        need(self.region_radius >= 0, "region_radius must be >= 0")
        need(self.region_value > 0, "region_value must be > 0")
        need(self.n_vertices >= 2, "n_vertices must be >= 2")
        need(self.connect_radius > 0, "connect_radius must be > 0")
        need(self.start_mode in ("random", "depot"), "start_mode must be 'random' or 'depot'")
        need(len(self.planners) >= 1, "planners must name at least one planner kind")
        for p in self.planners:
            need(p in ALL_PLANNERS, f"planners: unknown kind {p!r} (choose from {', '.join(ALL_PLANNERS)})")
        need(self.iterations >= 0, "iterations must be >= 0")
        need(0 < self.gamma <= 1, "gamma must lie in (0, 1]")
        need(self.c_p >= 0, "c_p must be >= 0")
        need(self.rollout_horizon is None or self.rollout_horizon >= 0, "rollout_horizon must be >= 0")
        need(self.M >= 1, "M must be >= 1")
        need(self.exchange_every >= 1, "exchange_every must be >= 1")
        need(self.rm_rounds >= 1, "rm_rounds must be >= 1")
        need(self.reward_scale > 0, "reward_scale must be > 0")
        need(self.belief_temperature > 0, "belief_temperature must be > 0")
        need(self.budget >= 0, "budget must be >= 0")
        need(self.n_agents >= 1, "n_agents must be >= 1")
        need(0 <= self.intensity <= 1, "intensity must lie in [0, 1]")
        need(self.failure_mode in ("uniform", "forced"), "failure_mode must be 'uniform' or 'forced'")
        if self.failure_mode == "forced":
            need(
                self.forced_step is not None and 0 <= self.forced_step <= self.budget,
                "forced_step must lie in [0, budget] when failure_mode is 'forced'",
            )
        need(0 <= self.loss_probability <= 1, "loss_probability must lie in [0, 1]")
        need(self.loss_tolerance >= 1, "loss_tolerance must be >= 1")
        need(self.repetitions >= 1, "repetitions must be >= 1")
        return out

    def validate(self) -> "ExperimentConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError([f"unknown field {k!r}" for k in unknown])
        cfg = cls(**data)
        if isinstance(cfg.planners, str):
            cfg.planners = [p.strip() for p in cfg.planners.split(",") if p.strip()]
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def mission_config(self) -> MissionConfig:
        horizon = self.budget if self.rollout_horizon is None else self.rollout_horizon
        params = DuctParams(self.gamma, self.c_p, self.iterations, horizon, self.decay_on_read)
        planner = PlannerConfig(
            M=self.M,
            exchange_every=self.exchange_every,
            rm_rounds=self.rm_rounds,
            loss_tolerance=self.loss_tolerance,
            belief_temperature=self.belief_temperature,
            reward_scale=self.reward_scale,
        )
        return MissionConfig(self.n_agents, self.budget, params, planner)

    def scenario_for(self, seed: int) -> Scenario:
        if self.scenario_path:
            sc = load_scenario(self.scenario_path)
            if len(sc.starts) < self.n_agents:
                raise ConfigError([f"scenario_path provides {len(sc.starts)} starts, n_agents is {self.n_agents}"])
            return sc
        s = seed if self.scenario_seed is None else self.scenario_seed
        return generate_roadmap_scenario(
            s,
            area_side=self.area_side,
            n_regions=self.n_regions,
            region_radius=self.region_radius,
            region_value=self.region_value,
            n_vertices=self.n_vertices,
            connect_radius=self.connect_radius,
            n_agents=self.n_agents,
            start_mode=self.start_mode,
        )


def t_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half-width; a single value has zero half-width."""
    if not values:
        return float("nan"), float("nan")
    m = statistics.fmean(values)
    if len(values) < 2:
        return m, 0.0
    sd = statistics.stdev(values)
    q = stats.t.ppf(0.5 + confidence / 2.0, len(values) - 1)
    return m, float(q * sd / math.sqrt(len(values)))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    logs: list[MetricsLog]
    summary: list[dict]
    files: dict[str, str] = field(default_factory=dict)

    def final_irc(self, planner: str) -> list[float]:
        return [m.final_irc for m in self.logs if m.planner == planner]

    def mean_final(self, planner: str) -> float:
        return statistics.fmean(self.final_irc(planner))


def summarize(logs: Sequence[MetricsLog], planners: Sequence[str], budget: int) -> list[dict]:
    rows = []
    for p in planners:
        runs = [m for m in logs if m.planner == p]
        steps = [str(s) for s in range(1, budget + 1)] + ["final"]
        for s in steps:
            if s == "final":
                vals = [m.final_irc for m in runs]
            else:
                vals = [m.irc[int(s) - 1] for m in runs if len(m.irc) >= int(s)]
            mean, ci = t_interval(vals)
            rows.append({"planner": p, "step": s, "n": len(vals), "mean": mean, "ci95": ci})
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path: FsPath, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return str(path)


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> ExperimentResult:
    """Paired runs: every planner sees the same scenario, schedule and loss pattern per seed."""
    config.validate()
    mission = config.mission_config()
    logs: list[MetricsLog] = []
    for r in range(config.repetitions):
        seed = config.base_seed + r
        scenario = config.scenario_for(seed)
        schedule = build_attrition_schedule(
            seed,
            config.n_agents,
            config.intensity,
            config.budget,
            FailureMode(config.failure_mode),
            config.forced_step,
        )
        comm = CommModel(config.loss_probability, seed)
        for p in config.planners:
            m = run_mission(scenario, p, mission, schedule, comm, seed)
            m.config = {"iterations": config.iterations, "M": config.M, "budget": config.budget}
            logs.append(m)
            log.info("seed %d %s final IRC %.4f", seed, p, m.final_irc)
    summary = summarize(logs, config.planners, config.budget)
    result = ExperimentResult(config, logs, summary)
    target = out_dir or config.output
    if target:
        write_experiment(result, FsPath(target))
    return result


def write_experiment(result: ExperimentResult, out: FsPath) -> None:
    rows = [r for m in result.logs for r in m.rows()]
    result.files["metrics"] = _write(out / "metrics.csv", _csv(METRICS_COLUMNS, rows))
    srows = [
        (RESULT_SCHEMA_VERSION, r["planner"], r["step"], r["n"], _fmt(r["mean"]), _fmt(r["ci95"]))
        for r in result.summary
    ]
    result.files["summary"] = _write(out / "summary.csv", _csv(SUMMARY_COLUMNS, srows))
    cfg = json.dumps(result.config.to_dict(), sort_keys=True, indent=2) + "\n"
    result.files["config"] = _write(out / "config.json", cfg)


def read_metrics(path) -> list[dict]:
    """Parse ``metrics.csv`` back into typed rows."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "schema": int(row["schema"]),
                    "seed": int(row["seed"]),
                    "planner": row["planner"],
                    "intensity": float(row["intensity"]),
                    "step": row["step"] if row["step"] == "final" else int(row["step"]),
                    "irc": float(row["irc"]),
                }
            )
    return out


def read_summary(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                {
                    "schema": int(row["schema"]),
                    "planner": row["planner"],
                    "step": row["step"] if row["step"] == "final" else int(row["step"]),
                    "n": int(row["n"]),
                    "mean": float(row["mean"]),
                    "ci95": float(row["ci95"]),
                }
            )
    return out


# -- sweeps ----------------------------------------------------------------------


class SweepAxis(str, enum.Enum):
    FAILURE_INTENSITY = "FailureIntensity"
    PLANNING_ITERATIONS = "PlanningIterations"
    EXCHANGED_COMPONENTS = "ExchangedComponents"
    ACTIONS_BUDGET = "ActionsBudget"
    AGENT_COUNT = "AgentCount"
    REGION_COUNT = "RegionCount"
    COMM_LOSS_PROBABILITY = "CommLossProbability"
    LOSS_TOLERANCE = "LossTolerance"
    FORCED_FAILURE_STEP = "ForcedFailureStep"


AXIS_FIELD = {
    SweepAxis.FAILURE_INTENSITY: ("intensity", float),
    SweepAxis.PLANNING_ITERATIONS: ("iterations", int),
    SweepAxis.EXCHANGED_COMPONENTS: ("M", int),
    SweepAxis.ACTIONS_BUDGET: ("budget", int),
    SweepAxis.AGENT_COUNT: ("n_agents", int),
    SweepAxis.REGION_COUNT: ("n_regions", int),
    SweepAxis.COMM_LOSS_PROBABILITY: ("loss_probability", float),
    SweepAxis.LOSS_TOLERANCE: ("loss_tolerance", int),
    SweepAxis.FORCED_FAILURE_STEP: ("forced_step", int),
}


@dataclass
class SweepSpec:
    axis: SweepAxis
    values: list
    base: ExperimentConfig = field(default_factory=ExperimentConfig)

    def __post_init__(self):
        self.axis = SweepAxis(self.axis)

    def configs(self) -> list[tuple[Any, ExperimentConfig]]:
        if not self.values:
            raise ConfigError(["sweep values must not be empty"])
        name, cast = AXIS_FIELD[self.axis]
        out, problems = [], []
        for v in self.values:
            v = cast(v)
            cfg = dataclasses.replace(self.base, **{name: v}, output=None)
            if self.axis is SweepAxis.FORCED_FAILURE_STEP:
                cfg.failure_mode = "forced"
            problems += [f"{self.axis.value}={v}: {p}" for p in cfg.problems()]
            out.append((v, cfg))
        if problems:
            raise ConfigError(problems)
        return out


@dataclass
class SweepResult:
    spec: SweepSpec
    blocks: list[tuple[Any, ExperimentResult]]
    table: list[dict]
    files: dict[str, str] = field(default_factory=dict)


def run_sweep(spec: SweepSpec, out_dir: str | None = None) -> SweepResult:
    blocks = []
    table = []
    target = FsPath(out_dir or spec.base.output) if (out_dir or spec.base.output) else None
    for v, cfg in spec.configs():
        sub = target / f"{spec.axis.value}={v}" if target else None
        res = run_experiment(cfg, str(sub) if sub else None)
        blocks.append((v, res))
        for p in cfg.planners:
            mean, ci = t_interval(res.final_irc(p))
            table.append({"axis": spec.axis.value, "value": v, "planner": p, "n": cfg.repetitions, "final_mean": mean, "final_ci95": ci})
    result = SweepResult(spec, blocks, table)
    if target:
        rows = [
            (RESULT_SCHEMA_VERSION, r["axis"], r["value"], r["planner"], r["n"], _fmt(r["final_mean"]), _fmt(r["final_ci95"]))
            for r in table
        ]
        result.files["sweep"] = _write(target / "sweep.csv", _csv(SWEEP_COLUMNS, rows))
    return result


# -- optimality study ----------------------------------------------------------------


@dataclass
class OptimalityConfig:
    n_agents: list[int] = field(default_factory=lambda: [2, 3, 4, 5, 6])
    M: list[int] = field(default_factory=lambda: [10])
    actions: list[int] = field(default_factory=lambda: [9])
    games: int = 40
    seed: int = 0
    rm_rounds: int = DEFAULT_RM_ROUNDS
    cap: int = DEFAULT_EXHAUSTIVE_CAP
    # scenario the walks are drawn on; the wide observation radius makes
    # walks share regions, so the game is not separable per agent
    n_regions: int = 200
    area_side: float = 4000.0
    region_radius: float = 200.0
    n_vertices: int = 400
    connect_radius: float = 1275.0
    start_mode: str = "depot"
    # cells whose (n_agents -> M) entry is listed here use that M instead
    m_override: dict[int, int] = field(default_factory=dict)


@dataclass
class OptimalityCell:
    n_agents: int
    M: int
    actions: int
    games: int
    pfo: float
    rno: float
    psne_failures: int
    note: str = ""
    rows: list[dict] = field(default_factory=list)

    @property
    def skipped(self) -> bool:
        return self.games == 0


def random_walk(scenario: Scenario, start: int, length: int, rng) -> tuple[int, ...]:
    adj = scenario.graph.adjacency
    v, seq = start, []
    for _ in range(length):
        opts = adj[v]
        if not opts:
            break
        e, v = opts[rng.randrange(len(opts))]
        seq.append(e)
    return tuple(seq)


def coverage_game(scenario: Scenario, n_agents: int, M: int, actions: int, rng) -> MatrixGame:
    """``M`` distinct random walks of ``actions`` edges per agent from its start vertex."""
    masks, payloads = [], []
    for a in range(n_agents):
        seqs, seen = [], set()
        for _ in range(50 * M):
            if len(seqs) == M:
                break
            s = random_walk(scenario, scenario.starts[a], actions, rng)
            if s not in seen:
                seen.add(s)
                seqs.append(s)
        payloads.append(seqs)
        masks.append([scenario.path_mask(s) for s in seqs])
    return MatrixGame(list(range(n_agents)), masks, scenario.value, payloads)


def optimality_cell(cfg: OptimalityConfig, n_agents: int, M: int, actions: int) -> OptimalityCell:
    if M ** n_agents > cfg.cap:
        note = f"skipped: {M}^{n_agents} profiles exceed cap {cfg.cap}"
        log.warning(note)
        return OptimalityCell(n_agents, M, actions, 0, float("nan"), float("nan"), 0, note)
    pairs, rows, psne_fail = [], [], 0
    for g in range(cfg.games):
        game_seed = cfg.seed + g
        sc = generate_roadmap_scenario(
            game_seed,
            area_side=cfg.area_side,
            n_regions=cfg.n_regions,
            region_radius=cfg.region_radius,
            n_vertices=cfg.n_vertices,
            connect_radius=cfg.connect_radius,
            n_agents=n_agents,
            start_mode=cfg.start_mode,
        )
        game = coverage_game(sc, n_agents, M, actions, make_rng(game_seed, "walks", n_agents, M, actions))
        rngs = [make_rng(game_seed, "rm", n_agents, M, actions, k) for k in range(n_agents)]
        best, _ = parallel_regret_matching(game, rngs, cfg.rm_rounds)
        achieved = game.utility(best)
        _, optimal = exhaustive_optimal(game, cfg.cap)
        hit = math.isclose(achieved, optimal, rel_tol=1e-9, abs_tol=1e-9)
        psne = is_psne(game, best)
        if hit and not psne:
            psne_fail += 1
        pairs.append((achieved, optimal))
        rows.append(
            {"n_agents": n_agents, "M": M, "actions": actions, "game_seed": game_seed, "achieved": achieved, "optimal": optimal, "optimal_hit": hit, "psne": psne}
        )
    m = pfo_rno_values(pairs)
    return OptimalityCell(n_agents, M, actions, len(pairs), m.pfo, m.rno, psne_fail, "", rows)


def run_optimality_study(cfg: OptimalityConfig, out_dir: str | None = None) -> list[OptimalityCell]:
    if cfg.games < 1:
        raise ConfigError(["games must be >= 1"])
    cells = []
    for n in cfg.n_agents:
        for M in cfg.M:
            M_eff = cfg.m_override.get(n, M)
            for k in cfg.actions:
                cells.append(optimality_cell(cfg, n, M_eff, k))
    if out_dir:
        out = FsPath(out_dir)
        crow = [
            (RESULT_SCHEMA_VERSION, c.n_agents, c.M, c.actions, c.games, _fmt(c.pfo), _fmt(c.rno), c.psne_failures, c.note)
            for c in cells
        ]
        _write(out / "optimality.csv", _csv(OPTIMALITY_CELL_COLUMNS, crow))
        grow = [
            (RESULT_SCHEMA_VERSION, r["n_agents"], r["M"], r["actions"], r["game_seed"], _fmt(r["achieved"]), _fmt(r["optimal"]), int(r["optimal_hit"]), int(r["psne"]))
            for c in cells
            for r in c.rows
        ]
        _write(out / "optimality_games.csv", _csv(OPTIMALITY_GAME_COLUMNS, grow))
    return cells
