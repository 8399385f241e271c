"""Attrition-aware decentralized MCTS for multi-agent coverage planning."""

from .coordination import (
    JointProfile,
    MatrixGame,
    exhaustive_optimal,
    greedy_coordination,
    is_psne,
    parallel_regret_matching,
    pfo_rno,
    run_regret_matching,
)
from .environment import (
    Path,
    Region,
    RoadmapGraph,
    Scenario,
    ScenarioError,
    generate_grid_scenario,
    generate_roadmap_scenario,
    global_utility,
    load_scenario,
    marginal_utility,
    save_scenario,
)
from .planners import AgentPlanner, CentralPlanner, PlannerConfig, PlannerKind
from .search_tree import DuctParams, SearchTree, compress, duct_score
from .simulation import (
    AttritionSchedule,
    CommModel,
    FailureMode,
    MetricsLog,
    MissionConfig,
    build_attrition_schedule,
    run_mission,
)

__version__ = "0.1.0"

__all__ = [
    "AgentPlanner",
    "AttritionSchedule",
    "CentralPlanner",
    "CommModel",
    "DuctParams",
    "FailureMode",
    "JointProfile",
    "MatrixGame",
    "MetricsLog",
    "MissionConfig",
    "Path",
    "PlannerConfig",
    "PlannerKind",
    "Region",
    "RoadmapGraph",
    "Scenario",
    "ScenarioError",
    "SearchTree",
    "build_attrition_schedule",
    "compress",
    "duct_score",
    "exhaustive_optimal",
    "generate_grid_scenario",
    "generate_roadmap_scenario",
    "global_utility",
    "greedy_coordination",
    "is_psne",
    "load_scenario",
    "marginal_utility",
    "parallel_regret_matching",
    "pfo_rno",
    "run_mission",
    "run_regret_matching",
    "save_scenario",
]
