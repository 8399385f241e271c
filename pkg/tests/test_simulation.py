import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amcts.environment import generate_roadmap_scenario
from amcts.planners import AgentPlanner, PlannerConfig, PlannerKind, plan_phase
from amcts.search_tree import DuctParams
from amcts.simulation import (
    CommModel,
    FailureMode,
    LossyBus,
    MissionConfig,
    build_attrition_schedule,
    make_rng,
    round_half_up,
    run_mission,
)

from oracles import covered_ids, set_value

ALL_KINDS = list(PlannerKind)


def world(seed=0, n_agents=4):
    return generate_roadmap_scenario(
        seed, area_side=1000, n_regions=20, region_radius=60, n_vertices=25, connect_radius=400, n_agents=n_agents
    )


def mission(n=4, budget=4, iterations=30, **planner):
    params = DuctParams(gamma=0.9, c_p=0.4, iterations_per_phase=iterations, rollout_horizon=budget)
    return MissionConfig(n, budget, params, PlannerConfig(**{"M": 4, "exchange_every": 10, **planner}))


def recompute_irc(sc, log, step):
    alive = [a for a in log.paths if log.failed.get(a, math.inf) > step]
    ids = covered_ids(sc, [log.paths[a][:step] for a in alive])
    return set_value(sc, ids) / sc.total_value


# -- attrition schedules ----------------------------------------------------------------


def test_intensity_extremes():
    assert build_attrition_schedule(0, 20, 0.0, 9).failures == {}
    assert sorted(build_attrition_schedule(0, 20, 1.0, 9).failures) == list(range(20))


def test_forced_schedule_at_half_intensity():
    s = build_attrition_schedule(3, 20, 0.5, 9, FailureMode.FORCED_AFTER, forced_step=2)
    assert len(s.failures) == 10
    assert set(s.failures.values()) == {2}
    assert s.failing_at(2) == sorted(s.failures)


def test_half_up_rounding():
    assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4)] == [1, 2, 3, 2]
    assert len(build_attrition_schedule(0, 5, 0.5, 9).failures) == 3


def test_schedule_validation():
    with pytest.raises(ValueError):
        build_attrition_schedule(0, 4, 1.5, 9)
    with pytest.raises(ValueError):
        build_attrition_schedule(0, 4, 0.5, 9, "forced", forced_step=10)
    with pytest.raises(ValueError):
        build_attrition_schedule(0, 4, 0.5, 9, "forced")


@given(st.integers(0, 10_000), st.floats(0, 1), st.integers(0, 12))
def test_uniform_schedule_steps_in_range(seed, intensity, budget):
    s = build_attrition_schedule(seed, 10, intensity, budget)
    assert len(s.failures) == round_half_up(intensity * 10)
    assert all(0 <= k <= budget for k in s.failures.values())
    assert s == build_attrition_schedule(seed, 10, intensity, budget)


# -- communication ------------------------------------------------------------------------


def test_seeded_loss_pattern_repeats():
    def pattern(seed):
        bus = LossyBus(CommModel(0.3, seed), range(4))
        out = []
        for _ in range(20):
            bus.begin_round()
            out.append(tuple(sorted(bus._lost.items())))
        return out

    assert pattern(5) == pattern(5)
    assert pattern(5) != pattern(6)


def test_loss_rate_is_roughly_honoured():
    bus = LossyBus(CommModel(0.25, 1), range(5))
    lost = 0
    for _ in range(400):
        bus.begin_round()
        lost += sum(bus._lost.values())
    assert lost / (400 * 20) == pytest.approx(0.25, abs=0.02)


def test_invalid_loss_probability():
    with pytest.raises(ValueError):
        CommModel(1.2)


def test_total_loss_drops_every_peer():
    sc = world(2)
    cfg = mission(loss_tolerance=1)
    team = [
        AgentPlanner(a, PlannerKind.A_MCTS, sc, sc.starts[a], 4, cfg.params, range(4), cfg.planner, make_rng(0, a), make_rng(1, a))
        for a in range(4)
    ]
    plan_phase(team, LossyBus(CommModel(1.0, 0), range(4)), 30, 10)
    assert all(p.known_active == {p.agent_id} for p in team)
    assert all(p.build_game().players == (p.agent_id,) for p in team)


def test_total_loss_mission_still_completes():
    sc = world(2)
    cfg = mission(loss_tolerance=1)
    sched = build_attrition_schedule(0, 4, 0.0, 4)
    log = run_mission(sc, PlannerKind.A_MCTS, cfg, sched, CommModel(1.0), 0)
    assert len(log.irc) == 4
    assert not log.failed


# -- missions ----------------------------------------------------------------------------------


def test_zero_budget_gives_empty_series():
    sc = world()
    log = run_mission(sc, PlannerKind.DEC_MCTS, mission(budget=0), build_attrition_schedule(0, 4, 0.0, 0), CommModel(), 0)
    assert log.irc == [] and log.final_irc == 0.0
    assert log.rows()[-1][-2:] == ("final", "0")


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_irc_is_monotone_without_failures(kind):
    sc = world(1)
    log = run_mission(sc, kind, mission(), build_attrition_schedule(0, 4, 0.0, 4), CommModel(), 1)
    assert len(log.irc) == 4
    assert all(b >= a for a, b in zip(log.irc, log.irc[1:]))
    assert 0 < log.final_irc <= 1


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_irc_matches_recompute_from_scratch(kind):
    sc = world(4)
    sched = build_attrition_schedule(4, 4, 0.5, 4)
    log = run_mission(sc, kind, mission(), sched, CommModel(0.2), 4)
    assert log.failed == sched.failures
    for step, value in enumerate(log.irc, start=1):
        assert value == pytest.approx(recompute_irc(sc, log, step), abs=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 1000), st.sampled_from(ALL_KINDS))
def test_failed_agents_stop_moving(seed, kind):
    sc = world(seed % 5)
    sched = build_attrition_schedule(seed, 4, 0.5, 3)
    log = run_mission(sc, kind, mission(budget=3, iterations=10), sched, CommModel(), seed)
    for a, path in log.paths.items():
        assert len(path) == sched.failures.get(a, 3)
        for step in range(1, 4):
            assert log.irc[step - 1] == pytest.approx(recompute_irc(sc, log, step), abs=1e-12)


def test_forced_failure_after_fourth_action():
    sc = world(3)
    sched = build_attrition_schedule(3, 4, 0.5, 6, "forced", forced_step=4)
    log = run_mission(sc, PlannerKind.A_MCTS, mission(budget=6), sched, CommModel(), 3)
    for a in sched.failures:
        assert len(log.paths[a]) == 4
    for a in set(range(4)) - set(sched.failures):
        assert len(log.paths[a]) == 6


def test_everyone_failing_at_start_yields_zero():
    sc = world()
    sched = build_attrition_schedule(0, 4, 1.0, 3, "forced", forced_step=0)
    log = run_mission(sc, PlannerKind.DEC_MCTS, mission(budget=3), sched, CommModel(), 0)
    assert log.irc == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("kind", [PlannerKind.A_MCTS, PlannerKind.CENTRAL_MCTS])
def test_missions_are_deterministic(kind):
    sc = world(5)
    sched = build_attrition_schedule(5, 4, 0.5, 4)
    a = run_mission(sc, kind, mission(), sched, CommModel(0.1), 5)
    b = run_mission(sc, kind, mission(), sched, CommModel(0.1), 5)
    assert a.to_csv() == b.to_csv()
    assert a.paths == b.paths


def test_not_enough_starts():
    with pytest.raises(ValueError):
        run_mission(world(n_agents=2), PlannerKind.DEC_MCTS, mission(n=4), build_attrition_schedule(0, 4, 0, 4), CommModel(), 0)


def test_make_rng_streams_are_independent():
    assert make_rng(1, "a").random() == make_rng(1, "a").random()
    assert make_rng(1, "a").random() != make_rng(1, "b").random()
