"""Cooperative matrix game over compressed plan sets.

Every player's actions are coverage bitmasks; the common payoff of a joint
profile is the value of the union of the chosen masks.  Regret matching
self-play, the greedy sequential coordinator, the exhaustive optimum and the
PFO/RNO optimality metrics all operate on :class:`MatrixGame`.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .environment import CoverageValue

log = logging.getLogger(__name__)

DEFAULT_RM_ROUNDS = 200
DEFAULT_EXHAUSTIVE_CAP = 10**7


class ExhaustiveCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class JointProfile:
    players: tuple[int, ...]
    indices: tuple[int, ...]

    def index_of(self, player: int) -> int:
        return self.indices[self.players.index(player)]


class MatrixGame:
    """Identical-interest game; ``masks[n][m]`` is player ``n``'s action ``m``.

    ``payloads`` optionally carries whatever each action stands for (for the
    planners, the action sequence).  ``calls`` counts utility evaluations.
    """

    def __init__(
        self,
        players: Sequence[int],
        masks: Sequence[Sequence[int]],
        value: CoverageValue | Callable[[int], float],
        payloads: Sequence[Sequence] | None = None,
        base_mask: int = 0,
    ):
        if len(players) != len(masks):
            raise ValueError("one action list per player")
        if any(len(row) == 0 for row in masks):
            raise ValueError("every player needs at least one action")
        self.players = tuple(players)
        self.masks = [list(row) for row in masks]
        self.value = value
        self.payloads = [list(p) for p in payloads] if payloads is not None else None
        self.base_mask = base_mask
        self.calls = 0

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def sizes(self) -> list[int]:
        return [len(row) for row in self.masks]

    def n_profiles(self) -> int:
        return math.prod(self.sizes)

    def evaluate(self, mask: int) -> float:
        self.calls += 1
        return self.value(mask | self.base_mask)

    def profile_mask(self, indices: Sequence[int]) -> int:
        m = 0
        for row, i in zip(self.masks, indices):
            m |= row[i]
        return m

    def utility(self, profile: JointProfile | Sequence[int]) -> float:
        idx = profile.indices if isinstance(profile, JointProfile) else profile
        return self.evaluate(self.profile_mask(idx))

    def profile(self, indices: Sequence[int]) -> JointProfile:
        return JointProfile(self.players, tuple(int(i) for i in indices))

    def resolve(self, profile: JointProfile) -> dict[int, object]:
        if self.payloads is None:
            raise ValueError("game carries no payloads")
        return {p: self.payloads[n][i] for n, (p, i) in enumerate(zip(profile.players, profile.indices))}


# -- regret matching -----------------------------------------------------------


def regret_probabilities(regret_row: Sequence[float]) -> list[float]:
    pos = [r if r > 0.0 else 0.0 for r in regret_row]
    s = sum(pos)
    if s > 0.0:
        return [p / s for p in pos]
    m = len(regret_row)
    return [1.0 / m] * m


@dataclass
class RegretState:
    cumulative_regret: list[list[float]]
    strategy: list[list[float]]
    iteration: int = 0
    samples: list[tuple[int, ...]] | None = None

    @classmethod
    def fresh(cls, game: MatrixGame, record: bool = False) -> "RegretState":
        return cls(
            [[0.0] * m for m in game.sizes],
            [[1.0 / m] * m for m in game.sizes],
            0,
            [] if record else None,
        )


def _sample(row: Sequence[float], rng: random.Random) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(row):
        acc += p
        if u < acc:
            return i
    # float round-off: fall back to the last action with positive mass
    for i in range(len(row) - 1, -1, -1):
        if row[i] > 0.0:
            return i
    return len(row) - 1


def regret_matching_round(game: MatrixGame, state: RegretState, rng: random.Random) -> RegretState:
    """One sampled self-play round: sample, accumulate regrets, re-derive strategies."""
    n = game.n_players
    if len(state.cumulative_regret) != n or [len(r) for r in state.cumulative_regret] != game.sizes:
        raise ValueError("regret state does not match the game")
    x = [_sample(row, rng) for row in state.strategy]
    if state.samples is not None:
        state.samples.append(tuple(x))
    chosen = [game.masks[k][x[k]] for k in range(n)]
    u_joint = game.evaluate(_or_all(chosen))
    # union of everyone except k, from prefix/suffix ORs
    prefix = [0] * (n + 1)
    for k in range(n):
        prefix[k + 1] = prefix[k] | chosen[k]
    suffix = [0] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] | chosen[k]
    for k in range(n):
        others = prefix[k] | suffix[k + 1]
        row = state.cumulative_regret[k]
        for m, mask in enumerate(game.masks[k]):
            row[m] += game.evaluate(others | mask) - u_joint
        state.strategy[k] = regret_probabilities(row)
    state.iteration += 1
    return state


def _or_all(masks: Iterable[int]) -> int:
    m = 0
    for x in masks:
        m |= x
    return m


def _argmax(values: Sequence[float]) -> int:
    best, best_v = 0, values[0]
    for i, v in enumerate(values):
        if v > best_v:
            best, best_v = i, v
    return best


def run_regret_matching(
    game: MatrixGame,
    T: int = DEFAULT_RM_ROUNDS,
    rng: random.Random | None = None,
    state: RegretState | None = None,
) -> JointProfile:
    """``T`` rounds from zero regret; returns each player's most probable action."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = rng or random.Random(0)
    state = state if state is not None else RegretState.fresh(game)
    for _ in range(T):
        regret_matching_round(game, state, rng)
    return game.profile([_argmax(row) for row in state.strategy])


def select_payoff_dominant(candidates: Sequence[JointProfile], utility: Callable[[JointProfile], float]) -> JointProfile:
    if not candidates:
        raise ValueError("no candidates")
    best, best_u = candidates[0], utility(candidates[0])
    for c in candidates[1:]:
        u = utility(c)
        if u > best_u:
            best, best_u = c, u
    return best


def parallel_regret_matching(
    game: MatrixGame,
    rngs: Sequence[random.Random],
    T: int = DEFAULT_RM_ROUNDS,
) -> tuple[JointProfile, list[JointProfile]]:
    """One independent RM instance per rng, pooled by payoff dominance."""
    cands = [run_regret_matching(game, T, r) for r in rngs]
    return select_payoff_dominant(cands, game.utility), cands


# -- baselines and oracles -----------------------------------------------------


def greedy_coordination(game: MatrixGame, order: Sequence[int] | None = None) -> JointProfile:
    """Players commit in ``order`` (positions in ``game.players``), each to its best reply to the committed prefix."""
    order = list(range(game.n_players)) if order is None else list(order)
    if sorted(order) != list(range(game.n_players)):
        raise ValueError("order must be a permutation of player positions")
    committed = 0
    idx = [0] * game.n_players
    for k in order:
        vals = [game.evaluate(committed | m) for m in game.masks[k]]
        idx[k] = _argmax(vals)
        committed |= game.masks[k][idx[k]]
    return game.profile(idx)


def exhaustive_optimal(game: MatrixGame, cap: int = DEFAULT_EXHAUSTIVE_CAP) -> tuple[JointProfile, float]:
    """Lexicographic enumeration; the first profile reaching the maximum wins."""
    if game.n_profiles() > cap:
        raise ExhaustiveCapExceeded(f"{game.n_profiles()} profiles exceed cap {cap}")
    n = game.n_players
    masks = game.masks
    value = game.value
    base = game.base_mask
    best_idx: list[int] = [0] * n
    best_v = -math.inf
    idx = [0] * n

    def rec(k: int, acc: int):
        nonlocal best_v, best_idx
        if k == n:
            v = value(acc | base)
            if v > best_v:
                best_v = v
                best_idx = idx.copy()
            return
        for m, mk in enumerate(masks[k]):
            idx[k] = m
            rec(k + 1, acc | mk)

    rec(0, 0)
    game.calls += game.n_profiles()
    return game.profile(best_idx), best_v


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def is_psne(game: MatrixGame, profile: JointProfile) -> bool:
    """No player can strictly raise the common payoff by deviating alone."""
    idx = list(profile.indices)
    u = game.utility(idx)
    for k in range(game.n_players):
        others = _others_mask(game, idx, k)
        for m, mk in enumerate(game.masks[k]):
            if m == idx[k]:
                continue
            v = game.evaluate(others | mk)
            if v > u and not _close(v, u):
                return False
    return True


def _others_mask(game: MatrixGame, idx: Sequence[int], k: int) -> int:
    m = 0
    for j, row in enumerate(game.masks):
        if j != k:
            m |= row[idx[j]]
    return m


@dataclass
class OptimalityMetrics:
    pfo: float
    rno: float
    n_runs: int
    n_rno: int = field(default=0)


def pfo_rno_values(pairs: Iterable[tuple[float, float]]) -> OptimalityMetrics:
    """PFO/RNO from ``(achieved, optimal)`` utility pairs.

    A run counts as optimal when its utility equals the optimum (ties between
    distinct profiles are not penalised).  Runs with zero optimum are left out
    of RNO.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no runs")
    hits = 0
    ratios = []
    for achieved, optimal in pairs:
        if _close(achieved, optimal):
            hits += 1
        if optimal > 0:
            ratios.append(achieved / optimal)
        else:
            log.warning("zero optimal utility excluded from RNO")
    rno = sum(ratios) / len(ratios) if ratios else float("nan")
    return OptimalityMetrics(hits / len(pairs), rno, len(pairs), len(ratios))


def pfo_rno(results: Iterable[tuple[JointProfile, MatrixGame]], cap: int = DEFAULT_EXHAUSTIVE_CAP) -> OptimalityMetrics:
    pairs = []
    for profile, game in results:
        _, opt = exhaustive_optimal(game, cap)
        pairs.append((game.utility(profile), opt))
    return pfo_rno_values(pairs)
