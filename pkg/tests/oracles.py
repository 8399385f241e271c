"""Slow, obviously-correct reference computations the fast code is checked against."""

import itertools


def discounted_count(visit_times, gamma, now):
    return sum(gamma ** (now - t) for t in visit_times)


def discounted_sum(visits, gamma, now):
    """``visits`` is a list of (iteration, reward)."""
    return sum(gamma ** (now - t) * r for t, r in visits)


def covered_ids(scenario, edge_lists):
    out = set()
    for edges in edge_lists:
        for e in edges:
            out |= set(scenario.graph.edge_regions[e])
    return out


def set_value(scenario, ids):
    return sum(scenario.regions[i].value for i in ids)


def regrets_from_samples(game, samples):
    """Replay a logged RM trajectory without prefix/suffix tricks."""
    n = game.n_players
    value = game.value
    reg = [[0.0] * len(row) for row in game.masks]
    for x in samples:
        joint = 0
        for k in range(n):
            joint |= game.masks[k][x[k]]
        u = value(joint)
        for k in range(n):
            for m in range(len(game.masks[k])):
                y = list(x)
                y[k] = m
                mask = 0
                for j in range(n):
                    mask |= game.masks[j][y[j]]
                reg[k][m] += value(mask) - u
    return reg


def brute_optimum(game):
    best = None
    for idx in itertools.product(*[range(len(r)) for r in game.masks]):
        mask = 0
        for k, i in enumerate(idx):
            mask |= game.masks[k][i]
        v = game.value(mask)
        if best is None or v > best:
            best = v
    return best
