"""Paired reduced-scale missions at failure intensity 0.5.

Runs A-MCTS, Dec-MCTS and Dec-MCTS-Reset on the same scenarios, attrition
schedules and seeds, then prints mean final IRC with 95% intervals.
"""

import argparse

from amcts.experiments import ExperimentConfig, run_experiment

REDUCED = dict(
    n_regions=100,
    n_vertices=200,
    connect_radius=1275.0,
    start_mode="random",
    n_agents=10,
    budget=6,
    iterations=300,
    M=8,
    intensity=0.5,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--intensity", type=float, default=0.5)
    ap.add_argument("--planners", default="a-mcts,dec-mcts,dec-mcts-reset")
    ap.add_argument("--output", default="results/reduced_scale")
    args = ap.parse_args()
    cfg = ExperimentConfig(**{**REDUCED, "intensity": args.intensity}, planners=args.planners.split(","), repetitions=args.seeds)
    res = run_experiment(cfg, args.output)
    for row in res.summary:
        if row["step"] == "final":
            print(f"{row['planner']:<16} {row['mean']:.4f} +/- {row['ci95']:.4f}")
    print(f"files in {args.output}")


if __name__ == "__main__":
    main()
