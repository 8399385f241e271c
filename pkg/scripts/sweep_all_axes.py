"""One reduced-scale sweep per experiment axis; slow (hours on one core at the default seed count)."""

import argparse

from amcts.experiments import ExperimentConfig, SweepAxis, SweepSpec, run_sweep

from reduced_scale import REDUCED

VALUES = {
    SweepAxis.FAILURE_INTENSITY: [0.0, 0.25, 0.5, 0.75],
    SweepAxis.PLANNING_ITERATIONS: [100, 300, 600],
    SweepAxis.EXCHANGED_COMPONENTS: [2, 8, 16],
    SweepAxis.ACTIONS_BUDGET: [4, 6, 8],
    SweepAxis.AGENT_COUNT: [5, 10, 15],
    SweepAxis.REGION_COUNT: [50, 100, 200],
    SweepAxis.COMM_LOSS_PROBABILITY: [0.0, 0.2, 0.4],
    SweepAxis.LOSS_TOLERANCE: [1, 3, 5],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--axes", default=",".join(a.value for a in VALUES))
    ap.add_argument("--output", default="results/sweeps")
    args = ap.parse_args()
    base = ExperimentConfig(**REDUCED, planners=["a-mcts", "dec-mcts", "dec-mcts-reset", "greedy-mcts"], repetitions=args.seeds)
    for name in args.axes.split(","):
        axis = SweepAxis(name)
        res = run_sweep(SweepSpec(axis, VALUES[axis], base), f"{args.output}/{axis.value}")
        for row in res.table:
            print(f"{row['axis']}={row['value']:<6} {row['planner']:<14} {row['final_mean']:.4f} +/- {row['final_ci95']:.4f}")


if __name__ == "__main__":
    main()
