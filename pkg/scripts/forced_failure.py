"""Half the team fails after a fixed number of executed actions; compare the A-MCTS advantage per failure step."""

import argparse

from amcts.experiments import ExperimentConfig, SweepAxis, SweepSpec, run_sweep

from reduced_scale import REDUCED


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", default="2,5")
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--output", default="results/forced_failure")
    args = ap.parse_args()
    base = ExperimentConfig(**REDUCED, planners=["a-mcts", "dec-mcts"], repetitions=args.seeds, failure_mode="forced", forced_step=0)
    spec = SweepSpec(SweepAxis.FORCED_FAILURE_STEP, [int(s) for s in args.steps.split(",")], base)
    res = run_sweep(spec, args.output)
    for step, block in res.blocks:
        a, d = block.mean_final("a-mcts"), block.mean_final("dec-mcts")
        print(f"fail after {step}: A-MCTS {a:.4f}  Dec-MCTS {d:.4f}  advantage {100 * (a - d):+.1f} pp")


if __name__ == "__main__":
    main()
