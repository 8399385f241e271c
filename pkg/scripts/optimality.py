"""Regret matching against the exhaustive optimum on random-walk coverage games."""

import argparse

from amcts.experiments import OptimalityConfig, run_optimality_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--games", type=int, default=OptimalityConfig.games)
    ap.add_argument("--output", default="results/optimality")
    args = ap.parse_args()
    for c in run_optimality_study(OptimalityConfig(games=args.games), args.output):
        if c.skipped:
            print(f"N={c.n_agents}: {c.note}")
        else:
            print(f"N={c.n_agents} M={c.M}  PFO {c.pfo:.3f}  RNO {c.rno:.4f}  PSNE failures {c.psne_failures}")


if __name__ == "__main__":
    main()
