"""How each reward reacts when the peer in the two-agent diamonds game fails."""

import argparse
from collections import Counter

from amcts.diamonds import diamonds_game, failure_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    args = ap.parse_args()
    g = diamonds_game()
    name = {g.right: "right", g.down: "down"}
    for kind in ("dec-mcts", "a-mcts"):
        before, after = Counter(), Counter()
        for s in range(args.seeds):
            t = failure_trial(kind, s)
            before[name.get(t.converged_action, "?")] += 1
            after[name.get(t.final_action(), "?")] += 1
        print(f"{kind:<9} converged {dict(before)}  100 iterations after the failure {dict(after)}")


if __name__ == "__main__":
    main()
