"""Census of feasible-set growth on random prime-7 instances.

For one original vector, compares the candidate sets with one scaled mask
(t=2) and two (t=3), and splits the outcomes by whether the three transformed
rows are collinear.

    python3 scripts/feasible_sets.py --instances 500
"""
import argparse
from collections import Counter

from shieldsim.field import SeededRng
from shieldsim.security import feasible_set_enumerate, rows_collinear, transformed_rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--prime", type=int, default=7)
    args = ap.parse_args()
    p, rng, tally = args.prime, SeededRng(args.seed), Counter()
    for _ in range(args.instances):
        x, r1, r2 = (rng.integers(0, p, 2) for _ in range(3))
        a, b = int(rng.integers(1, p)), int(rng.integers(1, p))
        t2 = transformed_rows([x], [r1], [a], p)
        t3 = transformed_rows([x], [r1, r2], [a, b], p)
        f2, f3 = feasible_set_enumerate(t2, 1).members, feasible_set_enumerate(t3, 1).members
        relation = "strict" if f2 < f3 else "equal" if f2 == f3 else "VIOLATION"
        tally[(relation, "collinear" if rows_collinear(t3) else "general")] += 1
    for (relation, kind), n in sorted(tally.items()):
        print(f"{relation:<9} {kind:<10} {n}")


if __name__ == "__main__":
    main()
