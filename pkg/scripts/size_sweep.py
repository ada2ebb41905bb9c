"""Operation-count sweep over square sizes for the attention product and SoftMax.

    python3 scripts/size_sweep.py --sizes 32,64,128,256 --csv results/sweep.csv
"""
import argparse

import numpy as np

from shieldsim.cli import bench_rows
from shieldsim.report import write_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="32,64,128,256")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = bench_rows(sizes, 1, args.seed)
    print(f"{'size':>6} {'trusted online':>15} {'worker':>14} {'ratio':>8} {'softmax trusted':>16}")
    for r in rows:
        print(f"{r['size']:>6} {r['oam_trusted_online_mults']:>15} {r['oam_worker_mults']:>14} "
              f"{r['oam_trusted_worker_ratio']:>8.4f} {r['osm_trusted_online_mults']:>16}")
    for key in ("oam_trusted_online_mults", "oam_worker_mults", "osm_trusted_online_mults"):
        slope = np.polyfit(np.log(sizes), np.log([r[key] for r in rows]), 1)[0]
        print(f"fitted exponent {key}: {slope:.3f}")
    if args.csv:
        write_csv(args.csv, rows)


if __name__ == "__main__":
    main()
