"""Run every tamper campaign and print detection rates with Wilson intervals.

    python3 scripts/attack_campaigns.py --trials 2000 --jobs 4
"""
import argparse

from shieldsim.campaign import MATMUL_ATTACKS, SOFTMAX_ATTACKS, CampaignConfig, run_trials, summarize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    plan = [("matmul", a, True) for a in MATMUL_ATTACKS] + [("matmul", "scale", False)]
    plan += [("softmax", a, True) for a in SOFTMAX_ATTACKS]
    print(f"{'protocol':<8} {'attack':<9} {'probe':<5} {'detected':>9} {'rate':>7}  wilson95")
    for protocol, attack, probe in plan:
        cfg = CampaignConfig(protocol=protocol, attack=attack, trials=args.trials, seed=args.seed, probe=probe)
        s = summarize(cfg, run_trials(cfg, args.jobs))
        lo, hi = s["wilson95"]
        print(f"{protocol:<8} {attack:<9} {str(probe):<5} {s['detections']:>9} {s['rate']:>7.4f}  [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
