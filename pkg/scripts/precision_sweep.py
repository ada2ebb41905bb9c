"""Quantization error of the layer against double precision as fractional bits grow.

Uses the 31-bit prime; l = 12 is the largest default setting that fits the
range budget, and larger l is reported as a budget overflow.

    python3 scripts/precision_sweep.py --bits 6,8,10,12,14
"""
import argparse

import numpy as np

from shieldsim.field import SeededRng
from shieldsim.pipeline import AttentionConfig, ModelWeights, attention_plain, attention_plain_quantized, random_input
from shieldsim.quant import RangeOverflow


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bits", default="6,8,10,12,14")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for l in (int(b) for b in args.bits.split(",")):
        cfg = AttentionConfig(N=16, D=32, H=2, l=l, p=2**31 - 1)
        rng = SeededRng(args.seed)
        w, x = ModelWeights.random(cfg, rng.spawn(0)), random_input(cfg, rng.spawn(1))
        try:
            err = np.max(np.abs(attention_plain_quantized(x, w, cfg) - attention_plain(x, w, cfg)))
            print(f"l={l:>2}  max_abs_err={err:.3e}")
        except RangeOverflow as exc:
            print(f"l={l:>2}  range budget exceeded ({exc})")


if __name__ == "__main__":
    main()
