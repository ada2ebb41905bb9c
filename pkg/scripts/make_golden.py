"""Write the frozen reference output for the N=4, D=8, H=2 attention instance.

The layer is recomputed here with plain Python lists, ``math.exp`` and exact
integers, independently of the package's vectorized code.  Only the seeded
input/weight generators are shared so that the test can rebuild the instance.

    python3 scripts/make_golden.py [--out tests/data/golden_attention.json]
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from shieldsim.field import SeededRng
from shieldsim.pipeline import AttentionConfig, ModelWeights, attention_secure, random_input
from shieldsim.runtime import Session

SEED = 20240607
CONFIG = dict(N=4, D=8, H=2)


def matmul(a, b):
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def transpose(a):
    return [list(col) for col in zip(*a)]


def softmax_row(row):
    top = max(row)
    e = [math.exp(v - top) for v in row]
    total = sum(e)
    return [v / total for v in e]


def layer_float(x, w, d_h):
    heads = []
    for wq, wk, wv in zip(w["W_q"], w["W_k"], w["W_v"]):
        q, k, v = matmul(x, wq), matmul(x, wk), matmul(x, wv)
        logits = matmul(q, transpose(k))
        probs = [softmax_row([val / math.sqrt(d_h) for val in row]) for row in logits]
        heads.append(matmul(probs, v))
    concat = [sum((h[i] for h in heads), []) for i in range(len(x))]
    return matmul(concat, w["W_O"])


# --- fixed-point path with exact integers -------------------------------------------------


def encode(v, l):
    s = v * (1 << l)
    return int(math.copysign(math.floor(abs(s) + 0.5), s))


def qmatmul(a, b, l, p):
    """Quantize both operands at l bits, multiply mod p, decode the signed result at 2l bits."""
    ai = [[encode(v, l) % p for v in row] for row in a]
    bi = [[encode(v, l) % p for v in row] for row in b]
    out = []
    for i in range(len(ai)):
        row = []
        for j in range(len(bi[0])):
            acc = sum(ai[i][t] * bi[t][j] for t in range(len(bi))) % p
            if acc > (p - 1) // 2:
                acc -= p
            row.append(acc / float(1 << (2 * l)))
        out.append(row)
    return out


def layer_fixed(x, w, d_h, l, p):
    heads = []
    for wq, wk, wv in zip(w["W_q"], w["W_k"], w["W_v"]):
        q, k, v = qmatmul(x, wq, l, p), qmatmul(x, wk, l, p), qmatmul(x, wv, l, p)
        logits = qmatmul(q, transpose(k), l, p)
        probs = [softmax_row([val * (1.0 / math.sqrt(d_h)) for val in row]) for row in logits]
        heads.append(qmatmul(probs, v, l, p))
    concat = [sum((h[i] for h in heads), []) for i in range(len(x))]
    return qmatmul(concat, w["W_O"], l, p)


def build_instance(seed: int = SEED):
    cfg = AttentionConfig(**CONFIG)
    rng = SeededRng(seed)
    w = ModelWeights.random(cfg, rng.spawn(0))
    x = random_input(cfg, rng.spawn(1))
    return cfg, w, x


def input_digest(x, w) -> str:
    h = hashlib.sha256(np.ascontiguousarray(x, dtype=np.float64).tobytes())
    h.update(w.digest().encode())
    return h.hexdigest()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "golden_attention.json"))
    args = ap.parse_args(argv)

    cfg, w, x = build_instance()
    wl = {"W_q": [m.tolist() for m in w.W_q], "W_k": [m.tolist() for m in w.W_k],
          "W_v": [m.tolist() for m in w.W_v], "W_O": w.W_O.tolist()}
    out = layer_float(x.tolist(), wl, cfg.d_h)
    out_q = layer_fixed(x.tolist(), wl, cfg.d_h, cfg.l, cfg.p)
    s = Session(seed=SEED)
    attention_secure(s, x, w, cfg)
    golden = {
        "config": cfg.as_dict(),
        "seed": SEED,
        "input_digest": input_digest(x, w),
        "output": out,
        "output_quantized": out_q,
        "op_counts": {ph: c.as_dict() for ph, c in s.snapshot().items()},
    }
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(golden, sort_keys=True, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
