"""Monte Carlo tamper-detection campaigns.

Every trial runs in its own :class:`Session` whose seed is derived from the
master seed and the trial index by :func:`trial_seed`, so a campaign gives the
same per-trial outcomes whether it runs serially or across worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import binomtest

from .field import DEFAULT_FIELD, SeededRng, sample_matrix
from .runtime import (
    Honest,
    IntegrityViolation,
    MatmulTamper,
    Session,
    SoftmaxSwap,
    SoftmaxTamperA,
    SoftmaxTamperB,
)
from .security import prob_softmax_attack
from .softmax import DEFAULT_MASK_BOUND, osm_run
from .verify import DEFAULT_COEFF_BOUND, verified_attn_matmul

MATMUL_ATTACKS = ("honest", "single", "scale", "row-swap")
SOFTMAX_ATTACKS = ("honest", "a", "b", "c")
_INPUT_STREAM = (2,)
_MAX_PAIR_ATTEMPTS = 256


class NoValidPair(RuntimeError):
    pass


def trial_seed(master: int, index: int) -> int:
    """Session seed of trial ``index``: first 64-bit word of SeedSequence([master, index])."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class CampaignConfig:
    protocol: str = "matmul"
    attack: str = "single"
    trials: int = 1000
    seed: int = 0
    size: int = 8
    length: int = 16
    delta: float = 1e-6
    probe: bool = True
    coeff_bound: int = DEFAULT_COEFF_BOUND
    mask_bound: float = DEFAULT_MASK_BOUND

    def __post_init__(self):
        valid = {"matmul": MATMUL_ATTACKS, "softmax": SOFTMAX_ATTACKS}
        if self.protocol not in valid:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.attack not in valid[self.protocol]:
            raise ValueError(f"attack {self.attack!r} not defined for {self.protocol}; choose from {valid[self.protocol]}")
        if self.trials < 1 or self.size < 1 or self.length < 2:
            raise ValueError("trials, size must be positive and length at least 2")


def _matmul_adversary(attack: str):
    return {
        "honest": Honest(),
        "single": MatmulTamper(mode="single-entry"),
        "scale": MatmulTamper(mode="scale-all", magnitude=3),
        "row-swap": MatmulTamper(mode="row-swap"),
    }[attack]


def matmul_trial(cfg: CampaignConfig, index: int) -> bool:
    """True when the verified QK^T product raises an integrity violation."""
    seed = trial_seed(cfg.seed, index)
    s = Session(seed=seed, adversary=_matmul_adversary(cfg.attack))
    rng = SeededRng(seed, _INPUT_STREAM)
    q = sample_matrix(cfg.size, cfg.size, rng, DEFAULT_FIELD)
    kt = sample_matrix(cfg.size, cfg.size, rng, DEFAULT_FIELD)
    try:
        verified_attn_matmul(s, q, kt, probe=cfg.probe)
    except IntegrityViolation:
        return True
    return False


def _aim_swap(s: Session, x_hat: np.ndarray, vt) -> None:
    """Pick two non-hash slots whose coefficients and values differ, then arm the swap."""
    n = x_hat.size
    for _ in range(_MAX_PAIR_ATTEMPTS):
        i, j = (int(v) for v in s.adversary_rng.generator.choice(n, size=2, replace=False))
        ai, aj = vt.coefficient_at(i), vt.coefficient_at(j)
        if ai is None or aj is None or ai == aj or x_hat[i] == x_hat[j]:
            continue
        s.adversary = SoftmaxSwap(i=i, j=j)
        return
    raise NoValidPair("no slot pair with distinct coefficients")


def softmax_trial(cfg: CampaignConfig, index: int) -> bool:
    """True when the verified SoftMax raises an integrity violation.

    Attack ``c`` redraws the whole trial (next attempt index) in the rare case
    that every coefficient is equal, so each counted trial has a valid pair.
    """
    attempt = 0
    while True:
        seed = trial_seed(cfg.seed, index) if attempt == 0 else trial_seed(trial_seed(cfg.seed, index), attempt)
        adv = {"honest": Honest(), "a": SoftmaxTamperA(delta=math.log1p(cfg.delta)),
               "b": SoftmaxTamperB(delta=cfg.delta, relative=True), "c": Honest()}[cfg.attack]
        s = Session(seed=seed, adversary=adv)
        x = SeededRng(seed, _INPUT_STREAM).uniform(-10.0, 10.0, cfg.length)
        hook = _aim_swap if cfg.attack == "c" else None
        try:
            osm_run(s, x, verify=True, B=cfg.mask_bound, coeff_bound=cfg.coeff_bound, on_prepare=hook)
        except IntegrityViolation:
            return True
        except NoValidPair:
            if attempt >= 8:
                raise
            attempt += 1
            continue
        return False


def _run_chunk(args) -> list[bool]:
    cfg, lo, hi = args
    fn = matmul_trial if cfg.protocol == "matmul" else softmax_trial
    return [fn(cfg, i) for i in range(lo, hi)]


def run_trials(cfg: CampaignConfig, jobs: int = 1) -> list[bool]:
    """Per-trial detection flags in trial order; identical for any ``jobs``."""
    if jobs <= 1:
        return _run_chunk((cfg, 0, cfg.trials))
    step = max(1, math.ceil(cfg.trials / (jobs * 4)))
    chunks = [(cfg, lo, min(lo + step, cfg.trials)) for lo in range(0, cfg.trials, step)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return [flag for part in parts for flag in part]


def theoretical_miss(cfg: CampaignConfig) -> float | None:
    """Upper bound on the chance a tamper goes undetected, where one is defined."""
    if cfg.attack == "honest":
        return None
    if cfg.protocol == "matmul":
        return 1.0 / DEFAULT_FIELD.p
    if cfg.attack in ("a", "b"):
        return 2.0 ** prob_softmax_attack(cfg.length + 1, cfg.coeff_bound, 1, cfg.attack)
    return 0.0


def summarize(cfg: CampaignConfig, flags: list[bool]) -> dict:
    detections = int(sum(flags))
    trials = len(flags)
    low, high = wilson_interval(detections, trials)
    out = {
        "trials": trials,
        "detections": detections,
        "rate": detections / trials,
        "wilson95": [low, high],
        "theoretical_miss_bound": theoretical_miss(cfg),
        "campaign": asdict(cfg),
    }
    if cfg.attack == "honest":
        out["false_positives"] = detections
    return out
