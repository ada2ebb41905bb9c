"""Outsourcing the exponentials of SoftMax.

The worker receives ``x - r`` and returns ``e^{x - r}``; the trusted side
multiplies by the precomputed ``e^r`` and keeps the sum and divisions.  Masking
is real-valued; the pipeline re-quantizes afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .runtime import ExponentRange, IntegrityViolation, MaskReuse, Session, worker_exp
from .verify import DEFAULT_COEFF_BOUND, CheckResult, VerifyTagSoftmax, uv_softmax_check, uv_softmax_prepare

DEFAULT_MASK_BOUND = 30.0


@dataclass
class SoftmaxMask:
    r: np.ndarray
    exp_r: np.ndarray
    B: float
    used: bool = False


@dataclass(frozen=True)
class SoftmaxResult:
    probs: np.ndarray
    s: float
    check: CheckResult | None = None


def reference_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - np.max(x))
    return e / e.sum()


def osm_offline(s: Session, n: int, B: float = DEFAULT_MASK_BOUND) -> SoftmaxMask:
    if n < 1:
        raise ValueError("vector length must be positive")
    if not 0 <= B <= s.exp_cap:
        raise ExponentRange(f"mask bound {B} outside [0, {s.exp_cap}]")
    with s.offline():
        r = s.rng.uniform(-B, B, size=n) if B > 0 else np.zeros(n)
        exp_r = np.exp(r)
        s.count("trusted_exps", n)
    s.register_secret("softmax.r", r)
    s.register_secret("softmax.exp_r", exp_r)
    return SoftmaxMask(r, exp_r, B)


def osm_exp(s: Session, v, mask: SoftmaxMask, tag: str = "softmax") -> np.ndarray:
    """Masked round trip through the worker; returns the recovered ``e^v``."""
    v = np.asarray(v, dtype=np.float64)
    if mask.used:
        raise MaskReuse("softmax mask already consumed")
    if mask.r.size != v.size:
        raise ValueError(f"mask length {mask.r.size} != vector length {v.size}")
    mask.used = True
    masked = v - mask.r
    s.count("trusted_adds", v.size)
    reply = worker_exp(s, masked, tag)
    s.count("trusted_mults", v.size)
    return reply * mask.exp_r


def osm_run(s: Session, x, stabilize: bool = True, *, B: float = DEFAULT_MASK_BOUND,
            verify: bool = False, coeff_bound: int = DEFAULT_COEFF_BOUND,
            tag: str = "softmax",
            on_prepare: Callable[[Session, np.ndarray, VerifyTagSoftmax], None] | None = None) -> SoftmaxResult:
    """Stabilize, mask, outsource, unmask and normalize one vector.

    ``on_prepare`` is called with the hash-augmented vector and its tag before
    anything is sent; attack campaigns use it to aim an adversary.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if stabilize:
        x = x - np.max(x)
        s.count("trusted_cmps", n)
        s.count("trusted_adds", n)
    if n and np.max(np.abs(x)) + B > s.exp_cap:
        raise ExponentRange(f"max|x| + B = {np.max(np.abs(x)) + B:.3f} exceeds cap {s.exp_cap}")
    check = None
    if verify:
        x_hat, vt = uv_softmax_prepare(s, x, coeff_bound, hash_limit=s.exp_cap - B)
        if on_prepare is not None:
            on_prepare(s, x_hat, vt)
        e_rec = osm_exp(s, x_hat, osm_offline(s, n + 1, B), tag)
        check = uv_softmax_check(s, e_rec, vt)
        if not check:
            raise IntegrityViolation(tag, check.detail)
        e = np.delete(e_rec, vt.pos)
    else:
        e = osm_exp(s, x, osm_offline(s, n, B), tag)
    total = float(np.sum(e))
    s.count("trusted_adds", n - 1)
    probs = e / total
    s.count("trusted_divs", n)
    return SoftmaxResult(probs, total, check)
