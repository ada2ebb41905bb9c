"""Probability and security-level calculators, the attacker guessing game, and
exhaustive feasible-set enumeration on tiny fields.

All calculators work in log2 so they stay finite for very large inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .field import FieldConfig, FieldMatrix, SeededRng

_LN2 = math.log(2)


class TooLarge(ValueError):
    pass


def log2_factorial(n: int) -> float:
    return math.lgamma(n + 1) / _LN2


def log2_binom(n: int, k: int) -> float:
    return log2_factorial(n) - log2_factorial(k) - log2_factorial(n - k)


@dataclass(frozen=True)
class SecurityParams:
    n: int = 1
    m: int = 1
    L: int = 1
    d: int = 2
    k: int = 1
    t: int = 2


def prob_blind_guess(n: int, L: int) -> float:
    """log2 of the chance of guessing vectors, masks, scalars and order.

    ``C(n,n)/C(2n,n) * (1/n)**n * (1/2L)**n * 1/n!``
    """
    if n < 1 or L < 1:
        raise ValueError("n and L must be positive")
    return -log2_binom(2 * n, n) - n * math.log2(n) - n * math.log2(2 * L) - log2_factorial(n)


def prob_softmax_attack(n: int, L: int, k: int, variant: str = "a") -> float:
    """log2 success probability of tampering k entries undetected: 1/n * (1/2L)**k, or **3k for variant b."""
    if n < 1 or L < 1 or k < 1:
        raise ValueError("n, L and k must be positive")
    reps = {"a": 1, "b": 3}[variant]
    return -math.log2(n) - reps * k * math.log2(2 * L)


def security_level_oam(d: int, m: int, convention: str = "reported") -> float:
    """Bits of security for the masked-row shuffle of a ``2m``-row operand with ``d`` possible scalars.

    ``literal`` evaluates ``log2(d * (2m)!)``, about 1,692 bits at m = 128 and
    d = 256.  ``reported`` evaluates ``log2(d) * log2((2m)!)``, about 13,472
    bits there; it is the default because that is the figure usually quoted
    for an 8-bit scalar.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be positive")
    if convention == "literal":
        return math.log2(d) + log2_factorial(2 * m)
    if convention == "reported":
        return math.log2(d) * log2_factorial(2 * m)
    raise ValueError(f"unknown convention {convention!r}")


def security_level_softmax(n: int, d_bits: int) -> float:
    """``log2(n * 2**d * (2**d)**n)``: hash slot, coefficient space and all n masks."""
    if n < 1 or d_bits < 0:
        raise ValueError("n must be positive and d_bits non-negative")
    return math.log2(n) + d_bits + n * d_bits


def seclevel_table(n: int, m: int, L: int, d: int, k: int = 1, d_bits: int | None = None) -> dict:
    d_bits = int(math.log2(d)) if d_bits is None else d_bits
    return {
        "prob_blind_guess_log2": prob_blind_guess(n, L),
        "prob_softmax_attack_a_log2": prob_softmax_attack(n, L, k, "a"),
        "prob_softmax_attack_b_log2": prob_softmax_attack(n, L, k, "b"),
        "security_level_oam_bits": security_level_oam(d, m, "reported"),
        "security_level_oam_literal_bits": security_level_oam(d, m, "literal"),
        "security_level_softmax_bits": security_level_softmax(n, d_bits),
    }


# Name kept for callers that use the original numbering of this bound.
prob_theorem2 = prob_blind_guess


def guessing_game(n: int, L: int, trials: int, rng: SeededRng, batch: int = 250_000) -> int:
    """Monte Carlo guessing game; returns the number of trials the attacker wins.

    Each trial hides n original vectors among 2n shuffled rows (ordered), gives
    every original one of n masks (with replacement) and a nonzero scalar from
    2L values.  A blind attacker guesses all of it uniformly and wins only on
    a full match.
    """
    g = rng.generator
    wins = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        secret_order = np.argsort(g.random((b, 2 * n)), axis=1)[:, :n]
        guess_order = np.argsort(g.random((b, 2 * n)), axis=1)[:, :n]
        ok = np.all(secret_order == guess_order, axis=1)
        ok &= np.all(g.integers(0, n, (b, n)) == g.integers(0, n, (b, n)), axis=1)
        ok &= np.all(g.integers(0, 2 * L, (b, n)) == g.integers(0, 2 * L, (b, n)), axis=1)
        wins += int(ok.sum())
        done += b
    return wins


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

MAX_PRIME, MAX_T, MAX_DIM = 13, 5, 2


@dataclass(frozen=True)
class FeasibleSetResult:
    members: frozenset
    n_true: int
    t: int
    p: int
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members)


def feasible_set_enumerate(x_hat: FieldMatrix, n_true: int) -> FeasibleSetResult:
    """Every candidate pre-image ``d * (x_bar - x_mask)`` over all index sets and orderings.

    Rows of ``x_hat`` are the t transformed vectors.  For each choice of the
    ``t - n_true`` mask rows, each ordering of the remaining rows and each
    field scalar ``d`` the candidates are collected.  With no mask rows the
    mask term is zero.
    """
    p, t, dim = x_hat.p, x_hat.rows, x_hat.cols
    if p > MAX_PRIME or t > MAX_T or dim > MAX_DIM:
        raise TooLarge(f"enumeration limited to p<={MAX_PRIME}, t<={MAX_T}, dim<={MAX_DIM}")
    if not 1 <= n_true <= t:
        raise ValueError("need 1 <= n_true <= t")
    rows = [tuple(int(v) for v in r) for r in x_hat.data]
    zero = (0,) * dim
    members = set()
    for omega in combinations(range(t), t - n_true):
        masks = [rows[i] for i in omega] or [zero]
        originals = [rows[i] for i in range(t) if i not in omega]
        if len(set(originals)) != len(originals):
            continue
        for sigma in permutations(originals):
            for xbar in sigma:
                for xm in masks:
                    diff = [(a - b) % p for a, b in zip(xbar, xm)]
                    for d in range(p):
                        members.add(tuple(d * v % p for v in diff))
    return FeasibleSetResult(frozenset(members), n_true, t, p, {"dim": dim})


def transformed_rows(originals, masks, scalars, p: int) -> FieldMatrix:
    """Rows ``x_i + r_i`` for each original followed by the scaled masks ``s_j r_j``.

    Original i is blinded with mask i; surplus masks only appear scaled.
    """
    originals = np.asarray(originals, dtype=np.int64) % p
    masks = np.asarray(masks, dtype=np.int64) % p
    scalars = np.asarray(scalars, dtype=np.int64) % p
    blinded = (originals + masks[: len(originals)]) % p
    scaled = (masks * scalars[:, None]) % p
    return FieldMatrix(np.vstack([blinded, scaled]), FieldConfig(p))


def rows_collinear(x_hat: FieldMatrix) -> bool:
    """True when every row of ``x_hat`` lies on one affine line of ``F_p^dim``.

    With one original and one extra scaled mask, the enlarged feasible set is
    strictly bigger exactly when the three transformed rows are not collinear.
    """
    p = x_hat.p
    rows = x_hat.data.astype(object)
    if x_hat.rows < 3 or x_hat.cols < 2:
        return True
    base = rows[0]
    dirs = [(r - base) % p for r in rows[1:]]
    dirs = [d for d in dirs if any(d)]
    if len(dirs) < 2:
        return True
    u = dirs[0]
    for v in dirs[1:]:
        for i in range(x_hat.cols):
            for j in range(i + 1, x_hat.cols):
                if (u[i] * v[j] - u[j] * v[i]) % p:
                    return False
    return True
