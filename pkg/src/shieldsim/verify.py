"""Integrity checks for outsourced results.

* SoftMax: a secret integer combination ``hashX = sum(a_i x_i)`` is hidden at a
  random slot of the outsourced vector; after unmasking, the trusted side checks
  ``prod(e^{x_i})^{a_i} == e^{hashX}`` in the base-2 log domain.
* Matrix products: a hash row ``h_Q @ Q`` rides along with ``Q``; after recovery
  the trusted side checks ``h_Q @ Z == z_hash`` exactly in the field.
* Freivalds' check is kept as the baseline for cost comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .additive import ao_offline, ao_run
from .attnmult import oam_run
from .field import DimensionMismatch, FieldMatrix, sample_vector, vec_mat_mod
from .runtime import ExponentRange, IntegrityViolation, Session

DEFAULT_COEFF_BOUND = 2
_MAX_REDRAWS = 64


@dataclass(frozen=True)
class CheckResult:
    check: str
    passed: bool
    trusted_mults: int
    detail: str = ""

    def __bool__(self):
        return self.passed

    def as_dict(self) -> dict:
        return {"check": self.check, "pass": self.passed, "trusted_mults": self.trusted_mults}


def default_tol_log(n: int) -> float:
    return 1e-7 + 1e-9 * n


# ---------------------------------------------------------------------------
# SoftMax
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyTagSoftmax:
    a: np.ndarray
    pos: int
    hashX: float
    tol_log: float

    @property
    def n(self) -> int:
        return self.a.size

    def coefficient_at(self, slot: int) -> int | None:
        """Coefficient attached to a slot of the outsourced vector; None for the hash slot."""
        if slot == self.pos:
            return None
        return int(self.a[slot - (slot > self.pos)])


def draw_coefficients(s: Session, n: int, bound: int = DEFAULT_COEFF_BOUND, signed: bool = True) -> np.ndarray:
    if bound < 1:
        raise ValueError("coefficient bound must be at least 1")
    mags = s.rng.integers(1, bound + 1, size=n)
    if not signed:
        return mags
    signs = np.where(s.rng.integers(0, 2, size=n) == 1, -1, 1)
    return mags * signs


def uv_softmax_prepare(s: Session, x, bound: int = DEFAULT_COEFF_BOUND, *, signed: bool = True,
                       hash_limit: float | None = None, tol_log: float | None = None,
                       coefficients=None) -> tuple[np.ndarray, VerifyTagSoftmax]:
    """Insert ``hashX`` at a secret slot of ``x``.

    Coefficients are redrawn while ``|hashX|`` exceeds ``hash_limit`` so the
    worker can exponentiate the masked hash without leaving double range.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 1:
        raise ValueError("empty vector")
    for _ in range(_MAX_REDRAWS):
        a = np.asarray(coefficients, dtype=np.int64) if coefficients is not None else draw_coefficients(s, n, bound, signed)
        h = float(np.dot(a, x))
        if hash_limit is None or abs(h) <= hash_limit:
            break
        if coefficients is not None:
            break
    else:
        raise ExponentRange(f"could not draw coefficients with |hashX| <= {hash_limit}")
    if hash_limit is not None and abs(h) > hash_limit:
        raise ExponentRange(f"|hashX| = {abs(h):.3f} exceeds {hash_limit}")
    s.count("trusted_mults", n)
    s.count("trusted_adds", n - 1)
    pos = int(s.rng.integers(0, n + 1))
    tag = VerifyTagSoftmax(a, pos, h, default_tol_log(n) if tol_log is None else tol_log)
    s.register_secret("verify.softmax.a", a)
    s.register_secret("verify.softmax.pos", pos)
    return np.insert(x, pos, h), tag


class ExtendedProduct:
    """Running product kept as ``mantissa * 2**exp2`` with mantissa in [1, 2)."""

    def __init__(self):
        self.mantissa = 1.0
        self.exp2 = 0
        self.mults = 0

    @staticmethod
    def split(v: float) -> tuple[float, int]:
        f, e = math.frexp(v)
        return f * 2.0, e - 1

    def _renorm(self):
        f, e = math.frexp(self.mantissa)
        self.mantissa = f * 2.0
        self.exp2 += e - 1

    def mul_split(self, mant: float, e: int) -> None:
        self.mantissa *= mant
        self.exp2 += e
        self.mults += 1
        self._renorm()

    def log2(self) -> float:
        return self.exp2 + math.log2(self.mantissa)


def _power_split(mant: float, e: int, k: int, acc: ExtendedProduct) -> None:
    """Multiply ``acc`` by ``(mant * 2**e)**k`` for k >= 1 using k multiplications."""
    base = ExtendedProduct()
    base.mantissa, base.exp2 = mant, e
    for _ in range(k - 1):
        base.mul_split(mant, e)
    acc.mults += base.mults
    acc.mul_split(base.mantissa, base.exp2)


def uv_softmax_check(s: Session, e_rec, tag: VerifyTagSoftmax) -> CheckResult:
    e_rec = np.asarray(e_rec, dtype=np.float64)
    if e_rec.size != tag.n + 1:
        raise DimensionMismatch(f"expected {tag.n + 1} recovered exponentials, got {e_rec.size}")
    bad = np.flatnonzero(~np.isfinite(e_rec) | (e_rec <= 0))
    if bad.size:
        return CheckResult("softmax", False, 0, f"degenerate value at slot {int(bad[0])}")
    e_hash = float(e_rec[tag.pos])
    values = np.delete(e_rec, tag.pos)
    acc = ExtendedProduct()
    divs = 0
    for v, a in zip(values, tag.a):
        mant, e = ExtendedProduct.split(float(v))
        if a < 0:
            mant, e = 1.0 / mant, -e  # one reciprocal per negative coefficient
            divs += 1
            mant, e2 = ExtendedProduct.split(mant)
            e += e2
        _power_split(mant, e, abs(int(a)), acc)
    s.count("trusted_mults", acc.mults)
    s.count("trusted_divs", divs)
    s.count("trusted_cmps", 2)
    target = tag.hashX / math.log(2)
    lhs_err = abs(acc.log2() - target)
    hash_err = abs(math.log2(e_hash) - target)
    passed = lhs_err <= tag.tol_log and hash_err <= tag.tol_log
    detail = "" if passed else f"log2 deviation: product {lhs_err:.3e}, hash slot {hash_err:.3e}, tol {tag.tol_log:.3e}"
    return CheckResult("softmax", passed, acc.mults, detail)


# ---------------------------------------------------------------------------
# Matrix products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifyTagMatmul:
    h_Q: np.ndarray
    hashQ: np.ndarray
    pos: int


def uv_matmul_prepare(s: Session, q: FieldMatrix, h_q=None) -> tuple[FieldMatrix, VerifyTagMatmul]:
    """Append the hash row ``h_Q @ Q`` below ``Q``; the caller's blinding hides its position."""
    if q.rows < 1:
        raise DimensionMismatch("empty matrix")
    h = sample_vector(q.rows, s.rng, q.cfg) if h_q is None else np.asarray(h_q, dtype=np.int64) % q.p
    hash_row = vec_mat_mod(h, q)
    s.count("trusted_mults", q.rows * q.cols)
    s.count("trusted_adds", (q.rows - 1) * q.cols)
    s.count("trusted_vecmats", 1)
    s.register_secret("verify.matmul.h_Q", h)
    s.register_secret("verify.matmul.pos", q.rows)
    q_aug = q.vstack(FieldMatrix(hash_row.reshape(1, -1), q.cfg))
    return q_aug, VerifyTagMatmul(h, hash_row, q.rows)


def uv_matmul_check(s: Session, z_full: FieldMatrix, tag: VerifyTagMatmul) -> CheckResult:
    m = tag.h_Q.size
    if z_full.rows != m + 1:
        raise DimensionMismatch(f"expected {m + 1} rows, got {z_full.rows}")
    rows = [i for i in range(m + 1) if i != tag.pos]
    z = FieldMatrix(z_full.data[rows], z_full.cfg)
    z_hash = z_full.data[tag.pos]
    lhs = vec_mat_mod(tag.h_Q, z)
    mults = m * z.cols
    s.count("trusted_mults", mults)
    s.count("trusted_adds", (m - 1) * z.cols)
    s.count("trusted_vecmats", 1)
    s.count("trusted_cmps", z.cols)
    passed = bool(np.array_equal(lhs, z_hash))
    return CheckResult("matmul", passed, mults, "" if passed else "hash row mismatch")


def split_hashed(z_full: FieldMatrix, tag: VerifyTagMatmul) -> FieldMatrix:
    rows = [i for i in range(z_full.rows) if i != tag.pos]
    return FieldMatrix(z_full.data[rows], z_full.cfg)


def freivalds_check(s: Session, q: FieldMatrix, kt: FieldMatrix, z: FieldMatrix) -> CheckResult:
    if q.cols != kt.rows or z.shape != (q.rows, kt.cols):
        raise DimensionMismatch(f"Q {q.shape}, KT {kt.shape}, Z {z.shape}")
    m, n, k = q.rows, q.cols, kt.cols
    r = sample_vector(m, s.rng, q.cfg)
    s.register_secret("freivalds.s", r)
    lhs = vec_mat_mod(r, z)
    rq = vec_mat_mod(r, q)
    rhs = vec_mat_mod(rq, kt)
    mults = m * k + m * n + n * k
    s.count("trusted_mults", mults)
    s.count("trusted_adds", (m - 1) * k + (m - 1) * n + (n - 1) * k)
    s.count("trusted_vecmats", 3)
    s.count("trusted_cmps", k)
    passed = bool(np.array_equal(lhs, rhs))
    return CheckResult("freivalds", passed, mults, "" if passed else "projection mismatch")


def verified_attn_matmul(s: Session, q: FieldMatrix, kt: FieldMatrix, tag: str = "attn-matmul",
                         probe: bool = True) -> FieldMatrix:
    """Masked attention product of the hash-augmented ``Q``; raises IntegrityViolation on a failed check."""
    q_aug, vt = uv_matmul_prepare(s, q)
    z_full = oam_run(s, q_aug, kt, tag=tag, probe=probe)
    res = uv_matmul_check(s, z_full, vt)
    if not res:
        raise IntegrityViolation(tag, res.detail)
    return split_hashed(z_full, vt)


def verified_additive(s: Session, x: FieldMatrix, w: FieldMatrix, tag: str = "additive") -> FieldMatrix:
    x_aug, vt = uv_matmul_prepare(s, x)
    mask = ao_offline(s, w, x_aug.rows)
    z_full = ao_run(s, x_aug, w, mask, tag)
    res = uv_matmul_check(s, z_full, vt)
    if not res:
        raise IntegrityViolation(tag, res.detail)
    return split_hashed(z_full, vt)
