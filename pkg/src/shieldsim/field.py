"""Exact arithmetic over the prime field Z_p.

Matrices are immutable numpy ``int64`` arrays of residues in ``[0, p)``.
Products are accumulated exactly: for the default 24-bit prime, products of
two residues fit in 48 bits, so runs of up to ``(2**63 - 1) // (p - 1)**2``
(32768 for ``p = 2**24 - 3``) terms are summed in int64 before reducing.  For
primes too large for a useful run length the right operand is split into
16-bit limbs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_PRIME = 2**24 - 3
_INT64_MAX = 2**63 - 1
_LIMB_BITS = 16


class FieldError(ValueError):
    pass


class ZeroInverse(FieldError, ZeroDivisionError):
    pass


class DimensionMismatch(FieldError):
    pass


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for all n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldConfig:
    p: int = DEFAULT_PRIME

    def __post_init__(self):
        if not 7 <= self.p < 2**32:
            raise FieldError(f"modulus {self.p} outside [7, 2**32)")
        if not is_prime(self.p):
            raise FieldError(f"modulus {self.p} is not prime")

    @property
    def half(self) -> int:
        """Largest residue interpreted as non-negative under signed decoding."""
        return (self.p - 1) // 2

    @property
    def safe_run(self) -> int:
        return _INT64_MAX // (self.p - 1) ** 2


DEFAULT_FIELD = FieldConfig()


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FieldMatrix:
    """Row-major matrix of residues mod ``cfg.p``; read-only after construction."""

    data: np.ndarray
    cfg: FieldConfig = DEFAULT_FIELD

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-d array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.cfg.p):
            raise FieldError("entries must lie in [0, p)")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_ints(cls, values, cfg: FieldConfig = DEFAULT_FIELD) -> "FieldMatrix":
        """Reduce arbitrary (possibly negative or big) integers mod p."""
        arr = np.asarray(values, dtype=object)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        reduced = np.vectorize(lambda v: int(v) % cfg.p, otypes=[np.int64])(arr) if arr.size else arr.astype(np.int64)
        return cls(reduced, cfg)

    @classmethod
    def zeros(cls, rows: int, cols: int, cfg: FieldConfig = DEFAULT_FIELD) -> "FieldMatrix":
        return cls(np.zeros((rows, cols), dtype=np.int64), cfg)

    @classmethod
    def identity(cls, k: int, cfg: FieldConfig = DEFAULT_FIELD) -> "FieldMatrix":
        return cls(np.eye(k, dtype=np.int64), cfg)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def p(self) -> int:
        return self.cfg.p

    @property
    def T(self) -> "FieldMatrix":
        return FieldMatrix(self.data.T, self.cfg)

    def __eq__(self, other):
        if not isinstance(other, FieldMatrix):
            return NotImplemented
        return self.cfg == other.cfg and np.array_equal(self.data, other.data)

    __hash__ = None

    def __add__(self, other: "FieldMatrix") -> "FieldMatrix":
        _same_shape(self, other)
        return FieldMatrix((self.data + other.data) % self.p, self.cfg)

    def __sub__(self, other: "FieldMatrix") -> "FieldMatrix":
        _same_shape(self, other)
        return FieldMatrix((self.data - other.data) % self.p, self.cfg)

    def __neg__(self) -> "FieldMatrix":
        return FieldMatrix((-self.data) % self.p, self.cfg)

    def scale(self, c: int) -> "FieldMatrix":
        return FieldMatrix(_mul_elementwise(self.data, c % self.p, self.p), self.cfg)

    def vstack(self, other: "FieldMatrix") -> "FieldMatrix":
        if self.cols != other.cols:
            raise DimensionMismatch(f"cannot stack {self.shape} over {other.shape}")
        return FieldMatrix(np.vstack([self.data, other.data]), self.cfg)

    def hstack(self, other: "FieldMatrix") -> "FieldMatrix":
        if self.rows != other.rows:
            raise DimensionMismatch(f"cannot concatenate {self.shape} and {other.shape}")
        return FieldMatrix(np.hstack([self.data, other.data]), self.cfg)

    def block(self, r0: int, r1: int, c0: int, c1: int) -> "FieldMatrix":
        return FieldMatrix(self.data[r0:r1, c0:c1], self.cfg)

    def to_json(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "p": self.p, "data": self.data.ravel().tolist()}

    @classmethod
    def from_json(cls, obj) -> "FieldMatrix":
        if isinstance(obj, str):
            obj = json.loads(obj)
        rows, cols = int(obj["rows"]), int(obj["cols"])
        data = np.asarray(obj["data"], dtype=np.int64)
        if data.size != rows * cols:
            raise DimensionMismatch(f"data length {data.size} != {rows}x{cols}")
        return cls(data.reshape(rows, cols), FieldConfig(int(obj["p"])))

    def __repr__(self):
        return f"FieldMatrix({self.rows}x{self.cols}, p={self.p})"


def _same_shape(a: FieldMatrix, b: FieldMatrix) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} != {b.shape}")
    if a.cfg != b.cfg:
        raise FieldError("operands live in different fields")


def _mul_elementwise(x: np.ndarray, c, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if (p - 1) ** 2 <= _INT64_MAX:
        return (x * c) % p
    lo = c & ((1 << _LIMB_BITS) - 1)
    hi = c >> _LIMB_BITS
    return ((x * lo) % p + (((x * hi) % p) << _LIMB_BITS) % p) % p


def mod_inv(x: int, cfg: FieldConfig = DEFAULT_FIELD) -> int:
    x = int(x) % cfg.p
    if x == 0:
        raise ZeroInverse("0 has no multiplicative inverse")
    return pow(x, -1, cfg.p)


def _matmul_int64(a: np.ndarray, b: np.ndarray, p: int, run: int) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for k0 in range(0, a.shape[1], run):
        out += (a[:, k0:k0 + run] @ b[k0:k0 + run, :]) % p
        out %= p
    return out


def matmul_arrays(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """Exact ``a @ b mod p`` for int64 residue arrays."""
    run = _INT64_MAX // (p - 1) ** 2
    if run >= 64:
        return _matmul_int64(a, b, p, run)
    # 16-bit limbs of b keep each partial product below 2**48.
    limb_run = _INT64_MAX // ((p - 1) * ((1 << _LIMB_BITS) - 1))
    mask = (1 << _LIMB_BITS) - 1
    lo = _matmul_int64(a, b & mask, p, limb_run)
    hi = _matmul_int64(a, b >> _LIMB_BITS, p, limb_run)
    shift = pow(2, _LIMB_BITS, p)
    return (lo + _mul_elementwise(hi, shift, p)) % p


def mat_mul_mod(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    if a.cols != b.rows:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    if a.cfg != b.cfg:
        raise FieldError("operands live in different fields")
    return FieldMatrix(matmul_arrays(a.data, b.data, a.p), a.cfg)


def vec_mat_mod(v: np.ndarray, m: FieldMatrix) -> np.ndarray:
    """Row vector times matrix, returned as a 1-d residue array."""
    v = np.asarray(v, dtype=np.int64).reshape(1, -1)
    if v.shape[1] != m.rows:
        raise DimensionMismatch(f"vector of length {v.shape[1]} vs matrix {m.shape}")
    return matmul_arrays(v, m.data, m.p)[0]


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``[0, k)``; applying it moves item ``i`` to slot ``indices[i]``."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or not np.array_equal(np.sort(idx), np.arange(idx.size)):
            raise FieldError("indices do not form a permutation")
        object.__setattr__(self, "indices", _frozen(idx))

    @classmethod
    def identity(cls, k: int) -> "Permutation":
        return cls(np.arange(k))

    def __len__(self):
        return self.indices.size

    def __eq__(self, other):
        return isinstance(other, Permutation) and np.array_equal(self.indices, other.indices)

    __hash__ = None

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.indices)
        inv[self.indices] = np.arange(self.indices.size)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """Permutation equivalent to applying ``other`` first, then ``self``."""
        if len(self) != len(other):
            raise DimensionMismatch("permutation lengths differ")
        return Permutation(self.indices[other.indices])

    def apply(self, items: np.ndarray, axis: int = 0) -> np.ndarray:
        items = np.asarray(items)
        if items.shape[axis] != len(self):
            raise DimensionMismatch(f"permutation of length {len(self)} vs axis of length {items.shape[axis]}")
        out = np.empty_like(items)
        if axis == 0:
            out[self.indices] = items
        else:
            out[:, self.indices] = items
        return out


def perm_inverse(lam: Permutation) -> Permutation:
    return lam.inverse()


def perm_rows(m: FieldMatrix, lam: Permutation) -> FieldMatrix:
    return FieldMatrix(lam.apply(m.data, axis=0), m.cfg)


def perm_cols(m: FieldMatrix, lam: Permutation) -> FieldMatrix:
    return FieldMatrix(lam.apply(m.data, axis=1), m.cfg)


@dataclass
class SeededRng:
    """Deterministic stream built on numpy's counter-based Philox-4x64 generator.

    ``spawn(i)`` derives an independent child stream keyed by ``(seed, *path, i)``
    through ``numpy.random.SeedSequence``; this is the per-trial splitting rule
    used by the Monte Carlo drivers.
    """

    seed: int = 0
    path: tuple = ()
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence([int(self.seed) & (2**64 - 1), *self.path])
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def spawn(self, index: int) -> "SeededRng":
        return SeededRng(self.seed, (*self.path, int(index)))

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size, dtype=np.int64)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def choice(self, seq: Sequence, size=None):
        return self._gen.choice(seq, size=size)

    def permutation(self, k: int) -> np.ndarray:
        return self._gen.permutation(k)


def sample_matrix(rows: int, cols: int, rng: SeededRng, cfg: FieldConfig = DEFAULT_FIELD) -> FieldMatrix:
    if rows < 1 or cols < 1:
        raise DimensionMismatch("matrix dimensions must be positive")
    return FieldMatrix(rng.integers(0, cfg.p, size=(rows, cols)), cfg)


def sample_vector(length: int, rng: SeededRng, cfg: FieldConfig = DEFAULT_FIELD) -> np.ndarray:
    return rng.integers(0, cfg.p, size=length)


def sample_scalar_nonzero(rng: SeededRng, cfg: FieldConfig = DEFAULT_FIELD, bound: int | None = None) -> int:
    """Uniform on [1, p); with ``bound`` L, uniform on the nonzero integers of (-L, L) mapped into the field."""
    if bound is None:
        return int(rng.integers(1, cfg.p))
    if bound < 2:
        raise FieldError("scalar bound must be at least 2")
    mag = int(rng.integers(1, bound))
    sign = -1 if rng.integers(0, 2) else 1
    return (sign * mag) % cfg.p


def sample_permutation(k: int, rng: SeededRng) -> Permutation:
    return Permutation(rng.permutation(k))
