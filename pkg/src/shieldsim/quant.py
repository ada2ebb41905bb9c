"""Fixed-point encoding between reals and field residues.

Values are scaled by ``2**l`` and rounded half away from zero; negatives wrap
to the upper half of the field.  A product of two encoded operands carries
scale ``2**(2l)`` and is decoded with ``scale_bits=2l`` instead of being
rescaled in-field.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import DEFAULT_FIELD, FieldConfig, FieldMatrix


class RangeOverflow(ValueError):
    def __init__(self, message: str, magnitude: float | None = None, limit: float | None = None):
        super().__init__(message)
        self.magnitude = magnitude
        self.limit = limit


@dataclass(frozen=True)
class QuantConfig:
    l: int = 8
    cfg: FieldConfig = DEFAULT_FIELD

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("fractional bit count must be non-negative")
        if 2 ** (2 * self.l) >= self.cfg.p:
            raise ValueError(f"2**(2*{self.l}) does not fit below p={self.cfg.p}")

    @property
    def scale(self) -> int:
        return 1 << self.l


DEFAULT_QUANT = QuantConfig()


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_lattice(x, q: QuantConfig = DEFAULT_QUANT):
    """Nearest point of the ``2**-l`` grid, as a float."""
    return round_half_away(np.asarray(x, dtype=np.float64) * q.scale) / q.scale


def _encode(x, q: QuantConfig) -> np.ndarray:
    ints = round_half_away(np.asarray(x, dtype=np.float64) * q.scale)
    if ints.size and np.max(np.abs(ints)) >= q.cfg.p / 2:
        worst = float(np.max(np.abs(ints)))
        raise RangeOverflow(f"|round(x*2^l)| = {worst:.0f} does not fit in the field", worst, q.cfg.p / 2)
    return ints.astype(np.int64) % q.cfg.p


def quantize(x: float, q: QuantConfig = DEFAULT_QUANT) -> int:
    return int(_encode(x, q))


def quantize_matrix(x, q: QuantConfig = DEFAULT_QUANT) -> FieldMatrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    return FieldMatrix(_encode(x, q), q.cfg)


def signed(e, cfg: FieldConfig = DEFAULT_FIELD) -> np.ndarray:
    e = np.asarray(e, dtype=np.int64)
    return np.where(e > cfg.half, e - cfg.p, e)


def dequantize(e, scale_bits: int | None = None, q: QuantConfig = DEFAULT_QUANT):
    bits = q.l if scale_bits is None else scale_bits
    out = signed(e, q.cfg) / float(1 << bits)
    return float(out) if np.ndim(out) == 0 else out


def dequantize_matrix(m: FieldMatrix, scale_bits: int | None = None, q: QuantConfig = DEFAULT_QUANT) -> np.ndarray:
    return dequantize(m.data, scale_bits, q)


@dataclass(frozen=True)
class RangeBudget:
    inner_dim: int
    x_max: float
    y_max: float

    @classmethod
    def for_product(cls, a, b) -> "RangeBudget":
        """Budget for the real product ``a @ b`` using the operands' actual maxima."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return cls(a.shape[1], float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))

    def magnitude(self, q: QuantConfig = DEFAULT_QUANT) -> int:
        xi = int(round_half_away(self.x_max * q.scale))
        yi = int(round_half_away(self.y_max * q.scale))
        return self.inner_dim * xi * yi


def check_budget(b: RangeBudget, q: QuantConfig = DEFAULT_QUANT) -> None:
    """Raise RangeOverflow unless every signed product entry decodes without wraparound."""
    mag = b.magnitude(q)
    limit = q.cfg.half
    if mag >= limit:
        raise RangeOverflow(
            f"inner_dim*|x|*|y| = {mag} >= (p-1)/2 = {limit} "
            f"(inner_dim={b.inner_dim}, x_max={b.x_max:g}, y_max={b.y_max:g}, l={q.l})",
            mag,
            limit,
        )
