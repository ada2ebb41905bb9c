"""Outsourcing X @ W for a constant W: send X + R, subtract the precomputed R @ W."""
from __future__ import annotations

from dataclasses import dataclass, field

from .field import DimensionMismatch, FieldMatrix, sample_matrix
from .runtime import MaskReuse, Session, trusted_matmul, worker_matmul


@dataclass
class AdditiveMask:
    R: FieldMatrix
    RW: FieldMatrix
    used: bool = field(default=False)

    @classmethod
    def zero(cls, x_rows: int, w: FieldMatrix) -> "AdditiveMask":
        """All-zero mask.  Test use only: it hides nothing."""
        return cls(FieldMatrix.zeros(x_rows, w.rows, w.cfg), FieldMatrix.zeros(x_rows, w.cols, w.cfg))


def ao_offline(s: Session, w: FieldMatrix, x_rows: int) -> AdditiveMask:
    with s.offline():
        r = sample_matrix(x_rows, w.rows, s.rng, s.cfg)
        rw = trusted_matmul(s, r, w)
    s.register_secret("additive.R", r)
    return AdditiveMask(r, rw)


def ao_run(s: Session, x: FieldMatrix, w: FieldMatrix, mask: AdditiveMask, tag: str = "additive") -> FieldMatrix:
    if mask.used:
        raise MaskReuse("additive mask already consumed")
    if x.cols != w.rows or mask.R.shape != x.shape or mask.RW.shape != (x.rows, w.cols):
        raise DimensionMismatch(f"X {x.shape}, W {w.shape}, mask R {mask.R.shape}")
    mask.used = True
    s.note_blinding(mask.R, x)
    blinded = x + mask.R
    s.count("trusted_adds", x.data.size)
    reply = worker_matmul(s, blinded, w, tag)
    s.count("trusted_adds", reply.data.size)
    return reply - mask.RW


def outsource_constant_product(s: Session, x: FieldMatrix, w: FieldMatrix, tag: str = "additive") -> FieldMatrix:
    mask = ao_offline(s, w, x.rows)
    return ao_run(s, x, w, mask, tag)
