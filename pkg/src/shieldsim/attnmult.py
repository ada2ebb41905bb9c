"""Outsourcing Q @ K^T when both operands are runtime values.

Both operands are blinded with additive masks, the scaled masks ``a*R_Q`` and
``b*R_KT`` are hidden among the blinded rows/columns by secret permutations,
and a single worker product of the ``2m x n`` and ``n x 2k`` matrices yields
four blocks::

    TL = (Q + R_Q)(KT + R_KT)     TR = b (Q + R_Q) R_KT
    BL = a R_Q (KT + R_KT)        BR = a b R_Q R_KT

from which ``Q @ KT`` is recovered with three scalar-by-block multiplications.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import (
    DimensionMismatch,
    FieldConfig,
    FieldMatrix,
    Permutation,
    mod_inv,
    perm_cols,
    perm_inverse,
    perm_rows,
    sample_matrix,
    sample_permutation,
    sample_scalar_nonzero,
)
from .runtime import IntegrityViolation, MaskReuse, Session, worker_matmul


@dataclass(frozen=True)
class MaskProbe:
    """One precomputed entry of the ``a b R_Q R_KT`` block, checked after the worker replies."""

    row: int
    col: int
    expected: int


@dataclass
class AttnMaskBundle:
    R_Q: FieldMatrix
    R_KT: FieldMatrix
    a: int
    b: int
    lam1: Permutation
    lam2: Permutation
    aR_Q: FieldMatrix = field(init=False)
    bR_KT: FieldMatrix = field(init=False)
    inv_a: int = field(init=False)
    inv_b: int = field(init=False)
    inv_ab: int = field(init=False)
    probe: MaskProbe | None = None
    used: bool = False

    def __post_init__(self):
        m, n = self.R_Q.shape
        n2, k = self.R_KT.shape
        if n != n2:
            raise DimensionMismatch(f"R_Q {self.R_Q.shape} vs R_KT {self.R_KT.shape}")
        if len(self.lam1) != 2 * m or len(self.lam2) != 2 * k:
            raise DimensionMismatch("permutation lengths must be 2m and 2k")
        cfg = self.R_Q.cfg
        self.a %= cfg.p
        self.b %= cfg.p
        self.aR_Q = self.R_Q.scale(self.a)
        self.bR_KT = self.R_KT.scale(self.b)
        self.inv_a = mod_inv(self.a, cfg)
        self.inv_b = mod_inv(self.b, cfg)
        self.inv_ab = mod_inv(self.a * self.b, cfg)

    @property
    def cfg(self) -> FieldConfig:
        return self.R_Q.cfg

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.R_Q.rows, self.R_Q.cols, self.R_KT.cols

    @classmethod
    def degenerate(cls, m: int, n: int, k: int, cfg: FieldConfig) -> "AttnMaskBundle":
        """Zero masks, unit scalars, identity permutations.  Test use only."""
        return cls(FieldMatrix.zeros(m, n, cfg), FieldMatrix.zeros(n, k, cfg), 1, 1,
                   Permutation.identity(2 * m), Permutation.identity(2 * k))


def oam_offline(s: Session, m: int, n: int, k: int, *, scalar_bound: int | None = None,
                probe: bool = False) -> AttnMaskBundle:
    """Fresh masks, scalars and permutations; tallies the two scalar-mask products offline.

    ``scalar_bound`` restricts a and b to the nonzero integers of (-L, L).
    ``probe`` additionally precomputes one entry of ``a b R_Q R_KT`` (n more
    multiplications) for the mask-consistency check.
    """
    if min(m, n, k) < 1:
        raise DimensionMismatch("dimensions must be positive")
    cfg = s.cfg
    with s.offline():
        r_q = sample_matrix(m, n, s.rng, cfg)
        r_kt = sample_matrix(n, k, s.rng, cfg)
        a = sample_scalar_nonzero(s.rng, cfg, scalar_bound)
        b = sample_scalar_nonzero(s.rng, cfg, scalar_bound)
        lam1 = sample_permutation(2 * m, s.rng)
        lam2 = sample_permutation(2 * k, s.rng)
        bundle = AttnMaskBundle(r_q, r_kt, a, b, lam1, lam2)
        s.count("trusted_mults", m * n + n * k)
        if probe:
            i = int(s.rng.integers(0, m))
            j = int(s.rng.integers(0, k))
            dot = int(np.dot(r_q.data[i].astype(object), r_kt.data[:, j].astype(object))) % cfg.p
            bundle.probe = MaskProbe(i, j, dot * a % cfg.p * b % cfg.p)
            s.count("trusted_mults", n + 2)
            s.count("trusted_adds", n - 1)
    for name, value in (("attn.R_Q", r_q), ("attn.R_KT", r_kt), ("attn.lambda1", lam1),
                        ("attn.lambda2", lam2), ("attn.a", a), ("attn.b", b)):
        s.register_secret(name, value)
    return bundle


def oam_blind(q: FieldMatrix, kt: FieldMatrix, bundle: AttnMaskBundle,
              s: Session | None = None) -> tuple[FieldMatrix, FieldMatrix]:
    m, n, k = bundle.dims
    if q.shape != (m, n) or kt.shape != (n, k):
        raise DimensionMismatch(f"Q {q.shape}, KT {kt.shape} do not match bundle ({m},{n},{k})")
    q_tilde = perm_rows((q + bundle.R_Q).vstack(bundle.aR_Q), bundle.lam1)
    kt_tilde = perm_cols((kt + bundle.R_KT).hstack(bundle.bR_KT), bundle.lam2)
    if s is not None:
        s.count("trusted_adds", m * n + n * k)
        s.note_blinding(bundle.R_Q, q)
        s.note_blinding(bundle.R_KT, kt)
    return q_tilde, kt_tilde


def oam_recover(w_tilde: FieldMatrix, bundle: AttnMaskBundle, s: Session | None = None) -> FieldMatrix:
    m, _, k = bundle.dims
    if w_tilde.shape != (2 * m, 2 * k):
        raise DimensionMismatch(f"worker reply {w_tilde.shape} != {(2 * m, 2 * k)}")
    w = perm_cols(perm_rows(w_tilde, perm_inverse(bundle.lam1)), perm_inverse(bundle.lam2))
    tl = w.block(0, m, 0, k)
    tr = w.block(0, m, k, 2 * k)  # b (Q + R_Q) R_KT
    bl = w.block(m, 2 * m, 0, k)  # a R_Q (KT + R_KT)
    br = w.block(m, 2 * m, k, 2 * k)  # a b R_Q R_KT
    rr = br.scale(bundle.inv_ab)
    q_rkt = tr.scale(bundle.inv_b) - rr
    rq_kt = bl.scale(bundle.inv_a) - rr
    out = tl - q_rkt - rq_kt - rr
    if s is not None:
        s.count("trusted_mults", 3 * m * k)
        s.count("trusted_adds", 5 * m * k)
    return out


def mask_probe_ok(w_tilde: FieldMatrix, bundle: AttnMaskBundle) -> bool:
    """Compare the worker's value at the probed ``a b R_Q R_KT`` entry with the precomputed one."""
    if bundle.probe is None:
        return True
    m, _, k = bundle.dims
    pr = bundle.probe
    r = int(bundle.lam1.indices[m + pr.row])
    c = int(bundle.lam2.indices[k + pr.col])
    return int(w_tilde.data[r, c]) == pr.expected


def oam_run(s: Session, q: FieldMatrix, kt: FieldMatrix, *, tag: str = "attn-matmul",
            bundle: AttnMaskBundle | None = None, scalar_bound: int | None = None,
            probe: bool = False) -> FieldMatrix:
    """Offline draw, blind, one worker product, recover.

    With ``probe`` the mask-consistency check runs before recovery and a
    mismatch raises :class:`IntegrityViolation` for ``tag``.
    """
    if bundle is None:
        bundle = oam_offline(s, q.rows, q.cols, kt.cols, scalar_bound=scalar_bound, probe=probe)
    if bundle.used:
        raise MaskReuse("attention mask bundle already consumed")
    bundle.used = True
    q_tilde, kt_tilde = oam_blind(q, kt, bundle, s)
    w_tilde = worker_matmul(s, q_tilde, kt_tilde, tag)
    if bundle.probe is not None:
        s.count("trusted_cmps", 1)
        if not mask_probe_ok(w_tilde, bundle):
            raise IntegrityViolation(tag, "mask-consistency probe mismatch")
    return oam_recover(w_tilde, bundle, s)
