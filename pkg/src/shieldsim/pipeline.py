"""Toy transformer layer: multi-head self-attention with optional FFN and LayerNorm.

Three evaluations share one dataflow:

* :func:`attention_plain` in double precision,
* :func:`attention_plain_quantized` on the fixed-point lattice, all trusted-side,
* :func:`attention_secure`, where every matrix product and every SoftMax
  exponential is outsourced through the masking protocols.

The quantized and secure paths round at the same places (operands of every
field product are re-quantized at ``l`` bits from their real values), so their
field stages agree exactly and only SoftMax differs in floating point.
"""
from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np

from .additive import outsource_constant_product
from .attnmult import oam_run
from .field import DEFAULT_PRIME, DimensionMismatch, FieldConfig, FieldMatrix, SeededRng, mat_mul_mod
from .quant import QuantConfig, RangeBudget, check_budget, dequantize_matrix, quantize_matrix, to_lattice
from .runtime import MatmulTamper, OpCounts, Session, SoftmaxSwap, SoftmaxTamperA, SoftmaxTamperB
from .softmax import DEFAULT_MASK_BOUND, osm_run, reference_softmax
from .verify import DEFAULT_COEFF_BOUND, verified_additive, verified_attn_matmul

LINEAR_STAGES = ("proj-q", "proj-k", "proj-v", "proj-out", "ffn-1", "ffn-2")
ATTN_STAGES = ("attn-matmul", "attn-value")
SOFTMAX_STAGE = "softmax"
# Order in which an honest forward pass first reaches each worker-facing stage.
STAGE_ORDER = ("proj-q", "proj-k", "proj-v", "attn-matmul", "softmax", "attn-value", "proj-out", "ffn-1", "ffn-2")


def expected_failing_stage(adversary, cfg: "AttentionConfig") -> str | None:
    """First stage a tampering adversary touches, or None for an honest worker."""
    if isinstance(adversary, MatmulTamper):
        candidates = [st for st in STAGE_ORDER if st != SOFTMAX_STAGE]
    elif isinstance(adversary, (SoftmaxTamperA, SoftmaxTamperB, SoftmaxSwap)):
        candidates = [SOFTMAX_STAGE]
    else:
        return None
    if not cfg.ffn_dim:
        candidates = [st for st in candidates if not st.startswith("ffn")]
    target = getattr(adversary, "target", None)
    if target is not None:
        return target if target in candidates else None
    return candidates[0]


@dataclass(frozen=True)
class AttentionConfig:
    N: int = 16
    D: int = 32
    H: int = 2
    d_h: int | None = None
    l: int = 8
    verify: bool = True
    stabilize: bool = True
    ffn_dim: int = 0
    layernorm: bool = False
    residual: bool = False
    mask_bound: float = DEFAULT_MASK_BOUND
    coeff_bound: int = DEFAULT_COEFF_BOUND
    p: int = DEFAULT_PRIME

    def __post_init__(self):
        if self.d_h is None:
            object.__setattr__(self, "d_h", max(self.D // self.H, 1))
        for name in ("N", "D", "H", "d_h"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.ffn_dim < 0:
            raise ValueError("ffn_dim must be non-negative")

    @property
    def quant(self) -> QuantConfig:
        return QuantConfig(self.l, FieldConfig(self.p))

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ModelWeights:
    W_q: list[np.ndarray]
    W_k: list[np.ndarray]
    W_v: list[np.ndarray]
    W_O: np.ndarray
    W_1: np.ndarray | None = None
    b_1: np.ndarray | None = None
    W_2: np.ndarray | None = None
    b_2: np.ndarray | None = None
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    eps: float = 1e-5

    @classmethod
    def random(cls, cfg: AttentionConfig, rng: SeededRng, scale: float = 1.0) -> "ModelWeights":
        """Uniform weights of magnitude ``scale/sqrt(fan_in)``, snapped to the ``2**-l`` grid."""
        q = cfg.quant
        D, H, dh, F = cfg.D, cfg.H, cfg.d_h, cfg.ffn_dim

        def draw(shape, fan_in):
            bound = scale / math.sqrt(fan_in)
            return to_lattice(rng.uniform(-bound, bound, size=shape), q)

        w = cls(
            W_q=[draw((D, dh), D) for _ in range(H)],
            W_k=[draw((D, dh), D) for _ in range(H)],
            W_v=[draw((D, dh), D) for _ in range(H)],
            W_O=draw((H * dh, D), H * dh),
        )
        if F:
            w.W_1, w.b_1 = draw((F, D), D), draw((F,), D)
            w.W_2, w.b_2 = draw((F, D), F), draw((D,), F)
        if cfg.layernorm:
            w.gamma = to_lattice(1.0 + rng.uniform(-0.1, 0.1, size=D), q)
            w.beta = to_lattice(rng.uniform(-0.1, 0.1, size=D), q)
        return w

    def check(self, cfg: AttentionConfig) -> None:
        D, H, dh = cfg.D, cfg.H, cfg.d_h
        if not (len(self.W_q) == len(self.W_k) == len(self.W_v) == H):
            raise DimensionMismatch(f"expected {H} heads")
        for mats in (self.W_q, self.W_k, self.W_v):
            if any(np.shape(m) != (D, dh) for m in mats):
                raise DimensionMismatch(f"head projections must be {D}x{dh}")
        if np.shape(self.W_O) != (H * dh, D):
            raise DimensionMismatch(f"W_O must be {H * dh}x{D}")
        if cfg.ffn_dim and (self.W_1 is None or np.shape(self.W_1) != (cfg.ffn_dim, D)
                            or np.shape(self.W_2) != (cfg.ffn_dim, D)):
            raise DimensionMismatch("FFN weights missing or mis-shaped")

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (*self.W_q, *self.W_k, *self.W_v, self.W_O, self.W_1, self.b_1, self.W_2, self.b_2,
                    self.gamma, self.beta):
            if arr is not None:
                h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()


def random_input(cfg: AttentionConfig, rng: SeededRng, bound: float = 1.0) -> np.ndarray:
    return to_lattice(rng.uniform(-bound, bound, size=(cfg.N, cfg.D)), cfg.quant)


def layer_norm(x: np.ndarray, gamma, beta, eps: float) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    y = (x - mu) / np.sqrt(var + eps)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class _RealBackend:
    """Plain double precision."""

    quantized = False

    def product(self, a, b, kind, stage):
        return np.asarray(a) @ np.asarray(b)

    def softmax(self, row, stabilize):
        return reference_softmax(row)

    def count(self, kind, amount):
        pass


class _LatticeBackend:
    """Field products on the quantization lattice, computed trusted-side."""

    quantized = True

    def __init__(self, cfg: AttentionConfig):
        self.q = cfg.quant

    def field_product(self, aq: FieldMatrix, bq: FieldMatrix, kind: str, stage: str) -> FieldMatrix:
        return mat_mul_mod(aq, bq)

    def product(self, a, b, kind, stage):
        q = self.q
        a = to_lattice(a, q)
        b = to_lattice(b, q)
        check_budget(RangeBudget.for_product(a, b), q)
        z = self.field_product(quantize_matrix(a, q), quantize_matrix(b, q), kind, stage)
        return dequantize_matrix(z, 2 * q.l, q)

    def softmax(self, row, stabilize):
        return reference_softmax(row)

    def count(self, kind, amount):
        pass


class _SecureBackend(_LatticeBackend):
    def __init__(self, s: Session, cfg: AttentionConfig, stats: dict | None = None):
        super().__init__(cfg)
        self.s = s
        self.cfg = cfg
        self.stats = stats

    def _timed(self, stage, fn, *args):
        if self.stats is None:
            return fn(*args)
        before = self.s.snapshot()
        t0 = time.perf_counter()
        try:
            return fn(*args)
        finally:
            entry = self.stats.setdefault(stage, {"calls": 0, "wall_s": 0.0, "offline": OpCounts(), "online": OpCounts()})
            entry["calls"] += 1
            entry["wall_s"] += time.perf_counter() - t0
            after = self.s.snapshot()
            for ph in ("offline", "online"):
                entry[ph] = entry[ph] + (after[ph] - before[ph])

    def _outsource(self, aq, bq, kind, stage):
        s, verify = self.s, self.cfg.verify
        if kind == "linear":
            return verified_additive(s, aq, bq, stage) if verify else outsource_constant_product(s, aq, bq, stage)
        return verified_attn_matmul(s, aq, bq, stage) if verify else oam_run(s, aq, bq, tag=stage)

    def field_product(self, aq, bq, kind, stage):
        return self._timed(stage, self._outsource, aq, bq, kind, stage)

    def _softmax(self, row, stabilize):
        return osm_run(self.s, row, stabilize, B=self.cfg.mask_bound, verify=self.cfg.verify,
                       coeff_bound=self.cfg.coeff_bound, tag=SOFTMAX_STAGE).probs

    def softmax(self, row, stabilize):
        return self._timed(SOFTMAX_STAGE, self._softmax, row, stabilize)

    def count(self, kind, amount):
        self.s.count(kind, amount)


def _forward(x, w: ModelWeights, cfg: AttentionConfig, be) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.N, cfg.D):
        raise DimensionMismatch(f"input {x.shape} != {(cfg.N, cfg.D)}")
    w.check(cfg)
    if be.quantized:
        x = to_lattice(x, cfg.quant)
    N, dh = cfg.N, cfg.d_h
    inv_sqrt = 1.0 / math.sqrt(dh)
    heads = []
    for h in range(cfg.H):
        q = be.product(x, w.W_q[h], "linear", "proj-q")
        k = be.product(x, w.W_k[h], "linear", "proj-k")
        v = be.product(x, w.W_v[h], "linear", "proj-v")
        logits = be.product(q, k.T, "attn", "attn-matmul") * inv_sqrt
        be.count("trusted_mults", N * N)
        probs = np.vstack([be.softmax(row, cfg.stabilize) for row in logits])
        heads.append(be.product(probs, v, "attn", "attn-value"))
    out = be.product(np.hstack(heads), w.W_O, "linear", "proj-out")
    if cfg.residual:
        out = out + x
        be.count("trusted_adds", out.size)
    if cfg.layernorm:
        out = layer_norm(out, w.gamma, w.beta, w.eps)
        be.count("trusted_adds", 4 * out.size)
        be.count("trusted_mults", 2 * out.size)
        be.count("trusted_divs", out.size)
    if cfg.ffn_dim:
        hidden = be.product(out, w.W_1.T, "linear", "ffn-1") + w.b_1
        hidden = np.maximum(hidden, 0.0)
        be.count("trusted_adds", hidden.size)
        be.count("trusted_cmps", hidden.size)
        f = be.product(hidden, w.W_2, "linear", "ffn-2") + w.b_2
        be.count("trusted_adds", f.size)
        out = out + f if cfg.residual else f
        if cfg.residual:
            be.count("trusted_adds", f.size)
        if cfg.layernorm:
            out = layer_norm(out, w.gamma, w.beta, w.eps)
            be.count("trusted_adds", 4 * out.size)
            be.count("trusted_mults", 2 * out.size)
            be.count("trusted_divs", out.size)
    return out


def attention_plain(x, w: ModelWeights, cfg: AttentionConfig) -> np.ndarray:
    return _forward(x, w, cfg, _RealBackend())


def attention_plain_quantized(x, w: ModelWeights, cfg: AttentionConfig) -> np.ndarray:
    return _forward(x, w, cfg, _LatticeBackend(cfg))


def attention_secure(s: Session, x, w: ModelWeights, cfg: AttentionConfig,
                     stats: dict | None = None) -> np.ndarray:
    """Secure evaluation; raises IntegrityViolation naming the first failing stage.

    If ``stats`` is a dict it is filled per stage with call counts, wall time
    and the offline/online :class:`OpCounts` spent inside that stage.
    """
    if s.cfg.p != cfg.p:
        raise ValueError(f"session field p={s.cfg.p} != config p={cfg.p}")
    return _forward(x, w, cfg, _SecureBackend(s, cfg, stats))
