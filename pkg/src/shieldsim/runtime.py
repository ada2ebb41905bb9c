"""Two-party stage: trusted-side bookkeeping and the (possibly adversarial) worker.

A :class:`Session` owns the trusted world's randomness, its operation
counters, the transcript of everything the worker sees, and a registry of the
secrets the protocols created so the transcript can be audited for leakage.
"""
from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from .field import DEFAULT_FIELD, FieldConfig, FieldMatrix, Permutation, SeededRng, mat_mul_mod
from .quant import DEFAULT_QUANT, QuantConfig

DEFAULT_EXP_CAP = 700.0


class ExponentRange(ValueError):
    pass


class MaskReuse(RuntimeError):
    pass


class IntegrityViolation(RuntimeError):
    def __init__(self, stage: str, detail: str = ""):
        super().__init__(f"integrity check failed at stage {stage!r}" + (f": {detail}" if detail else ""))
        self.stage = stage
        self.detail = detail


@dataclass
class OpCounts:
    trusted_mults: int = 0
    trusted_adds: int = 0
    trusted_divs: int = 0
    trusted_exps: int = 0
    trusted_cmps: int = 0
    trusted_vecmats: int = 0
    worker_mults: int = 0
    worker_exps: int = 0
    elements_sent: int = 0
    elements_received: int = 0

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def __sub__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})

    def as_dict(self) -> dict:
        return asdict(self)


COUNT_KINDS = tuple(f.name for f in fields(OpCounts))
PHASES = ("offline", "online")


@dataclass(frozen=True)
class Message:
    direction: str  # "to-worker" | "from-worker"
    kind: str  # "field-matrix" | "real-vector"
    tag: str
    payload: np.ndarray

    def digest(self) -> str:
        arr = np.ascontiguousarray(self.payload)
        h = hashlib.sha256()
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
        return h.hexdigest()


class Transcript:
    """Append-only record of the worker's view."""

    def __init__(self):
        self._messages: list[Message] = []

    def append(self, direction: str, payload, tag: str) -> None:
        if isinstance(payload, FieldMatrix):
            kind, arr = "field-matrix", payload.data
        else:
            kind, arr = "real-vector", np.array(payload, dtype=np.float64)
            arr.flags.writeable = False
        self._messages.append(Message(direction, kind, tag, arr))

    @property
    def messages(self) -> tuple[Message, ...]:
        return tuple(self._messages)

    def __len__(self):
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages)

    def to_json(self, include_payloads: bool = False) -> list[dict]:
        out = []
        for i, m in enumerate(self._messages):
            entry = {
                "index": i,
                "direction": m.direction,
                "kind": m.kind,
                "tag": m.tag,
                "shape": list(m.payload.shape),
                "sha256": m.digest(),
            }
            if include_payloads:
                entry["payload"] = m.payload.tolist()
            out.append(entry)
        return out


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Honest:
    name = "honest"

    def applies(self, tag: str) -> bool:
        return False

    def tamper_matmul(self, result: np.ndarray, p: int, rng: SeededRng) -> np.ndarray:
        return result

    def tamper_exp(self, reply: np.ndarray, rng: SeededRng) -> np.ndarray:
        return reply


@dataclass(frozen=True)
class _Targeted(Honest):
    # Restrict tampering to worker calls carrying this tag; None means every call.
    target: str | None = None

    def applies(self, tag: str) -> bool:
        return self.target is None or self.target == tag


@dataclass(frozen=True)
class MatmulTamper(_Targeted):
    mode: str = "single-entry"  # single-entry | row-swap | scale-all
    magnitude: int = 1
    name = "matmul-tamper"

    def __post_init__(self):
        if self.mode not in ("single-entry", "row-swap", "scale-all"):
            raise ValueError(f"unknown matmul tamper mode {self.mode!r}")

    def tamper_matmul(self, result, p, rng):
        out = np.array(result)
        if self.mode == "single-entry":
            i = int(rng.integers(0, out.shape[0]))
            j = int(rng.integers(0, out.shape[1]))
            out[i, j] = (out[i, j] + self.magnitude) % p
        elif self.mode == "row-swap":
            if out.shape[0] < 2:
                return out
            i, j = (int(v) for v in rng.generator.choice(out.shape[0], size=2, replace=False))
            out[[i, j]] = out[[j, i]]
        else:
            out = (out * (self.magnitude % p)) % p
        return out


@dataclass(frozen=True)
class SoftmaxTamperA(_Targeted):
    """Multiplies one reply entry by e^delta."""

    delta: float = 0.01
    index: int | None = None
    name = "softmax-a"

    def tamper_exp(self, reply, rng):
        out = np.array(reply, dtype=np.float64)
        i = self.index if self.index is not None else int(rng.integers(0, out.size))
        out[i] *= np.exp(self.delta)
        return out


@dataclass(frozen=True)
class SoftmaxTamperB(_Targeted):
    """Adds delta to one reply entry (``relative``: delta times the entry's magnitude)."""

    delta: float = 0.01
    index: int | None = None
    relative: bool = False
    name = "softmax-b"

    def tamper_exp(self, reply, rng):
        out = np.array(reply, dtype=np.float64)
        i = self.index if self.index is not None else int(rng.integers(0, out.size))
        out[i] += self.delta * abs(out[i]) if self.relative else self.delta
        return out


@dataclass(frozen=True)
class SoftmaxSwap(_Targeted):
    i: int | None = None
    j: int | None = None
    name = "softmax-swap"

    def pick(self, size: int, rng: SeededRng) -> tuple[int, int]:
        if self.i is not None and self.j is not None:
            return self.i, self.j
        i, j = rng.generator.choice(size, size=2, replace=False)
        return int(i), int(j)

    def tamper_exp(self, reply, rng):
        out = np.array(reply, dtype=np.float64)
        if out.size < 2:
            return out
        i, j = self.pick(out.size, rng)
        out[[i, j]] = out[[j, i]]
        return out


AdversaryStrategy = Honest  # common base of every strategy


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


def _secret_keys(value, plaintext=None) -> list[tuple[str, bytes]]:
    """Lookup keys for a secret's rows and columns (or the whole vector).

    When the secret is an additive pad and ``plaintext`` is what it pads, the
    slices covering all-zero plaintext slices are skipped: there the payload
    equals the pad by coincidence and is still uniformly random to the worker.
    """
    arr = value.data if isinstance(value, FieldMatrix) else value.indices if isinstance(value, Permutation) else np.asarray(value)
    arr = np.ascontiguousarray(arr)
    if arr.size < 2:
        return []
    if arr.ndim == 1:
        return [("vec", arr.astype(arr.dtype).tobytes())]
    zero_rows = zero_cols = np.zeros(0, dtype=bool)
    if plaintext is not None and plaintext.shape == arr.shape:
        zero_rows = ~plaintext.any(axis=1)
        zero_cols = ~plaintext.any(axis=0)
    keys = [("row", np.ascontiguousarray(r).tobytes()) for i, r in enumerate(arr)
            if not (zero_rows.size and zero_rows[i])]
    keys += [("col", np.ascontiguousarray(c).tobytes()) for j, c in enumerate(arr.T)
             if not (zero_cols.size and zero_cols[j])]
    return keys


@dataclass
class Session:
    seed: int = 0
    cfg: FieldConfig = DEFAULT_FIELD
    q: QuantConfig = DEFAULT_QUANT
    adversary: Honest = field(default_factory=Honest)
    exp_cap: float = DEFAULT_EXP_CAP

    def __post_init__(self):
        if self.q.cfg != self.cfg:
            # Keep the requested precision when the field allows it, else the largest that fits.
            l = self.q.l
            while l > 0 and (1 << (2 * l)) >= self.cfg.p:
                l -= 1
            self.q = replace(self.q, l=l, cfg=self.cfg)
        self.rng = SeededRng(self.seed, (0,))
        # The adversary draws from its own stream, independent of trusted secrets.
        self.adversary_rng = SeededRng(self.seed, (1,))
        self.counters = {ph: OpCounts() for ph in PHASES}
        self.transcript = Transcript()
        self.phase = "online"
        self._secrets: list[tuple[str, Any]] = []
        self._blinded: dict[int, np.ndarray] = {}

    @contextmanager
    def offline(self):
        prev, self.phase = self.phase, "offline"
        try:
            yield self
        finally:
            self.phase = prev

    def count(self, kind: str, amount: int = 1) -> None:
        if kind not in COUNT_KINDS:
            raise KeyError(f"unknown counter {kind!r}")
        if amount < 0:
            raise ValueError("counters only increase")
        c = self.counters[self.phase]
        setattr(c, kind, getattr(c, kind) + int(amount))

    def snapshot(self) -> dict[str, OpCounts]:
        return {ph: replace(c) for ph, c in self.counters.items()}

    def register_secret(self, name: str, value) -> None:
        self._secrets.append((name, value))

    def note_blinding(self, mask, plaintext) -> None:
        """Record the plaintext a registered mask pads, for the leak scan."""
        arr = plaintext.data if isinstance(plaintext, FieldMatrix) else np.asarray(plaintext)
        self._blinded[id(mask)] = arr

    @property
    def secrets(self) -> tuple[tuple[str, Any], ...]:
        return tuple(self._secrets)


def count_trusted(s: Session, kind: str, amount: int = 1) -> None:
    s.count(kind, amount)


def snapshot_counts(s: Session) -> dict[str, OpCounts]:
    return s.snapshot()


def trusted_matmul(s: Session, a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    """Matrix product computed inside the trusted world."""
    out = mat_mul_mod(a, b)
    s.count("trusted_mults", a.rows * a.cols * b.cols)
    s.count("trusted_adds", a.rows * max(a.cols - 1, 0) * b.cols)
    return out


def worker_matmul(s: Session, a: FieldMatrix, b: FieldMatrix, tag: str = "matmul") -> FieldMatrix:
    s.transcript.append("to-worker", a, tag)
    s.transcript.append("to-worker", b, tag)
    s.count("elements_sent", a.data.size + b.data.size)
    out = mat_mul_mod(a, b)
    s.count("worker_mults", a.rows * a.cols * b.cols)
    adv = s.adversary
    if adv.applies(tag):
        out = FieldMatrix(adv.tamper_matmul(out.data, s.cfg.p, s.adversary_rng), s.cfg)
    s.transcript.append("from-worker", out, tag)
    s.count("elements_received", out.data.size)
    return out


def worker_exp(s: Session, v, tag: str = "softmax") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size and np.max(np.abs(v)) > s.exp_cap:
        raise ExponentRange(f"masked exponent {np.max(np.abs(v)):.3f} exceeds cap {s.exp_cap}")
    s.transcript.append("to-worker", v, tag)
    s.count("elements_sent", v.size)
    out = np.exp(v)
    s.count("worker_exps", v.size)
    adv = s.adversary
    if adv.applies(tag):
        out = adv.tamper_exp(out, s.adversary_rng)
    s.transcript.append("from-worker", out, tag)
    s.count("elements_received", v.size)
    return out


def find_leaks(s: Session) -> list[str]:
    """Names of registered secrets that appear verbatim in the worker's view.

    A matrix secret leaks if any of its rows or columns shows up as a row or
    column of a payload; a vector secret (permutation, coefficient vector,
    mask vector) leaks if it shows up whole as a payload, row or column.
    Scalar secrets cannot be located by value inside uniform payloads and are
    checked only through the containers that would carry them.
    Pad slices covering all-zero plaintext slices (see :meth:`Session.note_blinding`)
    are not counted.
    """
    seen: set[tuple[str, bytes]] = set()
    for m in s.transcript:
        arr = np.ascontiguousarray(m.payload)
        if arr.ndim == 1:
            seen.add(("vec", arr.tobytes()))
            continue
        for r in arr:
            b = np.ascontiguousarray(r).tobytes()
            seen.add(("row", b))
            seen.add(("vec", b))
        for c in arr.T:
            b = np.ascontiguousarray(c).tobytes()
            seen.add(("col", b))
            seen.add(("vec", b))
    # Rows and columns are compared in either orientation.
    seen |= {("row", b) for kind, b in seen if kind == "col"} | {("col", b) for kind, b in seen if kind == "row"}
    leaked = []
    for name, value in s.secrets:
        if any(k in seen for k in _secret_keys(value, s._blinded.get(id(value)))):
            leaked.append(name)
    return leaked


def transcript_json(s: Session, include_payloads: bool = False) -> str:
    return json.dumps(s.transcript.to_json(include_payloads), sort_keys=True)
