"""Uniform evaluation interface over the real CKKS scheme and an exact
plaintext SIMD simulator.

Both backends expose the same operations, enforce the same level and scale
bookkeeping, and append to an identical ledger, so any encrypted
computation can be replayed exactly on the simulator as an oracle. The
simulator's slot values are ordinary float64 arithmetic with no noise.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np

from .activations import MonicEvalPlan, Polynomial, monic_eval_plan
from .ckks.params import CkksParams
from .ckks.scheme import CkksScheme, KeySet
from .errors import (
    BackendMixError,
    LevelExhaustedError,
    LevelMismatchError,
    ScaleMismatchError,
    TransparentCiphertextError,
)


class LevelLedger:
    """Append-only record of (op label, level before, level after)."""

    def __init__(self):
        self._entries: list[tuple[str, int, int]] = []
        self._lock = threading.Lock()

    def record(self, label: str, before: int, after: int) -> None:
        with self._lock:
            self._entries.append((label, before, after))

    @property
    def entries(self) -> list[tuple[str, int, int]]:
        with self._lock:
            return list(self._entries)

    def total_consumed(self) -> int:
        """Sum of per-op drops; equals top minus final level for a serial
        op sequence (parallel fan-out counts each branch)."""
        entries = self.entries
        return sum(before - after for _, before, after in entries)

    def per_label_consumption(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for label, before, after in self.entries:
            out[label] = max(out.get(label, 0), before - after)
        return out

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps({"op": label, "before": b, "after": a})
            for label, b, a in self.entries
        )

    @staticmethod
    def from_jsonl(text: str) -> "LevelLedger":
        ledger = LevelLedger()
        for line in text.splitlines():
            line = line.strip()
            if line:
                d = json.loads(line)
                ledger.record(d["op"], d["before"], d["after"])
        return ledger


@dataclass(frozen=True)
class Handle:
    """Immutable reference to one backend value (a ciphertext or a slot vector)."""

    payload: object
    level: int
    scale: float
    owner: int


class EvalBackend:
    """Shared bookkeeping; concrete value arithmetic lives in subclasses."""

    kind = "abstract"

    def __init__(self, params: CkksParams, ledger: LevelLedger | None = None):
        self.params = params
        self.ledger = ledger if ledger is not None else LevelLedger()
        self._chain = params.modulus_chain

    @property
    def level_budget(self) -> int:
        return self.params.level

    def _wrap(self, payload, level, scale) -> Handle:
        return Handle(payload, level, scale, id(self))

    def _own(self, h: Handle) -> None:
        if not isinstance(h, Handle) or h.owner != id(self):
            raise BackendMixError("handle does not belong to this backend instance")

    def _need_levels(self, h: Handle, depth: int, what: str) -> None:
        if h.level < depth:
            raise LevelExhaustedError(
                f"{what} needs {depth} level(s); handle is at level {h.level}"
            )

    def _rescaled_scale(self, scale: float, level: int) -> float:
        return scale / self._chain[level]

    def _check_weight_row(self, row) -> None:
        # zero taps inside a sum contribute nothing and are harmless; only a
        # row that vanishes entirely would produce a transparent result
        if all(int(round(float(w) * self.params.scale)) == 0 for w in row):
            raise TransparentCiphertextError(
                "every weight in this sum rounds to zero at the base scale; "
                "clamp model parameters away from zero first"
            )

    # ---------------------------------------------------------- public ops

    def add(self, h1: Handle, h2: Handle, label: str = "add") -> Handle:
        self._own(h1), self._own(h2)
        out = self._add(h1, h2)
        self.ledger.record(label, h1.level, out.level)
        return out

    def add_plain(self, h: Handle, values, label: str = "add_plain") -> Handle:
        self._own(h)
        out = self._add_plain(h, values)
        self.ledger.record(label, h.level, out.level)
        return out

    def neg(self, h: Handle, label: str = "neg") -> Handle:
        self._own(h)
        out = self._neg(h)
        self.ledger.record(label, h.level, out.level)
        return out

    def mul(self, h1: Handle, h2: Handle, label: str = "mul") -> Handle:
        self._own(h1), self._own(h2)
        self._need_levels(h1, 1, "ciphertext multiply")
        out = self._mul(h1, h2)
        self.ledger.record(label, h1.level, out.level)
        return out

    def mul_plain(self, h: Handle, values, label: str = "mul_plain") -> Handle:
        self._own(h)
        self._need_levels(h, 1, "plaintext multiply")
        out = self._mul_plain(h, values)
        self.ledger.record(label, h.level, out.level)
        return out

    def weighted_sum(self, handles, weights, bias: float = 0.0,
                     label: str = "weighted_sum") -> Handle:
        """Sum of scalar-weighted handles plus a bias, rescaled once (one level)."""
        return self.weighted_sum_many(handles, [weights], [bias], label)[0]

    def weighted_sum_many(self, handles, weight_rows, biases,
                          label: str = "weighted_sum") -> list[Handle]:
        """Several weighted sums sharing one set of input handles (e.g. all
        output channels of a convolution at one position); one level each."""
        handles = list(handles)
        weight_rows = [[float(w) for w in row] for row in weight_rows]
        if not handles or len(weight_rows) != len(biases):
            raise ValueError("weighted_sum needs handles and matching weight rows")
        for row in weight_rows:
            if len(row) != len(handles):
                raise ValueError("each weight row must match the handle count")
            self._check_weight_row(row)
        for h in handles:
            self._own(h)
        self._need_levels(handles[0], 1, "weighted sum")
        outs = self._weighted_sum_many(handles, weight_rows, [float(b) for b in biases])
        for out in outs:
            self.ledger.record(label, handles[0].level, out.level)
        return outs

    def eval_poly_monic(self, h: Handle, poly: Polynomial,
                        label: str = "eval_poly") -> Handle:
        """Depth-minimal polynomial evaluation (2 levels for monic quartics,
        1 for monic quadratics, 0 below that)."""
        self._own(h)
        plan = monic_eval_plan(poly)
        self._need_levels(h, plan.depth, f"{plan.kind} evaluation")
        out = self._eval_plan(h, plan)
        self.ledger.record(label, h.level, out.level)
        return out

    # ------------------------------------------------------------ transport

    def encrypt_vector(self, values) -> Handle:
        raise NotImplementedError

    def decrypt_vector(self, h: Handle) -> np.ndarray:
        raise NotImplementedError

    # ------------------------------------------------- schedule over raw ops

    def _eval_plan(self, h: Handle, plan: MonicEvalPlan) -> Handle:
        if plan.kind == "const":
            zero = self._sub_raw(h, h)
            return self._add_const_raw(zero, plan.constants[0])
        if plan.kind == "linear":
            return self._add_const_raw(h, plan.constants[0])
        if plan.kind == "quadratic":
            c0, c1 = plan.constants
            acc = self._square_reduced_raw(h)
            if c1 != 0.0:
                acc = self._add_raw(acc, self._mul_scalar_raw(h, c1, h.scale))
            if c0 != 0.0:
                acc = self._add_const_raw(acc, c0)
            return self._rescale(acc)
        if plan.kind == "quartic_even":
            half, k = plan.constants
            t = self._rescale(self._square_reduced_raw(h))
            if half != 0.0:
                t = self._add_const_raw(t, half)
            y = self._rescale(self._square_reduced_raw(t))
            if k != 0.0:
                y = self._add_const_raw(y, k)
            return y
        alpha, beta, gamma = plan.constants
        sq = self._square_reduced_raw(h)
        ax = self._mul_scalar_raw(h, alpha, h.scale)
        q1, q2 = self._rescale_pair(
            self._add_const_raw(self._add_raw(sq, ax), beta),
            self._add_const_raw(self._sub_raw(sq, ax), gamma),
        )
        return self._mul(q1, q2)

    # ------------------------------------------------- subclass primitives

    def _add(self, h1, h2) -> Handle: raise NotImplementedError
    def _add_plain(self, h, values) -> Handle: raise NotImplementedError
    def _neg(self, h) -> Handle: raise NotImplementedError
    def _mul(self, h1, h2) -> Handle: raise NotImplementedError
    def _mul_plain(self, h, values) -> Handle: raise NotImplementedError
    def _weighted_sum_many(self, handles, weight_rows, biases) -> list[Handle]:
        raise NotImplementedError
    def _add_raw(self, h1, h2) -> Handle: raise NotImplementedError
    def _sub_raw(self, h1, h2) -> Handle: raise NotImplementedError
    def _add_const_raw(self, h, c) -> Handle: raise NotImplementedError
    def _mul_scalar_raw(self, h, c, pt_scale) -> Handle: raise NotImplementedError
    def _square_reduced_raw(self, h) -> Handle: raise NotImplementedError
    def _rescale(self, h) -> Handle: raise NotImplementedError

    def _rescale_pair(self, h1, h2) -> tuple:
        return self._rescale(h1), self._rescale(h2)


class SimBackend(EvalBackend):
    """Exact slot-vector oracle with the full level/scale discipline."""

    kind = "sim"

    def encrypt_vector(self, values) -> Handle:
        values = np.asarray(values, dtype=np.float64).copy()
        if values.ndim != 1 or len(values) > self.params.slot_count:
            raise ValueError("expected a 1-d vector of at most slot_count values")
        return self._wrap(values, self.params.level, self.params.scale)

    def decrypt_vector(self, h: Handle) -> np.ndarray:
        self._own(h)
        return np.asarray(h.payload, dtype=np.float64).copy()

    def _check_pair(self, h1, h2):
        if h1.level != h2.level:
            raise LevelMismatchError(f"levels differ: {h1.level} vs {h2.level}")
        if abs(h1.scale - h2.scale) > 1e-9 * max(h1.scale, h2.scale):
            raise ScaleMismatchError(f"scales differ: {h1.scale:g} vs {h2.scale:g}")

    def _add(self, h1, h2):
        self._check_pair(h1, h2)
        return self._wrap(h1.payload + h2.payload, h1.level, h1.scale)

    def _add_plain(self, h, values):
        values = np.asarray(values, dtype=np.float64)
        return self._wrap(h.payload + values, h.level, h.scale)

    def _neg(self, h):
        return self._wrap(-h.payload, h.level, h.scale)

    def _mul(self, h1, h2):
        self._check_pair(h1, h2)
        if h1.level < 1:
            raise LevelExhaustedError("ciphertext multiply needs one level in reserve")
        scale = self._rescaled_scale(h1.scale * h2.scale, h1.level)
        return self._wrap(h1.payload * h2.payload, h1.level - 1, scale)

    def _mul_plain(self, h, values):
        if h.level < 1:
            raise LevelExhaustedError("plaintext multiply needs one level in reserve")
        values = np.asarray(values, dtype=np.float64)
        scale = self._rescaled_scale(h.scale * self.params.scale, h.level)
        return self._wrap(h.payload * values, h.level - 1, scale)

    def _weighted_sum_many(self, handles, weight_rows, biases):
        stack = np.stack([h.payload for h in handles])
        h0 = handles[0]
        scale = self._rescaled_scale(h0.scale * self.params.scale, h0.level)
        outs = []
        for row, bias in zip(weight_rows, biases):
            w = np.asarray(row, dtype=np.float64)
            outs.append(self._wrap(w @ stack + bias, h0.level - 1, scale))
        return outs

    def _add_raw(self, h1, h2):
        return self._wrap(h1.payload + h2.payload, h1.level, h1.scale)

    def _sub_raw(self, h1, h2):
        return self._wrap(h1.payload - h2.payload, h1.level, h1.scale)

    def _add_const_raw(self, h, c):
        return self._wrap(h.payload + c, h.level, h.scale)

    def _mul_scalar_raw(self, h, c, pt_scale):
        return self._wrap(c * h.payload, h.level, h.scale * pt_scale)

    def _square_reduced_raw(self, h):
        return self._wrap(h.payload * h.payload, h.level, h.scale * h.scale)

    def _rescale(self, h):
        if h.level < 1:
            raise LevelExhaustedError("rescale at level 0")
        return self._wrap(h.payload, h.level - 1, self._rescaled_scale(h.scale, h.level))


class CkksBackend(EvalBackend):
    """The real scheme behind the uniform interface."""

    kind = "ckks"

    def __init__(self, params: CkksParams, keys: KeySet,
                 ledger: LevelLedger | None = None, rng=None):
        super().__init__(params, ledger)
        self.scheme = CkksScheme(params)
        self.keys = keys
        self._rng = np.random.default_rng(rng)

    def encrypt_vector(self, values) -> Handle:
        values = np.asarray(values, dtype=np.float64)
        pt = self.scheme.encode(values)
        ct = self.scheme.encrypt(self.keys, pt, rng=self._rng)
        return self._wrap(ct, ct.level, ct.scale)

    def decrypt_vector(self, h: Handle) -> np.ndarray:
        self._own(h)
        return self.scheme.decode(self.scheme.decrypt(self.keys, h.payload))

    def _encode_at(self, values, h: Handle):
        return self.scheme.encode(values, scale=self.params.scale, level=h.level)

    def _add(self, h1, h2):
        ct = self.scheme.add_ct(h1.payload, h2.payload)
        return self._wrap(ct, ct.level, ct.scale)

    def _add_plain(self, h, values):
        if np.ndim(values) == 0:
            ct = self.scheme.add_scalar_raw(h.payload, float(values))
        else:
            pt = self.scheme.encode(values, scale=h.scale, level=h.level)
            ct = self.scheme.add_pt(h.payload, pt)
        return self._wrap(ct, ct.level, ct.scale)

    def _neg(self, h):
        ct = self.scheme.negate(h.payload)
        return self._wrap(ct, ct.level, ct.scale)

    def _mul(self, h1, h2):
        ct = self.scheme.mul_ct(h1.payload, h2.payload, self.keys)
        return self._wrap(ct, ct.level, ct.scale)

    def _mul_plain(self, h, values):
        if np.ndim(values) == 0:
            raw = self.scheme.mul_scalar_raw(h.payload, float(values), self.params.scale)
            ct = self.scheme.rescale(raw)
        else:
            ct = self.scheme.mul_pt(h.payload, self._encode_at(values, h))
        return self._wrap(ct, ct.level, ct.scale)

    def _weighted_sum_many(self, handles, weight_rows, biases):
        raws = self.scheme.weighted_sum_many_raw(
            [h.payload for h in handles], weight_rows, biases
        )
        return [
            self._wrap(ct, ct.level, ct.scale)
            for ct in self.scheme.rescale_many(raws)
        ]

    def _add_raw(self, h1, h2):
        ct = self.scheme.add_ct(h1.payload, h2.payload)
        return self._wrap(ct, ct.level, ct.scale)

    def _sub_raw(self, h1, h2):
        ct = self.scheme.sub_ct(h1.payload, h2.payload)
        return self._wrap(ct, ct.level, ct.scale)

    def _add_const_raw(self, h, c):
        ct = self.scheme.add_scalar_raw(h.payload, c)
        return self._wrap(ct, ct.level, ct.scale)

    def _mul_scalar_raw(self, h, c, pt_scale):
        ct = self.scheme.mul_scalar_raw(h.payload, c, pt_scale)
        return self._wrap(ct, ct.level, ct.scale)

    def _square_reduced_raw(self, h):
        raw = self.scheme.square_raw(h.payload)
        ct = self.scheme.relinearize(raw, self.keys)
        return self._wrap(ct, ct.level, ct.scale)

    def _rescale(self, h):
        ct = self.scheme.rescale(h.payload)
        return self._wrap(ct, ct.level, ct.scale)

    def _rescale_pair(self, h1, h2):
        a, b = self.scheme.rescale_many([h1.payload, h2.payload])
        return self._wrap(a, a.level, a.scale), self._wrap(b, b.level, b.scale)


def make_backend(kind: str, params: CkksParams, keys: KeySet | None = None,
                 ledger: LevelLedger | None = None, rng=None) -> EvalBackend:
    if kind == "sim":
        return SimBackend(params, ledger)
    if kind == "ckks":
        if keys is None:
            raise ValueError("the ckks backend needs a key set")
        return CkksBackend(params, keys, ledger, rng)
    raise ValueError(f"unknown backend kind {kind!r}")
