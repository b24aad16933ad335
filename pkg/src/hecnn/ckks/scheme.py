"""Leveled RNS-CKKS over the negacyclic ring: keys, encryption, evaluation.

Ciphertext components are stored in the NTT domain, one uint64 row per
active chain prime. Every exposed multiplication relinearizes back to two
components and rescales, so the level drops by exactly one per multiply.

Relinearization uses per-prime digit decomposition against a single wide
key-switching prime P: digit i of d2 is its residue mod q_i, and the key
for digit i embeds P * lam_i * s**2 where lam_i = 1 mod q_i and 0 mod the
other chain primes, so the reassembled s**2 term is exact at every level.

The secret key and the per-encryption randomness are sparse ternary with
Hamming weight 64 (the convention of the original CKKS implementation):
at the 30-bit scale these parameter sets use, dense ternary sampling would
push the fresh-encryption slot noise past 1e-4, swamping the precision
contract. Security is research-grade and documented, not estimated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    KeyMismatchError,
    LevelExhaustedError,
    LevelMismatchError,
    ScaleMismatchError,
    TransparentCiphertextError,
)
from . import encoding
from .ntt import add_mod, mul_mod, neg_mod, reduce_mod, sub_mod
from .params import CkksParams, get_context

NOISE_STDDEV = 3.2
SECRET_HAMMING_WEIGHT = 64

_SCALE_RTOL = 1e-9


@dataclass
class Plaintext:
    data: np.ndarray  # uint64 [level+1, n], NTT domain
    scale: float
    level: int
    is_zero: bool = False


@dataclass
class Ciphertext:
    c: tuple  # component arrays, each uint64 [level+1, n], NTT domain
    scale: float
    level: int

    def copy(self) -> "Ciphertext":
        return Ciphertext(tuple(x.copy() for x in self.c), self.scale, self.level)


@dataclass
class KeySet:
    params: CkksParams
    secret: np.ndarray  # s in NTT form over chain + special rows
    secret_sq: np.ndarray
    public_b: np.ndarray  # chain rows only
    public_a: np.ndarray
    relin_b: np.ndarray  # [digits, chain+special rows, n]
    relin_a: np.ndarray
    seed: int | None = None


def _same_scale(s1: float, s2: float) -> bool:
    return abs(s1 - s2) <= _SCALE_RTOL * max(abs(s1), abs(s2))


class CkksScheme:
    """Evaluator bound to one parameter set; all operations are pure."""

    def __init__(self, params: CkksParams):
        self.params = params
        self.ctx = get_context(params)
        self._relin_idx: dict[int, tuple] = {}

    # ------------------------------------------------------------------ keys

    def _sample_ternary(self, rng) -> np.ndarray:
        n = self.params.ring_degree
        h = min(SECRET_HAMMING_WEIGHT, n // 4)
        coeffs = np.zeros(n, dtype=np.int64)
        support = rng.choice(n, size=h, replace=False)
        coeffs[support] = rng.choice(np.array([-1, 1], dtype=np.int64), size=h)
        return coeffs

    def _sample_error(self, rng) -> np.ndarray:
        e = rng.normal(0.0, NOISE_STDDEV, self.params.ring_degree)
        return np.rint(e).astype(np.int64)

    def _to_ntt(self, coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
        mods = self.ctx.moduli[rows].astype(np.int64)
        res = np.mod(coeffs[None, :], mods[:, None]).astype(np.uint64)
        return self.ctx.plan.fwd(res, rows)

    def _uniform_rows(self, rng, rows: np.ndarray) -> np.ndarray:
        n = self.params.ring_degree
        out = np.empty((len(rows), n), dtype=np.uint64)
        for i, r in enumerate(rows):
            out[i] = rng.integers(0, int(self.ctx.moduli[r]), n, dtype=np.uint64)
        return out

    def keygen(self, seed) -> KeySet:
        """Secret/public/relinearization keys; identical seeds give identical keys."""
        rng = np.random.default_rng(seed)
        ctx = self.ctx
        n_chain = self.params.level + 1
        all_rows = np.arange(n_chain + 1)
        chain_rows = np.arange(n_chain)
        all_mods = ctx.moduli[all_rows][:, None]
        all_pinv = ctx.plan.p_inv[all_rows][:, None]

        s = self._sample_ternary(rng)
        s_ntt = self._to_ntt(s, all_rows)
        s_sq = mul_mod(s_ntt, s_ntt, all_mods, all_pinv)

        a_pk = self._uniform_rows(rng, chain_rows)
        e_pk = self._to_ntt(self._sample_error(rng), chain_rows)
        chain_mods = ctx.moduli[chain_rows][:, None]
        chain_pinv = ctx.plan.p_inv[chain_rows][:, None]
        b_pk = sub_mod(e_pk, mul_mod(a_pk, s_ntt[:n_chain], chain_mods, chain_pinv), chain_mods)

        digits = n_chain
        relin_b = np.empty((digits, n_chain + 1, self.params.ring_degree), dtype=np.uint64)
        relin_a = np.empty_like(relin_b)
        for i in range(digits):
            a_i = self._uniform_rows(rng, all_rows)
            e_i = self._to_ntt(self._sample_error(rng), all_rows)
            body = sub_mod(e_i, mul_mod(a_i, s_ntt, all_mods, all_pinv), all_mods)
            key_term = mul_mod(s_sq, ctx.p_lam_mod[i][:, None], all_mods, all_pinv)
            relin_b[i] = add_mod(body, key_term, all_mods)
            relin_a[i] = a_i

        return KeySet(
            params=self.params,
            secret=s_ntt,
            secret_sq=s_sq,
            public_b=b_pk,
            public_a=a_pk,
            relin_b=relin_b,
            relin_a=relin_a,
            seed=None if isinstance(seed, np.random.Generator) else seed,
        )

    def _check_keys(self, keys: KeySet) -> None:
        if keys.params.digest() != self.params.digest():
            raise KeyMismatchError("key set was generated under different parameters")

    # --------------------------------------------------------------- encode

    def encode(self, values, scale: float | None = None, level: int | None = None) -> Plaintext:
        """Encode a real vector of length <= n/2 into a plaintext."""
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        scale = self.params.scale if scale is None else float(scale)
        level = self.params.level if level is None else int(level)
        if len(values) > self.params.slot_count:
            raise ValueError("more values than slots")
        encoding.check_headroom(self.ctx, values, scale, level)
        coeffs = encoding.embed_real(self.ctx, values)
        ints = encoding.round_to_int_coeffs(coeffs, scale)
        is_zero = not np.any(ints)
        data = encoding.int_coeffs_to_residues(self.ctx, ints, level)
        return Plaintext(self.ctx.plan.fwd(data, self.ctx.active_rows(level)), scale, level, is_zero)

    def decode(self, pt: Plaintext) -> np.ndarray:
        rows = self.ctx.active_rows(pt.level)
        res = self.ctx.plan.inv(pt.data, rows)
        ints = encoding.lift_centered(self.ctx, res, pt.level)
        coeffs = ints.astype(np.float64) / pt.scale
        return encoding.extract_real(self.ctx, coeffs)

    def _scalar_residues(self, value: float, scale: float) -> np.ndarray:
        """Residue of round(value*scale) against every modulus row (incl. special)."""
        v = int(round(value * scale))
        return np.array([v % int(m) for m in self.ctx.moduli], dtype=np.uint64)

    # -------------------------------------------------------------- encrypt

    def encrypt(self, keys: KeySet, pt: Plaintext, rng=None) -> Ciphertext:
        self._check_keys(keys)
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        rows = self.ctx.active_rows(pt.level)
        mods = self.ctx.moduli[rows][:, None]
        pinv = self.ctx.plan.p_inv[rows][:, None]
        u = self._to_ntt(self._sample_ternary(rng), rows)
        e0 = self._to_ntt(self._sample_error(rng), rows)
        e1 = self._to_ntt(self._sample_error(rng), rows)
        k = pt.level + 1
        c0 = add_mod(add_mod(mul_mod(keys.public_b[:k], u, mods, pinv), e0, mods), pt.data, mods)
        c1 = add_mod(mul_mod(keys.public_a[:k], u, mods, pinv), e1, mods)
        return Ciphertext((c0, c1), pt.scale, pt.level)

    def decrypt(self, keys: KeySet, ct: Ciphertext) -> Plaintext:
        self._check_keys(keys)
        if len(ct.c) != 2:
            raise ValueError("decrypt expects a relinearized 2-component ciphertext")
        rows = self.ctx.active_rows(ct.level)
        mods = self.ctx.moduli[rows][:, None]
        pinv = self.ctx.plan.p_inv[rows][:, None]
        k = ct.level + 1
        msg = add_mod(ct.c[0], mul_mod(ct.c[1], keys.secret[:k], mods, pinv), mods)
        return Plaintext(msg, ct.scale, ct.level)

    # ------------------------------------------------------------ utilities

    def level_of(self, ct: Ciphertext) -> int:
        return ct.level

    def _row_consts(self, level: int):
        rows = self.ctx.active_rows(level)
        return self.ctx.moduli[rows][:, None], self.ctx.plan.p_inv[rows][:, None]

    def _check_pair(self, a: Ciphertext, b) -> None:
        if a.level != b.level:
            raise LevelMismatchError(f"levels differ: {a.level} vs {b.level}")
        if not _same_scale(a.scale, b.scale):
            raise ScaleMismatchError(f"scales differ: {a.scale:g} vs {b.scale:g}")

    # ----------------------------------------------------------- arithmetic

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        mods, _ = self._row_consts(a.level)
        return Ciphertext(
            tuple(add_mod(x, y, mods) for x, y in zip(a.c, b.c)), a.scale, a.level
        )

    def sub_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        mods, _ = self._row_consts(a.level)
        return Ciphertext(
            tuple(sub_mod(x, y, mods) for x, y in zip(a.c, b.c)), a.scale, a.level
        )

    def add_pt(self, a: Ciphertext, p: Plaintext) -> Ciphertext:
        self._check_pair(a, p)
        mods, _ = self._row_consts(a.level)
        return Ciphertext(
            (add_mod(a.c[0], p.data, mods), *a.c[1:]), a.scale, a.level
        )

    def negate(self, a: Ciphertext) -> Ciphertext:
        mods, _ = self._row_consts(a.level)
        return Ciphertext(tuple(neg_mod(x, mods) for x in a.c), a.scale, a.level)

    def add_scalar_raw(self, a: Ciphertext, value: float) -> Ciphertext:
        """Add a constant encoded at the ciphertext's own scale (free)."""
        k = a.level + 1
        res = self._scalar_residues(value, a.scale)[:k]
        mods, _ = self._row_consts(a.level)
        c0 = add_mod(a.c[0], res[:, None], mods)
        return Ciphertext((c0, *a.c[1:]), a.scale, a.level)

    def mul_scalar_raw(self, a: Ciphertext, value: float, pt_scale: float) -> Ciphertext:
        """Multiply by a scalar plaintext without rescaling; scale multiplies."""
        if int(round(value * pt_scale)) == 0:
            raise TransparentCiphertextError(
                f"scalar {value:g} rounds to zero at scale {pt_scale:g}; "
                "clamp model parameters away from zero first"
            )
        k = a.level + 1
        res = self._scalar_residues(value, pt_scale)[:k]
        mods, pinv = self._row_consts(a.level)
        comps = tuple(mul_mod(x, res[:, None], mods, pinv) for x in a.c)
        return Ciphertext(comps, a.scale * pt_scale, a.level)

    def weighted_sum_many_raw(self, cts, weight_rows, biases,
                              chunk: int = 64) -> list[Ciphertext]:
        """For each weight row, sum of round(w*Delta)-weighted ciphertexts plus
        a constant, without rescaling; every tap is multiplied at the same
        level so each output costs the caller a single rescale.

        The tap stack is built once per chunk and shared by all outputs;
        chunked accumulation keeps partial sums below 2**62 (chunk * q_max).
        """
        first = cts[0]
        for ct in cts:
            if len(ct.c) != 2:
                raise ValueError("weighted sums need relinearized ciphertexts")
            self._check_pair(first, ct)
        lvl = first.level
        k = lvl + 1
        n = first.c[0].shape[1]
        mods = self.ctx.moduli[:k]
        mods_col = mods[None, :, None]
        pinv = self.ctx.plan.p_inv[:k]
        pinv_col = pinv[None, :, None]
        delta = self.params.scale
        wflat = np.array([w for row in weight_rows for w in row], dtype=np.float64)
        wint = np.rint(wflat * delta).astype(np.int64)
        res = (
            np.mod(wint[:, None], mods.astype(np.int64)[None, :])
            .astype(np.uint64)
            .reshape(len(weight_rows), len(cts), k)
        )
        accs = np.zeros((len(weight_rows), 2, k, n), dtype=np.uint64)
        for lo in range(0, len(cts), chunk):
            hi = min(lo + chunk, len(cts))
            for ci in range(2):
                stack = np.stack([ct.c[ci] for ct in cts[lo:hi]])
                for o in range(len(weight_rows)):
                    prod = mul_mod(stack, res[o, lo:hi, :, None], mods_col, pinv_col)
                    accs[o, ci] += prod.sum(axis=0)
            accs = reduce_mod(accs, mods[None, None, :, None], pinv[None, None, :, None])
        scale = first.scale * delta
        outs = []
        for o, bias in enumerate(biases):
            ct = Ciphertext((accs[o, 0], accs[o, 1]), scale, lvl)
            if bias != 0.0:
                ct = self.add_scalar_raw(ct, bias)
            outs.append(ct)
        return outs

    def weighted_sum_raw(self, cts, weights, bias: float = 0.0) -> Ciphertext:
        return self.weighted_sum_many_raw(cts, [weights], [bias])[0]

    def rescale_many(self, cts: list) -> list:
        """Rescale several same-level ciphertexts with one batched NTT pass."""
        if not cts:
            return []
        lvl = cts[0].level
        if lvl < 1:
            raise LevelExhaustedError("rescale at level 0")
        comps = [c for ct in cts for c in ct.c]
        rows_out = self.ctx.active_rows(lvl - 1)
        out = self._drop_rows(comps, lvl, rows_out, self.ctx.drop_inv[lvl])
        drop_q = int(self.ctx.moduli[lvl])
        res = []
        off = 0
        for ct in cts:
            nc = len(ct.c)
            res.append(
                Ciphertext(tuple(out[off + j] for j in range(nc)),
                           ct.scale / drop_q, lvl - 1)
            )
            off += nc
        return res

    def mul_pt_raw(self, a: Ciphertext, p: Plaintext) -> Ciphertext:
        if p.is_zero:
            raise TransparentCiphertextError(
                "multiplying by an exactly-zero plaintext; clamp parameters first"
            )
        if a.level != p.level:
            raise LevelMismatchError("plaintext not encoded at the ciphertext level")
        mods, pinv = self._row_consts(a.level)
        comps = tuple(mul_mod(x, p.data, mods, pinv) for x in a.c)
        return Ciphertext(comps, a.scale * p.scale, a.level)

    def mul_ct_raw(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        mods, pinv = self._row_consts(a.level)
        d0 = mul_mod(a.c[0], b.c[0], mods, pinv)
        d1 = add_mod(
            mul_mod(a.c[0], b.c[1], mods, pinv),
            mul_mod(a.c[1], b.c[0], mods, pinv),
            mods,
        )
        d2 = mul_mod(a.c[1], b.c[1], mods, pinv)
        return Ciphertext((d0, d1, d2), a.scale * b.scale, a.level)

    def square_raw(self, a: Ciphertext) -> Ciphertext:
        mods, pinv = self._row_consts(a.level)
        d0 = mul_mod(a.c[0], a.c[0], mods, pinv)
        cross = mul_mod(a.c[0], a.c[1], mods, pinv)
        d1 = add_mod(cross, cross, mods)
        d2 = mul_mod(a.c[1], a.c[1], mods, pinv)
        return Ciphertext((d0, d1, d2), a.scale * a.scale, a.level)

    # ------------------------------------------------- relinearize / rescale

    def relinearize(self, ct: Ciphertext, keys: KeySet) -> Ciphertext:
        """Fold the s**2 component back onto (c0, c1); scale and level unchanged."""
        if len(ct.c) == 2:
            return ct
        self._check_keys(keys)
        ctx = self.ctx
        lvl = ct.level
        rows = ctx.active_rows(lvl)
        d = lvl + 1

        d2_coeff = ctx.plan.inv(ct.c[2], rows)  # [d, n], residues < q_i
        targets = np.append(rows, ctx.special_row)
        tmods = ctx.moduli[targets]
        n_t = len(targets)
        stack = d2_coeff[:, None, :] % tmods[None, :, None]
        # digit i against its own modulus is the original NTT row; transform
        # only the off-diagonal (digit, target) pairs
        if lvl not in self._relin_idx:
            self._relin_idx[lvl] = (
                np.array([i * n_t + t for i in range(d) for t in range(n_t) if t != i]),
                np.array([targets[t] for i in range(d) for t in range(n_t) if t != i]),
            )
        flat_idx, flat_mods = self._relin_idx[lvl]
        digits = np.empty((d, n_t, ct.c[2].shape[1]), dtype=np.uint64)
        flat_view = digits.reshape(d * n_t, -1)
        flat_view[flat_idx] = ctx.plan.fwd(
            stack.reshape(d * n_t, -1)[flat_idx], flat_mods
        )
        for i in range(d):
            digits[i, i] = ct.c[2][i]

        pp = tmods[:, None]
        ppinv = ctx.plan.p_inv[targets][:, None]
        ks0 = mul_mod(digits, keys.relin_b[:d][:, targets, :], pp[None], ppinv[None])
        ks1 = mul_mod(digits, keys.relin_a[:d][:, targets, :], pp[None], ppinv[None])
        ks0 = reduce_mod(ks0.sum(axis=0, dtype=np.uint64), pp, ppinv)
        ks1 = reduce_mod(ks1.sum(axis=0, dtype=np.uint64), pp, ppinv)

        folded0, folded1 = self._drop_special([ks0, ks1], lvl)
        mods, _ = self._row_consts(lvl)
        c0 = add_mod(ct.c[0], folded0, mods)
        c1 = add_mod(ct.c[1], folded1, mods)
        return Ciphertext((c0, c1), ct.scale, lvl)

    def _drop_rows(self, stacks, drop_row: int, out_rows: np.ndarray,
                   inv_per_row: np.ndarray):
        """Shared tail of rescale and key-switch mod-down: for each stacked
        array, lift the dropped row's coefficients and fold (x - lift) * inv
        into the remaining rows. Batches every NTT across the stacks."""
        ctx = self.ctx
        n_stacks = len(stacks)
        drop_q = int(ctx.moduli[drop_row])
        k_out = len(out_rows)
        last = ctx.plan.inv(
            np.stack([s[-1] for s in stacks]), [drop_row] * n_stacks
        ).astype(np.int64)
        centered = np.where(last > drop_q // 2, last - drop_q, last)
        out_mods = ctx.moduli[out_rows].astype(np.int64)
        red = np.mod(centered[:, None, :], out_mods[None, :, None]).astype(np.uint64)
        red_ntt = ctx.plan.fwd(
            red.reshape(n_stacks * k_out, -1), np.tile(out_rows, n_stacks)
        ).reshape(n_stacks, k_out, -1)
        mods = ctx.moduli[out_rows][None, :, None]
        pinv = ctx.plan.p_inv[out_rows][None, :, None]
        stacked = np.stack([s[:-1] for s in stacks])
        diff = sub_mod(stacked, red_ntt, mods)
        return mul_mod(diff, inv_per_row[None, :, None], mods, pinv)

    def _drop_special(self, arrs: list, level: int) -> list:
        """Exact division by the key-switching prime: (x - [x]_P) / P mod q_j."""
        rows = self.ctx.active_rows(level)
        out = self._drop_rows(arrs, self.ctx.special_row, rows, self.ctx.special_inv[rows])
        return [out[i] for i in range(len(arrs))]

    def rescale(self, ct: Ciphertext) -> Ciphertext:
        """Divide the scale by the last active prime; level drops by one."""
        if ct.level < 1:
            raise LevelExhaustedError("rescale at level 0")
        ctx = self.ctx
        lvl = ct.level
        rows_out = ctx.active_rows(lvl - 1)
        out = self._drop_rows(list(ct.c), lvl, rows_out, ctx.drop_inv[lvl])
        comps = tuple(out[i] for i in range(len(ct.c)))
        return Ciphertext(comps, ct.scale / int(ctx.moduli[lvl]), lvl - 1)

    # ------------------------------------------------------- exposed multiply

    def mul_ct(self, a: Ciphertext, b: Ciphertext, keys: KeySet) -> Ciphertext:
        if a.level < 1:
            raise LevelExhaustedError("ciphertext multiply needs one level in reserve")
        raw = self.mul_ct_raw(a, b)
        return self.rescale(self.relinearize(raw, keys))

    def mul_pt(self, a: Ciphertext, p: Plaintext) -> Ciphertext:
        if a.level < 1:
            raise LevelExhaustedError("plaintext multiply needs one level in reserve")
        if not _same_scale(p.scale, self.params.scale):
            raise ScaleMismatchError("plaintext operand must carry the base scale")
        return self.rescale(self.mul_pt_raw(a, p))
