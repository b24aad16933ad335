"""Vectorized modular arithmetic and negacyclic NTT over stacks of prime moduli.

All residue polynomials live in uint64 arrays of shape [..., n] with one
modulus per row. Primes up to 50 bits are supported: products are reduced
with a float-assisted Barrett step (the float64 quotient estimate is off by
at most 1 for p < 2**51, which two conditional corrections absorb). The
butterfly loops carry precomputed w/p float tables so each stage costs one
float multiply for the quotient estimate.
"""

from __future__ import annotations

import numpy as np

MAX_PRIME_BITS = 50

def _correct(r: np.ndarray, p) -> np.ndarray:
    """Fold a quotient-estimate error of +-1 back into [0, p).

    Works on wrapped uint64 values: whichever of r, r+p, r-p lands in
    [0, p) is unsigned-smallest, so two minimum passes settle it.
    """
    np.minimum(r, r + p, out=r)
    np.minimum(r, r - p, out=r)
    return r


def mul_mod(a, b, p, p_inv):
    """(a * b) % p elementwise; a, b uint64 < p, p uint64 < 2**51, p_inv = 1/p float."""
    q = a.astype(np.float64)
    q *= b
    q *= p_inv
    q = q.astype(np.uint64)
    q *= p
    r = a * b
    r -= q
    return _correct(r, p)


def mul_mod_shoup(a, b, b_over_p, p):
    """(a * b) % p with the quotient table b_over_p = b/p precomputed in float."""
    q = a.astype(np.float64)
    q *= b_over_p
    q = q.astype(np.uint64)
    q *= p
    r = a * b
    r -= q
    return _correct(r, p)


def reduce_mod(acc, p, p_inv):
    """acc % p for accumulated sums below 2**62 (float-assisted, in place)."""
    q = acc.astype(np.float64)
    q *= p_inv
    q = q.astype(np.uint64)
    q *= p
    acc -= q
    return _correct(acc, p)


def add_mod(a, b, p):
    s = a + b
    np.minimum(s, s - p, out=s)
    return s


def sub_mod(a, b, p):
    d = a - b
    np.minimum(d, d + p, out=d)
    return d


def neg_mod(a, p):
    return np.where(a == 0, a, p - a)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, valid for all n < 3.3e24."""
    if n < 2:
        return False
    for sp in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % sp == 0:
            return n == sp
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(bits: int, count: int, two_n: int, exclude=()) -> list[int]:
    """`count` primes of the given bit length with q = 1 (mod two_n).

    Candidates alternate above/below 2**bits by distance so the chain's
    product stays close to 2**(bits*count); excluded primes are skipped.
    """
    base = 1 << bits
    found: list[int] = []
    k = 0
    excl = set(exclude)
    while len(found) < count:
        k += 1
        for cand in (base + 1 + k * two_n, base + 1 - k * two_n):
            if cand.bit_length() not in (bits, bits + 1):
                continue
            if cand in excl or cand in found:
                continue
            if is_prime(cand):
                found.append(cand)
                if len(found) == count:
                    break
    return found


def _primitive_2n_root(n: int, p: int) -> int:
    """psi with psi**(2n) = 1 and psi**n = -1 mod p; requires p = 1 (mod 2n)."""
    assert (p - 1) % (2 * n) == 0
    e = (p - 1) // (2 * n)
    for g in range(2, p):
        psi = pow(g, e, p)
        if pow(psi, n, p) == p - 1:
            return psi
    raise ValueError(f"no 2n-th root of unity mod {p}")


def _bit_reverse(x: int, bits: int) -> int:
    y = 0
    for _ in range(bits):
        y = (y << 1) | (x & 1)
        x >>= 1
    return y


class NttPlan:
    """Precomputed twiddle tables for a fixed ring degree over a list of primes.

    Transforms act on arrays of shape [rows, n]; `mod_idx` selects which
    prime each row reduces against. Forward output is in bit-scrambled
    order, which elementwise ring operations never observe.
    """

    def __init__(self, n: int, primes: list[int]):
        if n & (n - 1) or n < 4:
            raise ValueError("ring degree must be a power of two >= 4")
        for p in primes:
            if p.bit_length() > MAX_PRIME_BITS + 1:
                raise ValueError(f"prime {p} exceeds {MAX_PRIME_BITS}-bit limit")
        self.n = n
        self.logn = n.bit_length() - 1
        self.primes = np.array(primes, dtype=np.uint64)
        self.p_inv = 1.0 / self.primes.astype(np.float64)
        self.n_inv = np.array([pow(n, p - 2, p) for p in primes], dtype=np.uint64)

        k = len(primes)
        self.psi = np.empty((k, n), dtype=np.uint64)
        self.ipsi = np.empty((k, n), dtype=np.uint64)
        rev = [_bit_reverse(i, self.logn) for i in range(n)]
        for r, p in enumerate(primes):
            psi = _primitive_2n_root(n, p)
            ipsi = pow(psi, p - 2, p)
            pw, ipw = 1, 1
            fwd, inv = [0] * n, [0] * n
            for i in range(n):
                fwd[i], inv[i] = pw, ipw
                pw = pw * psi % p
                ipw = ipw * ipsi % p
            self.psi[r] = [fwd[j] for j in rev]
            self.ipsi[r] = [inv[j] for j in rev]
        # quotient-estimate tables: w/p per twiddle
        self.psi_f = self.psi.astype(np.float64) * self.p_inv[:, None]
        self.ipsi_f = self.ipsi.astype(np.float64) * self.p_inv[:, None]
        self.ninv_f = self.n_inv.astype(np.float64) * self.p_inv

    def fwd(self, a, mod_idx):
        """Negacyclic NTT of each row of a [rows, n] against primes[mod_idx]."""
        idx = np.asarray(mod_idx, dtype=np.intp)
        a = np.ascontiguousarray(a, dtype=np.uint64).copy()
        rows, n = a.shape
        pp = self.primes[idx].reshape(rows, 1, 1)
        t, m = n, 1
        while m < n:
            t >>= 1
            view = a.reshape(rows, m, 2, t)
            w = self.psi[idx, m:2 * m][:, :, None]
            w_f = self.psi_f[idx, m:2 * m][:, :, None]
            v = mul_mod_shoup(view[:, :, 1, :], w, w_f, pp)
            s = add_mod(view[:, :, 0, :], v, pp)
            d = sub_mod(view[:, :, 0, :], v, pp)
            view[:, :, 0, :] = s
            view[:, :, 1, :] = d
            m <<= 1
        return a

    def inv(self, a, mod_idx):
        """Inverse of fwd; returns coefficient-form rows."""
        idx = np.asarray(mod_idx, dtype=np.intp)
        a = np.ascontiguousarray(a, dtype=np.uint64).copy()
        rows, n = a.shape
        pp = self.primes[idx].reshape(rows, 1, 1)
        t, m = 1, n
        while m > 1:
            h = m >> 1
            view = a.reshape(rows, h, 2, t)
            w = self.ipsi[idx, h:2 * h][:, :, None]
            w_f = self.ipsi_f[idx, h:2 * h][:, :, None]
            s = add_mod(view[:, :, 0, :], view[:, :, 1, :], pp)
            d = sub_mod(view[:, :, 0, :], view[:, :, 1, :], pp)
            view[:, :, 0, :] = s
            view[:, :, 1, :] = mul_mod_shoup(d, w, w_f, pp)
            t <<= 1
            m = h
        p_row = self.primes[idx][:, None]
        return mul_mod_shoup(a, self.n_inv[idx][:, None], self.ninv_f[idx][:, None], p_row)
