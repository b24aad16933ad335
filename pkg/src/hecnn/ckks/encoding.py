"""Canonical-embedding encoding between real slot vectors and ring elements.

Slot j of a plaintext is the polynomial evaluated at zeta**g_j, where zeta
is a primitive 2n-th complex root of unity and g_j runs over the powers of
5 mod 2n; the conjugate roots carry the mirrored values, which keeps every
coefficient real. Both directions go through one length-2n FFT.
"""

from __future__ import annotations

import numpy as np

from ..errors import EncodingOverflowError
from .params import CkksContext

_INT64_SAFE = 1 << 62


def embed_real(ctx: CkksContext, values: np.ndarray) -> np.ndarray:
    """Real polynomial coefficients whose slots equal `values` (unscaled)."""
    n = ctx.params.ring_degree
    slots = n // 2
    z = np.zeros(slots, dtype=np.complex128)
    z[: len(values)] = values
    spectrum = np.zeros(2 * n, dtype=np.complex128)
    spectrum[ctx.slot_exponents] = z
    spectrum[ctx.conj_exponents] = np.conj(z)
    return np.fft.fft(spectrum)[:n].real / n


def extract_real(ctx: CkksContext, coeffs: np.ndarray) -> np.ndarray:
    """Slot values of a real-coefficient polynomial (inverse of embed_real)."""
    n = ctx.params.ring_degree
    evals = np.fft.fft(coeffs, 2 * n)
    return np.conj(evals[ctx.slot_exponents]).real


def round_to_int_coeffs(coeffs: np.ndarray, scale: float):
    """coeffs*scale rounded to integers; exact int64 where it fits, else bigints."""
    scaled = coeffs * scale
    peak = np.max(np.abs(scaled)) if scaled.size else 0.0
    if peak < _INT64_SAFE:
        return np.rint(scaled).astype(np.int64)
    return np.array([int(round(v)) for v in scaled], dtype=object)


def int_coeffs_to_residues(ctx: CkksContext, ints, level: int) -> np.ndarray:
    """Reduce signed integer coefficients modulo each active chain prime."""
    mods = ctx.moduli[: level + 1]
    if ints.dtype == np.int64:
        return np.mod(ints[None, :], mods.astype(np.int64)[:, None]).astype(np.uint64)
    out = np.empty((level + 1, len(ints)), dtype=np.uint64)
    for r, q in enumerate(mods):
        out[r] = np.array([v % int(q) for v in ints], dtype=np.uint64)
    return out


def check_headroom(ctx: CkksContext, values: np.ndarray, scale: float, level: int) -> None:
    peak = float(np.max(np.abs(values))) if np.size(values) else 0.0
    budget = ctx.q_products[level]
    if peak * scale * 4 >= budget:
        raise EncodingOverflowError(
            f"values of magnitude {peak:g} at scale {scale:g} exceed the "
            f"level-{level} modulus headroom"
        )


def lift_centered(ctx: CkksContext, residues: np.ndarray, level: int) -> np.ndarray:
    """Exact CRT lift of residue rows to centered integers mod the active product."""
    if level == 0:
        q = int(ctx.moduli[0])
        x = residues[0].astype(np.int64)
        return np.where(x > q // 2, x - q, x)
    big_q = ctx.q_products[level]
    acc = np.zeros(residues.shape[1], dtype=object)
    for i in range(level + 1):
        qi = int(ctx.moduli[i])
        hat = big_q // qi
        inv = pow(hat % qi, qi - 2, qi)
        part = (residues[i].astype(object) * inv) % qi
        acc += part * hat
    acc %= big_q
    half = big_q // 2
    return np.where(acc > half, acc - big_q, acc)
