"""CKKS parameter sets and the named presets used by the shipped models.

A parameter set is a ring degree, a modulus chain of NTT-friendly primes
(one wide base prime plus `level` rescaling primes near 2**scale_bits),
and a single wide key-switching prime kept outside the log-Q accounting.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ParameterError
from .ntt import NttPlan, find_ntt_primes

BASE_PRIME_BITS = 50
SPECIAL_PRIME_BITS = 50

# name -> (levels, log_q_bits); all at scale 2**30
PRESET_TABLE = {
    "mnist-baseline": (5, 200),
    "mnist-deg4": (7, 260),
    "cifar-baseline": (8, 290),
    "cifar-deg4": (11, 380),
}

PAPER_RING_DEGREE = 1 << 14
TEST_RING_DEGREE = 1 << 13


@dataclass(frozen=True)
class CkksParams:
    """Ring degree, modulus chain, scale and level budget.

    `modulus_chain[0]` is the base prime that survives to level 0;
    `modulus_chain[1:]` are the `level` rescaling primes. The key-switching
    prime is separate and does not count toward log Q.
    """

    ring_degree: int
    modulus_chain: tuple[int, ...]
    special_prime: int
    scale_bits: int
    level: int
    security_profile: str
    preset: str = ""

    def __post_init__(self):
        n = self.ring_degree
        if n & (n - 1) or n < 16:
            raise ParameterError("ring_degree must be a power of two >= 16")
        if self.security_profile not in ("paper", "test-insecure"):
            raise ParameterError("security_profile must be 'paper' or 'test-insecure'")
        if self.security_profile == "paper" and n != PAPER_RING_DEGREE:
            raise ParameterError("the 'paper' profile requires ring degree 2**14")
        if len(self.modulus_chain) != self.level + 1:
            raise ParameterError("modulus chain must hold level+1 primes")
        for q in (*self.modulus_chain, self.special_prime):
            if q % (2 * n) != 1:
                raise ParameterError(f"prime {q} is not NTT-friendly for 2n={2 * n}")
        if len(set(self.modulus_chain) | {self.special_prime}) != self.level + 2:
            raise ParameterError("modulus chain primes must be distinct")

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def scale(self) -> float:
        return float(1 << self.scale_bits)

    @property
    def log_q(self) -> float:
        return sum(math.log2(q) for q in self.modulus_chain)

    def canonical_json(self) -> str:
        return json.dumps(
            {
                "ring_degree": self.ring_degree,
                "modulus_chain": list(self.modulus_chain),
                "special_prime": self.special_prime,
                "scale_bits": self.scale_bits,
                "level": self.level,
                "security_profile": self.security_profile,
                "preset": self.preset,
            },
            sort_keys=True,
        )

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode()).digest()

    @staticmethod
    def from_json(text: str) -> "CkksParams":
        d = json.loads(text)
        return CkksParams(
            ring_degree=d["ring_degree"],
            modulus_chain=tuple(d["modulus_chain"]),
            special_prime=d["special_prime"],
            scale_bits=d["scale_bits"],
            level=d["level"],
            security_profile=d["security_profile"],
            preset=d.get("preset", ""),
        )


def make_params(
    ring_degree: int,
    level: int,
    scale_bits: int = 30,
    base_bits: int = BASE_PRIME_BITS,
    security_profile: str = "test-insecure",
    preset: str = "",
) -> CkksParams:
    two_n = 2 * ring_degree
    base = find_ntt_primes(base_bits, 1, two_n)
    special = find_ntt_primes(SPECIAL_PRIME_BITS, 1, two_n, exclude=base)[0]
    rescale = find_ntt_primes(scale_bits, level, two_n, exclude=[*base, special])
    return CkksParams(
        ring_degree=ring_degree,
        modulus_chain=(base[0], *rescale),
        special_prime=special,
        scale_bits=scale_bits,
        level=level,
        security_profile=security_profile,
        preset=preset,
    )


def preset_params(name: str, profile: str = "paper") -> CkksParams:
    """Named parameter sets; `profile` picks N=2**14 (paper) or 2**13 (test)."""
    if name not in PRESET_TABLE:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESET_TABLE)}")
    level, log_q = PRESET_TABLE[name]
    n = PAPER_RING_DEGREE if profile == "paper" else TEST_RING_DEGREE
    params = make_params(n, level, scale_bits=30, security_profile=profile, preset=name)
    if abs(params.log_q - log_q) > 5:
        raise ParameterError(f"chain for {name} misses its log-Q target: {params.log_q:.1f}")
    return params


class CkksContext:
    """Precomputed tables shared by every operation under one parameter set."""

    def __init__(self, params: CkksParams):
        self.params = params
        n = params.ring_degree
        chain = list(params.modulus_chain)
        self.moduli = np.array(chain + [params.special_prime], dtype=np.uint64)
        self.special_row = len(chain)
        self.plan = NttPlan(n, chain + [params.special_prime])

        k = len(chain)
        P = params.special_prime
        # q_last^{-1} mod q_j for every rescale step, and P^{-1} mod q_j
        self.drop_inv = [
            np.array([pow(chain[l], q - 2, q) for q in chain[:l]], dtype=np.uint64)
            for l in range(k)
        ]
        self.special_inv = np.array([pow(P, q - 2, q) for q in chain], dtype=np.uint64)

        # decomposition constants: lam_i = (Q_top/q_i) * [(Q_top/q_i)^{-1} mod q_i],
        # congruent to 1 mod q_i and 0 mod every other chain prime.
        q_top = math.prod(chain)
        self.lam_mod = np.zeros((k, k + 1), dtype=np.uint64)
        self.p_lam_mod = np.zeros((k, k + 1), dtype=np.uint64)
        for i, qi in enumerate(chain):
            hat = q_top // qi
            lam = hat * pow(hat % qi, qi - 2, qi)
            for j, m in enumerate(chain + [P]):
                self.lam_mod[i, j] = lam % m
                self.p_lam_mod[i, j] = (P % m) * (lam % m) % m

        # level -> modulus products, for overflow checks and exact decoding
        self.q_products = [math.prod(chain[: l + 1]) for l in range(k)]

        # slot <-> root maps for the canonical embedding
        m = 2 * n
        g = np.empty(n // 2, dtype=np.int64)
        e = 1
        for j in range(n // 2):
            g[j] = e
            e = (e * 5) % m
        self.slot_exponents = g
        self.conj_exponents = (m - g) % m

    def active_rows(self, level: int) -> np.ndarray:
        return np.arange(level + 1)


@lru_cache(maxsize=8)
def _cached_context(canonical: str) -> CkksContext:
    return CkksContext(CkksParams.from_json(canonical))


def get_context(params: CkksParams) -> CkksContext:
    return _cached_context(params.canonical_json())
