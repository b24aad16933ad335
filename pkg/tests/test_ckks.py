import math

import numpy as np
import pytest

from hecnn.ckks.params import CkksParams, make_params, preset_params
from hecnn.ckks.scheme import CkksScheme, NOISE_STDDEV
from hecnn.ckks.serialize import (
    ciphertext_from_bytes,
    ciphertext_to_bytes,
    keyset_from_bytes,
    keyset_to_bytes,
)
from hecnn.errors import (
    KeyMismatchError,
    LevelExhaustedError,
    LevelMismatchError,
    ParameterError,
    ScaleMismatchError,
    TransparentCiphertextError,
)


def enc(scheme, keys, values, rng=0, level=None):
    pt = scheme.encode(values, level=level)
    return scheme.encrypt(keys, pt, rng=rng)


def dec(scheme, keys, ct):
    return scheme.decode(scheme.decrypt(keys, ct))


# ------------------------------------------------------------------- params


def test_preset_parameters_match_published_budgets():
    targets = {
        "mnist-baseline": (5, 200),
        "mnist-deg4": (7, 260),
        "cifar-baseline": (8, 290),
        "cifar-deg4": (11, 380),
    }
    for name, (level, log_q) in targets.items():
        p = preset_params(name, profile="paper")
        assert p.ring_degree == 1 << 14
        assert p.scale_bits == 30
        assert p.level == level
        assert p.slot_count == 8192
        assert abs(p.log_q - log_q) <= 5
        assert len(p.modulus_chain) == level + 1
        for q in (*p.modulus_chain, p.special_prime):
            assert q % (2 * p.ring_degree) == 1


def test_preset_unknown_name():
    with pytest.raises(ParameterError):
        preset_params("nonexistent")


def test_paper_profile_requires_full_ring():
    p = preset_params("mnist-baseline", profile="test-insecure")
    assert p.ring_degree == 1 << 13
    with pytest.raises(ParameterError):
        CkksParams(
            ring_degree=1 << 12,
            modulus_chain=p.modulus_chain,
            special_prime=p.special_prime,
            scale_bits=30,
            level=p.level,
            security_profile="paper",
        )


# ---------------------------------------------------------------- roundtrips


def test_keygen_zero_roundtrip(tiny_scheme, tiny_keys, tiny_params):
    # fresh-encryption noise at the 30-bit scale floors around 1e-6..1e-5
    # depending on ring degree; 1e-4 is the binding precision contract
    zeros = np.zeros(tiny_params.slot_count)
    out = dec(tiny_scheme, tiny_keys, enc(tiny_scheme, tiny_keys, zeros))
    assert np.max(np.abs(out)) < 1e-4


def test_keygen_deterministic(tiny_scheme):
    k1 = tiny_scheme.keygen(42)
    k2 = tiny_scheme.keygen(42)
    assert np.array_equal(k1.secret, k2.secret)
    assert np.array_equal(k1.public_b, k2.public_b)
    assert np.array_equal(k1.relin_b, k2.relin_b)
    k3 = tiny_scheme.keygen(43)
    assert not np.array_equal(k1.public_b, k3.public_b)


def test_encrypt_deterministic_given_seed(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-1, 1, 64)
    pt = tiny_scheme.encode(v)
    c1 = tiny_scheme.encrypt(tiny_keys, pt, rng=7)
    c2 = tiny_scheme.encrypt(tiny_keys, pt, rng=7)
    assert all(np.array_equal(a, b) for a, b in zip(c1.c, c2.c))


def test_encode_decode_contracts(tiny_scheme, tiny_params, rng):
    zeros = tiny_scheme.decode(tiny_scheme.encode(np.zeros(8)))
    assert np.max(np.abs(zeros)) < 1e-7

    v = rng.uniform(-1, 1, tiny_params.slot_count)
    out = tiny_scheme.decode(tiny_scheme.encode(v))
    assert np.max(np.abs(out - v)) < 1e-4

    full = np.full(tiny_params.slot_count, 3.14159)
    out = tiny_scheme.decode(tiny_scheme.encode(full))
    assert np.max(np.abs(out - 3.14159)) < 1e-4

    big = rng.uniform(-100, 100, tiny_params.slot_count)
    out = tiny_scheme.decode(tiny_scheme.encode(big))
    assert np.max(np.abs(out - big)) <= 2.0 ** -(tiny_params.scale_bits - 12)


def test_encrypt_decrypt_contract(tiny_scheme, tiny_keys, tiny_params, rng):
    v = rng.uniform(-1, 1, tiny_params.slot_count)
    out = dec(tiny_scheme, tiny_keys, enc(tiny_scheme, tiny_keys, v))
    assert np.max(np.abs(out - v)) < 1e-4


def test_wrong_key_gives_garbage(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-1, 1, 32)
    ct = enc(tiny_scheme, tiny_keys, v)
    other = tiny_scheme.keygen(999)
    out = dec(tiny_scheme, other, ct)[: len(v)]
    assert np.max(np.abs(out - v)) > 1.0


def test_encode_overflow_guard(tiny_scheme, tiny_params):
    from hecnn.errors import EncodingOverflowError

    with pytest.raises(EncodingOverflowError):
        tiny_scheme.encode(np.array([1e60]), level=0)


# ---------------------------------------------------------------- arithmetic


def test_addition(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-2, 2, 50)
    w = rng.uniform(-2, 2, 50)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    b = enc(tiny_scheme, tiny_keys, -v, rng=2)
    out = dec(tiny_scheme, tiny_keys, tiny_scheme.add_ct(a, b))[:50]
    assert np.max(np.abs(out)) < 1e-4

    s = tiny_scheme.add_ct(a, enc(tiny_scheme, tiny_keys, w, rng=3))
    assert s.level == a.level  # addition consumes nothing
    out = dec(tiny_scheme, tiny_keys, s)[:50]
    assert np.max(np.abs(out - (v + w))) < 1e-4

    pt = tiny_scheme.encode(w, scale=a.scale, level=a.level)
    out = dec(tiny_scheme, tiny_keys, tiny_scheme.add_pt(a, pt))[:50]
    assert np.max(np.abs(out - (v + w))) < 1e-4


def test_multiplication(tiny_scheme, tiny_keys, tiny_params, rng):
    v = rng.uniform(-3, 3, 40)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    ones = enc(tiny_scheme, tiny_keys, np.ones(40), rng=2)
    prod = tiny_scheme.mul_ct(a, ones, tiny_keys)
    assert prod.level == a.level - 1
    out = dec(tiny_scheme, tiny_keys, prod)[:40]
    assert np.max(np.abs(out - v)) < 1e-3

    sq = tiny_scheme.mul_ct(a, a, tiny_keys)
    out = dec(tiny_scheme, tiny_keys, sq)[:40]
    assert np.max(np.abs(out - v * v)) < 1e-3


def test_level_exhaustion(tiny_scheme, tiny_keys, tiny_params):
    x = enc(tiny_scheme, tiny_keys, np.full(8, 1.01), rng=1)
    for _ in range(tiny_params.level):
        x = tiny_scheme.mul_ct(x, x, tiny_keys)
    assert x.level == 0
    with pytest.raises(LevelExhaustedError):
        tiny_scheme.mul_ct(x, x, tiny_keys)
    with pytest.raises(LevelExhaustedError):
        tiny_scheme.rescale(x)


def test_plaintext_multiplication(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-2, 2, 30)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)

    ones = tiny_scheme.encode(np.ones(30), level=a.level)
    out_ct = tiny_scheme.mul_pt(a, ones)
    assert out_ct.level == a.level - 1
    out = dec(tiny_scheme, tiny_keys, out_ct)[:30]
    assert np.max(np.abs(out - v)) < 1e-3

    c = rng.uniform(-2, 2, 30)
    out = dec(tiny_scheme, tiny_keys, tiny_scheme.mul_pt(a, tiny_scheme.encode(c, level=a.level)))[:30]
    assert np.max(np.abs(out - c * v)) < 1e-3


def test_clamped_small_plaintext_multiplies(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-2, 2, 30)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    clamped = tiny_scheme.encode(np.full(30, 1e-7), level=a.level)
    out = dec(tiny_scheme, tiny_keys, tiny_scheme.mul_pt(a, clamped))[:30]
    assert np.max(np.abs(out - 1e-7 * v)) < 1e-4


def test_zero_plaintext_multiplication_refused(tiny_scheme, tiny_keys):
    a = enc(tiny_scheme, tiny_keys, np.ones(8), rng=1)
    zero_pt = tiny_scheme.encode(np.zeros(8), level=a.level)
    with pytest.raises(TransparentCiphertextError):
        tiny_scheme.mul_pt(a, zero_pt)
    with pytest.raises(TransparentCiphertextError):
        tiny_scheme.mul_scalar_raw(a, 0.0, tiny_scheme.params.scale)


def test_negate_and_level_of(tiny_scheme, tiny_keys, tiny_params, rng):
    v = rng.uniform(-2, 2, 16)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    assert tiny_scheme.level_of(a) == tiny_params.level
    out = dec(tiny_scheme, tiny_keys, tiny_scheme.negate(a))[:16]
    assert np.max(np.abs(out + v)) < 1e-4


def test_rescale_restores_base_scale(tiny_scheme, tiny_keys, tiny_params, rng):
    v = rng.uniform(-1, 1, 16)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    prod = tiny_scheme.mul_ct(a, a, tiny_keys)
    assert abs(math.log2(prod.scale) - tiny_params.scale_bits) < 1.0


def test_mismatched_operands_rejected(tiny_scheme, tiny_keys, rng):
    v = rng.uniform(-1, 1, 8)
    a = enc(tiny_scheme, tiny_keys, v, rng=1)
    b = tiny_scheme.mul_ct(a, a, tiny_keys)
    with pytest.raises(LevelMismatchError):
        tiny_scheme.add_ct(a, b)
    with pytest.raises(ScaleMismatchError):
        tiny_scheme.add_pt(a, tiny_scheme.encode(v, scale=2.0 * a.scale, level=a.level))
    other = CkksScheme(make_params(ring_degree=256, level=3))
    with pytest.raises(KeyMismatchError):
        other.decrypt(tiny_keys, enc(other, other.keygen(1), v, rng=2))


def test_mixed_sequence_homomorphism(tiny_scheme, tiny_keys, tiny_params, rng):
    """Random add/mul trees of depth <= L agree with plaintext within 1e-2."""
    slots = 64
    for trial in range(5):
        trng = np.random.default_rng(trial)
        vals = [trng.uniform(-1.5, 1.5, slots) for _ in range(4)]
        cts = [enc(tiny_scheme, tiny_keys, v, rng=100 + i) for i, v in enumerate(vals)]
        refs = list(vals)
        for step in range(tiny_params.level):
            i, j = trng.integers(0, len(cts), 2)
            if cts[i].level != cts[j].level:
                continue
            if trng.uniform() < 0.5 and cts[i].level >= 1:
                cts.append(tiny_scheme.mul_ct(cts[i], cts[j], tiny_keys))
                refs.append(refs[i] * refs[j])
            else:
                cts.append(tiny_scheme.add_ct(cts[i], cts[j]))
                refs.append(refs[i] + refs[j])
        for ct, ref in zip(cts, refs):
            out = dec(tiny_scheme, tiny_keys, ct)[:slots]
            assert np.max(np.abs(out - ref)) < 1e-2


def test_noise_constant_is_sane():
    assert 3.0 < NOISE_STDDEV < 4.0


# ------------------------------------------------------------- serialization


def test_keyset_serialization_roundtrip(tiny_scheme, tiny_keys, tiny_params, rng):
    blob = keyset_to_bytes(tiny_keys)
    keys2 = keyset_from_bytes(blob, tiny_params)
    v = rng.uniform(-1, 1, 16)
    out = dec(tiny_scheme, keys2, enc(tiny_scheme, tiny_keys, v, rng=5))[:16]
    assert np.max(np.abs(out - v)) < 1e-4


def test_ciphertext_serialization_roundtrip(tiny_scheme, tiny_keys, tiny_params, rng):
    v = rng.uniform(-1, 1, 16)
    ct = enc(tiny_scheme, tiny_keys, v, rng=6)
    ct2 = ciphertext_from_bytes(ciphertext_to_bytes(ct, tiny_params), tiny_params)
    assert ct2.level == ct.level and ct2.scale == ct.scale
    out = dec(tiny_scheme, tiny_keys, ct2)[:16]
    assert np.max(np.abs(out - v)) < 1e-4


def test_serialization_rejects_foreign_params(tiny_keys, tiny_params):
    other = make_params(ring_degree=256, level=3)
    blob = keyset_to_bytes(tiny_keys)
    with pytest.raises(KeyMismatchError):
        keyset_from_bytes(blob, other)


# ------------------------------------------------- reduced-ring preset checks


def test_mnist_preset_usable_for_full_depth(mnist_test_params, mnist_test_keys, rng):
    scheme = CkksScheme(mnist_test_params)
    v = rng.uniform(-1, 1, 256)
    ct = enc(scheme, mnist_test_keys, v, rng=1)
    out = dec(scheme, mnist_test_keys, ct)[:256]
    assert np.max(np.abs(out - v)) < 1e-4
    prod = scheme.mul_ct(ct, ct, mnist_test_keys)
    out = dec(scheme, mnist_test_keys, prod)[:256]
    assert np.max(np.abs(out - v * v)) < 1e-3
