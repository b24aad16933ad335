"""Versioned little-endian binary serialization for keys and ciphertexts.

Every blob starts with a 4-byte magic, a u16 format version, and the
32-byte SHA-256 digest of the canonical parameter JSON, so material from a
different parameter set is rejected at load time.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import KeyMismatchError, ModelFormatError
from .params import CkksParams
from .scheme import Ciphertext, KeySet

FORMAT_VERSION = 1
KEY_MAGIC = b"HEKS"
CT_MAGIC = b"HECT"


def _header(magic: bytes, params: CkksParams) -> bytes:
    return magic + struct.pack("<H", FORMAT_VERSION) + params.digest()


def _check_header(raw: bytes, magic: bytes, params: CkksParams, what: str) -> int:
    if len(raw) < 38 or raw[:4] != magic:
        raise ModelFormatError(f"not a {what} blob (bad magic)")
    (version,) = struct.unpack("<H", raw[4:6])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported {what} format version {version}")
    if raw[6:38] != params.digest():
        raise KeyMismatchError(f"{what} was serialized under different parameters")
    return 38


def _pack_array(arr: np.ndarray) -> bytes:
    shape = arr.shape
    head = struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
    return head + arr.astype("<u8").tobytes()


def _unpack_array(raw: bytes, off: int):
    (ndim,) = struct.unpack_from("<B", raw, off)
    off += 1
    shape = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    count = int(np.prod(shape))
    arr = np.frombuffer(raw, dtype="<u8", count=count, offset=off).astype(np.uint64)
    return arr.reshape(shape), off + 8 * count


def keyset_to_bytes(keys: KeySet) -> bytes:
    parts = [_header(KEY_MAGIC, keys.params)]
    for arr in (keys.secret, keys.secret_sq, keys.public_b, keys.public_a,
                keys.relin_b, keys.relin_a):
        parts.append(_pack_array(arr))
    return b"".join(parts)


def keyset_from_bytes(raw: bytes, params: CkksParams) -> KeySet:
    off = _check_header(raw, KEY_MAGIC, params, "key set")
    arrays = []
    for _ in range(6):
        arr, off = _unpack_array(raw, off)
        arrays.append(arr)
    return KeySet(params, *arrays)


def ciphertext_to_bytes(ct: Ciphertext, params: CkksParams) -> bytes:
    parts = [
        _header(CT_MAGIC, params),
        struct.pack("<BdI", len(ct.c), ct.scale, ct.level),
    ]
    for comp in ct.c:
        parts.append(_pack_array(comp))
    return b"".join(parts)


def ciphertext_from_bytes(raw: bytes, params: CkksParams) -> Ciphertext:
    off = _check_header(raw, CT_MAGIC, params, "ciphertext")
    ncomp, scale, level = struct.unpack_from("<BdI", raw, off)
    off += struct.calcsize("<BdI")
    comps = []
    for _ in range(ncomp):
        arr, off = _unpack_array(raw, off)
        comps.append(arr)
    return Ciphertext(tuple(comps), scale, int(level))


def save_keyset(keys: KeySet, keydir) -> None:
    """Writes params.json plus the key blob into a directory."""
    keydir = Path(keydir)
    keydir.mkdir(parents=True, exist_ok=True)
    (keydir / "params.json").write_text(keys.params.canonical_json())
    (keydir / "keys.bin").write_bytes(keyset_to_bytes(keys))


def load_keyset(keydir) -> KeySet:
    keydir = Path(keydir)
    params = CkksParams.from_json((keydir / "params.json").read_text())
    return keyset_from_bytes((keydir / "keys.bin").read_bytes(), params)
