"""Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches, and the
float32 interchange format consumed by the inference CLI.

Pixels are normalized to [0, 1] by dividing by 255; the raw byte layout is
otherwise preserved exactly, so serializers can reproduce input files bit
for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
BATCH_MAGIC = b"HEB1"
CIFAR_RECORD = 3073  # 1 label byte + 3 * 32 * 32 pixels, channel-major


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # [n, h, w, c] float64 in [0, 1]
    labels: np.ndarray  # [n] int64 in [0, 9]

    def __len__(self) -> int:
        return len(self.labels)


def load_mnist_idx(images_path, labels_path) -> Dataset:
    with open(images_path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise DataFormatError("image file too short for an IDX header")
    magic, n, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x}")
    expected = 16 + n * rows * cols
    if len(raw) != expected:
        raise DataFormatError(f"image payload is {len(raw)} bytes, header implies {expected}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows, cols, 1)

    with open(labels_path, "rb") as f:
        lraw = f.read()
    if len(lraw) < 8:
        raise DataFormatError("label file too short for an IDX header")
    lmagic, ln = struct.unpack(">II", lraw[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad label magic 0x{lmagic:08x}")
    if len(lraw) != 8 + ln:
        raise DataFormatError("label payload does not match its header count")
    if ln != n:
        raise DataFormatError(f"{n} images but {ln} labels")
    labels = np.frombuffer(lraw, dtype=np.uint8, offset=8).astype(np.int64)
    return Dataset(pixels.astype(np.float64) / 255.0, labels)


def save_mnist_idx(ds: Dataset, images_path, labels_path) -> None:
    n, rows, cols, c = ds.images.shape
    if c != 1:
        raise DataFormatError("IDX image export expects single-channel images")
    pixels = np.rint(ds.images * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def load_cifar10_bin(batch_paths) -> Dataset:
    if isinstance(batch_paths, (str, bytes)) or hasattr(batch_paths, "__fspath__"):
        batch_paths = [batch_paths]
    images, labels = [], []
    for path in batch_paths:
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(records[:, 0].astype(np.int64))
        # channel-major planes (R, G, B), each 32x32 row-major
        planes = records[:, 1:].reshape(-1, 3, 32, 32)
        images.append(np.transpose(planes, (0, 2, 3, 1)))
    labels = np.concatenate(labels)
    if labels.size and labels.max() > 9:
        raise DataFormatError("labels outside [0, 9]")
    return Dataset(np.concatenate(images).astype(np.float64) / 255.0, labels)


def save_cifar10_bin(ds: Dataset, path) -> None:
    n, h, w, c = ds.images.shape
    if (h, w, c) != (32, 32, 3):
        raise DataFormatError("CIFAR-10 export expects 32x32x3 images")
    planes = np.transpose(np.rint(ds.images * 255.0).astype(np.uint8), (0, 3, 1, 2))
    with open(path, "wb") as f:
        for i in range(n):
            f.write(bytes([int(ds.labels[i])]))
            f.write(planes[i].tobytes())


def write_batch(images: np.ndarray, path) -> None:
    """Interchange file: 16-byte header (magic, n, h*w*c, reserved) then
    little-endian float32 [n, h*w*c] row-major."""
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    hwc = int(np.prod(images.shape[1:]))
    with open(path, "wb") as f:
        f.write(BATCH_MAGIC)
        f.write(struct.pack("<III", n, hwc, 0))
        f.write(images.reshape(n, hwc).astype("<f4").tobytes())


def read_batch(path, shape=None) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != BATCH_MAGIC:
        raise DataFormatError("not a batch file (bad magic)")
    n, hwc, _ = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * n * hwc
    if len(raw) != expected:
        raise DataFormatError(f"batch payload is {len(raw)} bytes, header implies {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=16).astype(np.float64).reshape(n, hwc)
    if shape is not None:
        if int(np.prod(shape)) != hwc:
            raise DataFormatError(f"batch holds {hwc} values per image, shape {shape} wants {int(np.prod(shape))}")
        return flat.reshape(n, *shape)
    return flat
