"""Encrypted execution of an optimized model graph.

Packing is by pixel position: ciphertext (i, j, k) holds pixel (i, j, k)
of every image in the batch, one image per slot. Convolution then needs no
rotations at all: each output cell is a scalar-weighted sum of input
cells, accumulated at full scale and rescaled once, so a convolution costs
exactly one level regardless of kernel size.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backend import EvalBackend, Handle
from .errors import (
    PlanExceedsBudgetError,
    ShapeError,
    UnfoldedPoolError,
    UnfusedBatchNormError,
)
from .model import (
    Activation,
    AvgPool,
    Conv2D,
    Dense,
    Flatten,
    LevelPlan,
    ModelGraph,
    conv_taps,
    plan_levels,
    pool_windows,
)


@dataclass
class PackedTensor:
    """Backend handles addressed by spatial position; slots carry the batch."""

    shape: tuple
    cells: np.ndarray  # object ndarray of Handle, with .shape == shape
    batch: int

    @property
    def level(self) -> int:
        return self.cells.flat[0].level

    @property
    def scale(self) -> float:
        return self.cells.flat[0].scale

    def cell_count(self) -> int:
        return self.cells.size


@dataclass
class InferenceResult:
    logits: np.ndarray  # [batch, units]
    plan: LevelPlan
    executed: tuple[tuple[int, int], ...]  # (layer index, levels consumed)
    total_seconds: float
    amortized_ms_per_image: float
    peak_ciphertexts: int
    descale: float = 1.0


def _map_cells(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def pack_encrypt(backend: EvalBackend, images: np.ndarray) -> PackedTensor:
    """One ciphertext per pixel position; slot s holds image s."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4:
        raise ShapeError("expected images of shape [batch, h, w, c]")
    b = images.shape[0]
    if b > backend.params.slot_count:
        raise ShapeError(
            f"batch {b} exceeds the {backend.params.slot_count} available slots"
        )
    h, w, c = images.shape[1:]
    cells = np.empty((h, w, c), dtype=object)
    for i in range(h):
        for j in range(w):
            for k in range(c):
                cells[i, j, k] = backend.encrypt_vector(images[:, i, j, k])
    return PackedTensor((h, w, c), cells, b)


def decrypt_tensor(backend: EvalBackend, packed: PackedTensor) -> np.ndarray:
    """[batch, *shape] array of decrypted slot values."""
    out = np.empty((packed.batch, *packed.shape), dtype=np.float64)
    flat = packed.cells.reshape(-1)
    for idx, h in enumerate(flat):
        vals = backend.decrypt_vector(h)
        out.reshape(packed.batch, -1)[:, idx] = vals[: packed.batch]
    return out


def run_conv(backend: EvalBackend, x: PackedTensor, conv: Conv2D,
             label: str = "conv", threads: int = 1) -> PackedTensor:
    out_shape, positions = conv_taps(conv, x.shape)
    ho, wo, oc = out_shape
    cells = np.empty(out_shape, dtype=object)

    def one_position(entry):
        (oi, oj), taps = entry
        handles = [x.cells[ii, jj, ci] for ii, jj, ci, _, _ in taps]
        weight_rows = [
            [float(conv.weights[o, ci, di, dj]) for _, _, ci, di, dj in taps]
            for o in range(oc)
        ]
        biases = [float(conv.bias[o]) for o in range(oc)]
        return (oi, oj), backend.weighted_sum_many(handles, weight_rows, biases, label)

    for (oi, oj), results in _map_cells(one_position, positions, threads):
        for o, handle in enumerate(results):
            cells[oi, oj, o] = handle
    return PackedTensor(out_shape, cells, x.batch)


def run_activation(backend: EvalBackend, x: PackedTensor, act: Activation,
                   label: str = "activation", threads: int = 1) -> PackedTensor:
    flat = list(x.cells.reshape(-1))
    out = _map_cells(lambda h: backend.eval_poly_monic(h, act.poly, label), flat, threads)
    cells = np.array(out, dtype=object).reshape(x.cells.shape)
    return PackedTensor(x.shape, cells, x.batch)


def run_pool_sum(backend: EvalBackend, x: PackedTensor, pool: AvgPool,
                 label: str = "pool", threads: int = 1) -> PackedTensor:
    """Window sums only; the 1/area factor must already be folded forward."""
    if pool.divide:
        raise UnfoldedPoolError(
            "average pool still carries its 1/area factor; run the optimizer "
            "pass that folds it into downstream weights"
        )
    out_shape, positions = pool_windows(pool, x.shape)
    ho, wo, c = out_shape
    cells = np.empty(out_shape, dtype=object)

    def one_position(entry):
        (oi, oj), window = entry
        results = []
        for k in range(c):
            acc = x.cells[window[0][0], window[0][1], k]
            for ii, jj in window[1:]:
                acc = backend.add(acc, x.cells[ii, jj, k], label)
            results.append(acc)
        return (oi, oj), results

    for (oi, oj), results in _map_cells(one_position, positions, threads):
        for k, handle in enumerate(results):
            cells[oi, oj, k] = handle
    return PackedTensor(out_shape, cells, x.batch)


def run_flatten(x: PackedTensor) -> PackedTensor:
    n = x.cells.size
    return PackedTensor((n,), x.cells.reshape(n).copy(), x.batch)


def run_dense(backend: EvalBackend, x: PackedTensor, dense: Dense,
              label: str = "dense", threads: int = 1) -> PackedTensor:
    if len(x.shape) != 1:
        raise ShapeError("dense expects a flattened packed tensor")
    handles = list(x.cells)
    weight_rows = [[float(v) for v in dense.weights[o]] for o in range(dense.units)]
    biases = [float(b) for b in dense.bias]
    outs = backend.weighted_sum_many(handles, weight_rows, biases, label)
    return PackedTensor((dense.units,), np.array(outs, dtype=object), x.batch)


def infer_encrypted(backend: EvalBackend, graph: ModelGraph, batch: np.ndarray,
                    threads: int = 1) -> InferenceResult:
    """Run an optimized graph end to end; refuses plans that exceed the budget."""
    plan = plan_levels(graph)
    if plan.total > backend.level_budget:
        raise PlanExceedsBudgetError(
            f"plan needs {plan.total} levels but the parameter set provides "
            f"{backend.level_budget}"
        )
    t0 = time.perf_counter()
    x = pack_encrypt(backend, batch)
    peak = x.cell_count()
    executed = []
    for idx, layer in enumerate(graph.layers):
        label = f"L{idx}:{type(layer).__name__.lower()}"
        before = x.level
        if isinstance(layer, Conv2D):
            y = run_conv(backend, x, layer, label, threads)
        elif isinstance(layer, Activation):
            y = run_activation(backend, x, layer, label, threads)
        elif isinstance(layer, AvgPool):
            y = run_pool_sum(backend, x, layer, label, threads)
        elif isinstance(layer, Flatten):
            y = run_flatten(x)
        elif isinstance(layer, Dense):
            y = run_dense(backend, x, layer, label, threads)
        else:
            raise UnfusedBatchNormError(
                f"layer {idx}: {type(layer).__name__} cannot run encrypted; "
                "optimize the graph first"
            )
        peak = max(peak, x.cell_count() + y.cell_count())
        executed.append((idx, before - y.level))
        x = y
    logits = decrypt_tensor(backend, x)
    elapsed = time.perf_counter() - t0
    return InferenceResult(
        logits=logits,
        plan=plan,
        executed=tuple(executed),
        total_seconds=elapsed,
        amortized_ms_per_image=1000.0 * elapsed / max(1, x.batch),
        peak_ciphertexts=peak,
        descale=1.0,
    )
