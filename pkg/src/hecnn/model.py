"""CNN graph representation, model file I/O, optimizer passes, level
planning, and the plaintext reference forward pass.

The optimizer pipeline prepares a trained graph for encrypted execution:
batch normalization fuses into the preceding convolution, activation
polynomials are folded to monic form (their leading coefficient moves into
the next weight-bearing layer), average pooling becomes level-free sum
pooling with the 1/area factor folded forward, and finally every parameter
in the clamp band around zero is pushed to +-1e-7 so no plaintext operand
encodes to an exact zero.

The plaintext forward pass accumulates each output cell in the same tap
order and with the same floating-point operations as the encrypted engine,
so the simulator backend reproduces it bit for bit.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .activations import (
    Polynomial,
    activation_depth,
    eval_plan_float,
    eval_poly,
    monic_eval_plan,
)
from .errors import ModelFormatError, ShapeError, UnfusedBatchNormError

MODEL_FORMAT_VERSION = 1
CLAMP_THRESHOLD = 1e-7


# --------------------------------------------------------------------- layers


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int]
    padding: tuple[int, int]
    weights: np.ndarray  # [out, in, kh, kw]
    bias: np.ndarray  # [out]


@dataclass(frozen=True)
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-3


@dataclass(frozen=True)
class Activation:
    poly: Polynomial
    pre_fold_scale: float = 1.0


@dataclass(frozen=True)
class AvgPool:
    pool: tuple[int, int]
    stride: tuple[int, int]
    divide: bool = True  # False once the 1/area factor has been folded forward


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    weights: np.ndarray  # [out, in]
    bias: np.ndarray


@dataclass(frozen=True)
class ModelGraph:
    input_shape: tuple[int, int, int]
    layers: tuple = field(default_factory=tuple)

    def replace_layer(self, idx: int, layer) -> "ModelGraph":
        layers = list(self.layers)
        layers[idx] = layer
        return ModelGraph(self.input_shape, tuple(layers))


@dataclass(frozen=True)
class LevelPlan:
    per_layer: tuple[tuple[int, int], ...]  # (layer index, levels consumed)
    total: int

    def to_json(self) -> str:
        return json.dumps(
            {"per_layer": [list(e) for e in self.per_layer], "total": self.total},
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "LevelPlan":
        d = json.loads(text)
        return LevelPlan(tuple((i, c) for i, c in d["per_layer"]), d["total"])


# ------------------------------------------------------------------- geometry


def conv_output_shape(conv: Conv2D, in_shape) -> tuple[int, int, int]:
    h, w, c = in_shape
    kh, kw = conv.kernel
    sh, sw = conv.stride
    ph, pw = conv.padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {conv.kernel} does not fit input {in_shape}")
    if conv.weights.shape != (conv.out_channels, c, kh, kw):
        raise ShapeError(
            f"conv weights {conv.weights.shape} inconsistent with "
            f"{(conv.out_channels, c, kh, kw)}"
        )
    return ho, wo, conv.out_channels


def conv_taps(conv: Conv2D, in_shape):
    """Per output position, the in-bounds taps as (ii, jj, ci, di, dj) tuples.

    The (di, dj, ci) enumeration order here is the contract between the
    plaintext reference and the encrypted engine.
    """
    h, w, cin = in_shape
    kh, kw = conv.kernel
    sh, sw = conv.stride
    ph, pw = conv.padding
    ho, wo, _ = conv_output_shape(conv, in_shape)
    positions = []
    for oi in range(ho):
        for oj in range(wo):
            taps = []
            for di in range(kh):
                ii = oi * sh - ph + di
                if not 0 <= ii < h:
                    continue
                for dj in range(kw):
                    jj = oj * sw - pw + dj
                    if not 0 <= jj < w:
                        continue
                    for ci in range(cin):
                        taps.append((ii, jj, ci, di, dj))
            positions.append(((oi, oj), taps))
    return (ho, wo, conv.out_channels), positions


def pool_output_shape(pool: AvgPool, in_shape) -> tuple[int, int, int]:
    h, w, c = in_shape
    ph, pw = pool.pool
    sh, sw = pool.stride
    ho = (h - ph) // sh + 1
    wo = (w - pw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool {pool.pool} does not fit input {in_shape}")
    return ho, wo, c


def pool_windows(pool: AvgPool, in_shape):
    """Per output position, the window cells in (di, dj) order."""
    ho, wo, _ = pool_output_shape(pool, in_shape)
    ph, pw = pool.pool
    sh, sw = pool.stride
    positions = []
    for oi in range(ho):
        for oj in range(wo):
            cells = [
                (oi * sh + di, oj * sw + dj) for di in range(ph) for dj in range(pw)
            ]
            positions.append(((oi, oj), cells))
    return (ho, wo, in_shape[2]), positions


def infer_shapes(graph: ModelGraph) -> list:
    """Output shape after every layer; raises ShapeError on inconsistency."""
    if not graph.layers:
        raise ShapeError("model has an empty layer list")
    if len(graph.input_shape) != 3:
        raise ShapeError("input_shape must be (h, w, channels)")
    shapes = []
    cur = tuple(graph.input_shape)
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, Conv2D):
            if len(cur) != 3:
                raise ShapeError(f"layer {idx}: convolution needs a spatial input")
            if layer.bias.shape != (layer.out_channels,):
                raise ShapeError(f"layer {idx}: bias shape {layer.bias.shape}")
            cur = conv_output_shape(layer, cur)
        elif isinstance(layer, BatchNorm):
            if len(cur) != 3 or layer.gamma.shape != (cur[2],):
                raise ShapeError(f"layer {idx}: batch-norm channels mismatch")
            if np.any(layer.var < 0) or layer.eps <= 0:
                raise ShapeError(f"layer {idx}: invalid batch-norm statistics")
        elif isinstance(layer, Activation):
            pass
        elif isinstance(layer, AvgPool):
            if len(cur) != 3:
                raise ShapeError(f"layer {idx}: pooling needs a spatial input")
            cur = pool_output_shape(layer, cur)
        elif isinstance(layer, Flatten):
            if len(cur) != 3:
                raise ShapeError(f"layer {idx}: flatten needs a spatial input")
            cur = (cur[0] * cur[1] * cur[2],)
        elif isinstance(layer, Dense):
            if len(cur) == 3:
                raise ShapeError(f"layer {idx}: dense needs a flattened input")
            n_in = cur[0]
            if layer.weights.shape != (layer.units, n_in):
                raise ShapeError(
                    f"layer {idx}: dense weights {layer.weights.shape} "
                    f"inconsistent with ({layer.units}, {n_in})"
                )
            if layer.bias.shape != (layer.units,):
                raise ShapeError(f"layer {idx}: dense bias shape {layer.bias.shape}")
            cur = (layer.units,)
        else:
            raise ShapeError(f"layer {idx}: unknown layer {type(layer).__name__}")
        shapes.append(cur)
    return shapes


# --------------------------------------------------------------- substitution


def set_activation_poly(graph: ModelGraph, poly: Polynomial) -> ModelGraph:
    """Give every activation layer the supplied polynomial."""
    layers = tuple(
        Activation(poly) if isinstance(l, Activation) else l for l in graph.layers
    )
    return ModelGraph(graph.input_shape, layers)


# -------------------------------------------------------------------- passes


def batchnorm_infer(bn: BatchNorm, x):
    """Inference-time affine form: w*x + b with the population statistics."""
    w = bn.gamma / np.sqrt(bn.var + bn.eps)
    b = bn.beta - bn.gamma * bn.mean / np.sqrt(bn.var + bn.eps)
    return w * x + b


def fuse_conv_bn(conv: Conv2D, bn: BatchNorm) -> Conv2D:
    """Fold the affine batch-norm into the convolution's weights and bias."""
    if bn.gamma.shape != (conv.out_channels,):
        raise ShapeError(
            f"batch-norm over {bn.gamma.shape[0]} channels cannot fuse into "
            f"a convolution with {conv.out_channels} filters"
        )
    w_bn = bn.gamma / np.sqrt(bn.var + bn.eps)
    b_bn = bn.beta - bn.gamma * bn.mean / np.sqrt(bn.var + bn.eps)
    return replace(
        conv,
        weights=conv.weights * w_bn[:, None, None, None],
        bias=conv.bias * w_bn + b_bn,
    )


def fuse_batchnorm(graph: ModelGraph) -> ModelGraph:
    """Fuse every convolution + batch-norm pair; other layers untouched."""
    layers = []
    i = 0
    while i < len(graph.layers):
        layer = graph.layers[i]
        nxt = graph.layers[i + 1] if i + 1 < len(graph.layers) else None
        if isinstance(layer, Conv2D) and isinstance(nxt, BatchNorm):
            layers.append(fuse_conv_bn(layer, nxt))
            i += 2
        else:
            layers.append(layer)
            i += 1
    return ModelGraph(graph.input_shape, tuple(layers))


def _scale_weights(layer, factor: float):
    """Multiply a weight-bearing layer's kernel by a scalar; bias unchanged,
    since the factor compensates a rescaled input signal, not the output."""
    if isinstance(layer, (Conv2D, Dense)):
        return replace(layer, weights=layer.weights * factor)
    raise ShapeError(f"{type(layer).__name__} has no foldable weights")


def _next_weight_bearing(graph: ModelGraph, start: int):
    """Index of the next Conv2D/Dense, crossing only pooling and flatten."""
    for j in range(start, len(graph.layers)):
        layer = graph.layers[j]
        if isinstance(layer, (Conv2D, Dense)):
            return j
        if isinstance(layer, (AvgPool, Flatten)):
            continue
        return None
    return None


def monic_fold(act: Activation, successor):
    """Divide the activation by its leading coefficient and pre-multiply the
    successor's weights by it; the composed function is unchanged."""
    poly = act.poly.trimmed()
    if poly.degree < 2:
        raise ValueError("monic folding applies to degree >= 2 polynomials")
    a = poly.leading
    if a == 0.0:
        raise ValueError("zero leading coefficient cannot be folded")
    if a == 1.0:
        return act, successor
    folded = Activation(poly.scaled(1.0 / a), pre_fold_scale=a * act.pre_fold_scale)
    return folded, _scale_weights(successor, a)


def fold_activations(graph: ModelGraph) -> ModelGraph:
    """Monic-fold every degree >= 2 activation into its downstream weights."""
    g = graph
    for i, layer in enumerate(graph.layers):
        if not isinstance(layer, Activation):
            continue
        poly = layer.poly.trimmed()
        if poly.degree < 2 or poly.leading == 1.0:
            continue
        j = _next_weight_bearing(g, i + 1)
        if j is None:
            raise ShapeError(
                f"activation at layer {i} has no downstream weights to absorb "
                "its leading coefficient"
            )
        act, succ = monic_fold(g.layers[i], g.layers[j])
        g = g.replace_layer(i, act).replace_layer(j, succ)
    return g


def fold_avgpool(graph: ModelGraph) -> ModelGraph:
    """Turn average pooling into level-free sum pooling, folding 1/area forward."""
    g = graph
    for i, layer in enumerate(graph.layers):
        if not isinstance(layer, AvgPool) or not layer.divide:
            continue
        j = _next_weight_bearing(g, i + 1)
        if j is None:
            raise ShapeError(
                f"average pool at layer {i} has no downstream weights to absorb 1/area"
            )
        area = layer.pool[0] * layer.pool[1]
        g = g.replace_layer(i, replace(layer, divide=False))
        g = g.replace_layer(j, _scale_weights(g.layers[j], 1.0 / area))
    return g


def clamp_small_weights(graph: ModelGraph) -> ModelGraph:
    """Push every parameter in [0, 1e-7] up to 1e-7 and in (-1e-7, 0) to -1e-7."""

    def clamp(arr: np.ndarray) -> np.ndarray:
        out = arr.copy()
        out[(arr >= 0.0) & (arr <= CLAMP_THRESHOLD)] = CLAMP_THRESHOLD
        out[(arr > -CLAMP_THRESHOLD) & (arr < 0.0)] = -CLAMP_THRESHOLD
        return out

    layers = []
    for layer in graph.layers:
        if isinstance(layer, (Conv2D, Dense)):
            layers.append(replace(layer, weights=clamp(layer.weights), bias=clamp(layer.bias)))
        else:
            layers.append(layer)
    return ModelGraph(graph.input_shape, tuple(layers))


def optimize_graph(graph: ModelGraph) -> ModelGraph:
    """Full pre-encryption pipeline: fuse, monic-fold, pool-fold, clamp."""
    g = fuse_batchnorm(graph)
    g = fold_activations(g)
    g = fold_avgpool(g)
    g = clamp_small_weights(g)
    infer_shapes(g)
    return g


# ------------------------------------------------------------------- planning


def plan_levels(graph: ModelGraph) -> LevelPlan:
    """Static multiplicative-level budget per layer.

    Convolutions and dense layers cost one level (one plaintext multiply
    with a single rescale), activations follow their schedule depth, folded
    sum pooling and flatten are free. Unfused batch norm is refused: it
    must never reach the encrypted path.
    """
    infer_shapes(graph)
    per_layer = []
    for idx, layer in enumerate(graph.layers):
        if isinstance(layer, BatchNorm):
            raise UnfusedBatchNormError(
                f"layer {idx}: fuse batch normalization before planning"
            )
        if isinstance(layer, (Conv2D, Dense)):
            cost = 1
        elif isinstance(layer, Activation):
            cost = activation_depth(layer.poly)
        elif isinstance(layer, AvgPool):
            cost = 1 if layer.divide else 0
        else:
            cost = 0
        per_layer.append((idx, cost))
    return LevelPlan(tuple(per_layer), sum(c for _, c in per_layer))


# ----------------------------------------------------------- plain inference


def weighted_cell_sum(stack: np.ndarray, weights: np.ndarray, bias: float) -> np.ndarray:
    """One output cell: weights @ stacked tap vectors + bias.

    Both the plaintext pass and the simulator route through this exact
    call, which is what makes them bitwise comparable.
    """
    return weights @ stack + bias


def eval_activation_poly(x, poly: Polynomial):
    """Activation value: scheduled evaluation when the polynomial admits a
    leveled schedule, Horner otherwise (pre-fold graphs)."""
    try:
        plan = monic_eval_plan(poly)
    except ValueError:
        return eval_poly(poly, x)
    return eval_plan_float(plan, x)


def _conv_plain(x: np.ndarray, conv: Conv2D) -> np.ndarray:
    b = x.shape[0]
    in_shape = x.shape[1:]
    (ho, wo, oc), positions = conv_taps(conv, in_shape)
    out = np.empty((b, ho, wo, oc), dtype=np.float64)
    for (oi, oj), taps in positions:
        stack = np.stack([x[:, ii, jj, ci] for ii, jj, ci, _, _ in taps])
        for o in range(oc):
            w = np.array([conv.weights[o, ci, di, dj] for _, _, ci, di, dj in taps])
            out[:, oi, oj, o] = weighted_cell_sum(stack, w, conv.bias[o])
    return out


def _pool_plain(x: np.ndarray, pool: AvgPool) -> np.ndarray:
    b = x.shape[0]
    in_shape = x.shape[1:]
    (ho, wo, c), positions = pool_windows(pool, in_shape)
    out = np.empty((b, ho, wo, c), dtype=np.float64)
    for (oi, oj), cells in positions:
        acc = x[:, cells[0][0], cells[0][1], :]
        for ii, jj in cells[1:]:
            acc = acc + x[:, ii, jj, :]
        out[:, oi, oj, :] = acc
    if pool.divide:
        out = out / (pool.pool[0] * pool.pool[1])
    return out


def _dense_plain(x: np.ndarray, dense: Dense) -> np.ndarray:
    b, n = x.shape
    stack = np.stack([x[:, i] for i in range(n)])
    out = np.empty((b, dense.units), dtype=np.float64)
    for o in range(dense.units):
        out[:, o] = weighted_cell_sum(stack, dense.weights[o].astype(np.float64), dense.bias[o])
    return out


def plain_infer(graph: ModelGraph, batch: np.ndarray) -> np.ndarray:
    """Exact floating-point forward pass; the oracle for the encrypted engine."""
    infer_shapes(graph)
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != tuple(graph.input_shape):
        raise ShapeError(f"batch shape {x.shape[1:]} != input {graph.input_shape}")
    for layer in graph.layers:
        if isinstance(layer, Conv2D):
            x = _conv_plain(x, layer)
        elif isinstance(layer, BatchNorm):
            x = batchnorm_infer(layer, x)
        elif isinstance(layer, Activation):
            x = eval_activation_poly(x, layer.poly)
        elif isinstance(layer, AvgPool):
            x = _pool_plain(x, layer)
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        else:
            x = _dense_plain(x, layer)
    return x


# ------------------------------------------------------------------ file I/O


def _tensor_to_json(arr: np.ndarray) -> dict:
    arr32 = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr32.tobytes()).decode("ascii"),
    }


def _tensor_from_json(d: dict) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in d["shape"])
        raw = base64.b64decode(d["data"])
        arr = np.frombuffer(raw, dtype="<f4")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed tensor payload: {exc}") from None
    if arr.size != int(np.prod(shape)):
        raise ModelFormatError(
            f"tensor payload holds {arr.size} values, shape {shape} needs "
            f"{int(np.prod(shape))}"
        )
    return arr.reshape(shape).astype(np.float64)


def _layer_to_json(layer) -> dict:
    if isinstance(layer, Conv2D):
        return {
            "type": "conv2d",
            "out_channels": layer.out_channels,
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "padding": list(layer.padding),
            "tensors": {
                "weights": _tensor_to_json(layer.weights),
                "bias": _tensor_to_json(layer.bias),
            },
        }
    if isinstance(layer, BatchNorm):
        return {
            "type": "batchnorm",
            "eps": layer.eps,
            "tensors": {
                "gamma": _tensor_to_json(layer.gamma),
                "beta": _tensor_to_json(layer.beta),
                "mean": _tensor_to_json(layer.mean),
                "var": _tensor_to_json(layer.var),
            },
        }
    if isinstance(layer, Activation):
        return {
            "type": "activation",
            "pre_fold_scale": layer.pre_fold_scale,
            "coeffs": list(layer.poly.coeffs),
        }
    if isinstance(layer, AvgPool):
        return {
            "type": "avgpool",
            "pool": list(layer.pool),
            "stride": list(layer.stride),
            "divide": layer.divide,
        }
    if isinstance(layer, Flatten):
        return {"type": "flatten"}
    if isinstance(layer, Dense):
        return {
            "type": "dense",
            "units": layer.units,
            "tensors": {
                "weights": _tensor_to_json(layer.weights),
                "bias": _tensor_to_json(layer.bias),
            },
        }
    raise ModelFormatError(f"unknown layer {type(layer).__name__}")


def _layer_from_json(d: dict):
    kind = d.get("type")
    tensors = d.get("tensors", {})
    if kind == "conv2d":
        return Conv2D(
            out_channels=int(d["out_channels"]),
            kernel=tuple(d["kernel"]),
            stride=tuple(d["stride"]),
            padding=tuple(d["padding"]),
            weights=_tensor_from_json(tensors["weights"]),
            bias=_tensor_from_json(tensors["bias"]),
        )
    if kind == "batchnorm":
        return BatchNorm(
            gamma=_tensor_from_json(tensors["gamma"]),
            beta=_tensor_from_json(tensors["beta"]),
            mean=_tensor_from_json(tensors["mean"]),
            var=_tensor_from_json(tensors["var"]),
            eps=float(d.get("eps", 1e-3)),
        )
    if kind == "activation":
        return Activation(
            poly=Polynomial(tuple(d["coeffs"])),
            pre_fold_scale=float(d.get("pre_fold_scale", 1.0)),
        )
    if kind == "avgpool":
        return AvgPool(
            pool=tuple(d["pool"]),
            stride=tuple(d["stride"]),
            divide=bool(d.get("divide", True)),
        )
    if kind == "flatten":
        return Flatten()
    if kind == "dense":
        return Dense(
            units=int(d["units"]),
            weights=_tensor_from_json(tensors["weights"]),
            bias=_tensor_from_json(tensors["bias"]),
        )
    raise ModelFormatError(f"unknown layer variant {kind!r}")


def save_model(graph: ModelGraph) -> bytes:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_shape": list(graph.input_shape),
        "layers": [_layer_to_json(l) for l in graph.layers],
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def load_model(data: bytes) -> ModelGraph:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"not a model file: {exc}") from None
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {doc.get('format_version')!r}")
    try:
        graph = ModelGraph(
            input_shape=tuple(doc["input_shape"]),
            layers=tuple(_layer_from_json(d) for d in doc["layers"]),
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing field {exc}") from None
    infer_shapes(graph)
    return graph


# -------------------------------------------------------- architecture presets


def _he_conv(rng, out_channels, in_channels, kernel, stride, padding) -> Conv2D:
    fan_in = in_channels * kernel[0] * kernel[1]
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, *kernel))
    b = rng.normal(0.0, 0.05, out_channels)
    return Conv2D(out_channels, kernel, stride, padding, w, b)


def _he_dense(rng, units, n_in) -> Dense:
    w = rng.normal(0.0, np.sqrt(2.0 / n_in), (units, n_in))
    b = rng.normal(0.0, 0.05, units)
    return Dense(units, w, b)


def _random_bn(rng, channels) -> BatchNorm:
    return BatchNorm(
        gamma=rng.uniform(0.8, 1.2, channels),
        beta=rng.normal(0.0, 0.1, channels),
        mean=rng.normal(0.0, 0.2, channels),
        var=rng.uniform(0.5, 1.5, channels),
        eps=1e-3,
    )


SQUARE_POLY = Polynomial((0.0, 0.0, 1.0))


def _as_activation(activation) -> tuple[Polynomial, bool]:
    """Returns (polynomial, default batch-norm choice)."""
    if isinstance(activation, Polynomial):
        return activation, True
    if activation == "square":
        return SQUARE_POLY, False
    raise ValueError("activation must be 'square' or a Polynomial")


def mnist_graph(activation="square", seed=0, batchnorm=None) -> ModelGraph:
    """Two strided 5x5 convolutions and a 10-unit head on 28x28x1 inputs."""
    rng = np.random.default_rng(seed)
    poly, bn_default = _as_activation(activation)
    use_bn = bn_default if batchnorm is None else batchnorm
    layers = [_he_conv(rng, 5, 1, (5, 5), (2, 2), (0, 0))]
    if use_bn:
        layers.append(_random_bn(rng, 5))
    layers.append(Activation(poly))
    layers.append(_he_conv(rng, 50, 5, (5, 5), (2, 2), (0, 0)))
    if use_bn:
        layers.append(_random_bn(rng, 50))
    layers.append(Activation(poly))
    layers.append(Flatten())
    layers.append(_he_dense(rng, 10, 4 * 4 * 50))
    return ModelGraph((28, 28, 1), tuple(layers))


def cifar_graph(activation="square", seed=0, batchnorm=None) -> ModelGraph:
    """Three conv/pool stages and two dense layers on 32x32x3 inputs."""
    rng = np.random.default_rng(seed)
    poly, bn_default = _as_activation(activation)
    use_bn = bn_default if batchnorm is None else batchnorm
    layers = []
    cin = 3
    for oc in (32, 64, 128):
        layers.append(_he_conv(rng, oc, cin, (3, 3), (1, 1), (1, 1)))
        if use_bn:
            layers.append(_random_bn(rng, oc))
        layers.append(Activation(poly))
        layers.append(AvgPool((2, 2), (2, 2)))
        cin = oc
    layers.append(Flatten())
    layers.append(_he_dense(rng, 256, 4 * 4 * 128))
    layers.append(_he_dense(rng, 10, 256))
    return ModelGraph((32, 32, 3), tuple(layers))
