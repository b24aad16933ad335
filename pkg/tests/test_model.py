import numpy as np
import pytest

from hecnn import model as M
from hecnn.activations import Polynomial, fit_polynomial, FitSpec, ActivationKind
from hecnn.errors import ModelFormatError, ShapeError, UnfusedBatchNormError

SWISH_DEG4 = Polynomial((0.03347, 0.5, 0.19566, 0.0, -0.005075))
RELU_DEG2 = Polynomial((0.375373, 0.5, 0.117071))


def random_conv(rng, out_channels, in_channels, kernel=(3, 3), stride=(1, 1),
                padding=(0, 0)):
    w = rng.normal(0, 0.4, (out_channels, in_channels, *kernel))
    b = rng.normal(0, 0.2, out_channels)
    return M.Conv2D(out_channels, kernel, stride, padding, w, b)


def random_bn(rng, channels):
    return M.BatchNorm(
        gamma=rng.uniform(0.5, 1.5, channels),
        beta=rng.normal(0, 0.3, channels),
        mean=rng.normal(0, 0.3, channels),
        var=rng.uniform(0.2, 2.0, channels),
        eps=1e-3,
    )


# ----------------------------------------------------------- batch-norm math


def test_batchnorm_identity():
    bn = M.BatchNorm(np.ones(1), np.zeros(1), np.zeros(1),
                     np.array([1.0 - 1e-3]), eps=1e-3)
    x = np.linspace(-3, 3, 11)
    assert np.allclose(M.batchnorm_infer(bn, x), x, atol=1e-12)


def test_batchnorm_hand_arithmetic():
    bn = M.BatchNorm(np.array([2.0]), np.array([3.0]), np.array([1.0]),
                     np.array([4.0 - 1e-3]), eps=1e-3)
    assert abs(M.batchnorm_infer(bn, 5.0)[0] - 7.0) < 1e-12


def test_batchnorm_matches_population_normalization(rng):
    # the affine form equals direct normalization with population statistics
    for _ in range(20):
        gamma, beta = rng.normal(1, 0.3), rng.normal(0, 0.5)
        mu, var = rng.normal(0, 1), rng.uniform(0.1, 4.0)
        eps = 1e-3
        bn = M.BatchNorm(np.array([gamma]), np.array([beta]), np.array([mu]),
                         np.array([var]), eps=eps)
        x = rng.normal(mu, np.sqrt(var), 256)
        direct = gamma * (x - mu) / np.sqrt(var + eps) + beta
        assert np.max(np.abs(M.batchnorm_infer(bn, x) - direct)) < 1e-9


# ---------------------------------------------------------------- conv-bn fuse


def test_fuse_identity_bn_leaves_conv(rng):
    conv = random_conv(rng, 4, 2)
    bn = M.BatchNorm(np.ones(4), np.zeros(4), np.zeros(4),
                     np.full(4, 1.0 - 1e-3), eps=1e-3)
    fused = M.fuse_conv_bn(conv, bn)
    assert np.allclose(fused.weights, conv.weights, atol=1e-12)
    assert np.allclose(fused.bias, conv.bias, atol=1e-12)


def test_fuse_matches_sequential(rng):
    conv = random_conv(rng, 4, 2)
    bn = random_bn(rng, 4)
    g_seq = M.ModelGraph((6, 6, 2), (conv, bn))
    g_fused = M.ModelGraph((6, 6, 2), (M.fuse_conv_bn(conv, bn),))
    x = rng.uniform(-1, 1, (100, 6, 6, 2))
    out1 = M.plain_infer(g_seq, x)
    out2 = M.plain_infer(g_fused, x)
    assert np.max(np.abs(out1 - out2)) < 1e-6


def test_fuse_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        M.fuse_conv_bn(random_conv(rng, 4, 2), random_bn(rng, 5))


def test_fuse_pass_is_idempotent(rng):
    g = M.mnist_graph(activation=SWISH_DEG4, seed=1)
    once = M.fuse_batchnorm(g)
    twice = M.fuse_batchnorm(once)
    assert len(once.layers) == len(twice.layers)
    for a, b in zip(once.layers, twice.layers):
        if isinstance(a, M.Conv2D):
            assert np.array_equal(a.weights, b.weights)


# ----------------------------------------------------------------- monic fold


def test_monic_fold_noop_when_already_monic(rng):
    act = M.Activation(Polynomial((1.0, 2.0, 1.0)))
    dense = M.Dense(3, rng.normal(0, 1, (3, 4)), rng.normal(0, 1, 3))
    act2, dense2 = M.monic_fold(act, dense)
    assert act2 is act and dense2 is dense


def test_monic_fold_preserves_composition(rng):
    dense = M.Dense(6, rng.normal(0, 1, (6, 50)), rng.normal(0, 1, 6))
    act = M.Activation(SWISH_DEG4)
    folded_act, folded_dense = M.monic_fold(act, dense)
    assert folded_act.poly.leading == 1.0
    assert folded_act.pre_fold_scale == SWISH_DEG4.leading
    x = rng.uniform(-4, 4, (1000, 50))
    before = M.eval_activation_poly(x, act.poly) @ dense.weights.T + dense.bias
    after = M.eval_activation_poly(x, folded_act.poly) @ folded_dense.weights.T + folded_dense.bias
    assert np.max(np.abs(before - after)) < 1e-6


def test_monic_fold_reduces_activation_level_three_to_two():
    g = M.ModelGraph(
        (4, 4, 1),
        (
            M.Activation(SWISH_DEG4),
            M.Flatten(),
            M.Dense(2, np.ones((2, 16)), np.zeros(2)),
        ),
    )
    before = M.plan_levels(g).per_layer[0][1]
    after = M.plan_levels(M.fold_activations(g)).per_layer[0][1]
    assert (before, after) == (3, 2)


def test_monic_fold_requires_downstream_weights():
    g = M.ModelGraph((2, 2, 1), (M.Activation(SWISH_DEG4), M.Flatten()))
    with pytest.raises(ShapeError):
        M.fold_activations(g)


# ------------------------------------------------------------------- clamping


def test_clamp_rule():
    w = np.array([[0.0, 5e-8, 1e-7, -5e-8, -1e-7, 0.5, -0.5, 2e-7]])
    g = M.ModelGraph((1, 1, 1), (M.Flatten(), M.Dense(1, w.copy(), np.array([0.0]))))
    clamped = M.clamp_small_weights(g).layers[1]
    assert clamped.weights[0, 0] == 1e-7      # exact zero rounds up
    assert clamped.weights[0, 1] == 1e-7      # inside [0, 1e-7]
    assert clamped.weights[0, 2] == 1e-7      # boundary stays
    assert clamped.weights[0, 3] == -1e-7     # inside (-1e-7, 0)
    assert clamped.weights[0, 4] == -1e-7     # boundary of the open interval
    assert clamped.weights[0, 5] == 0.5
    assert clamped.weights[0, 6] == -0.5
    assert clamped.weights[0, 7] == 2e-7
    assert clamped.bias[0] == 1e-7


# ------------------------------------------------------------------ pool fold


def test_fold_avgpool_preserves_semantics(rng):
    pool = M.AvgPool((2, 2), (2, 2))
    dense = M.Dense(3, rng.normal(0, 1, (3, 4)), rng.normal(0, 1, 3))
    g = M.ModelGraph((2, 2, 1), (M.AvgPool((1, 1), (1, 1)), M.Flatten(), dense))
    g2 = M.ModelGraph((4, 4, 1), (pool, M.Flatten(), dense))
    for graph, shape in ((g, (2, 2, 1)), (g2, (4, 4, 1))):
        folded = M.fold_avgpool(graph)
        x = rng.uniform(-1, 1, (50, *shape))
        assert np.max(np.abs(M.plain_infer(graph, x) - M.plain_infer(folded, x))) < 1e-6
        assert not folded.layers[0].divide


def test_unit_pool_is_passthrough(rng):
    pool = M.AvgPool((1, 1), (1, 1))
    g = M.ModelGraph((3, 3, 2), (pool, M.Flatten(),
                                 M.Dense(2, rng.normal(0, 1, (2, 18)), np.zeros(2))))
    folded = M.fold_avgpool(g)
    x = rng.uniform(-1, 1, (10, 3, 3, 2))
    assert np.array_equal(M.plain_infer(g, x), M.plain_infer(folded, x))


# ------------------------------------------------------------- level planning


def test_plan_levels_on_all_presets():
    expectations = [
        ("mnist", "square", 5),
        ("mnist", RELU_DEG2, 5),
        ("mnist", SWISH_DEG4, 7),
        ("cifar", "square", 8),
        ("cifar", RELU_DEG2, 8),
        ("cifar", SWISH_DEG4, 11),
    ]
    for family, act, total in expectations:
        build = M.mnist_graph if family == "mnist" else M.cifar_graph
        g = M.optimize_graph(build(activation=act, seed=0))
        plan = M.plan_levels(g)
        assert plan.total == total, (family, act, plan.total)
        assert plan.total == sum(c for _, c in plan.per_layer)


def test_unfolded_pool_costs_a_level():
    g = M.cifar_graph(activation=RELU_DEG2, seed=0)
    g = M.fold_activations(M.fuse_batchnorm(g))
    assert M.plan_levels(g).total == 11  # 3 pools still carry 1/area
    assert M.plan_levels(M.fold_avgpool(g)).total == 8


def test_plan_refuses_unfused_batchnorm():
    g = M.mnist_graph(activation=SWISH_DEG4, seed=0)
    with pytest.raises(UnfusedBatchNormError):
        M.plan_levels(g)


# -------------------------------------------------------------- plain_infer


def test_plain_infer_zero_weights_yield_biases():
    w1 = np.zeros((2, 1, 3, 3))
    conv = M.Conv2D(2, (3, 3), (2, 2), (0, 0), w1, np.array([0.5, -1.5]))
    dense = M.Dense(3, np.zeros((3, 2 * 3 * 3)), np.array([1.0, 2.0, 3.0]))
    g = M.ModelGraph((7, 7, 1), (conv, M.Flatten(), dense))
    out = M.plain_infer(g, np.zeros((4, 7, 7, 1)))
    assert np.allclose(out, [1.0, 2.0, 3.0])


def triple_loop_conv(x, conv):
    b, h, w, cin = x.shape
    kh, kw = conv.kernel
    sh, sw = conv.stride
    ph, pw = conv.padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((b, ho, wo, conv.out_channels))
    for n in range(b):
        for oi in range(ho):
            for oj in range(wo):
                for oc in range(conv.out_channels):
                    acc = conv.bias[oc]
                    for ci in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                ii, jj = oi * sh - ph + di, oj * sw - pw + dj
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += conv.weights[oc, ci, di, dj] * x[n, ii, jj, ci]
                    out[n, oi, oj, oc] = acc
    return out


def test_plain_conv_matches_triple_loop_oracle(rng):
    for stride, padding in (((1, 1), (0, 0)), ((2, 2), (0, 0)), ((1, 1), (1, 1))):
        conv = random_conv(rng, 3, 2, (3, 3), stride, padding)
        g = M.ModelGraph((6, 6, 2), (conv,))
        x = rng.uniform(-1, 1, (5, 6, 6, 2))
        got = M.plain_infer(g, x).reshape(5, -1)
        want = triple_loop_conv(x, conv).reshape(5, -1)
        assert np.max(np.abs(got - want)) < 1e-10


def test_optimizer_preserves_logits_and_argmax(rng):
    g = M.mnist_graph(activation=SWISH_DEG4, seed=5)
    opt = M.optimize_graph(g)
    x = rng.uniform(0, 1, (100, 28, 28, 1))
    a = M.plain_infer(g, x)
    b = M.plain_infer(opt, x)
    assert np.max(np.abs(a - b)) < 1e-5
    assert np.array_equal(a.argmax(1), b.argmax(1))


# ------------------------------------------------------------------ file I/O


def test_model_roundtrip_is_canonical(rng):
    g = M.mnist_graph(activation=SWISH_DEG4, seed=2)
    blob = M.save_model(g)
    again = M.save_model(M.load_model(blob))
    assert blob == again


def test_mnist_preset_shapes():
    g = M.mnist_graph(activation=SWISH_DEG4, seed=0)
    shapes = M.infer_shapes(g)
    spatial = [s for s in shapes if len(s) == 3]
    assert spatial[0] == (12, 12, 5)
    assert (4, 4, 50) in spatial
    assert shapes[-1] == (10,)


def test_cifar_preset_shapes():
    g = M.cifar_graph(activation=SWISH_DEG4, seed=0)
    shapes = M.infer_shapes(g)
    assert (32, 32, 32) in shapes
    assert (16, 16, 64) in shapes
    assert (8, 8, 128) in shapes
    assert (256,) in shapes
    assert shapes[-1] == (10,)


def test_load_rejects_empty_layer_list():
    blob = M.save_model(M.mnist_graph(seed=0))
    import json

    doc = json.loads(blob)
    doc["layers"] = []
    with pytest.raises(ShapeError):
        M.load_model(json.dumps(doc).encode())


def test_load_rejects_unknown_variant_and_bad_tensor():
    blob = M.save_model(M.mnist_graph(seed=0))
    import json

    doc = json.loads(blob)
    doc["layers"][0]["type"] = "deconv3d"
    with pytest.raises(ModelFormatError):
        M.load_model(json.dumps(doc).encode())

    doc = json.loads(blob)
    doc["layers"][0]["tensors"]["weights"]["data"] = "AAAA"
    with pytest.raises(ModelFormatError):
        M.load_model(json.dumps(doc).encode())

    with pytest.raises(ModelFormatError):
        M.load_model(b"not json at all")


def test_shape_mismatch_detected(rng):
    conv = random_conv(rng, 4, 3)  # expects 3 input channels
    g = M.ModelGraph((6, 6, 2), (conv,))
    with pytest.raises(ShapeError):
        M.infer_shapes(g)
    dense = M.Dense(2, rng.normal(0, 1, (2, 10)), np.zeros(2))
    g2 = M.ModelGraph((2, 2, 2), (M.Flatten(), dense))  # 8 != 10
    with pytest.raises(ShapeError):
        M.infer_shapes(g2)


def test_batch_shape_validated(rng):
    g = M.mnist_graph(seed=0)
    with pytest.raises(ShapeError):
        M.plain_infer(g, rng.uniform(0, 1, (2, 27, 28, 1)))
