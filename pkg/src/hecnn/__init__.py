"""Leveled homomorphic CNN inference with polynomial activation approximation.

The package splits into: activation fitting (`activations`), a from-scratch
RNS-CKKS scheme (`ckks`), a dual ckks/simulator evaluation backend
(`backend`), the model graph with its optimizer passes and level planner
(`model`), the pixel-position-packed encrypted engine (`engine`), dataset
loaders (`data`), and the command-line interface (`cli`).
"""

from .activations import (
    ActivationKind,
    FitSpec,
    Polynomial,
    eval_poly,
    evaluate_activation,
    fit_polynomial,
    max_fit_error,
)
from .backend import CkksBackend, EvalBackend, Handle, LevelLedger, SimBackend
from .ckks.params import CkksParams, make_params, preset_params
from .ckks.scheme import Ciphertext, CkksScheme, KeySet, Plaintext
from .engine import InferenceResult, PackedTensor, infer_encrypted, pack_encrypt
from .model import (
    Activation,
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    LevelPlan,
    ModelGraph,
    batchnorm_infer,
    cifar_graph,
    clamp_small_weights,
    fold_activations,
    fold_avgpool,
    fuse_batchnorm,
    fuse_conv_bn,
    load_model,
    mnist_graph,
    monic_fold,
    optimize_graph,
    plain_infer,
    plan_levels,
    save_model,
)

__version__ = "0.1.0"
