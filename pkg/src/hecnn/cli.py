"""Command-line front door: fit activations, optimize models, generate keys,
run encrypted or simulated inference, verify against the plaintext oracle,
and reconcile level ledgers against static plans.

Flag values fall back to HECNN_* environment variables, then to defaults,
so CI can pin a backend or preset without editing command lines.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as D
from . import model as M
from .activations import (
    ActivationKind,
    FitSpec,
    Polynomial,
    fit_polynomial,
    fit_to_json,
    max_fit_error,
    poly_from_json,
)
from .backend import CkksBackend, LevelLedger, SimBackend
from .ckks.params import PRESET_TABLE, preset_params
from .ckks.scheme import CkksScheme
from .ckks.serialize import load_keyset, save_keyset
from .engine import infer_encrypted
from .errors import HecnnError

ENV_PREFIX = "HECNN_"


def _env(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper(), fallback)


def _parse_range(text: str) -> tuple[float, float]:
    sep = ":" if ":" in text else ","
    lo, hi = text.split(sep, 1)
    return float(lo), float(hi)


def _load_graph(path) -> M.ModelGraph:
    return M.load_model(Path(path).read_bytes())


# ------------------------------------------------------------------ commands


def cmd_fit(args) -> int:
    kind = ActivationKind(args.activation)
    spec = FitSpec(kind, args.degree, _parse_range(args.range), args.samples)
    poly = fit_polynomial(spec)
    err = max_fit_error(poly, spec)
    print(f"fit {kind.value} degree {args.degree} on [{spec.range[0]:g}, {spec.range[1]:g}]")
    print(f"  coefficients (ascending): {[round(c, 8) for c in poly.coeffs]}")
    print(f"  max abs error on a dense grid: {err:.6f}")
    if args.json:
        Path(args.json).write_text(fit_to_json(spec, poly))
        print(f"  wrote {args.json}")
    return 0


def cmd_optimize(args) -> int:
    graph = _load_graph(args.model)
    if args.activation_file:
        poly = poly_from_json(Path(args.activation_file).read_text())
        graph = M.set_activation_poly(graph, poly)
    optimized = M.optimize_graph(graph)
    plan = M.plan_levels(optimized)
    Path(args.out).write_bytes(M.save_model(optimized))
    print(f"optimized model written to {args.out}")
    for idx, cost in plan.per_layer:
        name = type(optimized.layers[idx]).__name__.lower()
        print(f"  layer {idx:2d} {name:12s} levels {cost}")
    print(f"  total levels: {plan.total}")
    if args.plan:
        Path(args.plan).write_text(plan.to_json())
        print(f"plan written to {args.plan}")
    return 0


def cmd_keygen(args) -> int:
    params = preset_params(args.preset, args.profile)
    keys = CkksScheme(params).keygen(args.seed)
    save_keyset(keys, args.keydir)
    print(
        f"keys for preset {args.preset} ({args.profile}, N=2^"
        f"{params.ring_degree.bit_length() - 1}, level {params.level}) "
        f"written to {args.keydir}"
    )
    return 0


def _make_backend(kind: str, params, args):
    ledger = LevelLedger()
    if kind == "sim":
        return SimBackend(params, ledger)
    if not args.keys:
        raise HecnnError("the ckks backend needs --keys (or HECNN_KEYS)")
    keys = load_keyset(args.keys)
    if keys.params.digest() != params.digest():
        raise HecnnError(
            f"keys in {args.keys} were generated for different parameters "
            f"than preset {args.preset} ({args.profile})"
        )
    return CkksBackend(params, keys, ledger, rng=args.seed)


def cmd_infer(args) -> int:
    graph = _load_graph(args.model)
    params = preset_params(args.preset, args.profile)
    plan = M.plan_levels(graph)
    if plan.total > params.level:
        print(
            f"refused: plan needs {plan.total} levels, preset {args.preset} "
            f"provides {params.level}",
            file=sys.stderr,
        )
        return 2
    backend = _make_backend(args.backend, params, args)
    batch = D.read_batch(args.input, shape=graph.input_shape)
    result = infer_encrypted(backend, graph, batch, threads=args.threads)
    doc = {
        str(i): {
            "logits": [float(v) for v in result.logits[i]],
            "argmax": int(result.logits[i].argmax()),
        }
        for i in range(result.logits.shape[0])
    }
    Path(args.out).write_text(json.dumps(doc, indent=1))
    if args.ledger:
        Path(args.ledger).write_text(backend.ledger.to_jsonl())
    print(f"{result.logits.shape[0]} images inferred on the {args.backend} backend")
    print(f"  total time: {result.total_seconds:.2f} s")
    print(f"  amortized per image: {result.amortized_ms_per_image:.2f} ms")
    print(f"  peak resident ciphertexts: {result.peak_ciphertexts}")
    print(f"  levels consumed: {sum(c for _, c in result.executed)} (plan {plan.total})")
    return 0


def cmd_verify(args) -> int:
    graph = _load_graph(args.model)
    params = preset_params(args.preset, args.profile)
    plan = M.plan_levels(graph)
    if plan.total > params.level:
        print(
            f"refused: plan needs {plan.total} levels, preset {args.preset} "
            f"provides {params.level}",
            file=sys.stderr,
        )
        return 2

    labels = None
    if args.input:
        batch = D.read_batch(args.input, shape=graph.input_shape)
    elif args.images_idx:
        ds = D.load_mnist_idx(args.images_idx, args.labels_idx)
        batch, labels = ds.images, ds.labels
    elif args.cifar_bin:
        ds = D.load_cifar10_bin(args.cifar_bin)
        batch, labels = ds.images, ds.labels
    else:
        rng = np.random.default_rng(args.seed)
        batch = rng.uniform(0.0, 1.0, (args.n_inputs, *graph.input_shape))
    limit = min(len(batch), args.n_inputs, params.slot_count)
    batch = batch[:limit]
    if labels is not None:
        labels = labels[:limit]

    reference = M.plain_infer(graph, batch)
    report = {
        "model": str(args.model),
        "preset": args.preset,
        "profile": args.profile,
        "inputs": int(limit),
        "plan_total": plan.total,
        "checks": {},
    }
    failed = False

    backends = ["sim", "ckks"] if args.backend == "both" else [args.backend]
    for kind in backends:
        backend = _make_backend(kind, params, args)
        result = infer_encrypted(backend, graph, batch, threads=args.threads)
        max_err = float(np.max(np.abs(result.logits - reference)))
        agree = float(np.mean(result.logits.argmax(1) == reference.argmax(1)))
        ledger_ok = tuple(result.executed) == plan.per_layer
        tol = 0.0 if kind == "sim" else 1e-2
        min_agree = 1.0 if kind == "sim" else 0.99
        ok = max_err <= tol and agree >= min_agree and ledger_ok
        check = {
            "max_abs_logit_error": max_err,
            "argmax_agreement": agree,
            "ledger_matches_plan": ledger_ok,
            "passed": ok,
        }
        if labels is not None:
            plain_acc = float(np.mean(reference.argmax(1) == labels))
            enc_acc = float(np.mean(result.logits.argmax(1) == labels))
            gap = abs(plain_acc - enc_acc)
            check["plaintext_accuracy"] = plain_acc
            check["encrypted_accuracy"] = enc_acc
            check["accuracy_gap_pp"] = 100.0 * gap
            ok = ok and gap <= 0.005
            check["passed"] = ok
        report["checks"][kind] = check
        failed = failed or not ok
        print(
            f"{kind}: max|logit err| {max_err:.3e}  argmax agreement "
            f"{agree:.4f}  ledger==plan {ledger_ok}  -> "
            f"{'ok' if check['passed'] else 'FAIL'}"
        )
        if labels is not None:
            print(
                f"      plaintext acc {check['plaintext_accuracy']:.4f}  "
                f"encrypted acc {check['encrypted_accuracy']:.4f}  "
                f"gap {check['accuracy_gap_pp']:.3f} pp"
            )

    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=1))
    return 1 if failed else 0


def cmd_report(args) -> int:
    ledger = LevelLedger.from_jsonl(Path(args.ledger).read_text())
    plan = M.LevelPlan.from_json(Path(args.plan).read_text())
    by_layer: dict[int, tuple[int, int]] = {}
    for label, before, after in ledger.entries:
        if not label.startswith("L") or ":" not in label:
            continue
        idx = int(label[1:].split(":", 1)[0])
        hi, lo = by_layer.get(idx, (before, after))
        by_layer[idx] = (max(hi, before), min(lo, after))
    print(f"{'layer':>5} {'planned':>8} {'executed':>9} {'match':>6}")
    all_ok = True
    for idx, planned in plan.per_layer:
        if idx in by_layer:
            hi, lo = by_layer[idx]
            executed = hi - lo
        else:
            executed = 0
        ok = executed == planned
        all_ok = all_ok and ok
        print(f"{idx:>5} {planned:>8} {executed:>9} {'ok' if ok else 'FAIL':>6}")
    total_exec = sum((hi - lo) for hi, lo in by_layer.values())
    print(f"total planned {plan.total}, executed {total_exec}")
    all_ok = all_ok and total_exec == plan.total
    return 0 if all_ok else 1


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hecnn",
        description="Leveled CKKS inference for CNNs with polynomial activations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="least-squares polynomial activation fit")
    p.add_argument("--activation", required=True,
                   choices=[k.value for k in ActivationKind])
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--range", required=True, help="lo:hi, e.g. -4:4")
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("--json", help="write the fit as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("optimize", help="fuse, fold, clamp, and plan a model")
    p.add_argument("--model", required=True)
    p.add_argument("--activation-file", help="fit JSON to install into activations")
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="write the level plan as JSON")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("keygen", help="generate keys for a parameter preset")
    p.add_argument("--preset", default=_env("preset", "mnist-deg4"),
                   choices=sorted(PRESET_TABLE))
    p.add_argument("--profile", default=_env("profile", "paper"),
                   choices=["paper", "test-insecure"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--keydir", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("infer", help="run a batch through the encrypted engine")
    p.add_argument("--model", required=True)
    p.add_argument("--backend", default=_env("backend", "ckks"),
                   choices=["ckks", "sim"])
    p.add_argument("--preset", default=_env("preset", "mnist-deg4"),
                   choices=sorted(PRESET_TABLE))
    p.add_argument("--profile", default=_env("profile", "paper"),
                   choices=["paper", "test-insecure"])
    p.add_argument("--input", required=True, help="batch file (see data module)")
    p.add_argument("--keys", default=_env("keys"), help="key directory (ckks)")
    p.add_argument("--threads", type=int, default=int(_env("threads", "1")))
    p.add_argument("--seed", type=int, default=None, help="encryption rng seed")
    p.add_argument("--out", required=True, help="logits JSON output")
    p.add_argument("--ledger", help="write the level ledger as JSON lines")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("verify", help="compare backends against the plaintext oracle")
    p.add_argument("--model", required=True)
    p.add_argument("--backend", default=_env("backend", "sim"),
                   choices=["sim", "ckks", "both"])
    p.add_argument("--preset", default=_env("preset", "mnist-deg4"),
                   choices=sorted(PRESET_TABLE))
    p.add_argument("--profile", default=_env("profile", "paper"),
                   choices=["paper", "test-insecure"])
    p.add_argument("--n-inputs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input", help="batch file instead of random inputs")
    p.add_argument("--images-idx", help="MNIST IDX image file (with --labels-idx)")
    p.add_argument("--labels-idx", help="MNIST IDX label file")
    p.add_argument("--cifar-bin", nargs="+", help="CIFAR-10 binary batch file(s)")
    p.add_argument("--keys", default=_env("keys"), help="key directory (ckks)")
    p.add_argument("--threads", type=int, default=int(_env("threads", "1")))
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="reconcile a ledger against a level plan")
    p.add_argument("--ledger", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HecnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
