"""Activation functions and their least-squares polynomial approximations.

Swish and ReLU minus x/2 are even on symmetric ranges, so their fits carry
an exact 0.5 linear coefficient and vanishing odd terms above degree one;
tiny fitted coefficients below 1e-8 are snapped to exact zeros so that
structure is visible in the result.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .errors import SingularFitError

COEFF_SNAP_EPS = 1e-8


class ActivationKind(enum.Enum):
    SWISH = "swish"
    RELU = "relu"
    SQUARE = "square"
    IDENTITY = "identity"


@dataclass(frozen=True)
class FitSpec:
    """What to fit: an activation, a degree, a closed range, and a grid size."""

    kind: ActivationKind
    degree: int
    range: tuple[float, float]
    samples: int = 1001

    def __post_init__(self):
        lo, hi = self.range
        if not lo < hi:
            raise ValueError("range must satisfy lo < hi")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.samples < self.degree + 1:
            raise ValueError("samples must be at least degree + 1")


@dataclass(frozen=True)
class Polynomial:
    """Real coefficients in ascending order; coeffs[i] multiplies x**i."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("a polynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return self.coeffs[-1]

    def scaled(self, factor: float) -> "Polynomial":
        return Polynomial(tuple(c * factor for c in self.coeffs))

    def trimmed(self) -> "Polynomial":
        """Drop trailing zero coefficients (an explicit truncation)."""
        cs = list(self.coeffs)
        while len(cs) > 1 and cs[-1] == 0.0:
            cs.pop()
        return Polynomial(tuple(cs))


def evaluate_activation(kind: ActivationKind, x):
    """Exact reference value of the named activation; vectorized over x."""
    x = np.asarray(x, dtype=np.float64)
    if kind is ActivationKind.SWISH:
        return x / (1.0 + np.exp(-x))
    if kind is ActivationKind.RELU:
        return np.maximum(0.0, x)
    if kind is ActivationKind.SQUARE:
        return x * x
    return x.copy()


def eval_poly(p: Polynomial, x):
    """Horner evaluation of p at x (scalar or array)."""
    x = np.asarray(x, dtype=np.float64)
    acc = np.full_like(x, p.coeffs[-1])
    for c in p.coeffs[-2::-1]:
        acc = acc * x + c
    return acc if acc.ndim else float(acc)


def fit_polynomial(spec: FitSpec) -> Polynomial:
    """Unweighted least-squares fit on a uniform grid over the monomial basis."""
    lo, hi = spec.range
    x = np.linspace(lo, hi, spec.samples)
    y = evaluate_activation(spec.kind, x)
    design = np.vander(x, spec.degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < spec.degree + 1:
        raise SingularFitError(
            f"normal system is rank deficient ({rank} < {spec.degree + 1})"
        )
    coeffs[np.abs(coeffs) < COEFF_SNAP_EPS] = 0.0
    return Polynomial(tuple(coeffs))


def max_fit_error(p: Polynomial, spec: FitSpec, oversample: int = 10) -> float:
    """Max |p(x) - activation(x)| on a dense grid at least 10x the fit grid."""
    lo, hi = spec.range
    x = np.linspace(lo, hi, max(2, spec.samples * oversample))
    return float(np.max(np.abs(eval_poly(p, x) - evaluate_activation(spec.kind, x))))


@dataclass(frozen=True)
class MonicEvalPlan:
    """Depth-minimal evaluation schedule for a monic polynomial.

    kind 'quartic_factor' evaluates (x^2 + a x + b)(x^2 - a x + g), an exact
    factorization of x^4 + b2 x^2 + c1 x + c0 that costs two ciphertext
    multiplications; 'quartic_even' covers c1 == 0 via (x^2 + h)^2 + k.
    Quadratics cost one multiplication, lower degrees none.
    """

    kind: str  # const | linear | quadratic | quartic_factor | quartic_even
    constants: tuple[float, ...]

    @property
    def depth(self) -> int:
        return {"const": 0, "linear": 0, "quadratic": 1,
                "quartic_factor": 2, "quartic_even": 2}[self.kind]


def _split_monic_quartic(b2: float, c1: float, c0: float):
    """(alpha, beta, gamma) with (x^2+ax+b)(x^2-ax+g) = x^4 + b2 x^2 + c1 x + c0."""
    roots = np.roots([1.0, 2.0 * b2, b2 * b2 - 4.0 * c0, -(c1 * c1)])
    for r in sorted(roots, key=lambda z: -z.real):
        if abs(r.imag) > 1e-9 * max(1.0, abs(r)) or r.real <= 0:
            continue
        u = float(r.real)
        alpha = float(np.sqrt(u))
        beta = (b2 + u - c1 / alpha) / 2.0
        gamma = (b2 + u + c1 / alpha) / 2.0
        rebuilt = np.array([beta * gamma, alpha * (gamma - beta), beta + gamma - u, 0.0, 1.0])
        target = np.array([c0, c1, b2, 0.0, 1.0])
        if np.allclose(rebuilt, target, rtol=1e-7, atol=1e-9 * max(1.0, np.abs(target).max())):
            return alpha, beta, gamma
    raise ValueError("monic quartic admits no real depth-2 factorization")


def monic_eval_plan(p: Polynomial) -> MonicEvalPlan:
    """Schedule for a monic polynomial of degree 0, 1, 2, or 4 (zero cubic term)."""
    p = p.trimmed()
    deg = p.degree
    c = p.coeffs
    if deg == 0:
        return MonicEvalPlan("const", (c[0],))
    if c[-1] != 1.0:
        raise ValueError(
            f"degree-{deg} polynomial has leading coefficient {c[-1]:g}; "
            "fold it to monic form first"
        )
    if deg == 1:
        return MonicEvalPlan("linear", (c[0],))
    if deg == 2:
        return MonicEvalPlan("quadratic", (c[0], c[1]))
    if deg == 4:
        if c[3] != 0.0:
            raise ValueError("depth-2 quartic schedule requires a zero cubic term")
        c0, c1, b2 = c[0], c[1], c[2]
        if c1 == 0.0:
            half = b2 / 2.0
            return MonicEvalPlan("quartic_even", (half, c0 - half * half))
        return MonicEvalPlan("quartic_factor", _split_monic_quartic(b2, c1, c0))
    raise ValueError(f"no leveled schedule for degree {deg}")


def eval_plan_float(plan: MonicEvalPlan, x):
    """Evaluate the schedule in plain floating point, same operation order
    as the homomorphic path (the simulator reproduces this bit for bit)."""
    x = np.asarray(x, dtype=np.float64)
    if plan.kind == "const":
        return (x - x) + plan.constants[0]
    if plan.kind == "linear":
        return x + plan.constants[0]
    if plan.kind == "quadratic":
        c0, c1 = plan.constants
        y = x * x
        if c1 != 0.0:
            y = y + c1 * x
        if c0 != 0.0:
            y = y + c0
        return y
    if plan.kind == "quartic_even":
        half, k = plan.constants
        t = x * x
        if half != 0.0:
            t = t + half
        y = t * t
        if k != 0.0:
            y = y + k
        return y
    alpha, beta, gamma = plan.constants
    sq = x * x
    ax = alpha * x
    q1 = (sq + ax) + beta
    q2 = (sq - ax) + gamma
    return q1 * q2


def activation_depth(p: Polynomial) -> int:
    """Multiplicative levels an activation polynomial costs on ciphertexts.

    Monic polynomials follow the scheduled depth; a non-unit leading
    coefficient costs one extra plaintext multiplication.
    """
    p = p.trimmed()
    deg = p.degree
    depth = 0
    if deg >= 2:
        depth += 1
    if deg >= 3:
        depth += 1
    if deg >= 1 and p.leading != 1.0:
        depth += 1
    return depth


def fit_to_json(spec: FitSpec, p: Polynomial) -> str:
    return json.dumps(
        {
            "kind": spec.kind.value,
            "degree": spec.degree,
            "range": [spec.range[0], spec.range[1]],
            "samples": spec.samples,
            "coeffs": list(p.coeffs),
            "max_error": max_fit_error(p, spec),
        },
        indent=2,
    )


def poly_from_json(text: str) -> Polynomial:
    d = json.loads(text)
    return Polynomial(tuple(d["coeffs"]))
