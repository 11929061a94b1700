"""Symmetric uniformly-convex bond potentials.

A potential is an even C^2 function V with second derivative pinned in a
window  0 < c_minus <= V''(x) <= c_plus < infinity; the ratio
kappa = c_plus / c_minus is the elliptic contrast.  The quadratic case
V(x) = x^2 / 2 (kappa = 1) makes the field Gaussian.

Built-in families (a >= 0):

    quadratic         x^2/2                      c- = c+ = 1
    quad_logcosh(a)   x^2/2 + a*log(cosh x)      V'' = 1 + a*sech^2(x) in [1, 1+a]
    quad_sqrt(a)      x^2/2 + a*sqrt(1+x^2)      V'' = 1 + a*(1+x^2)^(-3/2) in (1, 1+a]

All callables are numpy-vectorized and numerically stable for large |x|
(log cosh and sech^2 are evaluated through exponentials of negative
arguments only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Potential",
    "PotentialError",
    "ValidationReport",
    "builtin",
    "validate",
    "BUILTIN_NAMES",
]

BUILTIN_NAMES = ("quadratic", "quad_logcosh", "quad_sqrt")

_LN2 = math.log(2.0)


class PotentialError(ValueError):
    """Invalid potential or failed validation."""


@dataclass(frozen=True)
class Potential:
    """A bond potential with certified convexity window [c_minus, c_plus].

    ``grad_hess``, when provided, returns (V', V'') in one call sharing
    transcendentals; it must agree with ``grad`` and ``hess`` to rounding
    error.
    """

    name: str
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    c_minus: float
    c_plus: float
    params: dict = field(default_factory=dict)
    grad_hess: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if not (0.0 < self.c_minus <= self.c_plus < math.inf):
            raise PotentialError(
                f"convexity window must satisfy 0 < c_minus <= c_plus < inf, "
                f"got [{self.c_minus}, {self.c_plus}]"
            )

    @property
    def contrast(self) -> float:
        """Elliptic contrast kappa = c_plus / c_minus."""
        return self.c_plus / self.c_minus

    @property
    def is_quadratic(self) -> bool:
        return self.name == "quadratic"


def _log_cosh(x):
    # log cosh x = |x| + log1p(exp(-2|x|)) - log 2, overflow-free
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - _LN2


def _sech2(x):
    # sech^2 x = 4 e^{-2|x|} / (1 + e^{-2|x|})^2
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def builtin(name: str, a: float | None = None) -> Potential:
    """Construct a built-in potential by name.

    ``a`` is the perturbation strength for quad_logcosh / quad_sqrt and must
    be >= 0 (a negative a would break the upper convexity bound).
    """
    if name == "quadratic":
        if a not in (None, 0, 0.0):
            raise PotentialError("quadratic takes no parameter")
        return Potential(
            name="quadratic",
            eval=lambda x: 0.5 * np.square(x),
            grad=lambda x: np.asarray(x, dtype=float) + 0.0,
            hess=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            c_minus=1.0,
            c_plus=1.0,
        )
    if name in ("quad_logcosh", "quad_sqrt"):
        if a is None:
            raise PotentialError(f"{name} requires parameter a >= 0")
        a = float(a)
        if a < 0:
            raise PotentialError(f"{name} requires a >= 0, got {a}")
        if name == "quad_logcosh":

            def _gh_logcosh(x, a=a):
                t = np.tanh(x)
                return x + a * t, 1.0 + a * (1.0 - t * t)  # sech^2 = 1 - tanh^2

            return Potential(
                name="quad_logcosh",
                eval=lambda x, a=a: 0.5 * np.square(x) + a * _log_cosh(x),
                grad=lambda x, a=a: x + a * np.tanh(x),
                hess=lambda x, a=a: 1.0 + a * _sech2(x),
                c_minus=1.0,
                c_plus=1.0 + a,
                params={"a": a},
                grad_hess=_gh_logcosh,
            )

        def _gh_sqrt(x, a=a):
            s = 1.0 / np.sqrt(1.0 + np.square(x))
            return x + a * x * s, 1.0 + a * s * s * s

        return Potential(
            name="quad_sqrt",
            eval=lambda x, a=a: 0.5 * np.square(x) + a * np.sqrt(1.0 + np.square(x)),
            grad=lambda x, a=a: x + a * x / np.sqrt(1.0 + np.square(x)),
            hess=lambda x, a=a: 1.0 + a * (1.0 + np.square(x)) ** -1.5,
            c_minus=1.0,
            c_plus=1.0 + a,
            params={"a": a},
            grad_hess=_gh_sqrt,
        )
    raise PotentialError(f"unknown potential {name!r}; expected one of {BUILTIN_NAMES}")


@dataclass
class ValidationReport:
    """Worst-case probe results for a potential on a grid."""

    name: str
    grid_lo: float
    grid_hi: float
    grid_step: float
    max_asymmetry: float
    worst_asymmetry_x: float
    min_hess: float
    max_hess: float
    worst_hess_x: float
    max_grad_fd_error: float
    max_hess_fd_error: float
    passed: bool


def validate(
    p: Potential,
    lo: float = -50.0,
    hi: float = 50.0,
    step: float = 0.01,
    tol: float = 1e-7,
) -> ValidationReport:
    """Probe symmetry, the convexity window, and derivative consistency.

    The grid must cover at least [-50, 50].  Raises PotentialError on any
    violation (with the offending x); returns the report on success.
    """
    if lo > -50.0 or hi < 50.0:
        raise PotentialError("validation grid must cover at least [-50, 50]")
    x = np.arange(lo, hi + step / 2, step)

    v, g, h = p.eval(x), p.grad(x), p.hess(x)

    asym = np.abs(v - p.eval(-x))
    i = int(np.argmax(asym))
    max_asym, worst_asym_x = float(asym[i]), float(x[i])

    viol = np.maximum(p.c_minus - h, h - p.c_plus)
    j = int(np.argmax(viol))
    worst_hess_x = float(x[j])

    # Derivative consistency by central differences, O(h^2).
    fd_h = 1e-4
    g_fd = (p.eval(x + fd_h) - p.eval(x - fd_h)) / (2 * fd_h)
    h_fd = (p.grad(x + fd_h) - p.grad(x - fd_h)) / (2 * fd_h)
    scale = 1.0 + np.abs(g)
    grad_err = float(np.max(np.abs(g_fd - g) / scale))
    hess_err = float(np.max(np.abs(h_fd - h) / (1.0 + np.abs(h))))

    report = ValidationReport(
        name=p.name,
        grid_lo=lo,
        grid_hi=hi,
        grid_step=step,
        max_asymmetry=max_asym,
        worst_asymmetry_x=worst_asym_x,
        min_hess=float(h.min()),
        max_hess=float(h.max()),
        worst_hess_x=worst_hess_x,
        max_grad_fd_error=grad_err,
        max_hess_fd_error=hess_err,
        passed=True,
    )

    if max_asym > tol * (1.0 + np.abs(v[i])):
        report.passed = False
        raise PotentialError(f"symmetry violation {max_asym:.3e} at x={worst_asym_x}", report)
    if float(viol[j]) > tol:
        report.passed = False
        raise PotentialError(
            f"convexity window [{p.c_minus}, {p.c_plus}] violated by {float(viol[j]):.3e} "
            f"at x={worst_hess_x}",
            report,
        )
    # Central differences at h=1e-4 should agree to ~h^2 for these smooth families.
    if grad_err > 1e-5 or hess_err > 1e-5:
        report.passed = False
        raise PotentialError(
            f"finite-difference mismatch: grad {grad_err:.3e}, hess {hess_err:.3e}", report
        )
    return report
