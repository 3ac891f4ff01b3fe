"""Order-of-convergence diagnostics and asymptotic error constants."""

from __future__ import annotations

import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass

from fracroot import specfun
from fracroot.funcmodel import (
    DerivativeKind,
    FunctionModel,
    SingularityError,
    frac_derivative_order,
)
from fracroot.solvers import DERIVATIVE_ZERO_TOL, DerivativeZeroError, IterationTrace, principal_power

__all__ = [
    "InsufficientDataError",
    "ErrorConstants",
    "taylor_coeff_C",
    "error_constants",
    "acoc",
    "acoc_from_errors",
    "empirical_constant",
    "ROOT_DISPLACEMENT",
]

#: Shift along the real axis used when a derivative is singular at the root.
ROOT_DISPLACEMENT = 1e-4
_EPS = sys.float_info.epsilon


class InsufficientDataError(ValueError):
    """Raised when a trace has too few usable iterates for an order estimate."""


@dataclass(frozen=True)
class ErrorConstants:
    C2: complex
    C3: complex
    A: complex
    B: complex
    newton_constant: complex
    traub_constant: complex


def _derivative(f: FunctionModel, kind: DerivativeKind, order: float, x: complex) -> complex:
    return complex(frac_derivative_order(f, kind, order, 0.0, x))


def _has_rl_pole(f: FunctionModel, kind: DerivativeKind) -> bool:
    # constants (and the constant part of exp terms) give R-L a (x-a)^(-mu) pole
    return kind is DerivativeKind.RIEMANN_LIOUVILLE and (
        bool(f.exp_terms) or any(t.exponent == 0 for t in f.power_terms)
    )


def _eval_point(f: FunctionModel, kind: DerivativeKind, orders, root: complex) -> complex:
    """The root, or the root shifted by ROOT_DISPLACEMENT at an R-L constant-term pole."""
    try:
        for mu in orders:
            v = _derivative(f, kind, mu, root)
            if not math.isfinite(abs(v)):
                raise SingularityError(f"derivative of order {mu} is not finite at {root}")
        return complex(root)
    except SingularityError:
        if not _has_rl_pole(f, kind):
            raise
        return complex(root) + ROOT_DISPLACEMENT


def taylor_coeff_C(
    f: FunctionModel,
    root: complex,
    alpha: float,
    j: int,
    kind: DerivativeKind = DerivativeKind.CAPUTO,
) -> complex:
    """``C_j = Gamma(a+1)/Gamma(j a+1) * D^{j a} f(x*) / D^a f(x*)`` (base 0)."""
    if j < 2:
        raise ValueError(f"j must be >= 2: {j}")
    x_star = _eval_point(f, kind, (alpha, j * alpha), root)
    d1 = _derivative(f, kind, alpha, x_star)
    if abs(d1) < DERIVATIVE_ZERO_TOL:
        raise DerivativeZeroError(f"D^a f vanishes at {x_star}")
    dj = _derivative(f, kind, j * alpha, x_star)
    ratio = specfun.gamma(alpha + 1.0) / specfun.gamma(j * alpha + 1.0)
    return ratio * dj / d1


def error_constants(
    f: FunctionModel,
    root: complex,
    alpha: float,
    kind: DerivativeKind = DerivativeKind.CAPUTO,
) -> ErrorConstants:
    """Asymptotic constants of the ``*FN2`` and ``*FT`` error equations.

    With ``G1 = Gamma(a+1)``, ``G2 = Gamma(2a+1)``, ``G3 = Gamma(3a+1)``:

    * Newton: ``e_{k+1} ~ (G2 - G1^2)/(a G1^2) C2 e_k^(a+1)``
    * Traub: ``e_{k+1} ~ [B/(a A^(1-1/a) C2^(a-1)) + (A G2/G1^2 - B)/a] e_k^(2a+1)``

    All fractional powers use the principal branch.
    """
    a = alpha
    c2 = taylor_coeff_C(f, root, a, 2, kind)
    c3 = taylor_coeff_C(f, root, a, 3, kind)
    g1 = specfun.gamma(a + 1.0).real
    g2 = specfun.gamma(2.0 * a + 1.0).real
    g3 = specfun.gamma(3.0 * a + 1.0).real
    k = (g2 - g1**2) / (a * g1**2)

    newton = k * c2
    kc2 = k * c2
    big_a = principal_power(kc2, a)
    inner = (1.0 / a) * ((g3 - g2 * g1) / g2 * c3 + g2 * (g1**2 - g2) / g1**3 * c2**2)
    inner += (1.0 / (2.0 * a)) * (1.0 - 1.0 / a) * ((g1**2 - g2) ** 2 / g1**4) * c2**2
    big_b = a * _pow(kc2, a - 1.0) * inner
    traub = big_b / (a * _pow(big_a, 1.0 - 1.0 / a) * _pow(c2, a - 1.0))
    traub += (1.0 / a) * (big_a * g2 / g1**2 - big_b)
    return ErrorConstants(c2, c3, big_a, big_b, newton, traub)


def _pow(z: complex, r: float) -> complex:
    # z^0 = 1 even for z = 0 (the alpha = 1 reductions rely on it)
    return 1.0 + 0j if r == 0.0 else principal_power(z, r)


def _noise_floor(root: complex) -> float:
    return 10.0 * _EPS * (1.0 + abs(root))


def acoc_from_errors(errors: Sequence[float], floor: float = 0.0) -> float:
    """Order estimate ``ln(e_{k+1}/e_k) / ln(e_k/e_{k-1})`` from an error sequence.

    Uses the last triple with strictly decreasing errors above ``floor``.
    """
    errs = [float(e) for e in errors]
    for end in range(len(errs) - 1, 1, -1):
        e0, e1, e2 = errs[end - 2], errs[end - 1], errs[end]
        if min(e0, e1, e2) > floor and e0 > e1 > e2:
            return math.log(e2 / e1) / math.log(e1 / e0)
    raise InsufficientDataError("no admissible triple of strictly decreasing errors")


def acoc(trace: IterationTrace, root: complex) -> float:
    """ACOC of a solver trace against a known root."""
    if len(trace.iterates) < 4:
        raise InsufficientDataError(f"need at least 4 iterates, got {len(trace.iterates)}")
    errors = [abs(x - root) for x in trace.iterates]
    return acoc_from_errors(errors, _noise_floor(root))


def empirical_constant(trace: IterationTrace, root: complex, order: float, window: int = 3) -> float:
    """Geometric mean of ``|e_{k+1}| / |e_k|^order`` over the last ``window`` usable steps.

    A step is usable when both errors sit above the noise floor.
    """
    floor = _noise_floor(root)
    errors = [abs(x - root) for x in trace.iterates]
    logs = []
    for end in range(len(errors) - 1, 0, -1):
        if errors[end] > floor and errors[end - 1] > floor:
            logs.append(math.log(errors[end]) - order * math.log(errors[end - 1]))
            if len(logs) == window:
                break
    if not logs:
        raise InsufficientDataError("no step with errors above the noise floor")
    return math.exp(math.fsum(logs) / len(logs))
