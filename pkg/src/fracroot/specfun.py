"""Complex special functions: Gamma, log-Gamma, binomial and Mittag-Leffler.

Everything here works on Python scalars (``complex``/``float``). The array
variants used by the hot iteration loops live at the bottom of the module and
share the same coefficients.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PoleError",
    "ConvergenceBudgetExceeded",
    "DomainError",
    "MLParams",
    "gamma",
    "ln_gamma",
    "rgamma",
    "binom_general",
    "mittag_leffler",
    "mittag_leffler_1b",
    "Z_MAX",
]


class PoleError(ArithmeticError):
    """Raised when Gamma is evaluated at (or numerically on) a pole."""


class ConvergenceBudgetExceeded(ArithmeticError):
    """Raised when a truncated series hits its term cap before its tail bound."""


class DomainError(ValueError):
    """Raised when an argument lies outside the supported domain."""


# Lanczos approximation with g = 7 and 15 terms, obtained by interpolating the
# exact Lanczos sum at z = 0, ..., 14 in 60-digit arithmetic
# (see tools/lanczos_coefficients.py).
LANCZOS_G = 7.0
LANCZOS_COEFFS = (
    1.0000000000000000074,
    676.52036812188353721,
    -1259.1392167222817739,
    771.32342877543770652,
    -176.61502914598978109,
    12.507343225028745327,
    -0.13857103233328224313,
    0.000010091126294731372862,
    -3.4345842252531046081e-7,
    8.3593378357125965382e-7,
    -8.5977556445396087554e-7,
    6.0464973384949281078e-7,
    -2.9113287278906137139e-7,
    8.5891293135682268559e-8,
    -1.1646065639867851529e-8,
)

POLE_TOL = 1e-12
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

#: Largest |z| accepted by the Mittag-Leffler evaluators.
Z_MAX = 250.0
# rounding slack: |z|^2 at |z| = 10 lands an ulp above 100
Z_LIMIT = Z_MAX * (1.0 + 1e-14)
ML_MAX_TERMS = 10_000


def _check_pole(z: complex) -> None:
    if z.real <= 0.5 and abs(z.imag) < POLE_TOL:
        n = round(z.real)
        if n <= 0 and abs(z.real - n) < POLE_TOL:
            raise PoleError(f"Gamma has a pole at {n}")


def _lanczos_sum(z: complex) -> complex:
    # z is already shifted by -1
    acc = complex(LANCZOS_COEFFS[0])
    for k in range(1, len(LANCZOS_COEFFS)):
        acc += LANCZOS_COEFFS[k] / (z + k)
    return acc


def gamma(z: complex | float) -> complex:
    """Complex Gamma function.

    Uses the Lanczos approximation for ``Re z >= 1/2`` and the reflection
    formula below that. Raises :class:`PoleError` within ``1e-12`` of a
    nonpositive integer.
    """
    z = complex(z)
    _check_pole(z)
    if z.imag == 0.0 and z.real == int(z.real) and 1.0 <= z.real <= 171.0:
        # exact at positive integers so integer-order formulas reduce exactly
        return complex(math.factorial(int(z.real) - 1))
    if z.real < 0.5:
        return math.pi / (cmath.sin(math.pi * z) * gamma(1.0 - z))

    z -= 1.0
    t = z + LANCZOS_G + 0.5
    return _SQRT_2PI * cmath.exp((z + 0.5) * cmath.log(t) - t) * _lanczos_sum(z)


def ln_gamma(z: complex | float) -> complex:
    """Principal branch of log-Gamma, continuous away from the negative real axis.

    For ``Re z < 1/2`` the argument is shifted up with the recurrence
    ``lnG(z) = lnG(z + n) - sum(log(z + k))`` which keeps the branch consistent
    with the analytic continuation from ``+inf``.
    """
    z = complex(z)
    _check_pole(z)
    shift = 0.0j
    while z.real < 0.5:
        shift += cmath.log(z)
        z += 1.0

    w = z - 1.0
    t = w + LANCZOS_G + 0.5
    return _LOG_SQRT_2PI + (w + 0.5) * cmath.log(t) - t + cmath.log(_lanczos_sum(w)) - shift


def rgamma(z: complex | float) -> complex:
    """Reciprocal Gamma; zero at the poles of Gamma."""
    z = complex(z)
    try:
        return 1.0 / gamma(z)
    except PoleError:
        return 0.0j


def binom_general(r: float, k: int) -> float:
    """Generalized binomial coefficient ``Gamma(r+1) / (k! Gamma(r-k+1))``.

    Evaluated as the falling-factorial product ``r (r-1) ... (r-k+1) / k!``,
    which equals the Gamma ratio wherever that is defined and takes the
    reciprocal-Gamma limit (zero) when ``r - k + 1`` is a pole.
    """
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer: {k!r}")
    acc = 1.0
    for j in range(int(k)):
        acc *= (r - j) / (j + 1)
    return acc


@dataclass(frozen=True)
class MLParams:
    """Parameters ``(a, b)`` of the two-parameter Mittag-Leffler function."""

    a: float = 1.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.a <= 2.0:
            raise DomainError(f"Mittag-Leffler parameter a must lie in (0, 2]: {self.a}")
        if not math.isfinite(self.b):
            raise DomainError(f"Mittag-Leffler parameter b must be finite: {self.b}")


def _ml_series(a: float, b: float, z: complex) -> tuple[complex, float]:
    """Taylor series in double precision; returns the sum and sum of |terms|."""
    log_z = cmath.log(z)
    total = 0.0j
    absolute = 0.0
    for k in range(ML_MAX_TERMS):
        arg = a * k + b
        try:
            term = cmath.exp(k * log_z - ln_gamma(arg))
        except PoleError:
            term = 0.0j
        total += term
        absolute += abs(term)
        # the terms decay monotonically once k*a + b exceeds |z|^(1/a)
        if arg > 1.0 and abs(term) < 1e-16 * (1.0 + abs(total)) and k * a + b > abs(z) ** (1.0 / a):
            return total, absolute
    raise ConvergenceBudgetExceeded(
        f"Mittag-Leffler series did not converge in {ML_MAX_TERMS} terms (z={z})"
    )


def _ml_series_mp(a: float, b: float, z: complex, digits: int) -> complex:
    import mpmath

    with mpmath.workdps(digits):
        zz = mpmath.mpc(z.real, z.imag)
        aa = mpmath.mpf(a)
        bb = mpmath.mpf(b)
        total = mpmath.mpc(0)
        eps = mpmath.mpf(10) ** (-digits)
        for k in range(ML_MAX_TERMS):
            term = zz**k * mpmath.rgamma(aa * k + bb)
            total += term
            if abs(term) < eps * (1 + abs(total)) and a * k + b > abs(z) ** (1.0 / a):
                return complex(total)
    raise ConvergenceBudgetExceeded(
        f"Mittag-Leffler series did not converge in {ML_MAX_TERMS} terms (z={z})"
    )


def mittag_leffler(p: MLParams, z: complex | float) -> complex:
    """Two-parameter Mittag-Leffler function ``E_{a,b}(z) = sum z^k / Gamma(a k + b)``.

    The Taylor series is summed with log-Gamma based terms. When the terms
    cancel so badly that double precision cannot deliver ~13 digits (large
    ``|z|`` away from the positive real axis), the same series is re-summed
    in extended precision.
    """
    z = complex(z)
    if abs(z) > Z_LIMIT:
        raise DomainError(f"|z| = {abs(z):g} exceeds Z_MAX = {Z_MAX:g}")
    if z == 0:
        return rgamma(p.b)

    total, absolute = _ml_series(p.a, p.b, z)
    # expected relative rounding error of the double-precision sum
    if absolute * 1e-16 <= 1e-13 * abs(total):
        return total

    # the double-precision total may itself be noise, so re-estimate the loss
    # from the extended-precision value until the working precision covers it
    digits = 0
    value = total
    while True:
        loss = math.log10(max(absolute, 1e-300) / max(abs(value), 1e-300))
        need = int(20 + max(loss, 0.0))
        if need <= digits:
            return value
        digits = need
        value = _ml_series_mp(p.a, p.b, z, digits=digits)


# ---------------------------------------------------------------------------
# Array evaluation of E_{1,b} for the derivative closed forms.
#
# For b > 2 the integral representation
#     E_{1,b}(z) = 1/Gamma(b-1) * int_0^1 exp(z (1 - t)) t^(b-2) dt
# has a bounded weight and is integrated with Gauss-Jacobi rules; smaller b is
# lifted with
#     E_{1,b}(z) = 1/Gamma(b) + z E_{1,b+1}(z).
# (Integrating b in (1, 2] directly loses accuracy as b -> 1 where the weight
# becomes nearly non-integrable.)
# The series above is accurate only for moderate |z| (it cancels
# catastrophically for |z| ~ 30 on the imaginary axis, which is exactly the
# regime of sin(10 x)).

#: (upper |z| bound, number of Jacobi nodes); the rule is chosen per element
#: so that results never depend on what else is in the batch.
_JACOBI_BUCKETS = ((4.0, 16), (12.0, 20), (28.0, 24), (55.0, 36), (100.0, 52), (Z_LIMIT, 104))


@functools.lru_cache(maxsize=256)
def _jacobi_rule(b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    from scipy.special import roots_jacobi

    x, w = roots_jacobi(n, 0.0, b - 2.0)
    t = 0.5 * (1.0 + x)
    w = w * 2.0 ** (-(b - 1.0)) * rgamma(b - 1.0).real
    # nodes as 1 - t so the integrand is exp(z * node)
    return np.ascontiguousarray(1.0 - t), np.ascontiguousarray(w)


def _ml_1b_jacobi(b: float, z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape, dtype=complex)
    mag = np.abs(z)
    lower = -1.0
    for upper, n in _JACOBI_BUCKETS:
        sel = (mag > lower) & (mag <= upper)
        lower = upper
        if not sel.any():
            continue
        nodes, weights = _jacobi_rule(float(b), n)
        zs = z[sel]
        # explicit accumulation: the rounding of each element is independent of
        # the batch it happens to be evaluated in
        acc = np.zeros(zs.shape, dtype=complex)
        for node, weight in zip(nodes, weights):
            acc += weight * np.exp(zs * node)
        out[sel] = acc
    return out


def mittag_leffler_1b(b: float, z: np.ndarray | complex) -> np.ndarray:
    """Vectorised ``E_{1,b}(z)`` for real ``b``; NaN where ``|z| > Z_MAX``.

    Non-finite inputs propagate as NaN rather than raising so the iteration
    engine can flag the affected cells.
    """
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    out = np.full(flat.shape, np.nan + 0j)
    ok = np.isfinite(flat) & (np.abs(flat) <= Z_LIMIT)
    zz = flat[ok]

    lifts = 0
    top = float(b)
    while top <= 2.0:
        top += 1.0
        lifts += 1
    value = _ml_1b_jacobi(top, zz)
    for j in range(lifts):
        bj = top - 1.0 - j
        value = rgamma(bj).real + zz * value

    out[ok] = value
    return out.reshape(z.shape)
