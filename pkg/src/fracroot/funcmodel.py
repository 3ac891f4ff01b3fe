"""Function models and their classical / fractional derivatives.

A :class:`FunctionModel` is a finite sum of complex power terms
``c (x - x_ref)^p`` and exponential terms ``d exp(lam x)``. For this class the
Caputo and Riemann-Liouville derivatives with lower terminal ``a`` have closed
forms (power rule and Mittag-Leffler resummation), which is what the iterative
solvers use. :func:`frac_derivative_quadrature` evaluates the defining singular
integrals directly and serves as an independent check on real arguments.
"""

from __future__ import annotations

import cmath
import enum
import json
import math
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from fracroot import specfun

__all__ = [
    "DerivativeKind",
    "PowerTerm",
    "ExpTerm",
    "FunctionModel",
    "FracSpec",
    "DerivativeOperator",
    "BranchPointError",
    "SingularityError",
    "BaseMismatchError",
    "NonIntegerExponentError",
    "ExpBaseError",
    "QuadratureError",
    "eval_f",
    "eval",
    "classical_derivative",
    "frac_derivative",
    "frac_derivative_order",
    "frac_derivative_quadrature",
    "recenter_powers",
    "builtin",
    "BUILTIN_NAMES",
    "BUILTIN_ROOTS",
    "load_function",
]


class BranchPointError(ValueError):
    """Raised when a power term would be evaluated as 0^p with p < 0."""


class SingularityError(ArithmeticError):
    """Raised when a derivative is singular at the requested point."""


class BaseMismatchError(ValueError):
    """Raised when the model's reference point differs from the derivative base."""


class NonIntegerExponentError(ValueError):
    """Raised when a binomial re-expansion needs integer exponents."""


class ExpBaseError(ValueError):
    """Raised when exponential terms are combined with a nonzero base point."""


class QuadratureError(ArithmeticError):
    """Raised when the adaptive quadrature oracle misses its tolerance."""


class DerivativeKind(enum.Enum):
    CAPUTO = "caputo"
    RIEMANN_LIOUVILLE = "riemann-liouville"


@dataclass(frozen=True)
class PowerTerm:
    coeff: complex
    exponent: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.exponent) and self.exponent >= 0):
            raise ValueError(f"exponent must be finite and >= 0: {self.exponent}")
        c = complex(self.coeff)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ValueError(f"coefficient must be finite: {self.coeff}")
        object.__setattr__(self, "coeff", c)
        object.__setattr__(self, "exponent", float(self.exponent))


@dataclass(frozen=True)
class ExpTerm:
    coeff: complex
    rate: complex

    def __post_init__(self) -> None:
        for name in ("coeff", "rate"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError(f"{name} must be finite: {v}")
            object.__setattr__(self, name, v)


def _merge_powers(terms: Iterable[PowerTerm]) -> tuple[PowerTerm, ...]:
    merged: dict[float, complex] = {}
    for t in terms:
        merged[t.exponent] = merged.get(t.exponent, 0j) + t.coeff
    return tuple(PowerTerm(c, p) for p, c in sorted(merged.items(), reverse=True))


@dataclass(frozen=True)
class FunctionModel:
    """Sum of power terms around ``reference_point`` plus exponential terms.

    Power terms that share an exponent are merged at construction.
    """

    power_terms: tuple[PowerTerm, ...] = ()
    exp_terms: tuple[ExpTerm, ...] = ()
    reference_point: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "power_terms", _merge_powers(self.power_terms))
        object.__setattr__(self, "exp_terms", tuple(self.exp_terms))
        object.__setattr__(self, "reference_point", float(self.reference_point))
        if not self.power_terms and not self.exp_terms:
            raise ValueError("a function model needs at least one term")

    @property
    def has_fractional_exponents(self) -> bool:
        return any(t.exponent != int(t.exponent) for t in self.power_terms)

    def __call__(self, x):
        return eval_f(self, x)

    def __add__(self, other: FunctionModel) -> FunctionModel:
        if self.reference_point != other.reference_point:
            raise BaseMismatchError("cannot add models with different reference points")
        return FunctionModel(
            self.power_terms + other.power_terms,
            self.exp_terms + other.exp_terms,
            self.reference_point,
        )

    def scale(self, c: complex) -> FunctionModel:
        return FunctionModel(
            tuple(PowerTerm(c * t.coeff, t.exponent) for t in self.power_terms),
            tuple(ExpTerm(c * t.coeff, t.rate) for t in self.exp_terms),
            self.reference_point,
        )

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "reference_point": self.reference_point,
            "power_terms": [
                {"re": t.coeff.real, "im": t.coeff.imag, "p": t.exponent} for t in self.power_terms
            ],
            "exp_terms": [
                {
                    "coeff_re": t.coeff.real,
                    "coeff_im": t.coeff.imag,
                    "rate_re": t.rate.real,
                    "rate_im": t.rate.imag,
                }
                for t in self.exp_terms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> FunctionModel:
        powers = [
            PowerTerm(complex(t.get("re", 0.0), t.get("im", 0.0)), t["p"])
            for t in data.get("power_terms", [])
        ]
        exps = [
            ExpTerm(
                complex(t.get("coeff_re", 0.0), t.get("coeff_im", 0.0)),
                complex(t.get("rate_re", 0.0), t.get("rate_im", 0.0)),
            )
            for t in data.get("exp_terms", [])
        ]
        return cls(tuple(powers), tuple(exps), data.get("reference_point", 0.0), name=name)


@dataclass(frozen=True)
class FracSpec:
    kind: DerivativeKind
    alpha: float
    base: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1]: {self.alpha}")


# ---------------------------------------------------------------------------
# array kernels


def _shift(x: np.ndarray, ref: float) -> np.ndarray:
    # + 0.0 turns signed zeros into +0 so Arg stays in (-pi, pi]
    return (x - ref) + 0.0


def _log(s: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(s)


def _falling(p: float, n: int) -> float:
    acc = 1.0
    for j in range(n):
        acc *= p - j
    return acc


class _PowerGroup:
    """Power terms sharing a fractional exponent part, summed with Horner."""

    __slots__ = ("lead", "degrees", "coeffs")

    def __init__(self, lead: float, degrees: list[int], coeffs: list):
        self.lead = lead
        self.degrees = degrees
        self.coeffs = coeffs

    def __call__(self, s: np.ndarray, log_s) -> np.ndarray:
        top = max(self.degrees)
        dense = [0j] * (top + 1)
        for d, c in zip(self.degrees, self.coeffs):
            dense[top - d] = c
        acc = np.full(s.shape, dense[0], dtype=complex)
        # huge iterates overflow to inf/nan; callers treat that as failure
        with np.errstate(over="ignore", invalid="ignore"):
            for c in dense[1:]:
                acc = acc * s + c
            if self.lead == 0.0:
                return acc
            return acc * np.exp(self.lead * log_s)


def _group_powers(exponents: Sequence[float], coeffs: Sequence) -> list[_PowerGroup]:
    groups: dict[float, list[tuple[float, object]]] = {}
    for q, c in zip(exponents, coeffs):
        frac = q - math.floor(q)
        groups.setdefault(round(frac, 15), []).append((q, c))
    out = []
    for items in groups.values():
        low = min(q for q, _ in items)
        if low >= 0 and low == int(low):
            low = 0.0  # plain polynomial: Horner only, exact for integer data
        degrees = [int(round(q - low)) for q, _ in items]
        out.append(_PowerGroup(low, degrees, [c for _, c in items]))
    return out


class DerivativeOperator:
    """A function model bound to a derivative kind and per-cell orders.

    ``order`` may be a scalar or an array (one order per evaluation cell);
    all order-dependent coefficients are computed once here so repeated
    evaluations during an iteration only cost the point-dependent work.
    Order 0 yields the function itself. Cells whose order is an integer use
    the classical derivative formulas.
    """

    def __init__(self, f: FunctionModel, kind: DerivativeKind, order, base: float = 0.0):
        self.f = f
        self.kind = kind
        self.base = float(base)
        order_arr = np.atleast_1d(np.asarray(order, dtype=float))
        self.order = order_arr
        self.scalar_order = order_arr.size == 1
        if np.any(order_arr < 0):
            raise ValueError("derivative order must be nonnegative")
        if f.exp_terms and self.base != 0.0 and np.any(order_arr != np.round(order_arr)):
            raise ExpBaseError("exponential terms are only supported with base 0")
        if np.any(order_arr != np.round(order_arr)) and f.reference_point != self.base:
            raise BaseMismatchError(
                f"reference point {f.reference_point} differs from base {self.base}; "
                "call recenter_powers first"
            )

        uniq, inverse = np.unique(order_arr, return_inverse=True)
        self._uniq = uniq
        self._inverse = inverse
        self._plans = [self._plan(float(mu)) for mu in uniq]

    def _plan(self, mu: float):
        """Per-order description: power exponents with coefficients, exp handling."""
        integer = mu == round(mu)
        m = int(math.ceil(mu))
        caputo = self.kind is DerivativeKind.CAPUTO
        powers: list[tuple[float, complex]] = []
        for t in self.f.power_terms:
            p = t.exponent
            if integer:
                n = int(round(mu))
                factor = _falling(p, n)
            elif caputo and p == int(p) and p < m:
                factor = 0.0
            else:
                factor = (specfun.gamma(p + 1.0) * specfun.rgamma(p + 1.0 - mu)).real
            if factor != 0.0:
                powers.append((p - mu, t.coeff * factor))
        exps = []
        for t in self.f.exp_terms:
            if integer:
                exps.append(("classical", t.coeff * t.rate ** int(round(mu)), t.rate, None))
            elif caputo:
                # lam^m s^(m-mu) E_{1, m+1-mu}(lam s)
                exps.append(("ml", t.coeff * t.rate**m, t.rate, (m - mu, m + 1.0 - mu)))
            else:
                exps.append(("ml", t.coeff, t.rate, (-mu, 1.0 - mu)))
        groups = _group_powers([q for q, _ in powers], [c for _, c in powers])
        return mu, powers, groups, exps

    def __call__(self, x, idx=None) -> np.ndarray:
        """Evaluate at ``x``; ``idx`` selects which cells ``x`` belongs to."""
        x = np.asarray(x, dtype=complex)
        if self.scalar_order:
            return self._eval_plan(self._plans[0], x)
        which = self._inverse if idx is None else self._inverse[idx]
        out = np.empty(x.shape, dtype=complex)
        for j in np.unique(which):
            sel = which == j
            out[sel] = self._eval_plan(self._plans[j], x[sel])
        return out

    def _eval_plan(self, plan, x: np.ndarray) -> np.ndarray:
        mu, powers, groups, exps = plan
        out = np.zeros(x.shape, dtype=complex)
        if groups:
            s = _shift(x, self.f.reference_point)
            log_s = _log(s) if any(g.lead != 0.0 for g in groups) else None
            for group in groups:
                out = out + group(s, log_s)
        if exps:
            s0 = _shift(x, self.base)
            log_s0 = None
            with np.errstate(over="ignore", invalid="ignore"):
                for mode, coeff, rate, extra in exps:
                    if mode == "classical":
                        out = out + coeff * np.exp(rate * x)
                        continue
                    if log_s0 is None:
                        log_s0 = _log(s0)
                    power, b = extra
                    ml = specfun.mittag_leffler_1b(b, rate * s0)
                    out = out + coeff * np.exp(power * log_s0) * ml
        return out


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=complex)
    return arr, arr.ndim == 0


def _unwrap(arr: np.ndarray, scalar: bool):
    return complex(arr) if scalar else arr


def _check_singular(f: FunctionModel, x: np.ndarray, lowest_exponent_shift: float, base: float):
    """Raise if any point sits on the branch point with a negative output exponent."""
    at_ref = np.abs(x - f.reference_point) == 0
    if at_ref.any() and any(t.exponent - lowest_exponent_shift < 0 and t.exponent != 0 for t in f.power_terms):
        raise SingularityError(f"derivative is singular at x = {f.reference_point}")


def eval_f(f: FunctionModel, x):
    """Evaluate ``f`` at ``x`` (scalar or array), principal branch for fractional powers."""
    arr, scalar = _as_array(x)
    return _unwrap(DerivativeOperator(f, DerivativeKind.CAPUTO, 0.0, f.reference_point)(arr), scalar)


#: Name used by callers that mirror the mathematical notation ``eval(f, x)``.
eval = eval_f  # noqa: A001


def classical_derivative(f: FunctionModel, x):
    """Ordinary first derivative, term by term."""
    arr, scalar = _as_array(x)
    _check_singular(f, arr, 1.0, f.reference_point)
    out = DerivativeOperator(f, DerivativeKind.CAPUTO, 1.0, f.reference_point)(arr)
    return _unwrap(out, scalar)


def frac_derivative(f: FunctionModel, spec: FracSpec, x):
    """Closed-form Caputo or Riemann-Liouville derivative of order ``spec.alpha``.

    ``alpha == 1`` goes through :func:`classical_derivative`.
    """
    if spec.alpha == 1.0:
        return classical_derivative(f, x)
    return frac_derivative_order(f, spec.kind, spec.alpha, spec.base, x)


def frac_derivative_order(f: FunctionModel, kind: DerivativeKind, order: float, base: float, x):
    """Closed-form derivative of arbitrary positive order (used for the C_j constants)."""
    arr, scalar = _as_array(x)
    if order <= 0:
        raise ValueError(f"order must be positive: {order}")
    op = DerivativeOperator(f, kind, order, base)
    integer = order == round(order)
    at_base = np.abs(arr - base) == 0
    if at_base.any():
        if not integer and f.exp_terms and kind is DerivativeKind.RIEMANN_LIOUVILLE:
            raise SingularityError(f"derivative is singular at the base point {base}")
        _, powers, _, _ = op._plans[0]
        if any(q < 0 for q, _ in powers):
            raise SingularityError(f"derivative is singular at the base point {base}")
    if f.exp_terms and not integer:
        big = np.abs(arr - base) * max(abs(t.rate) for t in f.exp_terms)
        if np.any(big > specfun.Z_LIMIT):
            raise specfun.DomainError("Mittag-Leffler argument exceeds Z_MAX")
    return _unwrap(op(arr), scalar)


def frac_derivative_quadrature(
    f: FunctionModel, spec: FracSpec, x: float, tol: float = 1e-9
) -> complex:
    """Fractional derivative from the defining integral (real ``x > base`` only).

    Caputo: ``1/Gamma(1-a) int_base^x f'(t) (x-t)^(-a) dt`` after the change of
    variables ``u = (x-t)^(1-a)`` which removes the endpoint singularity.
    Riemann-Liouville adds the boundary term ``f(base) (x-base)^(-a) / Gamma(1-a)``.
    """
    from scipy import integrate

    x = float(x)
    if not x > spec.base:
        raise ValueError(f"quadrature oracle needs real x > base ({x} <= {spec.base})")
    alpha = spec.alpha
    if alpha == 1.0:
        return complex(classical_derivative(f, x))

    span = x - spec.base
    expo = 1.0 / (1.0 - alpha)
    upper = span ** (1.0 - alpha)
    # where x - t passes through span * 10^-k: the integrand in u varies there
    points = sorted({(span * 10.0**-k) ** (1.0 - alpha) for k in range(1, 15)})
    points = [p for p in points if 0.0 < p < upper]

    # f' as plain scalar terms on the real interval (base, x]; cached because
    # the real and imaginary passes revisit the same nodes
    shift = f.reference_point
    dpow = [(t.coeff * t.exponent, t.exponent - 1.0) for t in f.power_terms if t.exponent != 0.0]
    dexp = [(t.coeff * t.rate, t.rate) for t in f.exp_terms]
    cache: dict[float, complex] = {}

    def integrand(u: float) -> complex:
        v = cache.get(u)
        if v is None:
            t = x - u**expo
            s = t - shift
            v = sum(c * s**p for c, p in dpow) + sum(c * cmath.exp(r * t) for c, r in dexp) + 0j
            cache[u] = v
        return v

    parts = []
    for component in (lambda u: integrand(u).real, lambda u: integrand(u).imag):
        value, err, info = _quad(integrate, component, upper, points, tol)
        parts.append(value)
    integral = complex(parts[0], parts[1])
    # du = -(1-a) (x-t)^(-a) dt, so the integral gains 1/(1-a)
    out = integral / ((1.0 - alpha) * specfun.gamma(1.0 - alpha).real)
    if spec.kind is DerivativeKind.RIEMANN_LIOUVILLE:
        out += complex(eval_f(f, spec.base)) * span ** (-alpha) / specfun.gamma(1.0 - alpha).real
    return out


def _quad(integrate, func, upper, points, tol):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err, info = integrate.quad(
                func, 0.0, upper, points=points or None, epsabs=tol, epsrel=0.0,
                limit=47_000, full_output=1,
            )[:3]
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if info["neval"] > 1_000_000 or err > tol:
        raise QuadratureError(f"quadrature error estimate {err:g} exceeds {tol:g}")
    return value, err, info


def recenter_powers(f: FunctionModel, new_base: float) -> FunctionModel:
    """Re-expand integer power terms around ``new_base`` (binomial theorem)."""
    if f.exp_terms and new_base != 0.0:
        raise ExpBaseError("exponential terms can only be used with base 0")
    if f.has_fractional_exponents:
        raise NonIntegerExponentError("recentering needs nonnegative integer exponents")
    shift = new_base - f.reference_point
    acc: dict[int, complex] = {}
    for t in f.power_terms:
        n = int(t.exponent)
        for k in range(n + 1):
            acc[k] = acc.get(k, 0j) + t.coeff * math.comb(n, k) * shift ** (n - k)
    powers = tuple(PowerTerm(c, float(k)) for k, c in acc.items() if c != 0)
    if not powers and not f.exp_terms:
        powers = (PowerTerm(0j, 0.0),)
    return FunctionModel(powers, f.exp_terms, new_base, name=f.name)


# ---------------------------------------------------------------------------
# built-in test functions


def _f1() -> FunctionModel:
    coeffs = [-12.84, -25.6, 16.55, -2.21, 26.71, -4.29, -15.21]
    return FunctionModel(
        tuple(PowerTerm(c, 6 - k) for k, c in enumerate(coeffs)), name="f1"
    )


def _f2() -> FunctionModel:
    return FunctionModel(
        (PowerTerm(1j, 1.8), PowerTerm(-1.0, 0.9), PowerTerm(-16.0, 0.0)), name="f2"
    )


def _f3() -> FunctionModel:
    return FunctionModel((PowerTerm(-1.0, 0.0),), (ExpTerm(1.0, 1.0),), name="f3")


def _f4() -> FunctionModel:
    # sin(10x) = (exp(10ix) - exp(-10ix)) / 2i
    return FunctionModel(
        (PowerTerm(-0.5, 1.0), PowerTerm(0.2, 0.0)),
        (ExpTerm(-0.5j, 10j), ExpTerm(0.5j, -10j)),
        name="f4",
    )


_BUILTINS = {"f1": _f1, "f2": _f2, "f3": _f3, "f4": _f4}
BUILTIN_NAMES = tuple(_BUILTINS)

#: Roots as published (5 significant decimals).
BUILTIN_ROOTS: dict[str, tuple[complex, ...]] = {
    "f1": (
        0.82366 + 0.24769j,
        0.82366 - 0.24769j,
        -2.62297 + 0j,
        -0.584 + 0j,
        -0.21705 + 0.99911j,
        -0.21705 - 0.99911j,
    ),
    "f2": (2.90807 - 4.24908j, -3.85126 + 1.74602j),
    "f3": (0j,),
    "f4": (
        -1.4523, -1.3647, -0.87345, -0.6857, -0.27949, -0.021219, 0.31824,
        0.64036, 0.91636, 1.3035, 1.5118, 1.9756, 2.0977,
    ),
}


def builtin(name: str) -> FunctionModel:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in function {name!r}; choose from {BUILTIN_NAMES}") from None


def load_function(spec: str) -> FunctionModel:
    """Built-in name (``f1``..``f4``) or path to a JSON function file."""
    if spec in _BUILTINS:
        return builtin(spec)
    if not os.path.exists(spec):
        raise FileNotFoundError(f"no built-in function or file named {spec!r}")
    with open(spec, encoding="utf-8") as fh:
        data = json.load(fh)
    return FunctionModel.from_dict(data, name=os.path.basename(spec))
