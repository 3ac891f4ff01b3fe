"""Fractional Newton and Traub iterations.

Six schemes share one engine:

* ``CFN1`` / ``RLFN1``: damped step ``x - Gamma(a+1) f / D^a f``;
* ``CFN2`` / ``RLFN2``: ``x - (Gamma(a+1) f / D^a f)^(1/a)``;
* ``CFT`` / ``RLFT``: a ``*FN2`` predictor followed by a corrector that reuses
  the derivative from the start of the step.

The engine (:func:`iterate_batch`) works on whole arrays of starting points,
each with its own order ``a``; :func:`solve` is the single-start wrapper that
also records the trace. Every operation inside the engine is elementwise, so
a cell's result never depends on which other cells share its batch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from fracroot import specfun
from fracroot.funcmodel import (
    DerivativeKind,
    DerivativeOperator,
    FracSpec,
    FunctionModel,
    frac_derivative,
)

__all__ = [
    "MethodKind",
    "Status",
    "SolverConfig",
    "IterationTrace",
    "BatchResult",
    "DerivativeZeroError",
    "DERIVATIVE_ZERO_TOL",
    "principal_power",
    "newton1_step",
    "newton2_step",
    "traub_step",
    "iterate_batch",
    "solve",
]

DERIVATIVE_ZERO_TOL = 1e-30


class DerivativeZeroError(ArithmeticError):
    """Raised when ``|D^a f(x)|`` falls below :data:`DERIVATIVE_ZERO_TOL`."""


class MethodKind(enum.Enum):
    CFN1 = "cfn1"
    CFN2 = "cfn2"
    RLFN1 = "rlfn1"
    RLFN2 = "rlfn2"
    CFT = "cft"
    RLFT = "rlft"

    @property
    def derivative(self) -> DerivativeKind:
        if self in (MethodKind.CFN1, MethodKind.CFN2, MethodKind.CFT):
            return DerivativeKind.CAPUTO
        return DerivativeKind.RIEMANN_LIOUVILLE

    @property
    def damped(self) -> bool:
        return self in (MethodKind.CFN1, MethodKind.RLFN1)

    @property
    def two_step(self) -> bool:
        return self in (MethodKind.CFT, MethodKind.RLFT)

    @property
    def label(self) -> str:
        return {
            MethodKind.CFN1: "CFN1",
            MethodKind.CFN2: "CFN2",
            MethodKind.RLFN1: "R-LFN1",
            MethodKind.RLFN2: "R-LFN2",
            MethodKind.CFT: "CFT",
            MethodKind.RLFT: "R-LFT",
        }[self]

    @classmethod
    def parse(cls, text: str) -> MethodKind:
        key = text.strip().lower().replace("-", "").replace("_", "")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown method {text!r}; choose from {[m.value for m in cls]}")


class Status(enum.Enum):
    CONVERGED_STEP = "ConvergedStep"
    CONVERGED_RESIDUAL = "ConvergedResidual"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"

    @property
    def converged(self) -> bool:
        return self in (Status.CONVERGED_STEP, Status.CONVERGED_RESIDUAL)


# integer codes used inside the array engine
_RUNNING = -1
_CODES = (
    Status.CONVERGED_STEP,
    Status.CONVERGED_RESIDUAL,
    Status.MAX_ITERATIONS,
    Status.NUMERICAL_FAILURE,
)
_STEP, _RES, _MAXIT, _FAIL = range(4)


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    base: float = 0.0
    step_tol: float = 1e-8
    residual_tol: float = 1e-8
    max_iter: int = 500

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1]: {self.alpha}")
        if not (self.step_tol > 0 and self.residual_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer: {self.max_iter}")

    def spec(self, method: MethodKind) -> FracSpec:
        return FracSpec(method.derivative, self.alpha, self.base)


@dataclass(frozen=True)
class IterationTrace:
    """Iterates ``x_0 .. x_K`` with their residuals and the stopping reason."""

    iterates: tuple[complex, ...]
    residuals: tuple[float, ...]
    status: Status
    iterations: int

    @property
    def final(self) -> complex:
        return self.iterates[-1]

    @property
    def last_step(self) -> float:
        if len(self.iterates) < 2:
            return 0.0
        return abs(self.iterates[-1] - self.iterates[-2])


def principal_power(z: complex, r: float) -> complex:
    """``exp(r Log z)`` with ``Arg z`` in ``(-pi, pi]``; ``0^r = 0`` for ``r > 0``."""
    z = complex(z) + 0.0
    if z == 0:
        if r > 0:
            return 0j
        raise specfun.DomainError(f"0 ** {r} is undefined")
    if r == 1.0:
        return z
    return complex(np.exp(r * np.log(z)))


def _ppow(z: np.ndarray, r: np.ndarray) -> np.ndarray:
    z = z + 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        powered = np.exp(r * np.log(z))
    powered = np.where(z == 0, 0j, powered)
    return np.where(r == 1.0, z, powered)


def _gamma_factor(alpha: np.ndarray) -> np.ndarray:
    uniq, inv = np.unique(alpha, return_inverse=True)
    vals = np.array([specfun.gamma(a + 1.0).real for a in uniq])
    return vals[inv].reshape(alpha.shape)


class _Kernel:
    """Evaluator pair (f and D^a f) plus per-cell constants for one batch."""

    def __init__(self, method: MethodKind, f: FunctionModel, alpha: np.ndarray, base: float):
        self.method = method
        self.alpha = alpha
        self.f_op = DerivativeOperator(f, DerivativeKind.CAPUTO, 0.0, f.reference_point)
        if np.all(alpha == 1.0):
            self.d_op = DerivativeOperator(f, method.derivative, 1.0, f.reference_point)
        else:
            self.d_op = DerivativeOperator(f, method.derivative, alpha, base)
        self.gfac = _gamma_factor(alpha)
        self.inv_alpha = 1.0 / alpha

    def f(self, x: np.ndarray) -> np.ndarray:
        return self.f_op(x)

    def d(self, x: np.ndarray, idx) -> np.ndarray:
        return self.d_op(x, idx) if self.d_op.order.size > 1 else self.d_op(x)

    def step(self, x: np.ndarray, fx: np.ndarray, idx) -> tuple[np.ndarray, np.ndarray]:
        """One full iteration from ``x``; returns the new point and a 'bad' mask."""
        d = self.d(x, idx)
        bad = ~np.isfinite(d) | (np.abs(d) < DERIVATIVE_ZERO_TOL)
        safe_d = np.where(bad, 1.0, d)
        g = self.gfac[idx]
        with np.errstate(all="ignore"):
            q = g * fx / safe_d
            if self.method.damped:
                return x - q, bad
            r = self.inv_alpha[idx]
            y = x - _ppow(q, r)
            if not self.method.two_step:
                return y, bad
            fy = self.f(y)
            return y - _ppow(g * fy / safe_d, r), bad


@dataclass(frozen=True)
class BatchResult:
    """Final state of every cell in a batch (arrays share the input shape)."""

    final: np.ndarray
    residual: np.ndarray
    last_step: np.ndarray
    iterations: np.ndarray
    status: np.ndarray  # integer codes into Status order

    def status_of(self, i: int) -> Status:
        return _CODES[int(self.status.reshape(-1)[i])]

    @property
    def converged(self) -> np.ndarray:
        return (self.status == _STEP) | (self.status == _RES)


def iterate_batch(
    method: MethodKind,
    f: FunctionModel,
    x0,
    alpha,
    *,
    base: float = 0.0,
    step_tol: float = 1e-8,
    residual_tol: float = 1e-8,
    max_iter: int = 500,
    record: list | None = None,
) -> BatchResult:
    """Run ``method`` from every start in ``x0`` with per-cell orders ``alpha``.

    Stopping order per cell: residual at ``x0`` first (zero iterations), then
    after each step the step size, then the residual, then the iteration cap.
    Non-finite values or a vanishing derivative mark the cell as failed and
    leave it at its last finite iterate.
    If ``record`` is a list, the iterate array after every step is appended.
    """
    x0 = np.asarray(x0, dtype=complex)
    shape = x0.shape
    x = x0.reshape(-1).copy()
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), shape).reshape(-1).copy()
    n = x.size
    kernel = _Kernel(method, f, alpha, base)

    fx = kernel.f(x)
    res = np.abs(fx)
    last = np.zeros(n)
    iters = np.zeros(n, dtype=np.int64)
    status = np.full(n, _RUNNING, dtype=np.int64)
    status[~(np.isfinite(x) & np.isfinite(fx))] = _FAIL
    status[(status == _RUNNING) & (res < residual_tol)] = _RES
    if record is not None:
        record.append(x.copy())

    active = np.flatnonzero(status == _RUNNING)
    for k in range(1, int(max_iter) + 1):
        if active.size == 0:
            break
        xa = x[active]
        xn, bad = kernel.step(xa, fx[active], active)
        with np.errstate(all="ignore"):
            fn = kernel.f(xn)
        bad |= ~(np.isfinite(xn) & np.isfinite(fn))

        failed = active[bad]
        status[failed] = _FAIL
        good = ~bad
        idx = active[good]
        xn = xn[good]
        fn = fn[good]
        step = np.abs(xn - xa[good])
        rn = np.abs(fn)
        x[idx] = xn
        fx[idx] = fn
        res[idx] = rn
        last[idx] = step
        iters[idx] = k

        code = np.full(idx.size, _RUNNING, dtype=np.int64)
        code[step < step_tol] = _STEP
        code[(code == _RUNNING) & (rn < residual_tol)] = _RES
        if k == max_iter:
            code[code == _RUNNING] = _MAXIT
        status[idx] = code
        active = idx[code == _RUNNING]
        if record is not None:
            record.append(x.copy())

    return BatchResult(
        final=x.reshape(shape),
        residual=res.reshape(shape),
        last_step=last.reshape(shape),
        iterations=iters.reshape(shape),
        status=status.reshape(shape),
    )


def solve(method: MethodKind, f: FunctionModel, x0: complex, config: SolverConfig) -> IterationTrace:
    """Iterate from ``x0`` and return the full trace."""
    frames: list[np.ndarray] = []
    out = iterate_batch(
        method,
        f,
        np.array([complex(x0)]),
        config.alpha,
        base=config.base,
        step_tol=config.step_tol,
        residual_tol=config.residual_tol,
        max_iter=config.max_iter,
        record=frames,
    )
    k = int(out.iterations[0])
    iterates = tuple(complex(fr[0]) for fr in frames[: k + 1])
    residuals = tuple(float(abs(f(z))) for z in iterates)
    return IterationTrace(iterates, residuals, out.status_of(0), k)


# ---------------------------------------------------------------------------
# single-step API (scalar, raises instead of flagging)


def _quotient(f: FunctionModel, x: complex, spec: FracSpec, fx: complex | None = None,
              d: complex | None = None) -> tuple[complex, complex]:
    if d is None:
        d = complex(frac_derivative(f, spec, x))
    if not math.isfinite(abs(d)) or abs(d) < DERIVATIVE_ZERO_TOL:
        raise DerivativeZeroError(f"|D^a f({x})| = {abs(d):g}")
    if fx is None:
        fx = complex(f(x))
    g = 1.0 if spec.alpha == 1.0 else specfun.gamma(spec.alpha + 1.0).real
    return g * fx / d, d


def newton1_step(f: FunctionModel, x: complex, spec: FracSpec) -> complex:
    q, _ = _quotient(f, x, spec)
    return complex(x) - q


def newton2_step(f: FunctionModel, x: complex, spec: FracSpec) -> complex:
    q, _ = _quotient(f, x, spec)
    return complex(x) - principal_power(q, 1.0 / spec.alpha)


def traub_step(f: FunctionModel, x: complex, spec: FracSpec) -> complex:
    q, d = _quotient(f, x, spec)
    y = complex(x) - principal_power(q, 1.0 / spec.alpha)
    q2, _ = _quotient(f, y, spec, d=d)
    return y - principal_power(q2, 1.0 / spec.alpha)
