"""Command-line entry point: ``fracroot {solve,plane,order,selftest}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time
from collections.abc import Callable, Sequence

from fracroot import __version__, analysis, funcmodel, planes, specfun
from fracroot.funcmodel import FunctionModel
from fracroot.solvers import MethodKind, SolverConfig, Status, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MAXITER = 2
EXIT_FAILURE = 3
EXIT_INSUFFICIENT = 4
EXIT_SELFTEST = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sig(v: float, digits: int = 5) -> str:
    return f"{v:.{digits}g}"


def fmt_complex(z: complex, digits: int = 5) -> str:
    """Human format: real part, plus the imaginary part only when nonzero."""
    re = _sig(z.real, digits)
    if z.imag == 0:
        return re
    sign = "+" if z.imag >= 0 else "-"
    return f"{re}{sign}{_sig(abs(z.imag), digits)}i"


def parse_complex(text: str) -> complex:
    """``re`` or ``re,im`` (``a+bj`` Python syntax also accepted)."""
    text = text.strip()
    try:
        if "," in text:
            re, im = text.split(",", 1)
            return complex(float(re), float(im))
        return complex(text.replace("i", "j"))
    except ValueError:
        raise UsageError(f"cannot parse complex number {text!r}") from None


def _load_function(spec: str) -> FunctionModel:
    try:
        return funcmodel.load_function(spec)
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(str(exc)) from None


def _load_roots(spec: str | None, function_spec: str) -> tuple[complex, ...]:
    key = spec or function_spec
    if key in funcmodel.BUILTIN_ROOTS:
        return funcmodel.BUILTIN_ROOTS[key]
    if spec is None:
        raise UsageError("--roots is required for functions that are not built in")
    if not os.path.exists(spec):
        raise UsageError(f"no built-in root set or file named {spec!r}")
    with open(spec, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["roots"]
    return tuple(complex(r[0], r[1]) if isinstance(r, list) else complex(r) for r in data)


def _solver_config(args) -> SolverConfig:
    try:
        return SolverConfig(
            alpha=args.alpha,
            base=args.base,
            step_tol=args.tol_step,
            residual_tol=args.tol_res,
            max_iter=args.max_iter,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _exit_for(status: Status) -> int:
    if status.converged:
        return EXIT_OK
    return EXIT_MAXITER if status is Status.MAX_ITERATIONS else EXIT_FAILURE


def _write_trace(path: str, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "x_re", "x_im", "step", "residual"])
        prev = None
        for k, (x, r) in enumerate(zip(trace.iterates, trace.residuals)):
            step = 0.0 if prev is None else abs(x - prev)
            w.writerow([k, f"{x.real:.17g}", f"{x.imag:.17g}", f"{step:.17g}", f"{r:.17g}"])
            prev = x


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    method = MethodKind.parse(args.method)
    f = _load_function(args.function)
    config = _solver_config(args)
    x0 = parse_complex(args.x0)
    trace = solve(method, f, x0, config)
    header = f"{'method':<7} {'alpha':>6} {'x_bar':>24} {'|x_k+1 - x_k|':>14} {'|f(x_k+1)|':>12} {'iter':>5}  status"
    print(header)
    print(
        f"{method.label:<7} {_sig(config.alpha):>6} {fmt_complex(trace.final):>24} "
        f"{_sig(trace.last_step):>14} {_sig(trace.residuals[-1]):>12} {trace.iterations:>5}  "
        f"{trace.status.value}"
    )
    if args.trace:
        _write_trace(args.trace, trace)
    return _exit_for(trace.status)


# ---------------------------------------------------------------------------
# order


def _theory(method: MethodKind, alpha: float) -> tuple[str, float | None]:
    if method.damped:
        return "2a (cited)", None
    if method.two_step:
        return f"2a+1 = {_sig(2 * alpha + 1)}", 2 * alpha + 1
    return f"a+1 = {_sig(alpha + 1)}", alpha + 1


def _replay(path: str) -> list[complex]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path}: no rows")
    return [complex(float(r["x_re"]), float(r.get("x_im") or 0.0)) for r in rows]


def cmd_order(args) -> int:
    root = parse_complex(args.root) if args.root else None
    if args.replay:
        xs = _replay(args.replay)
        root = 0j if root is None else root
        try:
            value = analysis.acoc_from_errors([abs(x - root) for x in xs])
        except analysis.InsufficientDataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INSUFFICIENT
        print(f"ACOC: {value:.4f}")
        return EXIT_OK

    for flag in ("method", "function", "alpha", "x0"):
        if getattr(args, flag) is None:
            raise UsageError(f"--{flag.replace('_', '-')} is required unless --replay is given")
    method = MethodKind.parse(args.method)
    f = _load_function(args.function)
    config = _solver_config(args)
    trace = solve(method, f, parse_complex(args.x0), config)
    est_root = trace.final if root is None else root
    try:
        if root is None:
            # the last iterate stands in for the root, so it cannot be used as data
            errors = [abs(x - est_root) for x in trace.iterates[:-1]]
            value = analysis.acoc_from_errors(errors, 10 * sys.float_info.epsilon)
        else:
            value = analysis.acoc(trace, root)
    except analysis.InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT

    label, order = _theory(method, config.alpha)
    print(f"method: {method.label}  alpha: {_sig(config.alpha)}  iterations: {trace.iterations}  "
          f"status: {trace.status.value}")
    print(f"ACOC: {value:.4f}")
    print(f"theoretical order: {label}")
    if root is not None and order is not None:
        try:
            consts = analysis.error_constants(f, root, config.alpha, method.derivative)
            theory_c = consts.traub_constant if method.two_step else consts.newton_constant
            empirical = analysis.empirical_constant(trace, root, order)
            print(f"error constant: empirical {_sig(empirical)}  theoretical {_sig(abs(theory_c))}  "
                  f"ratio {_sig(empirical / abs(theory_c))}")
        except (ArithmeticError, ValueError) as exc:
            print(f"error constant: unavailable ({exc})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plane


def _plane_snapshot(args, f: FunctionModel, roots) -> dict:
    return {
        "method": MethodKind.parse(args.method).value,
        "function": f.to_dict(),
        "function_name": args.function,
        "axis": args.axis,
        "lo": args.lo,
        "hi": args.hi,
        "alpha_lo": args.alpha_lo,
        "alpha_hi": args.alpha_hi,
        "nx": args.nx,
        "nalpha": args.nalpha,
        "roots": [[r.real, r.imag] for r in roots],
        "match_tol": args.match_tol,
        "base": args.base,
        "tol_step": args.tol_step,
        "tol_res": args.tol_res,
        "max_iter": args.max_iter,
    }


def _config_from_snapshot(snap: dict) -> planes.PlaneConfig:
    try:
        return planes.PlaneConfig(
            method=MethodKind.parse(snap["method"]),
            f=FunctionModel.from_dict(snap["function"], name=snap.get("function_name", "")),
            axis=planes.Axis(snap["axis"]),
            lo=float(snap["lo"]),
            hi=float(snap["hi"]),
            alpha_lo=float(snap["alpha_lo"]),
            alpha_hi=float(snap["alpha_hi"]),
            n_x0=int(snap["nx"]),
            n_alpha=int(snap["nalpha"]),
            roots=tuple(complex(r[0], r[1]) for r in snap["roots"]),
            match_tol=float(snap["match_tol"]),
            solver=SolverConfig(
                alpha=float(snap["alpha_hi"]),
                base=float(snap["base"]),
                step_tol=float(snap["tol_step"]),
                residual_tol=float(snap["tol_res"]),
                max_iter=int(snap["max_iter"]),
            ),
        )
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid plane configuration: {exc}") from None


def cmd_plane(args) -> int:
    started = time.perf_counter()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            manifest = json.load(fh)
        snap = manifest["config"]
        out = args.out or manifest["outputs"]["prefix"]
    else:
        for flag in ("method", "function", "lo", "hi"):
            if getattr(args, flag) is None:
                raise UsageError(f"--{flag} is required unless --config is given")
        if args.out is None:
            raise UsageError("--out is required")
        f = _load_function(args.function)
        roots = _load_roots(args.roots, args.function)
        snap = _plane_snapshot(args, f, roots)
        out = args.out
    config = _config_from_snapshot(snap)
    workers = args.workers if args.workers is not None else planes.default_workers()

    result = planes.generate_plane(config, workers=workers)
    paths = {"prefix": out, "ppm": f"{out}.ppm", "csv": f"{out}.csv", "manifest": f"{out}.manifest.json"}
    with open(paths["ppm"], "wb") as fh:
        fh.write(planes.render_ppm(result))
    with open(paths["csv"], "wb") as fh:
        fh.write(planes.write_csv(result))
    manifest = {
        "command": "plane",
        "argv": list(args.argv),
        "config": snap,
        "version": __version__,
        "workers": workers,
        "percentage": result.percentage,
        "duration_s": time.perf_counter() - started,
        "outputs": paths,
    }
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"{result.percentage:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selftest


def _selftest_checks() -> list[tuple[str, Callable[[], bool]]]:
    import cmath

    from fracroot.funcmodel import DerivativeKind, FracSpec

    g = specfun.gamma
    checks: list[tuple[str, Callable[[], bool]]] = []

    def rel(a: complex, b: complex) -> float:
        return abs(a - b) / max(abs(b), 1e-300)

    for z in (0.5, 2.8, 1.3 + 2.1j, -2.7 + 0.4j, 5.5 - 3.2j, -0.3 - 7.1j, 9.2 + 9.2j):
        checks.append((f"gamma recurrence at {z}", lambda z=z: rel(g(z + 1), z * g(z)) < 1e-11))
    for z in (0.25, -1.5 + 0.5j, 3.7 - 2.2j, -4.4 + 1.0j, 0.1 + 8.0j):
        checks.append((
            f"gamma reflection at {z}",
            lambda z=z: rel(g(z) * g(1 - z) * cmath.sin(math.pi * z) / math.pi, 1.0) < 1e-10,
        ))
    checks.append(("gamma(0.5) = sqrt(pi)", lambda: rel(g(0.5), math.sqrt(math.pi)) < 1e-13))
    checks.append(("ln_gamma(10) = ln 9!", lambda: rel(specfun.ln_gamma(10), math.log(362880)) < 1e-13))
    for z in (1 + 2j, -30.0, 25j, 12.5 - 7j):
        checks.append((
            f"E_(1,1)({z}) = exp",
            lambda z=z: rel(specfun.mittag_leffler(specfun.MLParams(1, 1), z), cmath.exp(z)) < 1e-10,
        ))
    for z in (2.0, 3j, 6 + 6j):
        checks.append((
            f"E_(2,1)(z^2) = cosh at {z}",
            lambda z=z: rel(specfun.mittag_leffler(specfun.MLParams(2, 1), z * z), cmath.cosh(z)) < 1e-10,
        ))
    checks.append(("binom(0.5, 2) = -0.125", lambda: abs(specfun.binom_general(0.5, 2) + 0.125) < 1e-15))

    for name in funcmodel.BUILTIN_NAMES:
        f = funcmodel.builtin(name)
        for kind in DerivativeKind:
            for a in (0.5, 0.95):
                spec = FracSpec(kind, a)

                def oracle(f=f, spec=spec) -> bool:
                    x = 1.3
                    cf = complex(funcmodel.frac_derivative(f, spec, x))
                    q = funcmodel.frac_derivative_quadrature(f, spec, x)
                    return abs(cf - q) <= 1e-6 * (1 + abs(cf))

                checks.append((f"closed form vs quadrature: {name} {kind.value} a={a}", oracle))

    rows = [
        ("f1", MethodKind.CFN1, -1.5, 6),
        ("f1", MethodKind.CFN2, -1.5, 6),
        ("f1", MethodKind.CFT, -1.5, 5),
        ("f2", MethodKind.CFN1, -4.5, 4),
        ("f2", MethodKind.RLFN2, -4.5, 4),
        ("f2", MethodKind.CFT, -4.5, 3),
        ("f2", MethodKind.RLFT, -4.5, 3),
    ]
    for name, method, x0, iters in rows:
        def regression(name=name, method=method, x0=x0, iters=iters) -> bool:
            t = solve(method, funcmodel.builtin(name), x0, SolverConfig(alpha=1.0))
            return t.status.converged and t.iterations == iters and t.residuals[-1] <= 1e-8
        checks.append((f"alpha=1 regression: {name} {method.label} x0={x0} -> {iters} iterations", regression))
    return checks


def _sabotage(target: str) -> None:
    if target == "gamma":
        original = specfun.gamma
        specfun.gamma = lambda z: original(z) * (1.0 + 1e-6)
    else:
        raise UsageError(f"unknown sabotage target {target!r}")


def cmd_selftest(args) -> int:
    if args.sabotage:
        _sabotage(args.sabotage)
    passed = 0
    checks = _selftest_checks()
    for label, check in checks:
        try:
            ok = bool(check())
        except Exception as exc:  # a crashing check is a failing check
            ok = False
            label = f"{label} ({type(exc).__name__}: {exc})"
        passed += ok
        print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    print(f"{passed}/{len(checks)} checks passed")
    return EXIT_OK if passed == len(checks) else EXIT_SELFTEST


# ---------------------------------------------------------------------------


def _add_solver_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--method", required=required, help="cfn1|cfn2|rlfn1|rlfn2|cft|rlft")
    p.add_argument("--function", required=required, help="f1..f4 or a JSON function file")
    p.add_argument("--alpha", type=float, required=required)
    p.add_argument("--x0", required=required, help="re or re,im")
    _add_tolerance_flags(p)


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base", type=float, default=0.0)
    p.add_argument("--tol-step", type=float, default=1e-8)
    p.add_argument("--tol-res", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracroot", description="Fractional Newton/Traub root finding.")
    parser.add_argument("--version", action="version", version=f"fracroot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one method from one starting point")
    _add_solver_flags(p)
    p.add_argument("--trace", help="write the full trace as CSV")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("plane", help="convergence plane over (x0, alpha)")
    p.add_argument("--method")
    p.add_argument("--function")
    p.add_argument("--axis", choices=["real", "imag"], default="real")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--alpha-lo", type=float, default=0.5)
    p.add_argument("--alpha-hi", type=float, default=1.0)
    p.add_argument("--nx", type=int, default=400)
    p.add_argument("--nalpha", type=int, default=200)
    p.add_argument("--roots", help="built-in name or JSON list of [re, im] pairs")
    p.add_argument("--match-tol", type=float, default=1e-3)
    p.add_argument("--out", help="output prefix")
    p.add_argument("--workers", type=int, default=None, help="default: $FRACROOT_WORKERS or 1")
    p.add_argument("--config", help="re-run from a previous run's manifest")
    _add_tolerance_flags(p)
    p.set_defaults(handler=cmd_plane)

    p = sub.add_parser("order", help="ACOC and error-constant diagnostics")
    _add_solver_flags(p, required=False)
    p.add_argument("--root", help="known root (re or re,im); default for --replay is 0")
    p.add_argument("--replay", help="trace CSV with x_re,x_im columns")
    p.set_defaults(handler=cmd_order)

    p = sub.add_parser("selftest", help="identity, oracle and regression checks")
    p.add_argument("--sabotage", help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_selftest)
    return parser


_NEGATIVE_VALUE = re.compile(r"^-[0-9.]")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """``--lo -1e6`` -> ``--lo=-1e6`` (argparse only knows plain negative decimals)."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and _NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_attach_negative_values(argv))
    args.argv = argv
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"fracroot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"fracroot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
