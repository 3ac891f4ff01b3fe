import json
import subprocess
import sys

import pytest

from fracroot import analysis
from fracroot import funcmodel as fm
from fracroot.cli import fmt_complex, main, parse_complex
from fracroot.solvers import MethodKind, SolverConfig, solve


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_formatting_helpers():
    assert fmt_complex(-0.58400012) == "-0.584"
    assert fmt_complex(-3.85121 + 1.74601j) == "-3.8512+1.746i"
    assert fmt_complex(1 - 2j) == "1-2i"
    assert parse_complex("-1.5") == -1.5
    assert parse_complex("0.5,-2") == 0.5 - 2j


def test_solve_f1_newton(capsys):
    code, out, _ = run(capsys, "solve", "--method", "cfn1", "--function", "f1", "--alpha", "1", "--x0", "-1.5")
    assert code == 0
    row = out.splitlines()[1].split()
    assert row[0] == "CFN1" and row[2] == "-0.584" and row[5] == "6"
    assert row[3] == "3.0876e-06"


def test_solve_traub(capsys):
    code, out, _ = run(capsys, "solve", "--method", "cft", "--function", "f1", "--alpha", "1", "--x0", "-1.5")
    assert code == 0 and out.splitlines()[1].split()[5] == "5"


def test_solve_start_at_root(capsys):
    code, out, _ = run(capsys, "solve", "--method", "cfn2", "--function", "f3", "--alpha", "0.5", "--x0", "0")
    assert code == 0
    assert out.splitlines()[1].split()[5] == "0"


def test_solve_exit_codes(capsys):
    code, _, _ = run(capsys, "solve", "--method", "cfn1", "--function", "f1", "--alpha", "0.6", "--x0", "-1.5")
    assert code == 2
    code, _, _ = run(capsys, "solve", "--method", "cfn1", "--function", "f3", "--alpha", "0.7", "--x0", "0,5000")
    assert code == 3
    code, _, err = run(capsys, "solve", "--method", "halley", "--function", "f1", "--alpha", "1", "--x0", "1")
    assert code == 1 and "halley" in err
    code, _, err = run(capsys, "solve", "--method", "cfn1", "--function", "nope.json", "--alpha", "1", "--x0", "1")
    assert code == 1 and err
    code, _, _ = run(capsys, "solve", "--method", "cfn1", "--function", "f1", "--alpha", "1.5", "--x0", "1")
    assert code == 1
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--method", "cfn1"])
    assert exc.value.code == 1


def test_solve_trace_csv(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, _, _ = run(capsys, "solve", "--method", "cfn2", "--function", "f2", "--alpha", "0.9",
                     "--x0", "-4.5", "--trace", str(path))
    assert code == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "k,x_re,x_im,step,residual"
    t = solve(MethodKind.CFN2, fm.builtin("f2"), -4.5, SolverConfig(0.9))
    assert len(lines) == len(t.iterates) + 1
    last = lines[-1].split(",")
    assert complex(float(last[1]), float(last[2])) == t.final


def test_solve_json_function(capsys, tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"reference_point": 0, "power_terms": [{"re": 1, "im": 0, "p": 2},
                                                                        {"re": -1, "im": 0, "p": 0}]}))
    code, out, _ = run(capsys, "solve", "--method", "cfn1", "--function", str(path), "--alpha", "1", "--x0", "2")
    assert code == 0 and out.splitlines()[1].split()[2] == "1"


def plane_args(out, *extra):
    return ["plane", "--method", "cfn1", "--function", "f1", "--lo", "-3", "--hi", "3",
            "--nx", "30", "--nalpha", "12", "--out", str(out), *extra]


def test_plane_outputs_and_manifest(capsys, tmp_path):
    prefix = tmp_path / "p"
    code, out, _ = run(capsys, *plane_args(prefix))
    assert code == 0
    pct = out.strip()
    assert pct == f"{float(pct):.2f}"
    assert (tmp_path / "p.ppm").read_bytes().startswith(b"P6 30 12 255\n")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 30 * 12 + 1
    manifest = json.loads((tmp_path / "p.manifest.json").read_text())
    assert manifest["command"] == "plane"
    assert abs(manifest["percentage"] - float(pct)) < 0.005
    assert manifest["config"]["method"] == "cfn1" and manifest["config"]["nx"] == 30
    assert set(manifest["outputs"]) == {"prefix", "ppm", "csv", "manifest"}
    assert manifest["duration_s"] >= 0


def test_manifest_rerun_is_byte_identical(capsys, tmp_path):
    run(capsys, *plane_args(tmp_path / "a", "--workers", "1"))
    code, _, _ = run(capsys, "plane", "--config", str(tmp_path / "a.manifest.json"),
                     "--out", str(tmp_path / "b"), "--workers", "2")
    assert code == 0
    for ext in ("ppm", "csv"):
        assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()


def test_plane_single_cell_at_root(capsys, tmp_path):
    code, out, _ = run(capsys, "plane", "--method", "cfn2", "--function", "f3", "--lo", "0", "--hi", "0",
                       "--alpha-lo", "0.6", "--alpha-hi", "0.6", "--nx", "1", "--nalpha", "1",
                       "--out", str(tmp_path / "one"))
    assert code == 0 and out.strip() == "100.00"


def test_plane_f3_imaginary_is_zero(capsys, tmp_path):
    code, out, _ = run(capsys, "plane", "--method", "cfn1", "--function", "f3", "--axis", "imag",
                       "--lo", "-1e6", "--hi", "1e6", "--nx", "20", "--nalpha", "5",
                       "--out", str(tmp_path / "im"))
    assert code == 0 and out.strip() == "0.00"


def test_plane_custom_roots(capsys, tmp_path):
    roots = tmp_path / "roots.json"
    roots.write_text(json.dumps([[r.real, r.imag] for r in fm.BUILTIN_ROOTS["f1"]]))
    run(capsys, *plane_args(tmp_path / "a"))
    code, _, _ = run(capsys, *plane_args(tmp_path / "b", "--roots", str(roots)))
    assert code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_plane_usage_errors(capsys, tmp_path):
    code, _, _ = run(capsys, "plane", "--method", "cfn1", "--function", "f1", "--lo", "3", "--hi", "-3",
                     "--out", str(tmp_path / "x"))
    assert code == 1
    code, _, _ = run(capsys, "plane", "--method", "cfn1", "--function", "f1", "--lo", "-3", "--hi", "3")
    assert code == 1


def test_workers_env_var(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("FRACROOT_WORKERS", "3")
    run(capsys, *plane_args(tmp_path / "w"))
    manifest = json.loads((tmp_path / "w.manifest.json").read_text())
    assert manifest["workers"] == 3


def test_order_replay(capsys, tmp_path):
    path = tmp_path / "seq.csv"
    rows = ["k,x_re,x_im"] + [f"{k},{2.0 ** -(2**k)!r},0" for k in range(6)]
    path.write_text("\n".join(rows) + "\n")
    code, out, _ = run(capsys, "order", "--replay", str(path))
    assert code == 0 and out.strip() == "ACOC: 2.0000"


def test_order_replay_insufficient(capsys, tmp_path):
    path = tmp_path / "seq.csv"
    path.write_text("k,x_re,x_im\n0,0.1,0\n1,0.01,0\n")
    code, _, err = run(capsys, "order", "--replay", str(path))
    assert code == 4 and "error" in err


def test_order_classical_traub(capsys):
    code, out, _ = run(capsys, "order", "--method", "cft", "--function", "f1", "--alpha", "1", "--x0", "-1.5")
    assert code == 0
    acoc_line = next(l for l in out.splitlines() if l.startswith("ACOC"))
    assert abs(float(acoc_line.split()[1]) - 3) < 0.3
    assert "2a+1 = 3" in out


def test_order_reports_theory_lines(capsys):
    _, out, _ = run(capsys, "order", "--method", "cfn1", "--function", "f1", "--alpha", "0.9", "--x0", "-1.5")
    assert "2a (cited)" in out
    _, out, _ = run(capsys, "order", "--method", "cfn2", "--function", "f1", "--alpha", "0.9", "--x0", "-1.5",
                    "--root", "-0.5840000")
    assert "a+1 = 1.9" in out and "error constant:" in out


def test_order_prints_measured_acoc(capsys):
    # the printed value is the trace's measured order against the supplied root
    f1 = fm.builtin("f1")
    root = solve(MethodKind.CFN2, f1, -1.5, SolverConfig(1.0, step_tol=1e-15, residual_tol=1e-15)).final
    _, out, _ = run(capsys, "order", "--method", "cfn2", "--function", "f1", "--alpha", "0.9",
                    "--x0", "-1.5", "--root", f"{root.real!r},{root.imag!r}")
    printed = float(next(l for l in out.splitlines() if l.startswith("ACOC")).split()[1])
    t = solve(MethodKind.CFN2, f1, -1.5, SolverConfig(0.9))
    assert printed == round(analysis.acoc(t, root), 4)


def test_order_needs_solver_flags(capsys):
    code, _, err = run(capsys, "order", "--method", "cfn2")
    assert code == 1 and "required" in err


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith("[")]
    assert len(lines) >= 30 and all(l.startswith("[PASS]") for l in lines)


def test_selftest_sabotage(monkeypatch, capsys):
    from fracroot import specfun

    monkeypatch.setattr(specfun, "gamma", specfun.gamma)  # restored after the test
    code, out, _ = run(capsys, "selftest", "--sabotage", "gamma")
    assert code == 5 and "[FAIL]" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracroot", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("fracroot ")
