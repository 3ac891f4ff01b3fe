import numpy as np
import pytest

from fracroot import funcmodel as fm
from fracroot.planes import (
    DEFAULT_PALETTE,
    DIVERGED,
    Axis,
    PaletteTooSmallError,
    PlaneConfig,
    PlaneResult,
    classify_root,
    generate_plane,
    percentage_from_csv,
    render_ppm,
    write_csv,
)
from fracroot.solvers import MethodKind, SolverConfig

ROOTS = fm.BUILTIN_ROOTS


def config(name="f1", method=MethodKind.CFN1, axis=Axis.REAL, lo=-3.0, hi=3.0,
           alpha=(0.5, 1.0), n=(40, 20), **kw):
    return PlaneConfig(method, fm.builtin(name), axis, lo, hi, alpha[0], alpha[1], n[0], n[1],
                       ROOTS[name], **kw)


def fake_result(cells, roots=(0j,)):
    cells = np.asarray(cells)
    cfg = PlaneConfig(MethodKind.CFN1, fm.builtin("f3"), Axis.REAL, -1.0, 1.0, 0.5, 1.0,
                      max(cells.shape[1], 2), max(cells.shape[0], 2), roots)
    return PlaneResult(cfg, np.linspace(1, 0.5, cells.shape[0]), np.linspace(-1, 1, cells.shape[1]) + 0j,
                       cells, np.zeros_like(cells), 100.0 * np.mean(cells != DIVERGED))


def test_classify_root():
    roots = ROOTS["f1"]
    assert classify_root(-0.58400001, roots, 1e-3) == roots.index(-0.584 + 0j)
    assert classify_root(20.89 + 0.30176j, ROOTS["f4"], 1e-3) == DIVERGED
    # halfway between two f4 roots, far from both
    assert classify_root((-1.4523 - 1.3647) / 2, ROOTS["f4"], 1e-3) == DIVERGED
    assert classify_root(complex("nan"), roots, 1e-3) == DIVERGED


def test_render_ppm_all_diverged():
    data = render_ppm(fake_result([[DIVERGED, DIVERGED], [DIVERGED, DIVERGED]]))
    assert data == b"P6 2 2 255\n" + bytes(12)


def test_render_ppm_single_root_pixel():
    data = render_ppm(fake_result([[0]]))
    assert data == b"P6 1 1 255\n" + bytes((228, 26, 28))
    assert DEFAULT_PALETTE[0] == (228, 26, 28)
    assert DEFAULT_PALETTE[-1] == (0, 0, 0)


def test_render_ppm_orientation():
    # row 0 of the image is the highest alpha; column 0 is lo
    res = fake_result([[0, DIVERGED], [DIVERGED, DIVERGED]])
    body = render_ppm(res).split(b"\n", 1)[1]
    assert body[:3] == bytes(DEFAULT_PALETTE[0]) and body[3:] == bytes(9)


def test_palette_too_small():
    with pytest.raises(PaletteTooSmallError):
        render_ppm(fake_result([[0]], roots=(0j, 5j)), palette=[(1, 2, 3), (0, 0, 0)])
    assert len(DEFAULT_PALETTE) >= len(ROOTS["f4"]) + 1


def test_csv_single_diverged_cell():
    cfg = config(alpha=(0.6, 0.6), n=(1, 1), lo=-1.5, hi=-1.5)
    res = generate_plane(cfg)
    lines = write_csv(res).decode().splitlines()
    assert lines[0] == "alpha,x0_re,x0_im,root_index,iterations"
    assert len(lines) == 2
    assert lines[1].endswith(",-1,500")
    assert lines[1].startswith("0.59999999999999998,-1.5,0,")


def test_csv_shape_and_round_trip():
    res = generate_plane(config(n=(13, 7)))
    data = write_csv(res)
    rows = data.decode().splitlines()
    assert len(rows) == 13 * 7 + 1
    assert percentage_from_csv(data) == res.percentage
    # 17 significant digits reproduce the grid exactly
    first = rows[1].split(",")
    assert float(first[0]) == res.alphas[0] and float(first[1]) == res.x0s[0].real


def test_percentage_consistency():
    res = generate_plane(config(n=(30, 10)))
    assert res.percentage == 100.0 * np.count_nonzero(res.cells != DIVERGED) / res.cells.size


def test_alpha_grid_includes_one():
    cfg = config(alpha=(0.37, 1.0), n=(3, 9))
    assert cfg.alphas()[0] == 1.0
    assert cfg.alphas()[-1] == 0.37


def test_single_cell_at_root():
    # 0 is an exact root of f3, so the residual test fires before any step
    cfg = config("f3", n=(1, 1), lo=0.0, hi=0.0, alpha=(0.7, 0.7))
    res = generate_plane(cfg)
    assert res.percentage == 100.0 and res.iteration_counts[0, 0] == 0


def test_order_independence():
    cfg = config(method=MethodKind.CFT, n=(25, 11))
    serial = generate_plane(cfg, workers=1)
    parallel = generate_plane(cfg, workers=3)
    assert np.array_equal(serial.cells, parallel.cells)
    assert np.array_equal(serial.iteration_counts, parallel.iteration_counts)
    assert write_csv(serial) == write_csv(parallel)
    assert render_ppm(serial) == render_ppm(parallel)


def test_alpha_one_rows_coincide_for_newton_variants():
    a = generate_plane(config(method=MethodKind.CFN1, n=(60, 3)))
    b = generate_plane(config(method=MethodKind.CFN2, n=(60, 3)))
    assert np.array_equal(a.cells[0], b.cells[0])
    assert np.array_equal(a.iteration_counts[0], b.iteration_counts[0])


def test_f3_real_plane_mostly_converges():
    res = generate_plane(config("f3", MethodKind.CFN2, lo=-10, hi=10, alpha=(0.9, 1.0), n=(40, 10)))
    assert res.percentage > 90
    # near alpha = 1 a start far left jumps to ~e^10 and cannot come back
    x0 = config("f3", lo=-10, hi=10, n=(40, 10)).x0s()
    assert res.cells[0, 0] == DIVERGED and x0[0] == -10


def test_f3_imaginary_plane_never_converges():
    for m in (MethodKind.CFN1, MethodKind.CFN2):
        res = generate_plane(config("f3", m, axis=Axis.IMAGINARY, lo=-1e6, hi=1e6, n=(40, 10)))
        assert res.percentage == 0.0


def test_traub_covers_at_least_newton2():
    n2 = generate_plane(config(method=MethodKind.CFN2, n=(80, 20)))
    t = generate_plane(config(method=MethodKind.CFT, n=(80, 20)))
    assert t.percentage >= n2.percentage - 2


def test_ppm_deterministic_f1_100():
    cfg = config(n=(100, 100))
    assert render_ppm(generate_plane(cfg)) == render_ppm(generate_plane(cfg))


def test_cells_depend_only_on_their_coordinates():
    big = generate_plane(config(n=(9, 9)))
    cfg = config(n=(9, 9))
    i, j = 4, 6
    single = generate_plane(
        config(n=(1, 1), lo=cfg.x0s()[j].real, hi=cfg.x0s()[j].real,
               alpha=(cfg.alphas()[i], cfg.alphas()[i]))
    )
    assert single.cells[0, 0] == big.cells[i, j]
    assert single.iteration_counts[0, 0] == big.iteration_counts[i, j]


def test_config_validation():
    with pytest.raises(ValueError):
        config(lo=1.0, hi=-1.0)
    with pytest.raises(ValueError):
        config(alpha=(0.0, 1.0))
    with pytest.raises(ValueError):
        config(alpha=(0.9, 0.8))
    with pytest.raises(ValueError):
        PlaneConfig(MethodKind.CFN1, fm.builtin("f1"), Axis.REAL, -1, 1, 0.5, 1, 4, 4, (0j, 1e-3))
    with pytest.raises(ValueError):
        PlaneConfig(MethodKind.CFN1, fm.builtin("f1"), Axis.REAL, -1, 1, 0.5, 1, 4, 4, ())


def test_solver_settings_are_honoured():
    tight = config(n=(20, 5), solver=SolverConfig(alpha=1.0, max_iter=3))
    loose = config(n=(20, 5))
    assert generate_plane(tight).iteration_counts.max() <= 3
    assert generate_plane(tight).percentage <= generate_plane(loose).percentage
