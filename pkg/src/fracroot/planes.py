"""Convergence planes: starting point on one axis, derivative order on the other.

Each cell runs one solve and is tagged with the index of the known root it
reached (or :data:`DIVERGED`). Grids are cut into fixed row blocks that do not
depend on the worker count, and every block is computed by the same
elementwise engine, so serial and parallel runs give identical bytes.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fracroot.funcmodel import FunctionModel
from fracroot.solvers import MethodKind, SolverConfig, iterate_batch

__all__ = [
    "Axis",
    "DIVERGED",
    "PlaneConfig",
    "PlaneResult",
    "PaletteTooSmallError",
    "DEFAULT_PALETTE",
    "BLOCK_ROWS",
    "classify_root",
    "generate_plane",
    "render_ppm",
    "write_csv",
    "percentage_from_csv",
]

DIVERGED = -1
#: Rows per work unit. Fixed so the decomposition never depends on worker count.
BLOCK_ROWS = 4

#: 13 qualitative colours (ColorBrewer Set1/Dark2 style) followed by black.
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (228, 26, 28),
    (55, 126, 184),
    (77, 175, 74),
    (152, 78, 163),
    (255, 127, 0),
    (255, 255, 51),
    (166, 86, 40),
    (247, 129, 191),
    (153, 153, 153),
    (27, 158, 119),
    (117, 112, 179),
    (102, 166, 30),
    (230, 171, 2),
    (0, 0, 0),
)


class PaletteTooSmallError(ValueError):
    """Raised when a palette has fewer than ``len(roots) + 1`` colours."""


class Axis(enum.Enum):
    REAL = "real"
    IMAGINARY = "imag"


@dataclass(frozen=True)
class PlaneConfig:
    """Grid description. ``solver.alpha`` is ignored; orders come from the grid.

    Rows run from ``alpha_hi`` (row 0) down to ``alpha_lo``; columns from
    ``lo`` to ``hi`` along ``axis``. A one-point axis samples ``lo`` (or
    ``alpha_hi``).
    """

    method: MethodKind
    f: FunctionModel
    axis: Axis
    lo: float
    hi: float
    alpha_lo: float
    alpha_hi: float
    n_x0: int
    n_alpha: int
    roots: tuple[complex, ...]
    match_tol: float = 1e-3
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(alpha=1.0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "roots", tuple(complex(r) for r in self.roots))
        if self.n_x0 < 1 or self.n_alpha < 1:
            raise ValueError("grid needs at least one cell per axis")
        if not (self.lo < self.hi or (self.n_x0 == 1 and self.lo <= self.hi)):
            raise ValueError(f"need lo < hi: {self.lo}, {self.hi}")
        if not 0.0 < self.alpha_lo <= self.alpha_hi <= 1.0:
            raise ValueError(f"need 0 < alpha_lo <= alpha_hi <= 1: {self.alpha_lo}, {self.alpha_hi}")
        if not self.roots:
            raise ValueError("at least one known root is required")
        if not self.match_tol > 0:
            raise ValueError("match_tol must be positive")
        r = np.array(self.roots)
        gaps = np.abs(r[:, None] - r[None, :]) + np.diag(np.full(r.size, np.inf))
        if gaps.min() <= 2.0 * self.match_tol:
            raise ValueError("known roots must be separated by more than 2 * match_tol")

    def alphas(self) -> np.ndarray:
        if self.n_alpha == 1:
            return np.array([self.alpha_hi])
        return np.linspace(self.alpha_hi, self.alpha_lo, self.n_alpha)

    def x0s(self) -> np.ndarray:
        if self.n_x0 == 1:
            t = np.array([self.lo])
        else:
            t = np.linspace(self.lo, self.hi, self.n_x0)
        return t + 0j if self.axis is Axis.REAL else 1j * t


@dataclass(frozen=True)
class PlaneResult:
    config: PlaneConfig
    alphas: np.ndarray
    x0s: np.ndarray
    cells: np.ndarray  # (n_alpha, n_x0) root index or DIVERGED
    iteration_counts: np.ndarray
    percentage: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape


def classify_root(x_final: complex, roots: Sequence[complex], tol: float) -> int:
    """Index of the closest known root within ``tol``, else :data:`DIVERGED`."""
    x = complex(x_final)
    if not (np.isfinite(x.real) and np.isfinite(x.imag)):
        return DIVERGED
    dist = np.abs(np.asarray(roots, dtype=complex) - x)
    j = int(np.argmin(dist))
    return j if dist[j] <= tol else DIVERGED


def _classify_many(x: np.ndarray, converged: np.ndarray, roots: np.ndarray, tol: float) -> np.ndarray:
    out = np.full(x.shape, DIVERGED, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        dist = np.abs(x[..., None] - roots)
    best = np.argmin(np.where(np.isfinite(dist), dist, np.inf), axis=-1)
    near = np.take_along_axis(dist, best[..., None], axis=-1)[..., 0] <= tol
    ok = converged & near
    out[ok] = best[ok]
    return out


def _run_block(config: PlaneConfig, rows: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    r0, r1 = rows
    alphas = config.alphas()[r0:r1]
    x0s = config.x0s()
    x0_grid = np.broadcast_to(x0s, (alphas.size, x0s.size))
    a_grid = np.broadcast_to(alphas[:, None], x0_grid.shape)
    s = config.solver
    res = iterate_batch(
        config.method,
        config.f,
        x0_grid,
        a_grid,
        base=s.base,
        step_tol=s.step_tol,
        residual_tol=s.residual_tol,
        max_iter=s.max_iter,
    )
    cells = _classify_many(res.final, res.converged, np.array(config.roots), config.match_tol)
    return cells, res.iterations


def generate_plane(config: PlaneConfig, workers: int = 1) -> PlaneResult:
    """Run every cell of the grid; ``workers > 1`` uses a process pool."""
    blocks = [
        (r, min(r + BLOCK_ROWS, config.n_alpha)) for r in range(0, config.n_alpha, BLOCK_ROWS)
    ]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
            parts = list(pool.map(_run_block, [config] * len(blocks), blocks))
    else:
        parts = [_run_block(config, b) for b in blocks]
    cells = np.concatenate([p[0] for p in parts], axis=0)
    iters = np.concatenate([p[1] for p in parts], axis=0)
    return PlaneResult(
        config=config,
        alphas=config.alphas(),
        x0s=config.x0s(),
        cells=cells,
        iteration_counts=iters,
        percentage=_percentage(cells),
    )


def _percentage(cells: np.ndarray) -> float:
    return 100.0 * int(np.count_nonzero(cells != DIVERGED)) / cells.size


def render_ppm(result: PlaneResult, palette: Sequence[tuple[int, int, int]] | None = None) -> bytes:
    """Binary P6 image: one pixel per cell, row 0 = highest order."""
    palette = DEFAULT_PALETTE if palette is None else tuple(palette)
    need = len(result.config.roots) + 1
    if len(palette) < need:
        raise PaletteTooSmallError(f"palette has {len(palette)} colours, need {need}")
    lut = np.array(palette, dtype=np.uint8)
    idx = np.where(result.cells == DIVERGED, len(palette) - 1, result.cells)
    pixels = lut[idx]
    h, w = result.cells.shape
    return f"P6 {w} {h} 255\n".encode("ascii") + pixels.tobytes()


def _g17(v: float) -> str:
    return f"{v:.17g}"


def write_csv(result: PlaneResult) -> bytes:
    """Cells in row-major order with ``alpha,x0_re,x0_im,root_index,iterations``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "x0_re", "x0_im", "root_index", "iterations"])
    for i, a in enumerate(result.alphas):
        for j, x0 in enumerate(result.x0s):
            w.writerow(
                [
                    _g17(float(a)),
                    _g17(x0.real),
                    _g17(x0.imag),
                    int(result.cells[i, j]),
                    int(result.iteration_counts[i, j]),
                ]
            )
    return buf.getvalue().encode("utf-8")


def percentage_from_csv(data: bytes) -> float:
    rows = list(csv.DictReader(io.StringIO(data.decode("utf-8"))))
    if not rows:
        raise ValueError("CSV has no data rows")
    hits = sum(1 for r in rows if int(r["root_index"]) != DIVERGED)
    return 100.0 * hits / len(rows)


def default_workers() -> int:
    """``FRACROOT_WORKERS`` if set, else 1."""
    value = os.environ.get("FRACROOT_WORKERS", "").strip()
    return max(1, int(value)) if value else 1
