"""Structured box grids, cell-centred fields and the discrete calculus on them.

Fields are plain ``numpy`` arrays whose shape equals ``grid.cells`` (C order,
i.e. row-major over cells).  Face quantities along axis ``a`` are arrays with
``cells[a] + 1`` entries along that axis; the first and last entries are the
boundary faces.  No-flux (homogeneous Neumann) walls are encoded by boundary
faces that carry exactly zero gradient and zero flux.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataIntegrityError, ParameterError

__all__ = [
    "GridSpec",
    "integrate",
    "lp_norm",
    "face_gradient",
    "grad_l2_sq",
    "cell_grad_sq",
    "div_flux",
    "laplacian",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform rectangular grid on the box ``[0, L_1] x ... x [0, L_N]``."""

    cells: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        cells = tuple(int(n) for n in self.cells)
        lengths = tuple(float(x) for x in self.lengths)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lengths", lengths)
        if len(cells) not in (1, 2, 3):
            raise ParameterError(f"grid dimension must be 1, 2 or 3, got {len(cells)}")
        if len(lengths) != len(cells):
            raise ParameterError("grid.cells and grid.lengths must have the same length")
        if any(n < 2 for n in cells):
            raise ParameterError(f"every axis needs at least 2 cells, got {cells}")
        if any(not (math.isfinite(x) and x > 0) for x in lengths):
            raise ParameterError(f"every axis length must be > 0, got {lengths}")

    @classmethod
    def uniform(cls, dim: int, n: int, length: float = 1.0) -> "GridSpec":
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def measure(self) -> float:
        return math.prod(self.lengths)

    @property
    def size(self) -> int:
        return math.prod(self.cells)

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def faces(self, axis: int) -> np.ndarray:
        """All face coordinates along ``axis``, walls included."""
        return np.arange(self.cells[axis] + 1) * self.spacing[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Sparse, broadcastable cell-centre coordinates (``indexing='ij'``)."""
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dim)),
                                 indexing="ij", sparse=True))

    def face_mesh(self, axis: int) -> tuple[np.ndarray, ...]:
        """Sparse coordinates of the faces normal to ``axis``."""
        coords = [self.faces(a) if a == axis else self.centers(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*coords, indexing="ij", sparse=True))

    def full(self, value: float) -> np.ndarray:
        return np.full(self.cells, float(value))

    # Cached index helpers used by the stencil kernels.

    @cached_property
    def slices(self) -> tuple[tuple[tuple, tuple], ...]:
        """Per axis, the (lower, upper) cell slices adjacent to each interior face."""
        out = []
        for a in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            out.append((tuple(lo), tuple(hi)))
        return tuple(out)

    @cached_property
    def neighbor_weight(self) -> np.ndarray:
        """Sum over axes of (number of in-domain neighbours) / h_a^2 for every cell."""
        w = np.zeros(self.cells)
        for a, (lo, hi) in enumerate(self.slices):
            ih2 = 1.0 / self.spacing[a] ** 2
            w[lo] += ih2
            w[hi] += ih2
        w.setflags(write=False)
        return w

    def check_field(self, f: np.ndarray, name: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != self.cells:
            raise ParameterError(f"{name} has shape {f.shape}, grid expects {self.cells}")
        return f


def _require_finite(total: float, what: str) -> None:
    # A finite sum implies every summand was finite (inf and nan propagate).
    if not math.isfinite(total):
        raise DataIntegrityError(f"non-finite value encountered in {what}")


def integrate(grid: GridSpec, f: np.ndarray) -> float:
    """Midpoint-rule integral of a cell field over the box."""
    f = grid.check_field(f)
    total = float(np.sum(f))
    _require_finite(total, "integrate")
    return total * grid.cell_volume


def lp_norm(grid: GridSpec, f: np.ndarray, p: float) -> float:
    """Discrete L^p norm; ``p = inf`` gives the max norm."""
    if p != math.inf and not p >= 1:
        raise ParameterError(f"lp_norm needs p >= 1 or p = inf, got {p}")
    f = grid.check_field(f)
    a = np.abs(f)
    if p == math.inf:
        m = float(np.max(a))
        _require_finite(m, "lp_norm")
        return m
    if p == 1:
        return integrate(grid, a)
    if p == 2:
        return math.sqrt(integrate(grid, a * a))
    return integrate(grid, a**p) ** (1.0 / p)


def face_gradient(grid: GridSpec, f: np.ndarray) -> list[np.ndarray]:
    """Two-point face gradients per axis; boundary faces are exactly zero."""
    f = grid.check_field(f)
    out = []
    for a, h in enumerate(grid.spacing):
        g = np.diff(f, axis=a) / h
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        out.append(np.pad(g, pad))
    return out


def _interior_gradients(grid: GridSpec, f: np.ndarray) -> list[np.ndarray]:
    return [(f[hi] - f[lo]) / h for (lo, hi), h in zip(grid.slices, grid.spacing)]


def grad_l2_sq(grid: GridSpec, f: np.ndarray) -> float:
    """Face-assembled approximation of the integral of |grad f|^2.

    Each interior face contributes (face gradient)^2 times one cell volume
    (half from each adjacent cell); wall faces contribute nothing.
    """
    f = grid.check_field(f)
    total = 0.0
    for g in _interior_gradients(grid, f):
        total += float(np.sum(g * g))
    _require_finite(total, "grad_l2_sq")
    return total * grid.cell_volume


def cell_grad_sq(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Cell-local form of :func:`grad_l2_sq`.

    Every face's squared gradient is split evenly between its two cells, so
    ``integrate(grid, cell_grad_sq(grid, f)) == grad_l2_sq(grid, f)`` up to
    roundoff.
    """
    f = grid.check_field(f)
    out = np.zeros(grid.cells)
    for g, (lo, hi) in zip(_interior_gradients(grid, f), grid.slices):
        half = 0.5 * g * g
        out[lo] += half
        out[hi] += half
    return out


def div_flux(grid: GridSpec, flux: list[np.ndarray]) -> np.ndarray:
    """Discrete divergence of a face flux with zero wall flux."""
    if len(flux) != grid.dim:
        raise ParameterError(f"expected {grid.dim} flux components, got {len(flux)}")
    out = np.zeros(grid.cells)
    for a, (F, h) in enumerate(zip(flux, grid.spacing)):
        F = np.asarray(F, dtype=float)
        expected = list(grid.cells)
        expected[a] += 1
        if F.shape != tuple(expected):
            raise ParameterError(f"flux component {a} has shape {F.shape}, expected {tuple(expected)}")
        first = np.take(F, 0, axis=a)
        last = np.take(F, -1, axis=a)
        if np.any(first != 0.0) or np.any(last != 0.0):
            raise ContractViolation(f"nonzero boundary flux on axis {a}")
        out += np.diff(F, axis=a) / h
    _require_finite(float(np.sum(out)), "div_flux")
    return out


def laplacian(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """Neumann five-point (2N+1 point) Laplacian, equal to div_flux(face_gradient(f))."""
    f = grid.check_field(f)
    out = -grid.neighbor_weight * f
    for a, (lo, hi) in enumerate(grid.slices):
        ih2 = 1.0 / grid.spacing[a] ** 2
        out[lo] += ih2 * f[hi]
        out[hi] += ih2 * f[lo]
    return out


# ---------------------------------------------------------------------------
# CHEMOFIELD v1 snapshots

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(path: str | os.PathLike, grid: GridSpec, f: np.ndarray, t: float) -> None:
    f = grid.check_field(f)
    header = (
        f"CHEMOFIELD v1 dim={grid.dim} "
        f"cells={','.join(str(n) for n in grid.cells)} "
        f"lengths={','.join(_fmt(L) for L in grid.lengths)} t={_fmt(t)}"
    )
    body = "\n".join(_fmt(x) for x in f.ravel(order="C"))
    atomic_write_text(path, header + "\n" + body + "\n")


def read_field(path: str | os.PathLike) -> tuple[GridSpec, np.ndarray, float]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:2] != ["CHEMOFIELD", "v1"]:
            raise DataIntegrityError(f"{path}: not a CHEMOFIELD v1 file")
        meta = dict(item.split("=", 1) for item in header[2:])
        cells = tuple(int(x) for x in meta["cells"].split(","))
        lengths = tuple(float(x) for x in meta["lengths"].split(","))
        if int(meta["dim"]) != len(cells):
            raise DataIntegrityError(f"{path}: dim does not match cells")
        values = np.array([float(line) for line in fh if line.strip()])
    grid = GridSpec(cells, lengths)
    if values.size != grid.size:
        raise DataIntegrityError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid, values.reshape(cells), float(meta["t"])
