"""Uniform cell-centred box meshes and the finite-volume operators on them.

Fields are numpy arrays shaped ``grid.shape``.  Face quantities are stored per
axis: ``faces[a]`` holds the interior faces normal to axis ``a`` and has one
entry less than the field along that axis.  Boundary faces carry no flux.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import Params


@dataclass(frozen=True)
class Grid:
    shape: tuple[int, ...]
    h: tuple[float, ...]
    origin: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.shape, self.h))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h[axis]

    def axis_faces(self, axis: int) -> np.ndarray:
        """Coordinates of the interior faces along ``axis``."""
        return self.origin[axis] + np.arange(1, self.shape[axis]) * self.h[axis]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays, each shaped like a field."""
        return tuple(np.meshgrid(*(self.axis_centers(a) for a in range(self.dim)), indexing="ij"))

    def face_shape(self, axis: int) -> tuple[int, ...]:
        return tuple(n - 1 if a == axis else n for a, n in enumerate(self.shape))

    def face_measure(self, axis: int) -> float:
        """Area of one face normal to ``axis`` (1 in 1D)."""
        return float(np.prod([h for a, h in enumerate(self.h) if a != axis]))

    def integrate(self, f) -> float:
        return float(np.sum(f)) * self.cell_volume

    def to_dict(self) -> dict:
        return {"extents": list(self.shape), "lengths": list(self.lengths), "origin": list(self.origin)}


def make_grid(dim: int, extents, lengths, origin=None) -> Grid:
    """Box ``origin + [0, lengths]`` split into ``extents`` cells per axis; scalars apply to every axis."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    extents = (extents,) * dim if np.isscalar(extents) else tuple(extents)
    lengths = (lengths,) * dim if np.isscalar(lengths) else tuple(lengths)
    if len(extents) != dim or len(lengths) != dim:
        raise ValueError("need one extent and one length per axis")
    if any(int(n) != n or n < 2 for n in extents):
        raise ValueError(f"need at least 2 cells per axis, got {extents}")
    if any(not L > 0 for L in lengths):
        raise ValueError(f"lengths must be positive, got {lengths}")
    if origin is None:
        origin = (0.0,) * dim
    origin = (origin,) * dim if np.isscalar(origin) else tuple(origin)
    if len(origin) != dim:
        raise ValueError("origin needs one coordinate per axis")
    shape = tuple(int(n) for n in extents)
    h = tuple(float(L) / n for L, n in zip(lengths, shape))
    return Grid(shape, h, tuple(float(o) for o in origin))


def face_average(f: np.ndarray, axis: int) -> np.ndarray:
    n = f.shape[axis]
    lo = np.take(f, np.arange(n - 1), axis=axis)
    hi = np.take(f, np.arange(1, n), axis=axis)
    return 0.5 * (lo + hi)


def face_difference(f: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    return np.diff(f, axis=axis) / grid.h[axis]


@dataclass(frozen=True)
class FaceMobility:
    m1: tuple[np.ndarray, ...]
    m2: tuple[np.ndarray, ...]
    combined: tuple[np.ndarray, ...]


def upwind_average(f: np.ndarray, pressure: np.ndarray, axis: int) -> np.ndarray:
    """Value of ``f`` in the higher-pressure neighbour of each face; the mean on ties."""
    n = f.shape[axis]
    lo = np.take(f, np.arange(n - 1), axis=axis)
    hi = np.take(f, np.arange(1, n), axis=axis)
    dp = np.diff(pressure, axis=axis)
    return np.where(dp < 0, lo, np.where(dp > 0, hi, 0.5 * (lo + hi)))


def face_mobilities(u1, u2, w, params: Params, grid: Grid, pressure=None) -> FaceMobility:
    """Species mobilities ``avg(u_i) * avg(w)**(gamma-1)`` and ``mu*m1 + nu*m2``.

    With ``params.averaging == "upwind"`` and a ``pressure`` field given, the
    species factor ``avg(u_i)`` is taken from the upwind cell (the one with the
    larger pressure) instead of the arithmetic mean.  Both species share that
    cell, and the combined mobility is assembled from the species ones, so the
    transport of ``u1 + u2`` and of ``w`` use the same numbers either way.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    w = np.asarray(w, dtype=float)
    upwind = params.averaging == "upwind" and pressure is not None
    m1, m2, comb = [], [], []
    for a in range(grid.dim):
        wf = face_average(w, a) ** (params.gamma - 1.0)
        if upwind:
            a1 = upwind_average(u1, pressure, a) * wf
            a2 = upwind_average(u2, pressure, a) * wf
        else:
            a1 = face_average(u1, a) * wf
            a2 = face_average(u2, a) * wf
        m1.append(a1)
        m2.append(a2)
        comb.append(params.mu * a1 + params.nu * a2)
    return FaceMobility(tuple(m1), tuple(m2), tuple(comb))


def div_flux(mob, w, gamma: float, grid: Grid) -> np.ndarray:
    """Cell divergence of ``mob * grad(w**gamma)`` with no flux through the boundary."""
    p = np.asarray(w, dtype=float) ** gamma
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        flux = mob[a] * face_difference(p, a, grid)
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        out += np.diff(np.pad(flux, pad), axis=a) / grid.h[a]
    return out


def laplacian(f, grid: Grid) -> np.ndarray:
    """Standard 3/5-point Laplacian with reflecting (Neumann) ghost cells."""
    ones = [np.ones(grid.face_shape(a)) for a in range(grid.dim)]
    return div_flux(ones, f, 1.0, grid)


def diffusion_operator(cond, grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of ``-div(cond grad .)`` on flattened (C-order) fields.

    ``cond`` holds one nonnegative array per axis on the interior faces.  The
    result is the weighted graph Laplacian of the cell adjacency: symmetric,
    positive semidefinite, with vanishing row sums.
    """
    idx = np.arange(grid.n_cells).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for a in range(grid.dim):
        n = grid.shape[a]
        left = np.take(idx, np.arange(n - 1), axis=a).ravel()
        right = np.take(idx, np.arange(1, n), axis=a).ravel()
        k = np.asarray(cond[a], dtype=float).ravel() / grid.h[a] ** 2
        rows += [left, right, left, right]
        cols += [left, right, right, left]
        vals += [k, k, -k, -k]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells, grid.n_cells),
    )
    return A.tocsr()


def snapshot_columns(grid: Grid, names) -> list[str]:
    axes = ["x", "y"][: grid.dim]
    return ["index", *axes, *names]


def write_fields_csv(path, grid: Grid, fields: dict[str, np.ndarray]) -> None:
    """One row per cell: ``index, x[, y], <field columns in dict order>``."""
    coords = [c.ravel() for c in grid.coords()]
    cols = [np.asarray(f, dtype=float).ravel() for f in fields.values()]
    with open(Path(path), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(snapshot_columns(grid, fields.keys()))
        for i in range(grid.n_cells):
            wr.writerow([i, *(f"{c[i]:.17g}" for c in coords), *(f"{c[i]:.17g}" for c in cols)])


def read_fields_csv(path, grid: Grid) -> dict[str, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = np.array([[float(v) for v in row] for row in rd])
    names = header[1 + grid.dim :]
    return {name: data[:, 1 + grid.dim + k].reshape(grid.shape) for k, name in enumerate(names)}
