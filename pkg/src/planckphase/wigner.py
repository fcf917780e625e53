"""Wigner functions on the canonical grid and their Planck-cell box averages.

``W(x, k) = (1/pi) * integral psi*(x+y) psi(x-y) exp(2iky) dy``.  Rows are the
native x-grid points, which are exactly the midpoints of ``2N+1`` equal
sub-intervals of every cell; the k-axis uses ``ppc`` midpoints per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .export import write_dense_csv
from .lattice import LatticeParams
from .projection import CellMap
from .states import StateX, to_k

IMAG_TOL = 1e-8
SUPPORT_TOL = 1e-12
MIN_POINTS_PER_CELL = 9


class WignerGridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WignerMap:
    """``values[i, j] = W(x[i], k[j])`` on cell-aligned axes."""

    x: np.ndarray
    k: np.ndarray
    values: np.ndarray
    params: LatticeParams
    x_cells: tuple[int, int]
    k_cells: tuple[int, int]
    points_per_cell: int

    def __post_init__(self):
        for arr in (self.x, self.k, self.values):
            arr.flags.writeable = False

    @property
    def dx(self) -> float:
        return self.params.dx

    @property
    def dk(self) -> float:
        return self.params.k0 / self.points_per_cell

    def to_dense_csv(self, path) -> None:
        """Rows are x, columns k; axes in units of x0 and k0."""
        write_dense_csv(path, self.x / self.params.x0, self.k / self.params.k0, self.values, corner="x\\k")


def _support_cells(values: np.ndarray, coords: np.ndarray, unit: float, tol: float) -> tuple[int, int]:
    weight = np.abs(values) ** 2
    inside = coords[weight > tol * weight.max()]
    return int(math.floor(inside.min() / unit + 0.5)), int(math.floor(inside.max() / unit + 0.5))


def default_points_per_cell(state: StateX) -> int:
    """Smallest odd count >= 9 keeping the k-sum alias ``ppc*x0/2`` outside the support."""
    x = state.grid.x
    weight = np.abs(state.samples) ** 2
    radius = np.abs(x[weight > SUPPORT_TOL * weight.max()]).max()
    ppc = max(MIN_POINTS_PER_CELL, int(math.ceil(2 * radius / state.grid.params.x0)) + 1)
    return ppc if ppc % 2 else ppc + 1


def default_cells(state: StateX, margin: int = 1) -> tuple[tuple[int, int], tuple[int, int]]:
    """Cell ranges covering the state's support in x and in k, plus ``margin``."""
    grid = state.grid
    p = grid.params
    xlo, xhi = _support_cells(state.samples, grid.x, p.x0, SUPPORT_TOL)
    klo, khi = _support_cells(to_k(state).samples, grid.k, p.k0, SUPPORT_TOL)
    jx_lo = int(p.jx_values[0]) + 1
    jx_hi = int(p.jx_values[-1])
    # W is periodic in k with period (N + 1/2) cells; wider windows pick up aliased pairs.
    kmax = (p.brillouin_cutoff - 1) // 2
    return ((max(jx_lo, xlo - margin), min(jx_hi, xhi + margin)),
            (max(-kmax, klo - margin), min(kmax, khi + margin)))


def wigner_transform(state: StateX, x_cells=None, k_cells=None, points_per_cell=None,
                     block: int = 256) -> WignerMap:
    """Wigner function over the given cell ranges (inclusive ``(lo, hi)`` pairs).

    The y-sum uses every shift with both ``x+y`` and ``x-y`` inside the domain;
    it does not wrap, so no cross terms appear between a packet and the
    periodic image of another.  Each row is folded onto ``L = ppc*(2N+1)``
    frequency bins and evaluated with one FFT.
    """
    grid = state.grid
    p = grid.params
    auto_x, auto_k = default_cells(state)
    x_cells = auto_x if x_cells is None else tuple(int(c) for c in x_cells)
    k_cells = auto_k if k_cells is None else tuple(int(c) for c in k_cells)
    ppc = default_points_per_cell(state) if points_per_cell is None else int(points_per_cell)
    if ppc < 1:
        raise WignerGridError("points_per_cell must be positive")
    if k_cells[1] < k_cells[0] or x_cells[1] < x_cells[0]:
        raise WignerGridError("cell ranges must be (lo, hi) with lo <= hi")
    if k_cells[1] - k_cells[0] + 1 > p.brillouin_cutoff:
        raise WignerGridError(
            f"k window of {k_cells[1] - k_cells[0] + 1} cells exceeds the Wigner period "
            f"of {p.brillouin_cutoff + 0.5} cells"
        )

    start = grid.cell_slice(x_cells[0]).start
    stop = grid.cell_slice(x_cells[1]).stop
    rows = np.arange(start, stop)
    jk = np.arange(k_cells[0], k_cells[1] + 1)
    offsets = (np.arange(ppc) + 0.5) / ppc - 0.5
    k_axis = ((jk[:, None] + offsets[None, :]).ravel()) * p.k0

    M = grid.n_samples
    L = ppc * p.n_copies
    h = p.k0 / ppc
    s = np.arange(-(M // 2), M // 2 + 1)
    k_start = k_axis[0]
    pre = np.exp(2j * k_start * s * grid.dx)
    fold = sp.csr_matrix((np.ones(len(s)), (np.arange(len(s)), (2 * s) % L)), shape=(len(s), L))
    r_index = np.rint((k_axis - k_start) / h).astype(int) % L

    psi = state.samples
    values = np.empty((len(rows), len(k_axis)))
    for b0 in range(0, len(rows), block):
        q = rows[b0:b0 + block, None]
        inside = (np.abs(s) <= np.minimum(q, M - 1 - q))
        prod = np.where(inside, np.conj(psi[(q + s) % M]) * psi[(q - s) % M], 0) * pre
        folded = (fold.T @ prod.T).T
        spec = L * np.fft.ifft(folded, axis=1)[:, r_index] * (grid.dx / math.pi)
        scale = max(1.0, np.abs(spec.real).max())
        if np.abs(spec.imag).max() > IMAG_TOL * scale:
            raise WignerGridError(
                f"imaginary residue {np.abs(spec.imag).max():.2e}: grid inconsistent with state"
            )
        values[b0:b0 + block] = spec.real
    return WignerMap(grid.x[rows].copy(), k_axis, values, p, x_cells, k_cells, ppc)


def wigner_point(state: StateX, x: float, k: float) -> float:
    """``W(x, k)`` by direct summation; ``x`` must lie on the grid or half-grid."""
    grid = state.grid
    M = grid.n_samples
    t = 2 * (x - grid.x[0]) / grid.dx
    ti = int(round(t))
    if abs(t - ti) > 1e-6:
        raise WignerGridError("x must lie on the grid or half-way between grid points")
    a = np.arange(max(0, ti - M + 1), min(M, ti + 1))
    b = ti - a
    y = grid.x[a] - x
    value = np.sum(np.conj(state.samples[a]) * state.samples[b] * np.exp(2j * k * y)) * grid.dx / math.pi
    return float(value.real)


def marginal_x(W: WignerMap) -> np.ndarray:
    return W.values.sum(axis=1) * W.dk


def marginal_k(W: WignerMap) -> np.ndarray:
    return W.values.sum(axis=0) * W.dx


def coarse_grain(W: WignerMap, params: LatticeParams | None = None, x_cells=None, k_cells=None) -> CellMap:
    """Box integral of ``W`` over each Planck cell, by the midpoint rule."""
    params = W.params if params is None else params
    if params != W.params:
        raise WignerGridError("Wigner map was computed on a different lattice")
    x_cells = W.x_cells if x_cells is None else tuple(x_cells)
    k_cells = W.k_cells if k_cells is None else tuple(k_cells)
    if not (W.x_cells[0] <= x_cells[0] <= x_cells[1] <= W.x_cells[1]
            and W.k_cells[0] <= k_cells[0] <= k_cells[1] <= W.k_cells[1]):
        raise WignerGridError(f"cells {x_cells} x {k_cells} outside the map's coverage")
    nx = params.n_copies
    ppc = W.points_per_cell
    jx = np.arange(x_cells[0], x_cells[1] + 1)
    jk = np.arange(k_cells[0], k_cells[1] + 1)
    i0 = (x_cells[0] - W.x_cells[0]) * nx
    j0 = (k_cells[0] - W.k_cells[0]) * ppc
    block = W.values[i0:i0 + len(jx) * nx, j0:j0 + len(jk) * ppc]
    sums = block.reshape(len(jx), nx, len(jk), ppc).sum(axis=(1, 3))
    return CellMap(jx, jk, sums * W.dx * W.dk)


def sign_changes(values: np.ndarray, floor: float = 0.0) -> int:
    """Number of sign flips along a sequence, ignoring entries with ``|v| <= floor``."""
    v = np.asarray(values)
    v = v[np.abs(v) > floor]
    return int(np.count_nonzero(np.signbit(v[1:]) != np.signbit(v[:-1])))
