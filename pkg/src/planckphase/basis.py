"""Wannier basis over Planck cells: Gaussian seeds, Kohn frames, Löwdin step.

For each quasi-momentum ``k_m`` in ``[0, k0)`` the band seeds are sampled on
the comb ``k_m + n*k0`` into a frame matrix ``F`` (rows ``n``, columns
``j_k``).  Its symmetric orthogonalization ``U = F (F^T F)^(-1/2)`` gives the
periodic parts of the Wannier functions in k-space, ``w~_{j_k}(k_m + n*k0) =
U[n, j_k] / sqrt(k0)``.  Translations by ``j_x*x0`` then only add the phase
``exp(-i k j_x x0)``, which is what makes the set orthonormal across cells.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import crcmod
import numpy as np

from .lattice import (
    CellIndex,
    LatticeParams,
    PhaseGrid,
    check_cell,
    make_grid,
    validate_params,
)

PSD_FLOOR = 1e-12
BASIS_MAGIC = b"WNB1"
FORMAT_VERSION = 1
FLAG_COMPLEX = 0x1
THREADS_ENV = "PLANCKPHASE_THREADS"

# CRC-64/XZ (ECMA-182 polynomial, reflected, all-ones init and xor-out).
crc64 = crcmod.mkCrcFun(0x142F0E1EBA9EA3693, initCrc=0, rev=True, xorOut=0xFFFFFFFFFFFFFFFF)

_HEADER = struct.Struct("<4sII3d3I")


class FrameDegenerateError(ArithmeticError):
    """The overlap matrix of a frame is numerically singular."""

    def __init__(self, eigenvalue: float, m: int | None = None):
        self.eigenvalue = float(eigenvalue)
        self.m = m
        where = "" if m is None else f" at k-point m={m}"
        super().__init__(
            f"frame numerically degenerate{where}: smallest overlap eigenvalue "
            f"{self.eigenvalue:.3e} below floor {PSD_FLOOR:.0e}"
        )


class BasisFormatError(ValueError):
    """A basis or state file failed validation."""


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    return max(1, cap) if cap else max(1, min(8, os.cpu_count() or 1))


def seed_k(params: LatticeParams, j_k, k):
    """Gaussian seed spectrum ``exp(-zeta^2 (k - j_k k0)^2)``.

    At the default lattice this is ``exp(-(k/2pi - j_k)^2)``.  The constant
    prefactor of the Fourier transform is dropped; orthogonalization removes it.
    """
    return np.exp(-(params.zeta * (np.asarray(k) - np.asarray(j_k) * params.k0)) ** 2)


def seed_x(params: LatticeParams, cell, x):
    """Unnormalized seed packet ``exp(-(x - j_x x0)^2 / 4 zeta^2 + i j_k k0 x)``."""
    j_x, j_k = cell
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - j_x * params.x0) ** 2) / (4 * params.zeta**2) + 1j * j_k * params.k0 * x)


@dataclass(frozen=True)
class FrameMatrix:
    """Seed vectors ``f_{k, j_k}`` as columns; row ``i`` is ``n = i - N``."""

    k: float
    columns: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.columns)) or np.any(self.columns < 0):
            raise ValueError("frame entries must be finite and nonnegative")
        if np.any(np.linalg.norm(self.columns, axis=0) <= 0):
            raise FrameDegenerateError(0.0)


def frame_matrix(params: LatticeParams, k: float, band_order=None) -> FrameMatrix:
    """Frame at quasi-momentum ``k`` in ``[0, k0)``.

    ``band_order`` optionally permutes the columns (a sequence of ``j_k``).
    """
    if not 0.0 <= k < params.k0:
        raise ValueError(f"k={k} outside [0, k0={params.k0})")
    n = np.arange(-params.brillouin_cutoff, params.brillouin_cutoff + 1)
    bands = params.jk_values if band_order is None else np.asarray(band_order)
    cols = seed_k(params, bands[None, :], k + n[:, None] * params.k0)
    return FrameMatrix(float(k), cols)


def inv_sqrt_psd(M: np.ndarray, floor: float = PSD_FLOOR) -> np.ndarray:
    """Inverse square root of a symmetric positive-definite matrix.

    Eigenvalues below ``floor`` raise :class:`FrameDegenerateError`; nothing
    is regularized.
    """
    M = np.asarray(M)
    if not np.allclose(M, M.conj().T, rtol=1e-12, atol=1e-12 * np.abs(M).max(initial=1.0)):
        raise ValueError("matrix is not symmetric")
    evals, evecs = np.linalg.eigh(M)
    if evals[0] < floor:
        raise FrameDegenerateError(evals[0])
    S = (evecs * evals**-0.5) @ evecs.conj().T
    return 0.5 * (S + S.conj().T)


def lowdin(F) -> np.ndarray:
    """Symmetric orthogonalization ``U = F (F^T F)^(-1/2)`` of the columns of ``F``."""
    F = F.columns if isinstance(F, FrameMatrix) else np.asarray(F)
    return F @ inv_sqrt_psd(F.conj().T @ F)


def gram_schmidt(F: np.ndarray) -> np.ndarray:
    """Ordered orthonormalization (QR with a positive diagonal), for comparison."""
    Q, R = np.linalg.qr(F)
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True, eq=False)
class WannierBasis:
    """Orthonormalized band functions on the composite k-grid.

    ``table[m, b, i]`` holds ``w~_{j_k}(k_m + n*k0)`` with ``j_k = b - J_k`` and
    ``n = i - N``.
    """

    params: LatticeParams
    table: np.ndarray

    def __post_init__(self):
        p = self.params
        if self.table.shape != (p.nk, p.n_bands, p.n_copies):
            raise ValueError(f"table shape {self.table.shape} does not match {p}")
        self.table.flags.writeable = False

    @cached_property
    def grid(self) -> PhaseGrid:
        return make_grid(self.params)

    def band(self, j_k: int) -> np.ndarray:
        """Band ``j_k`` of the table as a k-grid array (``j_x = 0``)."""
        b = j_k + self.params.jk_cutoff
        return self.table[:, b, :].T.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, WannierBasis):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.table, other.table)


def _orthonormalize_kpoint(params: LatticeParams, m: int, band_order) -> np.ndarray:
    k = m * params.k0 / params.nk
    F = frame_matrix(params, k, band_order)
    try:
        U = lowdin(F)
    except FrameDegenerateError as err:
        raise FrameDegenerateError(err.eigenvalue, m) from None
    return U


def build_basis(params: LatticeParams, band_order=None, workers: int | None = None) -> WannierBasis:
    """Build the Wannier table for every k-point.

    ``band_order`` permutes the frame columns before orthogonalization; the
    result is stored back in ascending ``j_k`` order, so any order gives the
    same basis up to rounding.
    """
    params = validate_params(params)
    order = params.jk_values if band_order is None else np.asarray(band_order)
    if sorted(order.tolist()) != params.jk_values.tolist():
        raise ValueError("band_order must be a permutation of -J_k..J_k")
    workers = workers or max_workers()
    ms = range(params.nk)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda m: _orthonormalize_kpoint(params, m, order), ms))
    else:
        blocks = [_orthonormalize_kpoint(params, m, order) for m in ms]
    U = np.stack(blocks)  # [m, n, column]
    inverse = np.argsort(order)
    table = np.ascontiguousarray(U[:, :, inverse].transpose(0, 2, 1)) / math.sqrt(params.k0)
    return WannierBasis(params, table)


def wannier_k(basis: WannierBasis, cell) -> np.ndarray:
    """k-space samples of ``w_{j_x, j_k}``: the band times ``exp(-i k j_x x0)``."""
    j_x, j_k = check_cell(basis.params, cell)
    phase = np.exp(-2j * np.pi * ((np.arange(basis.params.n_samples) * j_x) % basis.params.nk) / basis.params.nk)
    return basis.band(j_k) * phase


def wannier_x(basis: WannierBasis, cell, grid: PhaseGrid | None = None) -> np.ndarray:
    """x-space samples of ``w_{j_x, j_k}`` on the canonical grid.

    The ``j_x = 0`` function is transformed once and translated by an exact
    index shift of ``j_x*(2N+1)`` samples.
    """
    if grid is not None and not grid.matches(basis.grid):
        raise ValueError("grid does not belong to this basis")
    j_x, j_k = check_cell(basis.params, cell)
    w0 = basis.grid.inverse_fourier(basis.band(j_k).astype(complex))
    return np.roll(w0, j_x * basis.params.n_copies)


def sigma(basis: WannierBasis, j_k: int) -> tuple[float, float]:
    """Position and wavenumber standard deviations of ``w_{0, j_k}``."""
    check_cell(basis.params, (0, j_k))
    grid = basis.grid
    wx = wannier_x(basis, (0, j_k))
    rho_x = np.abs(wx) ** 2 * grid.dx
    rho_x /= rho_x.sum()
    mean_x = rho_x @ grid.x
    var_x = rho_x @ (grid.x - mean_x) ** 2
    rho_k = basis.band(j_k) ** 2 * grid.dk
    rho_k /= rho_k.sum()
    mean_k = rho_k @ grid.k
    var_k = rho_k @ (grid.k - mean_k) ** 2
    return math.sqrt(var_x), math.sqrt(var_k)


def sigma_curves(basis: WannierBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(j_k values, sigma_x, sigma_k)`` over every band."""
    jk = basis.params.jk_values
    sx, sk = np.array([sigma(basis, int(j)) for j in jk]).T
    return jk, sx, sk


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    r_squared: float
    distance: np.ndarray
    log_amplitude: np.ndarray


def _cell_envelope(values: np.ndarray, coords: np.ndarray, unit: float, window) -> tuple[np.ndarray, np.ndarray]:
    # Peak amplitude per cell on each side: the semi-log plot's upper envelope.
    lo, hi = window
    cell = np.rint(coords / unit).astype(int)
    dist, amp = [], []
    for c in range(-hi, hi + 1):
        if abs(c) < lo:
            continue
        mask = cell == c
        if np.any(mask):
            dist.append(abs(c))
            amp.append(values[mask].max())
    return np.asarray(dist, dtype=float), np.asarray(amp)


def tail_fit(basis: WannierBasis, cell=(0, 0), space: str = "x", window=(3, 8)) -> TailFit:
    """Least-squares line through the semi-log amplitude tail of a Wannier function.

    Distances are measured in cells from the function's center; the amplitude
    per cell is the largest ``|w|`` in that cell, so nodes of the oscillation
    do not enter the fit.
    """
    j_x, j_k = check_cell(basis.params, cell)
    grid = basis.grid
    if space == "x":
        values = np.abs(wannier_x(basis, cell))
        coords, unit = grid.x - j_x * basis.params.x0, basis.params.x0
    elif space == "k":
        values = np.abs(basis.band(j_k))
        coords, unit = grid.k - j_k * basis.params.k0, basis.params.k0
    else:
        raise ValueError("space must be 'x' or 'k'")
    dist, amp = _cell_envelope(values, coords, unit, window)
    if np.any(amp <= 0):
        raise ArithmeticError("zero amplitude in tail window")
    y = np.log(amp)
    slope, intercept = np.polyfit(dist, y, 1)
    resid = y - (slope * dist + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    return TailFit(float(slope), float(intercept), float(r2), dist, y)


def orthonormality_defect(basis: WannierBasis, pairs) -> float:
    """Max ``|<w_j|w_j'> - delta|`` over ``pairs`` by x-space quadrature."""
    cache: dict[CellIndex, np.ndarray] = {}

    def wx(cell):
        cell = CellIndex(*map(int, cell))
        if cell not in cache:
            cache[cell] = wannier_x(basis, cell)
        return cache[cell]

    worst = 0.0
    dx = basis.params.dx
    for a, b in pairs:
        overlap = np.vdot(wx(a), wx(b)) * dx
        expected = 1.0 if tuple(a) == tuple(b) else 0.0
        worst = max(worst, abs(overlap - expected))
    return worst


def random_cell_pairs(params: LatticeParams, count: int, rng: np.random.Generator) -> list:
    jx = rng.choice(params.jx_values, size=(count, 2))
    jk = rng.choice(params.jk_values, size=(count, 2))
    pairs = [((jx[i, 0], jk[i, 0]), (jx[i, 1], jk[i, 1])) for i in range(count)]
    # Guarantee some diagonal and same-cell-row entries in the sample.
    for i in range(0, count, 5):
        pairs[i] = (pairs[i][0], pairs[i][0])
    return pairs


def lowdin_defect(basis: WannierBasis) -> float:
    """Max ``|U^T U - I|`` over k-points (the per-k orthonormality)."""
    k0 = basis.params.k0
    worst = 0.0
    for block in basis.table:
        G = k0 * block @ block.T
        worst = max(worst, np.abs(G - np.eye(len(G))).max())
    return float(worst)


def seam_discontinuity(basis: WannierBasis) -> float:
    """Mismatch of the band functions across the ``k = k0`` zone boundary.

    Continuity requires ``w~(k0 + n*k0) = w~(0 + (n+1)*k0)``; the frame at
    ``k = k0`` is orthogonalized directly and compared with the stored
    ``m = 0`` column shifted by one zone.  Only ``n`` rows present in both are
    compared.
    """
    p = basis.params
    n = np.arange(-p.brillouin_cutoff, p.brillouin_cutoff + 1)
    F = seed_k(p, p.jk_values[None, :], p.k0 + n[:, None] * p.k0)
    U_edge = lowdin(F).T / math.sqrt(p.k0)  # [band, n]
    U_zero = basis.table[0]
    return float(np.abs(U_edge[:, :-1] - U_zero[:, 1:]).max())


def _header(params: LatticeParams, flags: int) -> bytes:
    return _HEADER.pack(
        BASIS_MAGIC, FORMAT_VERSION, flags, params.x0, params.k0, params.zeta,
        params.jk_cutoff, params.nk, params.brillouin_cutoff,
    )


def save_basis(basis: WannierBasis, path) -> None:
    """Write the little-endian WNB1 file; the CRC covers header and table."""
    table = np.ascontiguousarray(basis.table, dtype="<f8")
    body = _header(basis.params, 0) + table.tobytes()
    Path(path).write_bytes(body + struct.pack("<Q", crc64(body)))


def read_header(data: bytes, magic: bytes) -> tuple[LatticeParams, int]:
    if len(data) < _HEADER.size + 8:
        raise BasisFormatError("truncated payload: file shorter than header")
    got, version, flags, x0, k0, zeta, jk, nk, nb = _HEADER.unpack_from(data)
    if got != magic:
        raise BasisFormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise BasisFormatError(f"version mismatch: file has {version}, reader supports {FORMAT_VERSION}")
    params = LatticeParams(x0, k0, zeta, int(jk), int(nk), int(nb))
    return params, flags


def verify_crc(data: bytes) -> bytes:
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if crc64(body) != stored:
        raise BasisFormatError("checksum failure")
    return body


def load_basis(path) -> WannierBasis:
    data = Path(path).read_bytes()
    params, flags = read_header(data, BASIS_MAGIC)
    dtype = np.dtype("<c16") if flags & FLAG_COMPLEX else np.dtype("<f8")
    count = params.nk * params.n_bands * params.n_copies
    expected = _HEADER.size + count * dtype.itemsize + 8
    if len(data) != expected:
        raise BasisFormatError(f"truncated payload: {len(data)} bytes, expected {expected}")
    body = verify_crc(data)
    validate_params(params)
    table = np.frombuffer(body, dtype=dtype, offset=_HEADER.size, count=count)
    table = table.astype(complex if flags & FLAG_COMPLEX else float)
    return WannierBasis(params, table.reshape(params.nk, params.n_bands, params.n_copies))
