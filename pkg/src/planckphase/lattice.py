"""Planck-cell lattice geometry and the canonical sampling grids.

The x-domain is periodic with period ``nk * x0`` and carries ``2N+1`` samples
per cell, so that the x-grid and the composite k-grid
``{k_m + n*k0 : 0 <= m < nk, -N <= n <= N}`` form one exact discrete Fourier
pair.  Every other module works on these two grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi
COMPLETENESS_TOL = 1e-12


class LatticeError(ValueError):
    """Raised when lattice parameters or cell indices are invalid."""


@dataclass(frozen=True)
class LatticeParams:
    """Lattice geometry and numerical cutoffs.

    ``jk_cutoff`` is J_k (bands ``-J_k..J_k``), ``nk`` the number of
    quasi-momentum samples in one Brillouin zone and ``brillouin_cutoff`` is
    N (zone copies ``-N..N``).  Defaults are the full-size configuration.
    """

    x0: float = 1.0
    k0: float = TWO_PI
    zeta: float = 1.0 / TWO_PI
    jk_cutoff: int = 40
    nk: int = 80
    brillouin_cutoff: int = 50

    @property
    def n_bands(self) -> int:
        return 2 * self.jk_cutoff + 1

    @property
    def n_copies(self) -> int:
        return 2 * self.brillouin_cutoff + 1

    @property
    def n_samples(self) -> int:
        return self.nk * self.n_copies

    @property
    def dx(self) -> float:
        return self.x0 / self.n_copies

    @property
    def dk(self) -> float:
        return self.k0 / self.nk

    @property
    def jk_values(self) -> np.ndarray:
        return np.arange(-self.jk_cutoff, self.jk_cutoff + 1)

    @property
    def jx_values(self) -> np.ndarray:
        lo = -(self.nk // 2)
        return np.arange(lo, lo + self.nk)

    def replace(self, **changes) -> "LatticeParams":
        fields = {**self.__dict__, **changes}
        return LatticeParams(**fields)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class CellIndex(NamedTuple):
    j_x: int
    j_k: int


def validate_params(raw: LatticeParams) -> LatticeParams:
    """Return ``raw`` unchanged if every lattice invariant holds.

    Raises:
        LatticeError: naming the first violated invariant.
    """
    for name in ("x0", "k0", "zeta"):
        value = getattr(raw, name)
        if not (math.isfinite(value) and value > 0):
            raise LatticeError(f"{name} must be positive and finite, got {value!r}")
    if abs(raw.x0 * raw.k0 - TWO_PI) > COMPLETENESS_TOL * TWO_PI:
        raise LatticeError(
            f"completeness violated: x0*k0 = {raw.x0 * raw.k0!r}, must equal 2*pi"
        )
    minimums = {"jk_cutoff": ("J_k", 1), "nk": ("N_k", 2), "brillouin_cutoff": ("N", 1)}
    for name, (label, low) in minimums.items():
        value = getattr(raw, name)
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            raise LatticeError(f"{label} ({name}) must be an integer, got {value!r}")
        if value < low:
            raise LatticeError(f"{label} ({name}) must be >= {low}, got {value}")
    return raw


def check_cell(params: LatticeParams, cell) -> CellIndex:
    j_x, j_k = (int(c) for c in cell)
    if abs(j_k) > params.jk_cutoff:
        raise LatticeError(f"j_k={j_k} outside [-{params.jk_cutoff}, {params.jk_cutoff}]")
    lo = -(params.nk // 2)
    if not lo <= j_x < lo + params.nk:
        raise LatticeError(f"j_x={j_x} outside [{lo}, {lo + params.nk - 1}]")
    return CellIndex(j_x, j_k)


def cell_center(params: LatticeParams, cell) -> tuple[float, float]:
    """Phase-space center ``(j_x*x0, j_k*k0)`` of a Planck cell."""
    j_x, j_k = check_cell(params, cell)
    return j_x * params.x0, j_k * params.k0


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Canonical x-grid and composite k-grid of a lattice.

    ``x[q] = (q - M//2) * dx`` and ``k[p] = (p - N*nk) * dk``; sample ``p`` of
    the k-grid is the composite point ``k_m + n*k0`` with ``m = p % nk`` and
    ``n = p // nk - N``.
    """

    params: LatticeParams

    @property
    def n_samples(self) -> int:
        return self.params.n_samples

    @property
    def dx(self) -> float:
        return self.params.dx

    @property
    def dk(self) -> float:
        return self.params.dk

    @property
    def x_origin(self) -> int:
        """Index of x = 0 on the x-grid."""
        return self.n_samples // 2

    @property
    def k_origin(self) -> int:
        """Index of k = 0 on the k-grid."""
        return self.params.brillouin_cutoff * self.params.nk

    @cached_property
    def x(self) -> np.ndarray:
        x = (np.arange(self.n_samples) - self.x_origin) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        k = (np.arange(self.n_samples) - self.k_origin) * self.dk
        k.flags.writeable = False
        return k

    @cached_property
    def _phases(self) -> tuple[np.ndarray, np.ndarray]:
        # Integer products reduced mod M before the division keep the phases exact.
        M = self.n_samples
        idx = np.arange(M, dtype=np.int64)
        pre = np.exp(2j * np.pi * ((idx * self.k_origin) % M) / M)
        post = np.exp(2j * np.pi * ((idx * self.x_origin) % M) / M)
        const = np.exp(-2j * np.pi * ((self.k_origin * self.x_origin) % M) / M)
        return pre, post * const

    def fourier(self, psi: np.ndarray) -> np.ndarray:
        """Forward transform: ``(dx/sqrt(2pi)) * sum_q psi(x_q) exp(-i k_p x_q)``."""
        pre, post = self._phases
        return (self.dx / math.sqrt(TWO_PI)) * post * np.fft.fft(psi * pre)

    def inverse_fourier(self, phi: np.ndarray) -> np.ndarray:
        """Inverse transform: ``(dk/sqrt(2pi)) * sum_p phi(k_p) exp(i k_p x_q)``."""
        pre, post = self._phases
        M = self.n_samples
        return (self.dk * M / math.sqrt(TWO_PI)) * np.conj(pre) * np.fft.ifft(phi * np.conj(post))

    def composite(self, phi: np.ndarray) -> np.ndarray:
        """View a k-grid array as ``[n + N, m]``."""
        return np.asarray(phi).reshape(self.params.n_copies, self.params.nk)

    def cell_slice(self, j_x: int) -> slice:
        """x-grid samples belonging to cell ``j_x`` (its 2N+1 midpoints)."""
        start = self.x_origin + j_x * self.params.n_copies - self.params.brillouin_cutoff
        if start < 0 or start + self.params.n_copies > self.n_samples:
            raise LatticeError(f"cell j_x={j_x} is not contiguous on the periodic grid")
        return slice(start, start + self.params.n_copies)

    def matches(self, other: "PhaseGrid") -> bool:
        return self.params == other.params


def make_grid(params: LatticeParams) -> PhaseGrid:
    return PhaseGrid(validate_params(params))
