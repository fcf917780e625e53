"""Unitary map between wave functions and Planck-cell amplitudes.

``c_{j_x, j_k} = <w_{j_x, j_k}|psi>`` is evaluated in k-space.  On the
composite grid ``exp(i k j_x x0)`` reduces to ``exp(2 pi i m j_x / nk)``, so
the sum over cells in ``j_x`` is one length-``nk`` FFT per band.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .basis import WannierBasis
from .export import write_dense_csv, write_json
from .lattice import LatticeParams
from .states import StateX, to_k


@dataclass(frozen=True, eq=False)
class CellMap:
    """Values on a rectangular block of Planck cells, ``values[i, j]`` at ``(jx[i], jk[j])``."""

    jx: np.ndarray
    jk: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.jx), len(self.jk)):
            raise ValueError("values shape does not match the cell axes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("cell values must be finite")
        for arr in (self.jx, self.jk, self.values):
            arr.flags.writeable = False

    def __getitem__(self, cell):
        j_x, j_k = cell
        i = int(j_x) - int(self.jx[0])
        j = int(j_k) - int(self.jk[0])
        if not (0 <= i < len(self.jx) and 0 <= j < len(self.jk)):
            raise KeyError(cell)
        return self.values[i, j]

    def __contains__(self, cell) -> bool:
        try:
            self[cell]
        except KeyError:
            return False
        return True

    def argmax_cell(self, key=None) -> tuple[int, int]:
        data = self.values if key is None else key(self.values)
        i, j = np.unravel_index(np.argmax(data), data.shape)
        return int(self.jx[i]), int(self.jk[j])

    def total(self):
        return self.values.sum()

    def items(self):
        for i, jx in enumerate(self.jx):
            for j, jk in enumerate(self.jk):
                yield (int(jx), int(jk)), self.values[i, j]

    def to_dense_csv(self, path) -> None:
        write_dense_csv(path, self.jx, self.jk, np.real(self.values), corner="j_x\\j_k")


@dataclass(frozen=True, eq=False)
class CoefficientMap(CellMap):
    """Amplitudes ``<w_j|psi>`` over the whole lattice."""

    params: LatticeParams | None = None
    completeness_defect: float = 0.0

    def probabilities(self) -> CellMap:
        return probabilities(self)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j_x", "j_k", "re", "im", "p"])
            for (jx, jk), c in self.items():
                writer.writerow([jx, jk, repr(float(c.real)), repr(float(c.imag)), repr(float(abs(c) ** 2))])

    def to_json(self, path) -> None:
        write_json(path, {
            "params": self.params.as_dict() if self.params else None,
            "completeness_defect": self.completeness_defect,
            "j_x": self.jx, "j_k": self.jk,
            "re": self.values.real, "im": self.values.imag,
        })


def analyze_k(basis: WannierBasis, psi_k: np.ndarray) -> np.ndarray:
    """Amplitudes ``[j_x index, band]`` from k-grid samples."""
    p = basis.params
    comb = np.asarray(psi_k).reshape(p.n_copies, p.nk)
    per_k = np.einsum("mbn,nm->mb", basis.table, comb)
    # sum_m A[m] exp(2 pi i m j / nk) for j = jx mod nk
    full = p.nk * np.fft.ifft(per_k, axis=0)
    return p.dk * full[p.jx_values % p.nk]


def synthesize_k(basis: WannierBasis, coeffs: np.ndarray) -> np.ndarray:
    """k-grid samples of ``sum_j c_j w_j``; ``coeffs`` is ``[j_x index, band]``."""
    p = basis.params
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (p.nk, p.n_bands):
        raise ValueError(f"coefficients must have shape {(p.nk, p.n_bands)}")
    placed = np.zeros((p.nk, p.n_bands), dtype=complex)
    placed[p.jx_values % p.nk] = coeffs
    per_k = np.fft.fft(placed, axis=0)  # sum_j c_j exp(-2 pi i m j / nk)
    return np.einsum("mbn,mb->nm", basis.table, per_k).reshape(-1)


def project(basis: WannierBasis, state: StateX) -> CoefficientMap:
    """Planck-cell amplitudes of ``state`` with the completeness defect attached."""
    if not state.grid.matches(basis.grid):
        raise ValueError("state is not on this basis's canonical grid")
    coeffs = analyze_k(basis, to_k(state).samples)
    norm2 = state.norm**2
    captured = float(np.sum(np.abs(coeffs) ** 2))
    defect = (norm2 - captured) / norm2 if norm2 > 0 else 0.0
    p = basis.params
    return CoefficientMap(p.jx_values.copy(), p.jk_values.copy(), coeffs,
                          params=p, completeness_defect=defect)


def probabilities(c: CellMap) -> CellMap:
    return CellMap(np.array(c.jx), np.array(c.jk), np.abs(c.values) ** 2)


def reconstruct(basis: WannierBasis, c: CoefficientMap) -> StateX:
    """``sum_j c_j w_j`` on the canonical grid."""
    if c.params is not None and c.params != basis.params:
        raise ValueError("coefficient map belongs to a different lattice")
    if not (np.array_equal(c.jx, basis.params.jx_values) and np.array_equal(c.jk, basis.params.jk_values)):
        raise ValueError("coefficient map does not cover this basis's lattice")
    psi_k = synthesize_k(basis, c.values)
    return StateX(basis.grid, basis.grid.inverse_fourier(psi_k))


def wannier_entropy(p) -> float:
    """``-sum p ln p`` in nats, with ``0 ln 0 = 0``."""
    values = np.asarray(p.values if isinstance(p, CellMap) else p, dtype=float).ravel()
    if np.any(values < 0):
        raise ValueError("probabilities must be nonnegative")
    nz = values[values > 0]
    return float(-np.sum(nz * np.log(nz))) if nz.size else 0.0


def reconstruction_error(basis: WannierBasis, state: StateX) -> tuple[float, float]:
    """``(completeness defect, L2 reconstruction error)`` for a state."""
    c = project(basis, state)
    back = reconstruct(basis, c)
    err = math.sqrt(float(np.sum(np.abs(back.samples - state.samples) ** 2)) * state.grid.dx)
    return c.completeness_defect, err
