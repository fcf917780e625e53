"""Test wave functions on the canonical grid and user-state ingestion.

Coherent and cat states use the quadrature convention ``x = (a + a^dag)/sqrt(2)``
and ``k = (a - a^dag)/(i sqrt(2))``; a length scale ``lam`` maps the
oscillator coordinate onto the lattice, ``psi(x) = phi(x/lam)/sqrt(lam)``.
"""

from __future__ import annotations

import csv
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import FLAG_COMPLEX, BasisFormatError, WannierBasis, _HEADER, crc64, read_header, verify_crc
from .lattice import LatticeParams, PhaseGrid, make_grid

STATE_MAGIC = b"WNS1"
BOUNDARY_FRACTION = 0.05
BOUNDARY_THRESHOLD = 1e-6
FOCK_TAIL_TOL = 1e-10
HERMITE_MAX_ORDER = 200


class BoundaryMassError(ValueError):
    """A generated state does not fit inside the periodic x-domain."""


class BoundaryMassWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class StateX:
    grid: PhaseGrid
    samples: np.ndarray
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError(f"expected {self.grid.n_samples} samples, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("state samples must be finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.samples) ** 2)) * self.grid.dx)

    def boundary_mass(self, fraction: float = BOUNDARY_FRACTION) -> float:
        return boundary_mass(self, fraction)


@dataclass(frozen=True, eq=False)
class StateK:
    grid: PhaseGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError(f"expected {self.grid.n_samples} samples, got {samples.shape}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.samples) ** 2)) * self.grid.dk)


@dataclass(frozen=True)
class FockExpansion:
    amplitudes: np.ndarray
    tail_bound: float = 0.0

    @property
    def n_max(self) -> int:
        return len(self.amplitudes) - 1

    @property
    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def mean_occupation(self) -> float:
        p = np.abs(self.amplitudes) ** 2
        return float(np.arange(len(p)) @ p)


def boundary_mass(state: StateX, fraction: float = BOUNDARY_FRACTION) -> float:
    """Probability in the outermost ``fraction`` of the domain (both ends together)."""
    M = state.grid.n_samples
    edge = max(1, int(round(fraction * M / 2)))
    rho = np.abs(state.samples) ** 2 * state.grid.dx
    total = rho.sum()
    return float((rho[:edge].sum() + rho[-edge:].sum()) / total) if total > 0 else 0.0


def _with_boundary_check(state: StateX, threshold: float, strict: bool) -> StateX:
    mass = boundary_mass(state)
    if mass <= threshold:
        return state
    message = f"boundary mass {mass:.2e} exceeds {threshold:.0e}; enlarge nk or shrink the state"
    if strict:
        raise BoundaryMassError(message)
    warnings.warn(message, BoundaryMassWarning, stacklevel=3)
    return StateX(state.grid, state.samples, state.notes + (message,))


def normalize(state: StateX) -> StateX:
    norm = state.norm
    if norm == 0:
        raise ValueError("cannot normalize a zero-norm state")
    return StateX(state.grid, state.samples / norm, state.notes)


def to_k(state: StateX) -> StateK:
    return StateK(state.grid, state.grid.fourier(state.samples))


def from_k(state: StateK) -> StateX:
    return StateX(state.grid, state.grid.inverse_fourier(state.samples))


def spectrum_at(state: StateX, k) -> np.ndarray:
    """Continuous Fourier transform of ``state`` at arbitrary wavenumbers."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    x = state.grid.x
    out = np.empty(k.shape, dtype=complex)
    for start in range(0, k.size, 256):
        kk = k.ravel()[start:start + 256]
        out.ravel()[start:start + 256] = np.exp(-1j * np.outer(kk, x)) @ state.samples
    return out * state.grid.dx / math.sqrt(2 * math.pi)


def hermite_functions(n_max: int, x) -> np.ndarray:
    """Normalized Hermite functions ``phi_0..phi_{n_max}`` at ``x``, shape ``(n_max+1, len(x))``.

    Uses the three-term recurrence on the normalized functions, which stays
    finite where the raw polynomials overflow.
    """
    if not 0 <= n_max <= HERMITE_MAX_ORDER:
        raise ValueError(f"Hermite order must be in [0, {HERMITE_MAX_ORDER}], got {n_max}")
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x**2)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_fn(n: int, x):
    """Normalized Hermite function ``(2^n n!)^(-1/2) pi^(-1/4) exp(-x^2/2) H_n(x)``."""
    values = hermite_functions(n, x)[n]
    return float(values) if np.ndim(values) == 0 else values


def default_ho_scale(params: LatticeParams) -> float:
    """``sqrt(x0/k0)``: the scale that treats the two lattice axes alike.

    The classical orbit of level ``n`` then has radius ``sqrt((2n+1)/(2 pi))``
    cells in both x and k (about 3.1 cells for ``n = 30``).
    """
    return math.sqrt(params.x0 / params.k0)


def ho_eigenstate(n: int, lam: float | None, grid: PhaseGrid,
                  boundary_threshold: float = BOUNDARY_THRESHOLD) -> StateX:
    """Harmonic-oscillator eigenstate ``phi_n(x/lam)/sqrt(lam)``, normalized on the grid."""
    lam = default_ho_scale(grid.params) if lam is None else float(lam)
    if lam <= 0:
        raise ValueError("scale must be positive")
    values = hermite_fn(n, grid.x / lam) / math.sqrt(lam)
    state = normalize(StateX(grid, values))
    return _with_boundary_check(state, boundary_threshold, strict=True)


def default_fock_cutoff(alpha: complex) -> int:
    a = abs(alpha)
    return max(60, math.ceil(a * a + 8 * a))


def _poisson_tail(alpha: complex, n_max: int, last_weight: float) -> float:
    # sum_{n > n_max} |c_n|^2 is bounded by a geometric series once the ratio
    # |alpha|^2/(n+1) drops below one.
    mu = abs(alpha) ** 2
    ratio = mu / (n_max + 2)
    if ratio >= 1:
        return math.inf
    first = last_weight * mu / (n_max + 1)
    return first / (1 - ratio)


def coherent_state(alpha: complex, n_max: int | None = None) -> FockExpansion:
    """Fock amplitudes ``exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` up to ``n_max``."""
    alpha = complex(alpha)
    n_max = default_fock_cutoff(alpha) if n_max is None else int(n_max)
    amps = np.empty(n_max + 1, dtype=complex)
    amps[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, n_max + 1):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    tail = _poisson_tail(alpha, n_max, abs(amps[-1]) ** 2)
    if tail >= FOCK_TAIL_TOL:
        raise ValueError(f"n_max={n_max} too small for alpha={alpha}: tail bound {tail:.1e}")
    return FockExpansion(amps, tail)


def cat_expansion(alpha: complex, n_max: int | None = None) -> FockExpansion:
    """Unnormalized ``|alpha> + |-alpha>``; only even occupations survive."""
    coh = coherent_state(alpha, n_max)
    amps = np.zeros_like(coh.amplitudes)
    amps[::2] = 2 * coh.amplitudes[::2]
    return FockExpansion(amps, 4 * coh.tail_bound)


def fock_to_x(expansion: FockExpansion, grid: PhaseGrid, lam: float = 1.0) -> StateX:
    phi = hermite_functions(expansion.n_max, grid.x / lam)
    return StateX(grid, expansion.amplitudes @ phi / math.sqrt(lam))


def cat_state(alpha: complex, n_max: int | None, grid: PhaseGrid, lam: float = 1.0,
              boundary_threshold: float = BOUNDARY_THRESHOLD) -> StateX:
    state = normalize(fock_to_x(cat_expansion(alpha, n_max), grid, lam))
    return _with_boundary_check(state, boundary_threshold, strict=False)


def gaussian_packet_coefficients(params: LatticeParams) -> np.ndarray:
    """``exp(-j_x^2 - j_k^2)`` over the lattice, shape ``(nk, 2J_k+1)``."""
    jx = params.jx_values.astype(float)
    jk = params.jk_values.astype(float)
    return np.exp(-jx[:, None] ** 2 - jk[None, :] ** 2)


def phase_space_gaussian(basis: WannierBasis) -> StateX:
    """Discrete Gaussian packet ``sum_j w_j exp(-j_x^2 - j_k^2)``, normalized."""
    from .projection import synthesize_k

    coeffs = gaussian_packet_coefficients(basis.params)
    psi_k = synthesize_k(basis, coeffs)
    return normalize(StateX(basis.grid, basis.grid.inverse_fourier(psi_k)))


def save_state_csv(state: StateX, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "re", "im"])
        for x, v in zip(state.grid.x, state.samples):
            writer.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])


def load_state_csv(path, grid: PhaseGrid, atol: float = 1e-9) -> StateX:
    """Read ``x,re,im`` rows; the x column must reproduce the canonical grid."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "re", "im"} <= set(reader.fieldnames):
            raise ValueError("state CSV needs columns x, re, im")
        rows = [(float(r["x"]), float(r["re"]), float(r["im"])) for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, 3)
    if len(data) != grid.n_samples or not np.allclose(data[:, 0], grid.x, rtol=0, atol=atol):
        raise ValueError("state CSV does not lie on the canonical grid of this lattice")
    return StateX(grid, data[:, 1] + 1j * data[:, 2])


def save_state(state: StateX, path) -> None:
    p = state.grid.params
    header = _HEADER.pack(STATE_MAGIC, 1, FLAG_COMPLEX, p.x0, p.k0, p.zeta,
                          p.jk_cutoff, p.nk, p.brillouin_cutoff)
    body = header + np.ascontiguousarray(state.samples, dtype="<c16").tobytes()
    Path(path).write_bytes(body + struct.pack("<Q", crc64(body)))


def load_state(path) -> StateX:
    data = Path(path).read_bytes()
    params, flags = read_header(data, STATE_MAGIC)
    if not flags & FLAG_COMPLEX:
        raise BasisFormatError("state files must carry complex samples")
    expected = _HEADER.size + 16 * params.n_samples + 8
    if len(data) != expected:
        raise BasisFormatError(f"truncated payload: {len(data)} bytes, expected {expected}")
    body = verify_crc(data)
    grid = make_grid(params)
    samples = np.frombuffer(body, dtype="<c16", offset=_HEADER.size, count=params.n_samples)
    return StateX(grid, samples.astype(complex))
