"""Independent reference implementations used only by the tests.

Each oracle takes a different numerical path from the package code: direct
DFT matrices instead of FFTs, dense global orthogonalization instead of the
per-k step, closed-form Hermite and Laguerre expressions, adaptive quadrature
and a pure-Python PCG64.
"""

import math

import numpy as np
from scipy import integrate, special


def dft_matrix_forward(x, k, dx):
    """psi~(k) = dx/sqrt(2 pi) sum psi(x) exp(-i k x), as a dense matrix."""
    return np.exp(-1j * np.outer(k, x)) * dx / math.sqrt(2 * math.pi)


def hermite_closed(n, x):
    """Normalized Hermite function from scipy's physicists' polynomial."""
    norm = 1.0 / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))
    return norm * special.eval_hermite(n, x) * np.exp(-0.5 * np.asarray(x) ** 2)


def ho_wigner(n, x, k):
    """W_n(x, k) = (-1)^n / pi * exp(-r^2) L_n(2 r^2) with r^2 = x^2 + k^2."""
    r2 = np.asarray(x) ** 2 + np.asarray(k) ** 2
    return (-1) ** n / math.pi * np.exp(-r2) * special.eval_laguerre(n, 2 * r2)


def wigner_quad(psi, x, k, limit=12.0):
    """Adaptive quadrature of (1/pi) int psi*(x+y) psi(x-y) exp(2iky) dy for a callable psi."""
    def real_part(y):
        return (np.conj(psi(x + y)) * psi(x - y) * np.exp(2j * k * y)).real
    value, _ = integrate.quad(real_part, -limit, limit, limit=400, epsabs=1e-13)
    return value / math.pi


def global_lowdin_wannier(params, grid):
    """Wannier functions by one dense Lowdin step over every (j_x, j_k) seed.

    Seeds are the band-limited Gaussians exp(-zeta^2 (k - j_k k0)^2) on the
    composite k-grid, translated by exp(-i k j_x x0) and taken to x-space by a
    dense DFT matrix.  Returns ``{(j_x, j_k): samples}``.
    """
    k = grid.k
    x = grid.x
    inverse = np.exp(1j * np.outer(x, k)) * grid.dk / math.sqrt(2 * math.pi)
    cells = [(int(jx), int(jk)) for jx in params.jx_values for jk in params.jk_values]
    seeds = []
    for jx, jk in cells:
        spec = np.exp(-(params.zeta * (k - jk * params.k0)) ** 2) * np.exp(-1j * k * jx * params.x0)
        seeds.append(inverse @ spec)
    F = np.array(seeds).T
    G = F.conj().T @ F * grid.dx
    vals, vecs = np.linalg.eigh(G)
    S = vecs @ np.diag(vals**-0.5) @ vecs.conj().T
    U = F @ S
    return {cell: U[:, i] for i, cell in enumerate(cells)}


MASK64 = (1 << 64) - 1
MASK128 = (1 << 128) - 1
PCG_MULT = 0x2360ED051FC65DA44385DF649FCCF645


def pcg64_reference(seed, count, stream=0xDA3E39CB94B95BDB):
    """PCG XSL-RR 128/64 from the reference seeding procedure, in plain integers."""
    inc = ((stream << 1) | 1) & MASK128
    state = 0
    state = (state * PCG_MULT + inc) & MASK128
    state = (state + seed) & MASK128
    state = (state * PCG_MULT + inc) & MASK128
    out = []
    for _ in range(count):
        state = (state * PCG_MULT + inc) & MASK128
        xored = ((state >> 64) ^ state) & MASK64
        rot = state >> 122
        out.append(((xored >> rot) | (xored << ((-rot) & 63))) & MASK64)
    return out


def poisson_weights(mu, n_max):
    n = np.arange(n_max + 1)
    return np.exp(-mu + n * math.log(mu) - special.gammaln(n + 1)) if mu > 0 else (n == 0).astype(float)
