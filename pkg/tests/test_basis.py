import math
import struct

import numpy as np
import pytest
from scipy import integrate, linalg

from conftest import DESK, TINY
from oracles import global_lowdin_wannier
from planckphase.basis import (
    BasisFormatError,
    FrameDegenerateError,
    WannierBasis,
    build_basis,
    crc64,
    frame_matrix,
    gram_schmidt,
    inv_sqrt_psd,
    load_basis,
    lowdin,
    lowdin_defect,
    orthonormality_defect,
    random_cell_pairs,
    save_basis,
    seam_discontinuity,
    seed_k,
    seed_x,
    sigma,
    tail_fit,
    wannier_k,
    wannier_x,
)
from planckphase.lattice import LatticeParams, make_grid

P = LatticeParams()


def test_seed_k_examples():
    assert seed_k(P, 0, 0.0) == 1.0
    assert seed_k(P, 10, 20 * math.pi) == 1.0
    assert math.isclose(seed_k(P, 0, 2 * math.pi), math.exp(-1), rel_tol=1e-15)


def test_seed_x_examples():
    assert seed_x(P, (0, 0), 0.0) == 1 + 0j
    assert seed_x(P, (1, 0), 1.0) == 1 + 0j
    # exp(-x^2/(4 zeta^2)) at x = 1/4, zeta = 1/(2 pi) is exp(-pi^2/16)
    expected = math.exp(-math.pi**2 / 16) * 1j
    assert abs(seed_x(P, (0, 1), 0.25) - expected) < 1e-15


def test_seed_x_transform_is_seed_k():
    # (1/sqrt(2 pi)) int exp(-x^2/4 zeta^2 + i j k0 x) exp(-i k x) dx = sqrt(2) zeta seed_k
    zeta = P.zeta
    for j_k, k in [(0, 0.0), (0, 3.0), (2, 11.0)]:
        re = integrate.quad(lambda x: (seed_x(P, (0, j_k), x) * np.exp(-1j * k * x)).real, -2, 2)[0]
        im = integrate.quad(lambda x: (seed_x(P, (0, j_k), x) * np.exp(-1j * k * x)).imag, -2, 2)[0]
        value = (re + 1j * im) / math.sqrt(2 * math.pi)
        assert abs(value - math.sqrt(2) * zeta * seed_k(P, j_k, k)) < 1e-12


def test_frame_single_column():
    p = LatticeParams(jk_cutoff=0, nk=2, brillouin_cutoff=1)  # below the build minimum, fine for a frame
    F = frame_matrix(p, 0.0).columns
    assert F.shape == (3, 1)
    assert np.allclose(F[:, 0], [math.exp(-1), 1, math.exp(-1)], rtol=1e-15)


def test_frame_column_norm_converges():
    p = LatticeParams(jk_cutoff=1, nk=2, brillouin_cutoff=30)
    col = frame_matrix(p, 0.0).columns[:, 1]
    brute = sum(math.exp(-2 * n * n) for n in range(-50, 51))
    assert abs(np.sum(col**2) - brute) < 1e-14
    assert abs(brute - 1.27133) < 5e-5  # quoted to five decimals


def test_frame_symmetry_at_zero():
    F = frame_matrix(DESK, 0.0).columns
    assert np.array_equal(F, F[::-1, ::-1])


def test_frame_rejects_k_outside_zone():
    with pytest.raises(ValueError):
        frame_matrix(P, P.k0)
    with pytest.raises(ValueError):
        frame_matrix(P, -0.1)


def test_inv_sqrt_examples():
    assert np.allclose(inv_sqrt_psd(np.eye(4)), np.eye(4))
    assert np.allclose(inv_sqrt_psd(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))


def test_inv_sqrt_random_spd():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(5, 5))
    M = A @ A.T + 0.5 * np.eye(5)
    S = inv_sqrt_psd(M)
    assert np.allclose(S, S.T)
    assert np.abs(S @ S @ M - np.eye(5)).max() < 1e-10
    assert np.allclose(S, linalg.fractional_matrix_power(M, -0.5).real, atol=1e-12)


def test_inv_sqrt_degenerate_reports_eigenvalue():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(FrameDegenerateError, match="frame numerically degenerate") as info:
        inv_sqrt_psd(M)
    assert abs(info.value.eigenvalue) < 1e-12


def test_lowdin_identity_on_orthonormal():
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 3)))
    assert np.allclose(lowdin(Q), Q, atol=1e-14)


def test_lowdin_two_columns_closed_form():
    s = 0.5
    F = np.array([[1.0, s], [0.0, math.sqrt(1 - s * s)]])
    a, b = 1 / math.sqrt(1 + s), 1 / math.sqrt(1 - s)
    S = 0.5 * np.array([[a + b, a - b], [a - b, a + b]])
    U = lowdin(F)
    assert np.abs(U.T @ U - np.eye(2)).max() < 1e-12
    assert np.allclose(U, F @ S, atol=1e-14)
    swapped = lowdin(F[:, ::-1])
    assert np.allclose(swapped, U[:, ::-1], atol=1e-14)


def test_lowdin_permutation_equivariant():
    F = frame_matrix(DESK, 0.7).columns
    perm = np.random.default_rng(5).permutation(F.shape[1])
    assert np.abs(lowdin(F[:, perm]) - lowdin(F)[:, perm]).max() < 1e-12


def test_lowdin_closer_than_gram_schmidt():
    rng = np.random.default_rng(8)
    for _ in range(20):
        F = rng.normal(size=(7, 4)) + 2 * np.eye(7, 4)
        assert np.linalg.norm(lowdin(F) - F) <= np.linalg.norm(gram_schmidt(F) - F) + 1e-12


def test_minimal_basis_gram_identity():
    p = LatticeParams(jk_cutoff=1, nk=2, brillouin_cutoff=1)
    basis = build_basis(p)
    g = basis.grid
    W = np.array([wannier_x(basis, (jx, jk)) for jx in p.jx_values for jk in p.jk_values])
    gram = W.conj() @ W.T * g.dx
    assert basis.table.shape == (2, 3, 3)
    assert np.abs(gram - np.eye(len(W))).max() < 1e-12


def test_matches_global_lowdin(tiny_basis):
    ref = global_lowdin_wannier(TINY, tiny_basis.grid)
    worst = max(np.abs(wannier_x(tiny_basis, cell) - w).max() for cell, w in ref.items())
    assert worst < 1e-10


def test_build_is_deterministic(tiny_basis):
    again = build_basis(TINY, workers=1)
    threaded = build_basis(TINY, workers=3)
    assert again.table.tobytes() == tiny_basis.table.tobytes()
    assert threaded.table.tobytes() == tiny_basis.table.tobytes()


def test_band_order_must_be_permutation():
    with pytest.raises(ValueError):
        build_basis(TINY, band_order=[0, 1, 2, 3, 4])


def test_square_frame_is_degenerate():
    with pytest.raises(FrameDegenerateError) as info:
        build_basis(LatticeParams(jk_cutoff=20, nk=40, brillouin_cutoff=20))
    assert info.value.m is not None and "m=" in str(info.value)


def test_translation_is_index_shift(desk_basis):
    w0 = wannier_x(desk_basis, (0, 10))
    w3 = wannier_x(desk_basis, (3, 10))
    assert np.array_equal(w3, np.roll(w0, 3 * DESK.n_copies))
    grid = desk_basis.grid
    assert abs(grid.x[np.argmax(np.abs(w3))] - 3) <= 1


def test_unit_norm_and_k_samples(desk_basis):
    grid = desk_basis.grid
    for cell in [(0, 0), (-4, 7), (5, -16)]:
        wx = wannier_x(desk_basis, cell)
        assert abs(np.sum(np.abs(wx) ** 2) * grid.dx - 1) < 1e-8
        assert np.allclose(grid.fourier(wx), wannier_k(desk_basis, cell), atol=1e-12)


def test_orthonormal_random_pairs(desk_basis):
    pairs = random_cell_pairs(DESK, 200, np.random.default_rng(1))
    assert orthonormality_defect(desk_basis, pairs) < 1e-8
    assert lowdin_defect(desk_basis) < 1e-12


def test_seam_metric_small(desk_basis):
    assert seam_discontinuity(desk_basis) < 1e-10


def test_sigma_of_raw_seed_is_zeta():
    # A table of normalized, un-orthogonalized seeds: sigma_x must equal zeta.
    p = DESK
    grid = make_grid(p)
    comp = grid.composite(grid.k)  # [n, m]
    table = np.empty((p.nk, p.n_bands, p.n_copies))
    for b, j in enumerate(p.jk_values):
        vals = seed_k(p, j, comp).T  # [m, n]
        table[:, b, :] = vals / math.sqrt(np.sum(vals**2) * grid.dk)
    raw = WannierBasis(p, table)
    sx, sk = sigma(raw, 0)
    assert abs(sx - p.zeta) < 1e-6
    assert abs(sk - 1 / (2 * p.zeta)) < 1e-6


def test_sigma_peaks_at_band_zero(desk_basis):
    values = [sigma(desk_basis, j) for j in range(-16, 17)]
    sx = [v[0] for v in values]
    assert int(np.argmax(sx)) == 16


def test_tail_fit_desk(desk_basis):
    for space in ("x", "k"):
        fit = tail_fit(desk_basis, space=space)
        assert fit.slope < 0 and fit.r_squared > 0.9
    with pytest.raises(ValueError):
        tail_fit(desk_basis, space="y")


def test_crc64_check_value():
    assert crc64(b"123456789") == 0x995DC9BBDF1939FA


def test_save_load_roundtrip(tmp_path, tiny_basis):
    path = tmp_path / "b.wnb"
    save_basis(tiny_basis, path)
    loaded = load_basis(path)
    assert loaded == tiny_basis
    assert loaded.table.tobytes() == tiny_basis.table.tobytes()
    assert loaded.params == TINY
    data = path.read_bytes()
    assert data[:4] == b"WNB1"
    assert struct.unpack_from("<II", data, 4) == (1, 0)
    assert struct.unpack_from("<3I", data, 36) == (2, 6, 9)
    save_basis(tiny_basis, tmp_path / "again.wnb")
    assert (tmp_path / "again.wnb").read_bytes() == data


@pytest.mark.parametrize("mutate,message", [
    (lambda d: b"XXXX" + d[4:], "bad magic"),
    (lambda d: d[:4] + struct.pack("<I", 2) + d[8:], "version mismatch"),
    (lambda d: d[:-20], "truncated payload"),
    (lambda d: d[:100] + bytes([d[100] ^ 1]) + d[101:], "checksum failure"),
    (lambda d: d[:10], "truncated payload"),
])
def test_corrupted_files(tmp_path, tiny_basis, mutate, message):
    path = tmp_path / "b.wnb"
    save_basis(tiny_basis, path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(BasisFormatError, match=message):
        load_basis(path)
