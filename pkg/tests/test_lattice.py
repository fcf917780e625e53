import math

import numpy as np
import pytest

from oracles import dft_matrix_forward
from planckphase.lattice import (
    LatticeError,
    LatticeParams,
    cell_center,
    check_cell,
    make_grid,
    validate_params,
)


def test_full_defaults_accepted():
    p = LatticeParams(x0=1, k0=2 * math.pi, zeta=1 / (2 * math.pi), jk_cutoff=40, nk=80, brillouin_cutoff=50)
    assert validate_params(p) is p
    assert p == LatticeParams()


def test_completeness_product_enforced():
    with pytest.raises(LatticeError, match="completeness violated"):
        validate_params(LatticeParams(x0=1, k0=math.pi))


def test_rescaled_lattice_accepted():
    p = LatticeParams(x0=2, k0=math.pi, zeta=1 / (2 * math.pi), jk_cutoff=8, nk=16, brillouin_cutoff=20)
    assert validate_params(p) is p


@pytest.mark.parametrize("field,value,label", [
    ("zeta", 0.0, "zeta"), ("zeta", -1.0, "zeta"), ("x0", float("nan"), "x0"),
    ("jk_cutoff", 0, "J_k"), ("nk", 1, "N_k"), ("brillouin_cutoff", 0, "N"),
    ("jk_cutoff", 2.5, "J_k"),
])
def test_invalid_fields_named(field, value, label):
    with pytest.raises(LatticeError, match=label):
        validate_params(LatticeParams().replace(**{field: value}))


def test_cell_center_examples():
    p = LatticeParams()
    assert cell_center(p, (0, 0)) == (0.0, 0.0)
    x, k = cell_center(p, (3, 10))
    assert x == 3 and math.isclose(k, 20 * math.pi)
    q = LatticeParams(x0=2, k0=math.pi, jk_cutoff=8, nk=16, brillouin_cutoff=20)
    assert cell_center(q, (1, -1)) == (2.0, -math.pi)


def test_cell_center_linear():
    p = LatticeParams()
    a = np.array(cell_center(p, (2, 3)))
    b = np.array(cell_center(p, (-5, 7)))
    c = np.array(cell_center(p, (-3, 10)))
    assert np.allclose(a + b, c)


@pytest.mark.parametrize("cell", [(0, 41), (0, -41), (40, 0), (-41, 0)])
def test_out_of_range_cells(cell):
    with pytest.raises(LatticeError):
        check_cell(LatticeParams(), cell)


def test_full_grid_counts():
    g = make_grid(LatticeParams())
    assert g.n_samples == 8080
    assert math.isclose(g.dx, 1 / 101)
    assert abs(g.dx * g.dk * 8080 - 2 * math.pi) < 1e-12


def test_smallest_grid():
    g = make_grid(LatticeParams(jk_cutoff=1, nk=2, brillouin_cutoff=1))
    assert g.n_samples == 6
    assert np.allclose(g.x, np.arange(-3, 3) / 3)
    assert g.x[0] == -1 and g.x[-1] < 1


def test_k_grid_span_and_composite_order():
    p = LatticeParams(jk_cutoff=2, nk=4, brillouin_cutoff=3)
    g = make_grid(p)
    assert math.isclose(g.k[0], -3 * p.k0)
    assert math.isclose(g.k[-1] + g.dk, 4 * p.k0)
    comp = g.composite(g.k)
    m = np.arange(p.nk)
    for n in range(-3, 4):
        assert np.allclose(comp[n + 3], m * p.k0 / p.nk + n * p.k0)


@pytest.mark.parametrize("params", [
    LatticeParams(jk_cutoff=2, nk=4, brillouin_cutoff=3),
    LatticeParams(jk_cutoff=2, nk=5, brillouin_cutoff=2),
    LatticeParams(x0=2, k0=math.pi, jk_cutoff=2, nk=3, brillouin_cutoff=4),
])
def test_fourier_matches_dense_dft(params):
    g = make_grid(params)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=g.n_samples) + 1j * rng.normal(size=g.n_samples)
    ref = dft_matrix_forward(g.x, g.k, g.dx) @ psi
    assert np.allclose(g.fourier(psi), ref, atol=1e-12)
    assert np.allclose(g.inverse_fourier(g.fourier(psi)), psi, atol=1e-12)


def test_cell_slice_holds_cell_midpoints():
    p = LatticeParams(jk_cutoff=2, nk=4, brillouin_cutoff=3)
    g = make_grid(p)
    xs = g.x[g.cell_slice(1)]
    assert len(xs) == 7
    assert np.allclose(xs, 1 + (np.arange(7) - 3) / 7)
    with pytest.raises(LatticeError):
        g.cell_slice(-2)  # wraps around the periodic edge
