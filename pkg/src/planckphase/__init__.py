"""Orthonormal Wannier bases on Planck cells, phase-space maps and time-frequency analysis."""

from .basis import WannierBasis, build_basis, load_basis, save_basis, wannier_k, wannier_x
from .lattice import CellIndex, LatticeError, LatticeParams, PhaseGrid, make_grid, validate_params
from .projection import CoefficientMap, project, reconstruct, wannier_entropy
from .states import StateK, StateX, cat_state, ho_eigenstate, phase_space_gaussian
from .wigner import WignerMap, coarse_grain, wigner_transform

__version__ = "0.1.0"
