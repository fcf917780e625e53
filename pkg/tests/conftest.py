import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from planckphase.basis import build_basis  # noqa: E402
from planckphase.lattice import LatticeParams  # noqa: E402

DESK = LatticeParams(jk_cutoff=16, nk=32, brillouin_cutoff=30)
FULL = LatticeParams()
TINY = LatticeParams(jk_cutoff=2, nk=6, brillouin_cutoff=9)
# Large band cutoff for unitarity checks: the truncated seed span converges
# quickly for smooth states, reaching 1e-13 by J_k = 200.
WIDE = LatticeParams(jk_cutoff=200, nk=32, brillouin_cutoff=210)
SYMMETRIC_SCALE = 1 / math.sqrt(2 * math.pi)


@pytest.fixture(scope="session")
def desk_basis():
    return build_basis(DESK)


@pytest.fixture(scope="session")
def full_basis():
    return build_basis(FULL)


@pytest.fixture(scope="session")
def tiny_basis():
    return build_basis(TINY)


@pytest.fixture(scope="session")
def wide_basis():
    return build_basis(WIDE)
