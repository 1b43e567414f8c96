import numpy as np
import pytest

from fcs_spectral import aklt, build_omega, from_cstar
from fcs_spectral.opbasis import gellmann


@pytest.fixture(scope="session")
def basis3():
    return gellmann(3)


@pytest.fixture(scope="session")
def basis2():
    return gellmann(2)


@pytest.fixture(scope="session")
def aklt_model():
    return aklt()


@pytest.fixture(scope="session")
def aklt_realization(aklt_model):
    return from_cstar(aklt_model)


@pytest.fixture(scope="session")
def aklt_omega(aklt_realization, basis3):
    return build_omega(aklt_realization, basis3)


def spin1_matrices():
    """Spin-1 operators in the |1>, |0>, |-1> ordering."""
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    sp = np.zeros((3, 3), dtype=complex)
    sp[0, 1] = sp[1, 2] = np.sqrt(2.0)
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return sx, sy, sz


def aklt_bond_projector():
    """Two-site spin-2 projector, equal to the AKLT bond Hamiltonian term
    h = S.S/2 + (S.S)^2/6 + 1/3."""
    sx, sy, sz = spin1_matrices()
    ss = np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz)
    return 0.5 * ss + (ss @ ss) / 6.0 + np.eye(9) / 3.0
