import numpy as np
import pytest

from flatsteady import CasimirModel, SolverOptions, solve


@pytest.fixture(scope="session")
def poly_half():
    """Polytropic Casimir model with mu = 1/2 and unit coefficient."""
    return CasimirModel.polytrope(0.5, c=1.0)


@pytest.fixture(scope="session")
def ss_half(poly_half):
    """Converged mass-1 steady state of the mu = 1/2 polytrope."""
    return solve(poly_half, 1.0)


@pytest.fixture(scope="session")
def poly_wide():
    """Polytrope rescaled (via its coefficient) to a support radius near 1."""
    return CasimirModel.polytrope(0.5, c=57.0)


@pytest.fixture(scope="session")
def ss_wide(poly_wide):
    return solve(poly_wide, 1.0, SolverOptions(n=256))


@pytest.fixture(scope="session")
def kuzmin_profile():
    """Kuzmin-disc surface density with M = a = 1 as a callable."""
    def sigma(r):
        return 1.0 / (2.0 * np.pi * (r ** 2 + 1.0) ** 1.5)
    return sigma
