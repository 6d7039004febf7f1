import numpy as np
import pytest

from nullfoliate.sphere import SpinField, build_grid


@pytest.fixture(scope="session")
def grid8():
    return build_grid(8)


@pytest.fixture(scope="session")
def grid12():
    return build_grid(12)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


def harmonic(grid, l, m, spin=0):
    """Unit-coefficient spin harmonic as a SpinField."""
    c = np.zeros((grid.Lmax + 1, 2 * grid.Lmax + 1), dtype=complex)
    c[l, m + grid.Lmax] = 1.0
    return SpinField.from_coeffs(grid, spin, c)


def random_real_scalar(grid, seed, lmax=None):
    """Random real band-limited scalar with conjugate-symmetric coefficients."""
    rng = np.random.default_rng(seed)
    lmax = grid.Lmax - 2 if lmax is None else lmax
    c = np.zeros((grid.Lmax + 1, 2 * grid.Lmax + 1), dtype=complex)
    for l in range(lmax + 1):
        c[l, grid.Lmax] = rng.normal()
        for m in range(1, l + 1):
            z = rng.normal() + 1j * rng.normal()
            c[l, grid.Lmax + m] = z
            c[l, grid.Lmax - m] = (-1) ** m * np.conj(z)
    return SpinField.from_coeffs(grid, 0, c)


def random_spin_field(grid, spin, seed, lmax=None):
    """Random band-limited field of the given spin weight."""
    rng = np.random.default_rng(seed)
    lmax = grid.Lmax - 2 if lmax is None else lmax
    c = np.zeros((grid.Lmax + 1, 2 * grid.Lmax + 1), dtype=complex)
    for l in range(abs(spin), lmax + 1):
        for m in range(-l, l + 1):
            c[l, grid.Lmax + m] = rng.normal() + 1j * rng.normal()
    return SpinField.from_coeffs(grid, spin, c)
