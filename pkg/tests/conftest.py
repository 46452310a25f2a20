import numpy as np
import pytest

from besovlab.spectral import Grid, SpectralField, VectorField, leray_project, make_grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def smooth_random_field(grid: Grid, rng, k0: float = 6.0, mean_zero: bool = True, amplitude: float = 1.0) -> SpectralField:
    """Random real field with Gaussian-damped spectrum; handy generic test input."""
    raw = rng.standard_normal((grid.n, grid.n))
    modes = np.fft.fft2(raw) * np.exp(-((grid.k_magnitude * grid.L / (2 * np.pi)) / k0) ** 2)
    if mean_zero:
        modes[0, 0] = 0.0
    f = SpectralField(grid, modes)
    scale = f.linf()
    return f * (amplitude / scale) if scale > 0 else f


def single_mode(grid: Grid, mx: int, my: int, coeff: complex = 1.0) -> SpectralField:
    """Exact complex exponential exp(i (mx x + my y) 2 pi / L), set in coefficient space."""
    modes = np.zeros((grid.n, grid.n), dtype=np.complex128)
    modes[mx % grid.n, my % grid.n] = coeff * grid.n**2
    return SpectralField(grid, modes, real=False)


def smooth_random_divfree(grid: Grid, rng, k0: float = 6.0, amplitude: float = 1.0) -> VectorField:
    V = VectorField(
        smooth_random_field(grid, rng, k0=k0),
        smooth_random_field(grid, rng, k0=k0),
    )
    V = leray_project(V)
    scale = V.linf()
    return V * (amplitude / scale) if scale > 0 else V


@pytest.fixture
def grid64():
    return make_grid(64)


@pytest.fixture
def grid32():
    return make_grid(32)
