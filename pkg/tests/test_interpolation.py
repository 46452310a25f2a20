"""Off-grid sampling: cubic accuracy, periodic wrap, and local bounds."""

import numpy as np
import pytest

from besovlab.interpolation import PeriodicSampler, cell_bounds
from besovlab.random_fields import random_band_field
from besovlab.spectral import SpectralField, VectorField, make_grid, refine


def _node_points(grid, stride=1):
    xg, yg = grid.coords
    return xg[::stride, ::stride], yg[::stride, ::stride]


def _random_points(rng, count, L):
    return rng.uniform(0.0, L, size=count), rng.uniform(0.0, L, size=count)


class TestCubicSampling:
    def test_samples_nodes_exactly(self, grid64, rng):
        f = random_band_field(grid64, 1.0, 8.0, seed=401)
        sampler = PeriodicSampler.of_scalar(f)
        x, y = _node_points(grid64)
        got = sampler.scalar_at(x, y)
        assert np.max(np.abs(got - f.values.real)) <= 1e-12 * f.linf()

    def test_constant_field_reproduced_everywhere(self, grid32, rng):
        f = SpectralField.from_physical(grid32, np.full((32, 32), 0.7))
        sampler = PeriodicSampler.of_scalar(f, upsample=2)
        x, y = _random_points(rng, 200, grid32.L)
        assert np.max(np.abs(sampler.scalar_at(x, y) - 0.7)) <= 1e-14

    def test_single_mode_accuracy(self, grid64, rng):
        xg, yg = grid64.coords
        f = SpectralField.from_physical(grid64, np.cos(3.0 * xg) * np.sin(2.0 * yg))
        sampler = PeriodicSampler.of_scalar(f, upsample=4)
        x, y = _random_points(rng, 500, grid64.L)
        exact = np.cos(3.0 * x) * np.sin(2.0 * y)
        assert np.max(np.abs(sampler.scalar_at(x, y) - exact)) <= 2e-6

    def test_upsampling_tightens_the_error(self, grid64, rng):
        f = random_band_field(grid64, 1.0, 6.0, seed=402)
        x, y = _random_points(rng, 400, grid64.L)
        reference = PeriodicSampler.of_scalar(f, upsample=8).scalar_at(x, y)
        coarse = PeriodicSampler.of_scalar(f, upsample=1).scalar_at(x, y)
        fine = PeriodicSampler.of_scalar(f, upsample=4).scalar_at(x, y)
        err_coarse = np.max(np.abs(coarse - reference))
        err_fine = np.max(np.abs(fine - reference))
        assert err_fine < err_coarse / 30.0

    def test_agrees_with_spectral_resampling(self, grid32):
        f = random_band_field(grid32, 1.0, 5.0, seed=403)
        dense = refine(f, 8)
        x, y = dense.grid.coords
        got = PeriodicSampler.of_scalar(f, upsample=4).scalar_at(x, y)
        assert np.max(np.abs(got - dense.values.real)) <= 1e-4 * f.linf()

    def test_periodic_shift_invariance(self, grid32, rng):
        f = random_band_field(grid32, 1.0, 5.0, seed=404)
        sampler = PeriodicSampler.of_scalar(f, upsample=2)
        x, y = _random_points(rng, 100, grid32.L)
        base = sampler.scalar_at(x, y)
        assert np.max(np.abs(sampler.scalar_at(x - grid32.L, y) - base)) <= 1e-11
        assert np.max(np.abs(sampler.scalar_at(x, y + 2 * grid32.L) - base)) <= 1e-11

    def test_vector_sampler_matches_components(self, grid32, rng):
        v1 = random_band_field(grid32, 1.0, 4.0, seed=405)
        v2 = random_band_field(grid32, 1.0, 4.0, seed=406)
        V = VectorField(v1, v2)
        x, y = _random_points(rng, 50, grid32.L)
        got1, got2 = PeriodicSampler.of_vector(V, upsample=2).at(x, y)
        want1 = PeriodicSampler.of_scalar(v1, upsample=2).scalar_at(x, y)
        want2 = PeriodicSampler.of_scalar(v2, upsample=2).scalar_at(x, y)
        assert np.array_equal(got1, want1)
        assert np.array_equal(got2, want2)

    def test_broadcasting_shapes(self, grid32):
        f = random_band_field(grid32, 1.0, 4.0, seed=407)
        sampler = PeriodicSampler.of_scalar(f)
        out = sampler.scalar_at(1.0, np.linspace(0.0, 6.0, 7))
        assert out.shape == (7,)
        out2 = sampler.scalar_at(np.zeros((3, 1)), np.zeros((1, 5)))
        assert out2.shape == (3, 5)

    def test_rejects_bad_construction(self, grid32):
        with pytest.raises(ValueError, match="at least one"):
            PeriodicSampler(grid32.L, ())
        with pytest.raises(ValueError, match="share one shape"):
            PeriodicSampler(grid32.L, (np.zeros((4, 4)), np.zeros((8, 8))))
        f = random_band_field(grid32, 1.0, 4.0, seed=408)
        V = VectorField(f, f)
        with pytest.raises(ValueError, match="one plane"):
            PeriodicSampler.of_vector(V).scalar_at(0.0, 0.0)


class TestCellBounds:
    def test_brackets_node_values(self, grid32):
        f = random_band_field(grid32, 1.0, 6.0, seed=409)
        x, y = _node_points(grid32)
        lo, hi = cell_bounds(f, x, y)
        vals = f.values.real
        assert np.all(lo <= vals + 1e-15)
        assert np.all(vals <= hi + 1e-15)

    def test_bounds_stay_within_global_range(self, grid32, rng):
        f = random_band_field(grid32, 1.0, 6.0, seed=410)
        x, y = _random_points(rng, 300, grid32.L)
        lo, hi = cell_bounds(f, x, y)
        vals = f.values.real
        assert np.all(lo >= vals.min() - 1e-15)
        assert np.all(hi <= vals.max() + 1e-15)
        assert np.all(lo <= hi)

    def test_clipped_samples_preserve_range(self, grid32, rng):
        f = random_band_field(grid32, 1.0, 8.0, seed=411)
        sampler = PeriodicSampler.of_scalar(f, upsample=4)
        x, y = _random_points(rng, 500, grid32.L)
        lo, hi = cell_bounds(f, x, y)
        clipped = np.clip(sampler.scalar_at(x, y), lo, hi)
        vals = f.values.real
        assert clipped.max() <= vals.max() + 1e-15
        assert clipped.min() >= vals.min() - 1e-15
