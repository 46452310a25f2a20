"""Pressure-solver checks: dense oracle, invariants, and method agreement."""

import numpy as np
import pytest

from besovlab.elliptic import (
    EllipticSolveStats,
    coefficient_floor,
    residual,
    solve_pressure,
)
from besovlab.random_fields import random_band_field, random_divergence_free, trial_seed
from besovlab.spectral import (
    SpectralField,
    VectorField,
    divergence,
    drop_nyquist,
    gradient,
    gradient_part,
    make_grid,
    multiply,
)
from conftest import smooth_random_field


def bounded_coefficient(grid, seed, floor=0.3, k_high=6.0):
    """Random coefficient with min(1+a) >= floor by amplitude rescaling."""
    a = random_band_field(grid, 1.0, k_high, seed, slope=-0.5)
    vals = a.values.real
    vals = vals * ((1.0 - floor) / np.max(np.abs(vals)))
    return SpectralField.from_physical(grid, vals)


def band_forcing(grid, seed, k_high=10.0):
    return VectorField(
        random_band_field(grid, 1.0, k_high, trial_seed(seed, 1)),
        random_band_field(grid, 1.0, k_high, trial_seed(seed, 2)),
    )


def vec_linf(v):
    return max(np.max(np.abs(v.u1.values)), np.max(np.abs(v.u2.values)))


def vec_l2(v):
    grid = v.u1.grid
    return np.sqrt(
        np.sum(np.abs(v.u1.modes) ** 2) + np.sum(np.abs(v.u2.modes) ** 2)
    ) * grid.L / grid.n**2


def dense_gradient_solve(a, F):
    """Direct dense solve of the projected operator pi -> -div((1+a) grad pi).

    Assembles the matrix column by column over node deltas (projected onto the
    derivative-resolved subspace on both sides, as the iterative solver poses
    the problem) and solves by least squares; the minimum-norm solution is
    orthogonal to the operator's null directions, so its gradient is the
    unique answer.  An iteration-free reference path.
    """
    grid = a.grid
    n = grid.n
    dim = n * n
    A = np.zeros((dim, dim))
    for i in range(dim):
        basis = np.zeros(dim)
        basis[i] = 1.0
        e = drop_nyquist(SpectralField.from_physical(grid, basis.reshape(n, n)))
        g = gradient(e)
        cg = g + VectorField(multiply(a, g.u1), multiply(a, g.u2))
        A[:, i] = drop_nyquist(-1.0 * divergence(cg)).values.real.ravel()
    b = drop_nyquist(-1.0 * divergence(F)).values.real.ravel()
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = SpectralField.from_physical(grid, x.reshape(n, n))
    return gradient(pi)


class TestTrivialCoefficients:
    def test_zero_coefficient(self):
        grid = make_grid(32)
        F = band_forcing(grid, 100)
        g, stats = solve_pressure(SpectralField.zero(grid), F, tol=1e-13)
        qf = gradient_part(F)
        assert vec_linf(g - qf) < 1e-12 * vec_linf(qf)
        assert residual(SpectralField.zero(grid), g, F) < 1e-13 * vec_linf(qf)
        assert stats.iterations <= 2

    def test_constant_coefficient(self):
        grid = make_grid(32)
        c = 0.5
        a = SpectralField.from_physical(grid, np.full((grid.n, grid.n), c))
        F = band_forcing(grid, 101)
        g, stats = solve_pressure(a, F, tol=1e-13)
        expected = (1.0 / (1.0 + c)) * gradient_part(F)
        assert vec_linf(g - expected) < 1e-11 * vec_linf(expected)
        assert stats.iterations <= 3


class TestDenseOracle:
    def test_matches_direct_solve(self):
        grid = make_grid(8)
        for trial in range(20):
            a = bounded_coefficient(grid, trial_seed(7, trial), floor=0.3, k_high=3.0)
            F = band_forcing(grid, 1000 + trial, k_high=3.0)
            g, _ = solve_pressure(a, F, tol=1e-13, max_iter=300)
            ref = dense_gradient_solve(a, F)
            scale = max(vec_linf(ref), 1e-30)
            assert vec_linf(g - ref) < 1e-8 * scale, trial


class TestResidual:
    def test_zero_gradpi(self):
        grid = make_grid(32)
        F = band_forcing(grid, 102)
        a = bounded_coefficient(grid, 103)
        zero = VectorField(SpectralField.zero(grid), SpectralField.zero(grid))
        qf_l2 = vec_l2(gradient_part(F))
        assert abs(residual(a, zero, F) - qf_l2) < 1e-12 * qf_l2

    def test_exact_constant_solution(self):
        grid = make_grid(32)
        a = SpectralField.from_physical(grid, np.full((grid.n, grid.n), 0.25))
        F = band_forcing(grid, 104)
        g = (1.0 / 1.25) * gradient_part(F)
        assert residual(a, g, F) < 1e-13 * vec_linf(F)

    def test_solver_meets_contract(self):
        grid = make_grid(64)
        a = bounded_coefficient(grid, 105)
        F = band_forcing(grid, 106, k_high=20.0)
        g, stats = solve_pressure(a, F, tol=1e-10)
        assert residual(a, g, F) <= 1e-10 * vec_l2(gradient_part(F))
        assert stats.residual <= 1e-10


class TestInvariants:
    def test_output_is_mean_free_gradient(self):
        grid = make_grid(64)
        a = bounded_coefficient(grid, 107)
        F = band_forcing(grid, 108, k_high=20.0)
        g, _ = solve_pressure(a, F, tol=1e-11)
        q = gradient_part(g)
        assert vec_linf(g - q) < 1e-12 * vec_linf(g)
        assert abs(complex(g.u1.mean)) < 1e-13
        assert abs(complex(g.u2.mean)) < 1e-13

    def test_uniqueness_across_initial_guesses(self, rng):
        grid = make_grid(32)
        a = bounded_coefficient(grid, 109)
        F = band_forcing(grid, 110)
        tol = 1e-11
        g0, _ = solve_pressure(a, F, tol=tol)
        guess = VectorField(
            smooth_random_field(grid, rng, k0=3.0),
            smooth_random_field(grid, rng, k0=3.0),
        )
        g1, _ = solve_pressure(a, F, tol=tol, initial_guess=guess)
        assert vec_linf(g0 - g1) < 10 * tol * max(vec_linf(g0), 1.0)

    def test_linearity_in_forcing(self):
        grid = make_grid(32)
        a = bounded_coefficient(grid, 111)
        F1 = band_forcing(grid, 112)
        F2 = band_forcing(grid, 113)
        tol = 1e-11
        g12, _ = solve_pressure(a, F1 + F2, tol=tol)
        g1, _ = solve_pressure(a, F1, tol=tol)
        g2, _ = solve_pressure(a, F2, tol=tol)
        assert vec_linf(g12 - (g1 + g2)) < 10 * tol * max(vec_linf(g12), 1.0)

    def test_divergence_free_forcing_is_invisible(self):
        grid = make_grid(32)
        a = bounded_coefficient(grid, 114)
        F = band_forcing(grid, 115)
        w = random_divergence_free(grid, 2.0, 10.0, 99)
        tol = 1e-11
        g0, _ = solve_pressure(a, F, tol=tol)
        g1, _ = solve_pressure(a, F + w, tol=tol)
        assert vec_linf(g0 - g1) < 10 * tol * max(vec_linf(g0), 1.0)

    def test_l2_bound_never_violated(self):
        grid = make_grid(64)
        for trial in range(5):
            a = bounded_coefficient(grid, trial_seed(8, trial))
            F = band_forcing(grid, 2000 + trial, k_high=20.0)
            g, _ = solve_pressure(a, F, tol=1e-11)
            kappa = coefficient_floor(a)
            assert kappa * vec_l2(g) <= vec_l2(gradient_part(F)) * (1.0 + 1e-6)


class TestMethods:
    def test_richardson_matches_pcg(self):
        grid = make_grid(32)
        a = bounded_coefficient(grid, 116, floor=0.5)
        F = band_forcing(grid, 117)
        tol = 1e-11
        g_pcg, _ = solve_pressure(a, F, tol=tol, method="pcg")
        g_rich, stats = solve_pressure(a, F, tol=tol, max_iter=2000, method="richardson")
        assert stats.relaxation == 1.0
        assert vec_linf(g_pcg - g_rich) < 20 * tol * max(vec_linf(g_pcg), 1.0)

    def test_richardson_rejects_large_coefficient(self):
        grid = make_grid(32)
        xs = grid.coords[0]
        a = SpectralField.from_physical(grid, 1.0 + 0.5 * np.cos(xs))
        F = band_forcing(grid, 118)
        with pytest.raises(ValueError):
            solve_pressure(a, F, method="richardson")

    def test_split_iteration_converges(self):
        grid = make_grid(64)
        a = bounded_coefficient(grid, 119, floor=0.5, k_high=12.0)
        F = band_forcing(grid, 120, k_high=20.0)
        tol = 1e-10
        g_ref, _ = solve_pressure(a, F, tol=tol)
        g_split, stats = solve_pressure(a, F, tol=tol, max_iter=200, split_m=2)
        assert stats.split_m == 2
        assert vec_linf(g_ref - g_split) < 20 * tol * max(vec_linf(g_ref), 1.0)

    def test_split_rate_improves_with_m(self):
        grid = make_grid(64)
        a = bounded_coefficient(grid, 121, floor=0.5, k_high=12.0)
        F = band_forcing(grid, 122, k_high=20.0)
        iters = {}
        for m in (0, 3):
            _, stats = solve_pressure(a, F, tol=1e-9, max_iter=400, split_m=m)
            iters[m] = stats.iterations
        # moving more of the coefficient into the implicit part cannot slow
        # the outer relaxation
        assert iters[3] <= iters[0]


class TestErrors:
    def test_coefficient_violation(self):
        grid = make_grid(32)
        xs = grid.coords[0]
        a = SpectralField.from_physical(grid, -1.0 + 0.1 * np.cos(xs))
        F = band_forcing(grid, 123)
        with pytest.raises(ValueError, match="coefficient"):
            solve_pressure(a, F)

    def test_bad_tolerance(self):
        grid = make_grid(32)
        with pytest.raises(ValueError):
            solve_pressure(SpectralField.zero(grid), band_forcing(grid, 124), tol=0.0)

    def test_nonconvergence_raises(self):
        grid = make_grid(32)
        a = bounded_coefficient(grid, 125)
        F = band_forcing(grid, 126)
        with pytest.raises(RuntimeError):
            solve_pressure(a, F, tol=1e-13, max_iter=1, method="pcg")

    def test_stats_shape(self):
        s = EllipticSolveStats(iterations=3, residual=1e-12, split_m=None, relaxation=1.0)
        assert s.iterations == 3 and s.split_m is None


class TestOperatorSymmetry:
    def test_dealiased_product_is_self_adjoint_on_resolved_subspace(self, rng):
        # the SPD backbone of the conjugate-gradient method: for pairing
        # fields without half-Nyquist content, multiplication by any third
        # field is exactly symmetric
        grid = make_grid(32)
        c = smooth_random_field(grid, rng, k0=5.0)
        f = drop_nyquist(smooth_random_field(grid, rng, k0=9.0))
        g = drop_nyquist(smooth_random_field(grid, rng, k0=7.0))
        lhs = np.sum(multiply(c, f).values.real * g.values.real)
        rhs = np.sum(f.values.real * multiply(c, g).values.real)
        assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)
