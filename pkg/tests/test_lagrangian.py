"""Flow maps, inverse-Jacobian series, pullbacks, and stability ratios."""

import math

import numpy as np
import pytest

from conftest import smooth_random_divfree, smooth_random_field

from besovlab.evolution import StateSnapshot
from besovlab.interpolation import PeriodicSampler
from besovlab.lagrangian import (
    FlowMap,
    check_div_identity,
    delta_estimates,
    gradient_tensor,
    integrate_flow,
    jacobian_series,
    to_lagrangian,
)
from besovlab.spectral import (
    SpectralField,
    VectorField,
    gradient,
    make_grid,
)

ID = np.eye(2)


def shear_velocity(grid):
    _, y = grid.coords
    return VectorField(SpectralField.from_physical(grid, np.sin(y)), SpectralField.zero(grid))


def taylor_green_velocity(grid, t, mu=1.0):
    x, y = grid.coords
    d = math.exp(-2.0 * mu * t)
    return VectorField(
        SpectralField.from_physical(grid, d * np.cos(x) * np.sin(y)),
        SpectralField.from_physical(grid, -d * np.sin(x) * np.cos(y)),
    )


def steady_trajectory(u, times):
    return [(t, u) for t in times]


def test_gradient_tensor_single_modes(grid32):
    x, y = grid32.coords
    V = VectorField(
        SpectralField.from_physical(grid32, np.cos(2.0 * y)),
        SpectralField.from_physical(grid32, np.sin(x)),
    )
    G = gradient_tensor(V)
    assert np.max(np.abs(G[..., 0, 0])) <= 1e-12
    assert np.max(np.abs(G[..., 0, 1] + 2.0 * np.sin(2.0 * y))) <= 1e-12
    assert np.max(np.abs(G[..., 1, 0] - np.cos(x))) <= 1e-12
    assert np.max(np.abs(G[..., 1, 1])) <= 1e-12


class TestIntegrateFlow:
    def test_zero_velocity_identity(self, grid32):
        traj = steady_trajectory(VectorField.zero(grid32), (0.0, 0.5))
        flow = integrate_flow(traj, 0.1)
        assert flow.displacements[-1].linf() == 0.0
        assert np.max(np.abs(flow.inverse_jacobians[-1] - ID)) == 0.0

    def test_uniform_translation(self, grid32):
        U = (0.7, -0.3)
        u = VectorField.from_physical(
            grid32, np.full((32, 32), U[0]), np.full((32, 32), U[1])
        )
        flow = integrate_flow(steady_trajectory(u, (0.0, 0.4)), 0.05)
        d = flow.displacements[-1]
        assert np.max(np.abs(d.u1.values.real - 0.4 * U[0])) <= 1e-13
        assert np.max(np.abs(d.u2.values.real - 0.4 * U[1])) <= 1e-13
        assert np.max(np.abs(flow.inverse_jacobians[-1] - ID)) <= 1e-12

    def test_shear_closed_form(self, grid64):
        _, y = grid64.coords
        flow = integrate_flow(
            steady_trajectory(shear_velocity(grid64), (0.0, 0.25, 0.5)), 1e-2
        )
        A = flow.inverse_jacobians[-1]
        assert np.max(np.abs(A[..., 0, 1] + 0.5 * np.cos(y))) <= 1e-6
        assert np.max(np.abs(A[..., 0, 0] - 1.0)) <= 1e-9
        assert np.max(np.abs(A[..., 1, 0])) <= 1e-9
        assert np.max(np.abs(A[..., 1, 1] - 1.0)) <= 1e-9
        assert flow.volume_defect() <= 1e-9
        assert flow.inverse_consistency_defect() <= 1e-8
        disp = flow.displacements[-1]
        assert np.max(np.abs(disp.u1.values.real - 0.5 * np.sin(y))) <= 1e-9
        assert disp.u2.linf() <= 1e-12

    def test_decaying_cellular_flow_preserves_volume(self, grid64):
        traj = [(0.05 * k, taylor_green_velocity(grid64, 0.05 * k)) for k in range(7)]
        flow = integrate_flow(traj, 2.5e-3)
        assert flow.volume_defect() <= 1e-6
        assert flow.inverse_consistency_defect() <= 1e-8

    def test_group_property(self, grid32, rng):
        u = smooth_random_divfree(grid32, rng, k0=3.0) * 0.4
        traj = steady_trajectory(u, (0.0, 0.1, 0.2, 0.3))
        full = integrate_flow(traj, 5e-3)
        first = integrate_flow(traj[:3], 5e-3)
        restart = integrate_flow(traj[2:], 5e-3)
        x1, y1 = first.position_arrays(2)
        dx, dy = PeriodicSampler.of_vector(restart.displacements[-1], 4).at(x1, y1)
        xf, yf = full.position_arrays(3)
        assert np.max(np.abs(x1 + dx - xf)) <= 1e-6
        assert np.max(np.abs(y1 + dy - yf)) <= 1e-6

    def test_step_size_guards(self, grid32):
        traj = steady_trajectory(VectorField.zero(grid32), (0.0, 0.1))
        with pytest.raises(ValueError, match="exceeds the snapshot spacing"):
            integrate_flow(traj, 0.3)
        with pytest.raises(ValueError, match="tile"):
            integrate_flow(traj, 0.03)
        with pytest.raises(ValueError, match="positive"):
            integrate_flow(traj, -0.1)
        with pytest.raises(ValueError, match="two snapshots"):
            integrate_flow(traj[:1], 0.1)

    def test_rejects_compressible_snapshots(self, grid32):
        x, _ = grid32.coords
        bad = VectorField(SpectralField.from_physical(grid32, np.sin(x)), SpectralField.zero(grid32))
        with pytest.raises(ValueError, match="solenoidal"):
            integrate_flow(steady_trajectory(bad, (0.0, 0.1)), 0.05)


class TestFlowMapType:
    def test_validation(self, grid32):
        zero = VectorField.zero(grid32)
        A = np.broadcast_to(ID, (32, 32, 2, 2)).copy()
        FlowMap((0.0,), (zero,), (A,))
        with pytest.raises(ValueError, match="align"):
            FlowMap((0.0, 1.0), (zero,), (A,))
        with pytest.raises(ValueError, match="increase"):
            FlowMap((1.0, 0.5), (zero, zero), (A, A))
        with pytest.raises(ValueError, match="identity"):
            FlowMap((0.0,), (zero + VectorField.from_physical(grid32, np.ones((32, 32)), np.zeros((32, 32))),), (A,))
        with pytest.raises(ValueError, match="shape"):
            FlowMap((0.0,), (zero,), (np.eye(2),))

    def test_index_of(self, grid32):
        flow = integrate_flow(steady_trajectory(VectorField.zero(grid32), (0.0, 0.5, 1.0)), 0.25)
        assert flow.index_of(0.5) == 1
        assert flow.index_of(1.0 + 1e-12) == 2
        with pytest.raises(ValueError, match="time mismatch"):
            flow.index_of(0.3)


class TestJacobianSeries:
    def test_zero_gradient(self, grid32):
        traj = steady_trajectory(VectorField.zero(grid32), (0.0, 1.0))
        assert np.max(np.abs(jacobian_series(traj, 1.0) - ID)) == 0.0

    def test_nilpotent_shear_terminates(self, grid64):
        u = shear_velocity(grid64)
        traj = steady_trajectory(u, (0.0, 0.25, 0.5))
        A = jacobian_series(traj, 0.5)
        M = 0.5 * gradient_tensor(u)
        assert np.max(np.abs(A - (ID - M))) == 0.0

    def test_matches_direct_inversion(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=3.0) * 0.2
        traj = [(0.0, v), (0.2, v * 0.8), (0.4, v * 0.64)]
        A = jacobian_series(traj, 0.4)
        from besovlab.lagrangian import _integrated_gradient, _invert_per_node

        M, _ = _integrated_gradient(traj, 0.4)
        direct = _invert_per_node(np.asarray(ID + M))
        assert np.max(np.abs(A - direct)) <= 1e-8

    def test_partial_time_integration(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=3.0) * 0.1
        traj = [(0.0, v), (0.4, v)]
        A_mid = jacobian_series(traj, 0.2)
        direct = jacobian_series([(0.0, v), (0.2, v)], 0.2)
        assert np.max(np.abs(A_mid - direct)) <= 1e-12

    def test_divergence_detection(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=2.0) * 4.0
        traj = steady_trajectory(v, (0.0, 1.0, 2.0))
        with pytest.raises(RuntimeError, match="diverg"):
            jacobian_series(traj, 2.0)

    def test_time_range_guard(self, grid32):
        traj = steady_trajectory(VectorField.zero(grid32), (0.0, 1.0))
        with pytest.raises(ValueError, match="out of stored time range"):
            jacobian_series(traj, 2.0)


class TestToLagrangian:
    def test_identity_flow(self, grid32, rng):
        a = smooth_random_field(grid32, rng, amplitude=0.3)
        pot = smooth_random_field(grid32, rng, k0=3.0)
        state = StateSnapshot(0.5, a, VectorField.zero(grid32), gradient(pot))
        flow = integrate_flow(steady_trajectory(VectorField.zero(grid32), (0.0, 0.5)), 0.1)
        eta, v, P = to_lagrangian(state, flow)
        assert np.max(np.abs(eta.values - a.values)) <= 1e-12
        assert v.linf() <= 1e-12
        assert np.max(np.abs(P.values.real - pot.values.real)) <= 1e-10 * pot.linf()

    def test_translation_restores_initial_scalar(self, grid64, rng):
        a0 = smooth_random_field(grid64, rng, k0=4.0, amplitude=0.5)
        U, T = (0.6, -0.2), 0.5
        u = VectorField.from_physical(grid64, np.full((64, 64), U[0]), np.full((64, 64), U[1]))
        carried = a0.with_modes(
            a0.modes * np.exp(-1j * (grid64.kx * U[0] + grid64.ky * U[1]) * T)
        )
        state = StateSnapshot(T, carried, u, VectorField.zero(grid64))
        flow = integrate_flow(steady_trajectory(u, (0.0, 0.25, 0.5)), 0.025)
        eta, v, _ = to_lagrangian(state, flow)
        assert np.max(np.abs(eta.values.real - a0.values.real)) <= 2e-5 * a0.linf()
        assert np.max(np.abs(v.u1.values.real - U[0])) <= 1e-10

    def test_shear_restores_initial_scalar(self, grid64):
        x, y = grid64.coords
        T = 0.25
        a0 = SpectralField.from_physical(grid64, np.cos(x) * np.sin(y))
        carried = SpectralField.from_physical(grid64, np.cos(x - T * np.sin(y)) * np.sin(y))
        u = shear_velocity(grid64)
        state = StateSnapshot(T, carried, u, VectorField.zero(grid64))
        flow = integrate_flow(steady_trajectory(u, (0.0, T)), 5e-3)
        eta, v, _ = to_lagrangian(state, flow)
        num = np.sqrt(np.sum((eta.values.real - a0.values.real) ** 2))
        den = np.sqrt(np.sum(a0.values.real**2))
        assert num / den <= 1e-4
        got = v.u1.values.real
        assert np.max(np.abs(got - np.sin(y))) <= 1e-9

    def test_time_and_grid_mismatch(self, grid32, grid64, rng):
        a = smooth_random_field(grid32, rng, amplitude=0.3)
        state = StateSnapshot(0.3, a, VectorField.zero(grid32), VectorField.zero(grid32))
        flow = integrate_flow(steady_trajectory(VectorField.zero(grid32), (0.0, 0.5)), 0.1)
        with pytest.raises(ValueError, match="time mismatch"):
            to_lagrangian(state, flow)
        b = smooth_random_field(grid64, rng, amplitude=0.3)
        other = StateSnapshot(0.5, b, VectorField.zero(grid64), VectorField.zero(grid64))
        with pytest.raises(ValueError, match="grids"):
            to_lagrangian(other, flow)


class TestDivIdentity:
    def test_zero_and_constant_velocity(self, grid32):
        flow = integrate_flow(steady_trajectory(VectorField.zero(grid32), (0.0, 0.5)), 0.1)
        res = check_div_identity(VectorField.zero(grid32), 0.5, flow)
        assert res.trace_form == 0.0 and res.flux_form == 0.0
        u = VectorField.from_physical(grid32, np.full((32, 32), 1.2), np.full((32, 32), -0.4))
        flow_c = integrate_flow(steady_trajectory(u, (0.0, 0.5)), 0.05)
        res_c = check_div_identity(u, 0.5, flow_c)
        assert res_c.trace_form <= 1e-11 and res_c.flux_form <= 1e-11

    def test_cellular_flow(self, grid64):
        traj = [(0.05 * k, taylor_green_velocity(grid64, 0.05 * k)) for k in range(7)]
        flow = integrate_flow(traj, 2.5e-3)
        res = check_div_identity(taylor_green_velocity(grid64, 0.3), 0.3, flow)
        assert res.trace_form <= 1e-5
        assert res.flux_form <= 1e-5

    def test_accepts_snapshot_for_time(self, grid32, rng):
        u = smooth_random_divfree(grid32, rng, k0=3.0) * 0.3
        flow = integrate_flow(steady_trajectory(u, (0.0, 0.2)), 0.01)
        state = StateSnapshot(0.2, SpectralField.zero(grid32), u, VectorField.zero(grid32))
        res = check_div_identity(u, state, flow)
        assert res.trace_form <= 1e-4


class TestDeltaEstimates:
    def test_identical_trajectories(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=3.0) * 0.2
        traj = [(0.0, v), (0.2, v * 0.8), (0.4, v * 0.64)]
        report = delta_estimates(traj, traj)
        assert report.difference_ratio == 0.0
        assert report.difference_rate_ratio == 0.0
        assert report.deviation_ratio > 0.0
        assert report.rate_ratio > 0.0
        assert report.gradient_integrals[0] == pytest.approx(report.gradient_integrals[1])

    def test_ratio_invariance_under_perturbation_scaling(self, grid32, rng):
        base = smooth_random_divfree(grid32, rng, k0=3.0) * 3e-7
        bump = smooth_random_divfree(grid32, rng, k0=4.0) * 3e-7
        times = (0.0, 0.1, 0.2)

        def report(s):
            t1 = [(t, base) for t in times]
            t2 = [(t, base + bump * s) for t in times]
            return delta_estimates(t1, t2)

        r1, r2 = report(1.0), report(0.5)
        for a, b in zip(r1.ratios(), r2.ratios()):
            assert abs(a - b) <= 1e-6 * max(1.0, abs(a))

    def test_ratios_stable_under_refinement(self, rng):
        reports = []
        for n in (32, 64):
            grid = make_grid(n)
            seeded = np.random.default_rng(99)
            v1 = smooth_random_divfree(grid, seeded, k0=3.0) * 0.25
            dv = smooth_random_divfree(grid, seeded, k0=3.0) * 0.05
            times = (0.0, 0.15, 0.3)
            t1 = [(t, v1 * math.exp(-t)) for t in times]
            t2 = [(t, (v1 + dv) * math.exp(-t)) for t in times]
            reports.append(delta_estimates(t1, t2))
        for a, b in zip(reports[0].ratios(), reports[1].ratios()):
            assert b <= 1.5 * a + 1e-12
            assert b >= a / 1.5 - 1e-12

    def test_input_validation(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=3.0) * 0.2
        t1 = [(0.0, v), (0.2, v)]
        with pytest.raises(ValueError, match="share their sample times"):
            delta_estimates(t1, [(0.0, v), (0.3, v)])
        other = make_grid(64)
        w = VectorField.zero(other)
        with pytest.raises(ValueError, match="different grids"):
            delta_estimates(t1, [(0.0, w), (0.2, w)])

    def test_monitor_failure_raises(self, grid32, rng):
        v = smooth_random_divfree(grid32, rng, k0=2.0) * 4.0
        traj = steady_trajectory(v, (0.0, 1.0, 2.0))
        with pytest.raises(RuntimeError, match="diverg"):
            delta_estimates(traj, [(t, u * 1.1) for t, u in traj])
