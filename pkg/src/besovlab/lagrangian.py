"""Particle trajectories of periodic flows and the associated change of variables.

Grid nodes are advected through a time-dependent velocity field to produce a
flow map, stored as a periodic displacement so the torus topology never
introduces branch cuts.  The inverse Jacobian of the map is the key derived
object: it converts between fixed-frame and co-moving derivatives, and its
deviation from the identity is controlled by time integrals of the velocity
gradient.  This module computes flow maps (RK4 in time, cubic interpolation in
space), evaluates the inverse Jacobian both by direct per-node inversion and
by a truncated geometric series in the integrated velocity gradient, pulls
fields back along the map, and measures the ratio between each side of the
stability inequalities that make the co-moving formulation useful.

Matrix-valued fields are ndarrays of shape (n, n, 2, 2) with entry [i, j]
holding the derivative of component i along axis j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicLadder, build_ladder
from .evolution import _require_solenoidal
from .interpolation import PeriodicSampler
from .norms import BesovSpec, besov_norm
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    derivative,
    divergence,
    potential_from_gradient,
)

__all__ = [
    "FlowMap",
    "RatioReport",
    "DivergenceIdentityResidual",
    "gradient_tensor",
    "integrate_flow",
    "jacobian_series",
    "to_lagrangian",
    "check_div_identity",
    "delta_estimates",
]

_UPSAMPLE = 4
_IDENTITY = np.eye(2)


# ---------------------------------------------------------------------------
# matrix-field helpers
# ---------------------------------------------------------------------------

def gradient_tensor(V: VectorField) -> np.ndarray:
    """Per-node Jacobian of a vector field, entry [i, j] = d_j V^i."""
    rows = []
    for comp in (V.u1, V.u2):
        rows.append(
            np.stack(
                (derivative(comp, (1, 0)).values.real, derivative(comp, (0, 1)).values.real),
                axis=-1,
            )
        )
    return np.stack(rows, axis=-2)


def _invert_per_node(M: np.ndarray) -> np.ndarray:
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.min(np.abs(det)) < 1e-12:
        raise ValueError("matrix field is singular at some node; map folded over")
    inv = np.empty_like(M)
    inv[..., 0, 0] = M[..., 1, 1]
    inv[..., 1, 1] = M[..., 0, 0]
    inv[..., 0, 1] = -M[..., 0, 1]
    inv[..., 1, 0] = -M[..., 1, 0]
    return inv / det[..., None, None]


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...jk->...ik", A, B)


def _entry_linf(M: np.ndarray) -> float:
    return float(np.max(np.abs(M)))


def _matrix_besov(M: np.ndarray, grid: Grid, spec: BesovSpec, ladder: DyadicLadder) -> float:
    """Besov size of a matrix field: sum of the entries' norms, means dropped."""
    total = 0.0
    for i in range(2):
        for j in range(2):
            plane = M[..., i, j]
            f = SpectralField.from_physical(grid, plane - plane.mean())
            total += besov_norm(f, spec, ladder)[0]
    return total


def _vector_besov(V: VectorField, spec: BesovSpec, ladder: DyadicLadder) -> float:
    total = 0.0
    for comp in V.components:
        centered = comp.with_modes(_zeroed_mean(comp.modes))
        total += besov_norm(centered, spec, ladder)[0]
    return total


def _zeroed_mean(modes: np.ndarray) -> np.ndarray:
    out = modes.copy()
    out[0, 0] = 0.0
    return out


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def _unpack_trajectory(trajectory) -> tuple[tuple[float, ...], list[VectorField], Grid]:
    """Accept (t, velocity) pairs or snapshot objects with .t and .u."""
    times: list[float] = []
    fields: list[VectorField] = []
    for item in trajectory:
        if isinstance(item, (tuple, list)) and len(item) == 2:
            t, u = item
        else:
            t, u = item.t, item.u
        times.append(float(t))
        fields.append(u)
    if len(times) < 2:
        raise ValueError("trajectory needs at least two snapshots")
    grid = fields[0].grid
    for u in fields[1:]:
        if u.grid != grid:
            raise ValueError("trajectory snapshots live on different grids")
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("trajectory times must increase strictly")
    for u in fields:
        _require_solenoidal(u)
    return tuple(times), fields, grid


class _VelocityInTime:
    """Piecewise-linear-in-time velocity built on cubic spatial samplers."""

    def __init__(self, times, fields, upsample=_UPSAMPLE):
        self.times = times
        self.samplers = [PeriodicSampler.of_vector(u, upsample) for u in fields]

    def __call__(self, t: float, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = self.times
        slack = 1e-9 * max(1.0, abs(times[-1]))
        if t < times[0] - slack or t > times[-1] + slack:
            raise ValueError(
                f"interpolation out of stored time range: t={t} not in [{times[0]}, {times[-1]}]"
            )
        i = int(np.searchsorted(times, t, side="right") - 1)
        i = min(max(i, 0), len(times) - 2)
        span = times[i + 1] - times[i]
        w = min(max((t - times[i]) / span, 0.0), 1.0)
        a1, a2 = self.samplers[i].at(x, y)
        if w == 0.0:
            return a1, a2
        b1, b2 = self.samplers[i + 1].at(x, y)
        return (1.0 - w) * a1 + w * b1, (1.0 - w) * a2 + w * b2


# ---------------------------------------------------------------------------
# flow map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowMap:
    """Trajectories of every grid node, one record per stored time.

    ``displacements[k]`` holds the periodic offset of each node at
    ``times[k]`` (zero at the start by construction), and
    ``inverse_jacobians[k]`` the per-node inverse of the map's Jacobian.
    """

    times: tuple[float, ...]
    displacements: tuple[VectorField, ...]
    inverse_jacobians: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (len(self.times) == len(self.displacements) == len(self.inverse_jacobians)):
            raise ValueError("times, displacements, and inverse Jacobians must align")
        if len(self.times) < 1:
            raise ValueError("flow map needs at least one record")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ValueError("flow map times must increase strictly")
        grid = self.displacements[0].grid
        n = grid.n
        for disp in self.displacements:
            if disp.grid != grid:
                raise ValueError("flow map records live on different grids")
        for A in self.inverse_jacobians:
            if A.shape != (n, n, 2, 2):
                raise ValueError(f"inverse Jacobian must have shape {(n, n, 2, 2)}, got {A.shape}")
        if self.displacements[0].linf() != 0.0:
            raise ValueError("the first record must be the identity map")

    @property
    def grid(self) -> Grid:
        return self.displacements[0].grid

    def index_of(self, t: float) -> int:
        tol = 1e-9 * max(1.0, abs(float(t)))
        diffs = [abs(s - t) for s in self.times]
        k = int(np.argmin(diffs))
        if diffs[k] > tol:
            raise ValueError(
                f"time mismatch: t={t} not among stored flow times "
                f"[{self.times[0]}, {self.times[-1]}] ({len(self.times)} records)"
            )
        return k

    def position_arrays(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Absolute particle positions at a stored time (may leave the box)."""
        x, y = self.grid.coords
        disp = self.displacements[index]
        return x + disp.u1.values.real, y + disp.u2.values.real

    def jacobian(self, index: int) -> np.ndarray:
        return _IDENTITY + gradient_tensor(self.displacements[index])

    def volume_defect(self) -> float:
        """Largest deviation of the map's Jacobian determinant from one."""
        worst = 0.0
        for k in range(len(self.times)):
            J = self.jacobian(k)
            det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            worst = max(worst, float(np.max(np.abs(det - 1.0))))
        return worst

    def inverse_consistency_defect(self) -> float:
        """Largest entry of inverse_jacobian @ jacobian - identity."""
        worst = 0.0
        for k in range(len(self.times)):
            resid = _matmul(self.inverse_jacobians[k], self.jacobian(k)) - _IDENTITY
            worst = max(worst, _entry_linf(resid))
        return worst


def integrate_flow(u_trajectory, dt: float) -> FlowMap:
    """Advect every grid node through the sampled velocity history.

    Between stored snapshots the velocity is blended linearly in time and
    sampled cubically in space; each node is advanced with classical RK4 at
    step ``dt``, which must not exceed the snapshot spacing.  One displacement
    and inverse-Jacobian record is produced per snapshot time.
    """
    if dt <= 0.0:
        raise ValueError("integration step dt must be positive")
    times, fields, grid = _unpack_trajectory(u_trajectory)
    velocity = _VelocityInTime(times, fields)
    x, y = grid.coords
    px = x.copy()
    py = y.copy()

    def record() -> tuple[VectorField, np.ndarray]:
        disp = VectorField.from_physical(grid, px - x, py - y)
        jac = _IDENTITY + gradient_tensor(disp)
        return disp, _invert_per_node(jac)

    out_times = [times[0]]
    disp0 = VectorField.zero(grid)
    records = [(disp0, _invert_per_node(_IDENTITY + gradient_tensor(disp0)))]
    for t_lo, t_hi in zip(times, times[1:]):
        span = t_hi - t_lo
        m = int(round(span / dt))
        if m < 1:
            raise ValueError(
                f"integration step dt={dt} exceeds the snapshot spacing {span}"
            )
        if abs(m * dt - span) > 1e-9 * max(1.0, span):
            raise ValueError(
                f"integration step dt={dt} does not tile the snapshot spacing {span}"
            )
        h = span / m
        for step in range(m):
            t = t_lo + step * h
            k1x, k1y = velocity(t, px, py)
            k2x, k2y = velocity(t + 0.5 * h, px + 0.5 * h * k1x, py + 0.5 * h * k1y)
            k3x, k3y = velocity(t + 0.5 * h, px + 0.5 * h * k2x, py + 0.5 * h * k2y)
            k4x, k4y = velocity(t + h, px + h * k3x, py + h * k3y)
            px = px + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            py = py + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        out_times.append(t_hi)
        records.append(record())
    return FlowMap(
        tuple(out_times),
        tuple(r[0] for r in records),
        tuple(r[1] for r in records),
    )


# ---------------------------------------------------------------------------
# inverse Jacobian by geometric series
# ---------------------------------------------------------------------------

def _integrated_gradient(trajectory, t: float) -> tuple[np.ndarray, Grid]:
    """Trapezoid time integral of the velocity gradient up to time t."""
    times, fields, grid = _unpack_trajectory(trajectory)
    slack = 1e-9 * max(1.0, abs(times[-1]))
    if t < times[0] - slack or t > times[-1] + slack:
        raise ValueError(
            f"interpolation out of stored time range: t={t} not in [{times[0]}, {times[-1]}]"
        )
    t = min(max(t, times[0]), times[-1])
    grads = [gradient_tensor(u) for u in fields]
    M = np.zeros((grid.n, grid.n, 2, 2))
    for k in range(len(times) - 1):
        if times[k + 1] <= t:
            M += 0.5 * (times[k + 1] - times[k]) * (grads[k] + grads[k + 1])
            continue
        if times[k] < t:
            w = (t - times[k]) / (times[k + 1] - times[k])
            g_t = (1.0 - w) * grads[k] + w * grads[k + 1]
            M += 0.5 * (t - times[k]) * (grads[k] + g_t)
        break
    return M, grid


def _neumann_inverse(M: np.ndarray, k_max: int, tol: float) -> np.ndarray:
    """Sum of (-M)^k, with growth-based divergence detection."""
    A = np.broadcast_to(_IDENTITY, M.shape).copy()
    term = A
    first = None
    for _ in range(k_max):
        term = -_matmul(term, M)
        A = A + term
        size = _entry_linf(term)
        if first is None:
            first = size
        if size <= tol * (1.0 + _entry_linf(A)):
            return A
        if size > 1e3 * (1.0 + first):
            raise RuntimeError(
                "inverse-Jacobian series diverges: term growth detected "
                f"(term size {size:.3e} from {first:.3e})"
            )
    if _entry_linf(term) > 1e-9 * (1.0 + _entry_linf(A)):
        raise RuntimeError(
            f"inverse-Jacobian series did not converge within {k_max} terms "
            f"(last term {_entry_linf(term):.3e}); integrated gradient too large"
        )
    return A


def jacobian_series(v_trajectory, t: float, *, k_max: int = 16, tol: float = 1e-14) -> np.ndarray:
    """Inverse Jacobian at time t as a truncated geometric series.

    The co-moving Jacobian is the identity plus the time integral of the
    co-moving velocity gradient, so its inverse expands into powers of that
    integral whenever the integral is small.  Term growth aborts the sum.
    """
    M, _ = _integrated_gradient(v_trajectory, t)
    return _neumann_inverse(M, k_max, tol)


# ---------------------------------------------------------------------------
# pullbacks and the divergence identity
# ---------------------------------------------------------------------------

def to_lagrangian(state, flow: FlowMap):
    """Pull a snapshot back along the flow: fields evaluated at node images.

    Returns the transported scalar, velocity, and pressure potential as
    fields over starting positions.  The transported scalar should agree with
    its initial data up to scheme error, which makes the residual a useful
    convergence probe.
    """
    k = flow.index_of(state.t)
    xs, ys = flow.position_arrays(k)
    grid = flow.grid
    if state.a.grid != grid:
        raise ValueError("snapshot and flow map live on different grids")
    eta = PeriodicSampler.of_scalar(state.a, _UPSAMPLE).scalar_at(xs, ys)
    v1, v2 = PeriodicSampler.of_vector(state.u, _UPSAMPLE).at(xs, ys)
    pressure = potential_from_gradient(state.gradPi)
    p_vals = PeriodicSampler.of_scalar(pressure, _UPSAMPLE).scalar_at(xs, ys)
    return (
        SpectralField.from_physical(grid, eta),
        VectorField.from_physical(grid, v1, v2),
        SpectralField.from_physical(grid, p_vals),
    )


@dataclass(frozen=True)
class DivergenceIdentityResidual:
    """Relative size of both discrete forms of the co-moving divergence."""

    trace_form: float
    flux_form: float


def check_div_identity(u: VectorField, state, flow: FlowMap) -> DivergenceIdentityResidual:
    """Check that the fixed-frame divergence transforms as claimed.

    The divergence of the velocity evaluated along trajectories must equal
    both the trace of (co-moving gradient times inverse Jacobian) and the
    plain divergence of (inverse Jacobian times co-moving velocity).  Both
    residuals are reported relative to the larger of the co-moving gradient's
    size and the velocity's size per box length, so gradient-free data (zero
    or uniform flows) reports rounding noise rather than a 0/0 artifact.
    """
    t = getattr(state, "t", state)
    k = flow.index_of(float(t))
    xs, ys = flow.position_arrays(k)
    grid = flow.grid
    v1, v2 = PeriodicSampler.of_vector(u, _UPSAMPLE).at(xs, ys)
    v = VectorField.from_physical(grid, v1, v2)
    Dv = gradient_tensor(v)
    A = flow.inverse_jacobians[k]
    lhs = PeriodicSampler.of_scalar(divergence(u), _UPSAMPLE).scalar_at(xs, ys)

    area = grid.cell_area
    grad_scale = np.sqrt(np.sum(Dv**2) * area)
    vel_scale = np.sqrt(np.sum(v1**2 + v2**2) * area) / grid.L
    scale = max(grad_scale, vel_scale, 1e-300)

    trace = np.einsum("...ij,...ji->...", Dv, A)
    res_trace = np.sqrt(np.sum((trace - lhs) ** 2) * area) / scale

    w = np.einsum("...ij,...j->...i", A, np.stack((v1, v2), axis=-1))
    flux = divergence(VectorField.from_physical(grid, w[..., 0], w[..., 1]))
    res_flux = np.sqrt(np.sum((flux.values.real - lhs) ** 2) * area) / scale
    return DivergenceIdentityResidual(float(res_trace), float(res_flux))


# ---------------------------------------------------------------------------
# stability ratios for nearby trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RatioReport:
    """Measured left/right ratios of the inverse-Jacobian stability bounds.

    Each field is sized so that boundedness under refinement supports the
    corresponding inequality: deviation of either inverse Jacobian from the
    identity against the integrated gradient (``deviation_ratio``), the
    difference of the two inverse Jacobians against the integrated gradient
    of the velocity difference (``difference_ratio``), the instantaneous rate
    of either inverse Jacobian against the instantaneous gradient
    (``rate_ratio``), and the rate of the difference against the mixed
    velocity/difference sizes (``difference_rate_ratio``).  Ratios with a
    vanishing numerator and denominator are reported as zero.
    """

    p: float
    deviation_ratio: float
    difference_ratio: float
    rate_ratio: float
    difference_rate_ratio: float
    gradient_integrals: tuple[float, float]

    def ratios(self) -> tuple[float, float, float, float]:
        return (
            self.deviation_ratio,
            self.difference_ratio,
            self.rate_ratio,
            self.difference_rate_ratio,
        )


def _safe_ratio(num: float, den: float) -> float:
    if num <= 1e-300:
        return 0.0
    return num / den if den > 1e-300 else float("inf")


def delta_estimates(v1_trajectory, v2_trajectory, p: float = 2.0, *,
                    ladder: DyadicLadder | None = None, k_max: int = 16) -> RatioReport:
    """Measure the stability bounds linking two nearby co-moving velocities.

    Both trajectories must share times and a grid and stay in the regime
    where the inverse-Jacobian series converges (divergence there raises, as
    the bounds are only claimed for small integrated gradients).
    """
    times1, fields1, grid = _unpack_trajectory(v1_trajectory)
    times2, fields2, grid2 = _unpack_trajectory(v2_trajectory)
    if grid2 != grid:
        raise ValueError("trajectories live on different grids")
    if len(times1) != len(times2) or any(
        abs(a - b) > 1e-12 * max(1.0, abs(a)) for a, b in zip(times1, times2)
    ):
        raise ValueError("trajectories must share their sample times")
    if ladder is None:
        ladder = build_ladder(grid)
    times = np.asarray(times1)
    reg = BesovSpec(s=2.0 / p, p=p, r=1.0)
    low = BesovSpec(s=2.0 / p - 1.0, p=p, r=1.0)

    grads = [[gradient_tensor(u) for u in fields] for fields in (fields1, fields2)]
    cums: list[list[np.ndarray]] = []
    for g in grads:
        acc = [np.zeros((grid.n, grid.n, 2, 2))]
        for k in range(len(times) - 1):
            acc.append(acc[-1] + 0.5 * (times[k + 1] - times[k]) * (g[k] + g[k + 1]))
        cums.append(acc)
    inv = [
        [_neumann_inverse(M, k_max, 1e-14) for M in acc]
        for acc in cums
    ]
    rates = [
        [-_matmul(_matmul(A, G), A) for A, G in zip(inv_i, grads_i)]
        for inv_i, grads_i in zip(inv, grads)
    ]

    # size of either inverse Jacobian's deviation vs the integrated gradient
    grad_norms = [
        np.array([_matrix_besov(G, grid, reg, ladder) for G in g]) for g in grads
    ]
    integrals = tuple(float(np.trapezoid(gn, times)) for gn in grad_norms)
    dev_ratios = []
    rate_ratios = []
    for i in (0, 1):
        dev = max(_matrix_besov(A - _IDENTITY, grid, reg, ladder) for A in inv[i])
        dev_ratios.append(_safe_ratio(dev, integrals[i]))
        for R, gn in zip(rates[i], grad_norms[i]):
            rate_ratios.append(_safe_ratio(_matrix_besov(R, grid, reg, ladder), float(gn)))

    # difference bounds
    delta_grad_norms = np.array(
        [_matrix_besov(g2 - g1, grid, reg, ladder) for g1, g2 in zip(grads[0], grads[1])]
    )
    delta_grad_integral = float(np.trapezoid(delta_grad_norms, times))
    delta_dev = max(
        _matrix_besov(A2 - A1, grid, reg, ladder) for A1, A2 in zip(inv[0], inv[1])
    )
    delta_rate = np.array(
        [_matrix_besov(R2 - R1, grid, low, ladder) for R1, R2 in zip(rates[0], rates[1])]
    )
    delta_rate_l2 = float(np.sqrt(np.trapezoid(delta_rate**2, times)))

    pair_norms = np.array(
        [
            _vector_besov(u1, reg, ladder) + _vector_besov(u2, reg, ladder)
            for u1, u2 in zip(fields1, fields2)
        ]
    )
    pair_l2 = float(np.sqrt(np.trapezoid(pair_norms**2, times)))
    delta_v_norms = np.array(
        [_vector_besov(u2 - u1, reg, ladder) for u1, u2 in zip(fields1, fields2)]
    )
    delta_v_l2 = float(np.sqrt(np.trapezoid(delta_v_norms**2, times)))

    return RatioReport(
        p=p,
        deviation_ratio=max(dev_ratios),
        difference_ratio=_safe_ratio(delta_dev, delta_grad_integral),
        rate_ratio=max(rate_ratios),
        difference_rate_ratio=_safe_ratio(
            delta_rate_l2, pair_l2 * delta_grad_integral + delta_v_l2
        ),
        gradient_integrals=integrals,
    )
