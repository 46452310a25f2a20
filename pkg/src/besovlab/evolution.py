"""Time integration of transported-coefficient incompressible flow.

The dynamics couple a materially transported scalar ``a`` (the reciprocal
density fluctuation, rho = 1/(1+a)) to an incompressible velocity ``u`` whose
viscosity depends on ``a``:

    da/dt + u . grad a = 0
    du/dt + u . grad u = (1+a) { div(2 mu(a) M(u)) - grad Pi }
    div u = 0

with M(u) the symmetric strain.  Taking the divergence of the momentum
equation closes the pressure through div((1+a) grad Pi) = div F, which is the
rough-coefficient solve provided by :mod:`besovlab.elliptic`.

The integrator family:

* :func:`transport_step` — one advection step for ``a``, either dealiased
  spectral SSP-RK3 or semi-Lagrangian with cubic interpolation (optionally
  clipped to the local data range so no new extrema appear).
* :func:`momentum_step` — one second-order step for ``u``.  The constant part
  of the viscosity is integrated exactly by a spectral heat factor; the
  variable remainder, convection, and the pressure force are explicit.  The
  low-frequency part of the variable viscosity can be nudged toward implicit
  treatment with one fixed-point sweep (``split_m``).
* :func:`ns_integrate` — Strang composition of the two steps with running
  diagnostics: block-norm accumulations of ``a``, of the correction
  ``u - u_L`` (u_L the exact heat evolution of the data), and of the pressure
  gradient, plus quadratic energies and optional viscosity-tail monitors.
* :func:`energy_diagnostics` — post-hoc energy balance of the correction
  velocity against a heat reference launched mid-trajectory, valid for
  constant viscosity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicLadder, build_ladder, low_pass
from .elliptic import coefficient_floor, solve_pressure
from .interpolation import PeriodicSampler, cell_bounds
from .norms import BesovSpec, besov_norm
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    advect,
    advect_vector,
    derivative,
    divergence,
    heat_propagate,
    leray_project,
    multiply,
)

__all__ = [
    "CFLViolation",
    "DiagnosticsSeries",
    "IntegrationConfig",
    "StateSnapshot",
    "ViscosityLaw",
    "energy_diagnostics",
    "free_heat_reference",
    "mollify_initial_data",
    "momentum_step",
    "ns_integrate",
    "transport_step",
]

_TRANSPORT_SCHEMES = ("spectral", "semi_lagrangian", "semi_lagrangian_monotone")
_DIV_TOL = 1e-8
_FLOOR_SLACK = 1e-3


class CFLViolation(RuntimeError):
    """Raised when a requested step exceeds the advective stability bound."""


def cfl_number(u: VectorField, dt: float) -> float:
    """Advective Courant number dt * |u|_inf * n / L."""
    grid = u.grid
    return dt * u.linf() * grid.n / grid.L


def _require_cfl(u: VectorField, dt: float) -> None:
    c = cfl_number(u, dt)
    if c > 0.5 + 1e-12:
        raise CFLViolation(f"CFL number {c:.3f} exceeds 0.5; shrink dt or the velocity")


def _solenoidal_defect(u: VectorField) -> tuple[float, float]:
    """L2 size of div u alongside the L2 size of the full velocity gradient."""
    area = u.grid.cell_area
    div_l2 = math.sqrt(float(np.sum(np.abs(divergence(u).values) ** 2)) * area)
    grad_sq = 0.0
    for alpha in ((1, 0), (0, 1)):
        d = derivative(u, alpha)
        grad_sq += float(np.sum(np.abs(d.u1.values) ** 2 + np.abs(d.u2.values) ** 2))
    return div_l2, math.sqrt(grad_sq * area)


def _require_solenoidal(u: VectorField, tol: float = _DIV_TOL) -> None:
    div_l2, grad_l2 = _solenoidal_defect(u)
    if div_l2 > tol * max(grad_l2, 1e-300):
        raise ValueError(
            f"velocity is not solenoidal: |div u| = {div_l2:.3e} vs {tol:.0e} * |grad u| = {tol * grad_l2:.3e}"
        )


def _centered(f: SpectralField) -> SpectralField:
    modes = f.modes.copy()
    modes[0, 0] = 0.0
    return f.with_modes(modes)


def _l2(f: SpectralField | VectorField) -> float:
    if isinstance(f, VectorField):
        return math.sqrt(_l2(f.u1) ** 2 + _l2(f.u2) ** 2)
    return math.sqrt(float(np.sum(np.abs(f.values) ** 2)) * f.grid.cell_area)


# ---------------------------------------------------------------------------
# viscosity laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViscosityLaw:
    """Pointwise viscosity as a function of the transported scalar.

    Three shapes are supported, each with a closed-form antiderivative:

    * ``constant``  — mu(a) = mu0
    * ``affine``    — mu as an affine function of the density: mu0 + mu1/(1+a)
    * ``exponential`` — mu0 * exp(beta * a)

    Derived quantities: ``b(a) = (1+a) mu(a) - mu(0)`` is the coefficient of
    the variable part of the momentum diffusion once the constant part is
    split off, and ``lam(a)`` is the antiderivative of mu from 0 to a.
    """

    kind: str
    mu0: float
    mu1: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "affine", "exponential"):
            raise ValueError(f"unknown viscosity law {self.kind!r}")
        if not (math.isfinite(self.mu0) and math.isfinite(self.mu1)):
            raise ValueError("viscosity parameters must be finite")
        if self.mu_tilde(0.0) <= 0.0:
            raise ValueError(f"viscosity at a=0 must be positive, got {self.mu_tilde(0.0):.3e}")

    @classmethod
    def constant(cls, mu: float) -> "ViscosityLaw":
        return cls("constant", mu)

    @classmethod
    def affine(cls, mu0: float, mu1: float) -> "ViscosityLaw":
        return cls("affine", mu0, mu1)

    @classmethod
    def exponential(cls, mu0: float, beta: float) -> "ViscosityLaw":
        return cls("exponential", mu0, beta)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.mu1 == 0.0

    def mu_tilde(self, a):
        """Viscosity evaluated at scalar value(s) a."""
        if self.kind == "constant":
            return self.mu0 if np.isscalar(a) else np.full_like(np.asarray(a, dtype=float), self.mu0)
        if self.kind == "affine":
            return self.mu0 + self.mu1 / (1.0 + a)
        return self.mu0 * np.exp(self.mu1 * a)

    def lam(self, a):
        """Antiderivative of the viscosity, vanishing at a = 0."""
        if self.kind == "constant":
            return self.mu0 * np.asarray(a, dtype=float) if not np.isscalar(a) else self.mu0 * a
        if self.kind == "affine":
            return self.mu0 * a + self.mu1 * np.log1p(a)
        if self.mu1 == 0.0:
            return self.mu0 * np.asarray(a, dtype=float) if not np.isscalar(a) else self.mu0 * a
        return self.mu0 * np.expm1(self.mu1 * a) / self.mu1

    def b_values(self, a_values: np.ndarray) -> np.ndarray:
        """Variable diffusion coefficient (1+a) mu(a) - mu(0) on the nodes."""
        return (1.0 + a_values) * self.mu_tilde(a_values) - self.mu_tilde(0.0)

    def require_positive(self, a_min: float, a_max: float) -> None:
        """Check positivity of the viscosity over the attained scalar range."""
        samples = np.linspace(a_min, a_max, 257)
        lo = float(np.min(self.mu_tilde(samples)))
        if lo <= 0.0:
            raise ValueError(
                f"viscosity positivity violation: min mu over [{a_min:.3g}, {a_max:.3g}] = {lo:.3e}"
            )


# ---------------------------------------------------------------------------
# state and diagnostics containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateSnapshot:
    """One instant of the coupled system: scalar, velocity, pressure gradient.

    ``kappa`` is the lower bound on 1 + a recorded when the trajectory starts;
    later snapshots re-check it (with a small advection-scheme allowance).
    """

    t: float
    a: SpectralField
    u: VectorField
    gradPi: VectorField
    kappa: float | None = None

    def __post_init__(self) -> None:
        grid = self.a.grid
        if self.u.grid != grid or self.gradPi.u1.grid != grid:
            raise ValueError("snapshot fields must share one grid")
        if not math.isfinite(self.t):
            raise ValueError("snapshot time must be finite")
        _require_solenoidal(self.u)
        floor = coefficient_floor(self.a)
        if self.kappa is None:
            if floor <= 0.0:
                raise ValueError(f"coefficient floor violation: min(1+a) = {floor:.3e} <= 0")
            object.__setattr__(self, "kappa", floor)
        else:
            if self.kappa <= 0.0:
                raise ValueError(f"recorded floor must be positive, got {self.kappa:.3e}")
            if floor < self.kappa - _FLOOR_SLACK * max(1.0, abs(self.kappa)):
                raise ValueError(
                    f"coefficient floor violation: min(1+a) = {floor:.3e} fell below recorded {self.kappa:.3e}"
                )

    @property
    def grid(self) -> Grid:
        return self.a.grid

    def rho_values(self) -> np.ndarray:
        """Density values 1/(1+a) on the grid nodes."""
        return 1.0 / (1.0 + self.a.values.real)


@dataclass(frozen=True)
class DiagnosticsSeries:
    """Per-sample-time scalar diagnostics of a trajectory.

    ``A`` accumulates the block-wise running supremum of the scalar's critical
    norm; ``Z`` adds the same accumulation for the heat-corrected velocity to
    the time integrals of its smoothing norm and of the pressure gradient.
    ``E0``/``E1``/``E2`` are the density-weighted kinetic energy, the enstrophy
    of the correction, and the weighted energy of its time derivative.  Extra
    named series (monitors, defects) ride along in ``extra``.
    """

    times: tuple[float, ...]
    A: tuple[float, ...]
    Z: tuple[float, ...]
    E0: tuple[float, ...]
    E1: tuple[float, ...]
    E2: tuple[float, ...]
    p: float = 2.0
    stop_reason: str = "completed"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        k = len(self.times)
        for name in ("A", "Z", "E0", "E1", "E2"):
            series = getattr(self, name)
            if len(series) != k:
                raise ValueError(f"series {name} has {len(series)} entries for {k} times")
            arr = np.asarray(series, dtype=float)
            if k and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
                raise ValueError(f"series {name} must be finite and nonnegative")
        for name in ("A", "Z"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size >= 2:
                drops = np.diff(arr) < -1e-12 * max(1.0, float(arr.max()))
                if np.any(drops):
                    raise ValueError(f"cumulative series {name} must be nondecreasing")
        for key, series in self.extra.items():
            if len(series) != k:
                raise ValueError(f"extra series {key!r} has {len(series)} entries for {k} times")

    def csv_rows(self) -> list[str]:
        names = ["t", "A", "Z", "E0", "E1", "E2"] + sorted(self.extra)
        rows = [",".join(names)]
        for i, t in enumerate(self.times):
            vals = [t, self.A[i], self.Z[i], self.E0[i], self.E1[i], self.E2[i]]
            vals += [self.extra[k][i] for k in sorted(self.extra)]
            rows.append(",".join(f"{v:.17g}" for v in vals))
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


# ---------------------------------------------------------------------------
# data preparation and references
# ---------------------------------------------------------------------------

def mollify_initial_data(
    a0: SpectralField,
    u0: VectorField,
    n: int,
    *,
    ladder: DyadicLadder | None = None,
) -> tuple[SpectralField, VectorField]:
    """Low-pass the initial data at octave n and project the velocity.

    The truncation must stay close enough to the original data: the smoothed
    scalar may not exceed twice the original sup bound, and its coefficient
    floor may not drop below half the original floor.
    """
    if ladder is None:
        ladder = build_ladder(a0.grid)
    kappa = coefficient_floor(a0)
    if kappa <= 0.0:
        raise ValueError(f"initial data violates the coefficient floor: min(1+a0) = {kappa:.3e}")
    a0n = low_pass(a0, n, ladder)
    u0n = leray_project(low_pass(u0, n, ladder))
    if coefficient_floor(a0n) <= 0.5 * kappa:
        raise ValueError(
            f"truncation octave n={n} too small: floor dropped to {coefficient_floor(a0n):.3e}"
            f" (half of the original floor is {0.5 * kappa:.3e})"
        )
    if a0n.linf() > 2.0 * a0.linf() + 1e-12:
        raise ValueError(
            f"truncation octave n={n} inflates the scalar: {a0n.linf():.3e} > 2 * {a0.linf():.3e}"
        )
    return a0n, u0n


def free_heat_reference(u0: VectorField, mu: float, t: float) -> VectorField:
    """Exact diffusive evolution of the data: each mode damped by its rate."""
    if mu <= 0.0:
        raise ValueError(f"heat reference requires mu > 0, got {mu:.3e}")
    return heat_propagate(u0, mu, t)


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def _transport_spectral(a: SpectralField, u: VectorField, dt: float) -> SpectralField:
    def tendency(f: SpectralField) -> SpectralField:
        return -1.0 * advect(u, f)

    s1 = a + tendency(a) * dt
    s2 = a * 0.75 + (s1 + tendency(s1) * dt) * 0.25
    return a * (1.0 / 3.0) + (s2 + tendency(s2) * dt) * (2.0 / 3.0)


def _departure_points(u: VectorField, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward fourth-order particle step from every node under steady u."""
    sampler = PeriodicSampler.of_vector(u, upsample=4)
    xg, yg = u.grid.coords

    def vel(x, y):
        return sampler.at(x, y)

    k1x, k1y = vel(xg, yg)
    k2x, k2y = vel(xg - 0.5 * dt * k1x, yg - 0.5 * dt * k1y)
    k3x, k3y = vel(xg - 0.5 * dt * k2x, yg - 0.5 * dt * k2y)
    k4x, k4y = vel(xg - dt * k3x, yg - dt * k3y)
    dx = dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    dy = dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    return xg - dx, yg - dy


def transport_step(
    a: SpectralField, u: VectorField, dt: float, scheme: str = "spectral"
) -> SpectralField:
    """Advance the transported scalar by one step of size dt.

    ``spectral`` runs dealiased SSP-RK3 on the advection tendency;
    ``semi_lagrangian`` traces characteristics back and interpolates;
    ``semi_lagrangian_monotone`` additionally clips each interpolated value to
    the corner values of its base cell, so the data range can only shrink.
    """
    if scheme not in _TRANSPORT_SCHEMES:
        raise ValueError(f"unknown transport scheme {scheme!r}; choose from {_TRANSPORT_SCHEMES}")
    if dt < 0.0:
        raise ValueError("transport requires dt >= 0")
    if dt == 0.0:
        return a
    _require_solenoidal(u)
    _require_cfl(u, dt)
    if scheme == "spectral":
        return _transport_spectral(a, u, dt)
    xd, yd = _departure_points(u, dt)
    vals = PeriodicSampler.of_scalar(a, upsample=4).scalar_at(xd, yd)
    if scheme == "semi_lagrangian_monotone":
        lo, hi = cell_bounds(a, xd, yd)
        vals = np.clip(vals, lo, hi)
    return SpectralField.from_physical(a.grid, vals)


# ---------------------------------------------------------------------------
# momentum
# ---------------------------------------------------------------------------

def _vector_laplacian(w: VectorField) -> VectorField:
    return derivative(w, (2, 0)) + derivative(w, (0, 2))


def _strain_divergence(coeff: SpectralField, w: VectorField) -> VectorField:
    """div(2 c M(w)) for a scalar coefficient c, with dealiased products."""
    d1w1 = derivative(w.u1, (1, 0))
    d2w1 = derivative(w.u1, (0, 1))
    d1w2 = derivative(w.u2, (1, 0))
    d2w2 = derivative(w.u2, (0, 1))
    s11 = multiply(coeff, d1w1 * 2.0)
    s12 = multiply(coeff, d2w1 + d1w2)
    s22 = multiply(coeff, d2w2 * 2.0)
    return VectorField(
        derivative(s11, (1, 0)) + derivative(s12, (0, 1)),
        derivative(s12, (1, 0)) + derivative(s22, (0, 1)),
    )


def _weight_by(coeff: SpectralField, w: VectorField) -> VectorField:
    """(1 + coeff) w with the variable part dealiased."""
    return w + VectorField(multiply(coeff, w.u1), multiply(coeff, w.u2))


def momentum_step(
    state: StateSnapshot,
    visc: ViscosityLaw,
    dt: float,
    split_m: int | None = None,
    *,
    pressure_tol: float = 1e-10,
    pressure_max_iter: int = 500,
    ladder: DyadicLadder | None = None,
) -> StateSnapshot:
    """Advance the velocity by one step of size dt at frozen scalar.

    The constant diffusion mu(0) Delta is integrated exactly through a
    spectral exponential factor; everything else — convection, the variable
    part of the diffusion, and the pressure force balancing the constraint —
    enters through a two-stage explicit rule on the transformed variable,
    which is second-order accurate.  Passing ``split_m`` refines the second
    stage once: the low-pass part of the variable diffusion coefficient is
    re-evaluated at the provisional endpoint, imitating implicit treatment of
    the stiffest variable-coefficient scales.  The returned snapshot carries
    the pressure gradient re-solved at the final velocity, so it is registered
    at the snapshot's own time.
    """
    if dt <= 0.0:
        raise ValueError("momentum step requires dt > 0")
    _require_cfl(state.u, dt)
    grid = state.grid
    a = state.a
    a_vals = a.values.real
    visc.require_positive(float(a_vals.min()), float(a_vals.max()))
    mu0 = float(visc.mu_tilde(0.0))
    mu_a = SpectralField.from_physical(grid, np.asarray(visc.mu_tilde(a_vals), dtype=float))

    def forcing(w: VectorField) -> VectorField:
        return _weight_by(a, _strain_divergence(mu_a, w)) - advect_vector(w, w)

    def explicit_rate(F: VectorField, w: VectorField, guess: VectorField | None):
        grad_pi, _ = solve_pressure(
            a, F, tol=pressure_tol, max_iter=pressure_max_iter, initial_guess=guess
        )
        return F - _weight_by(a, grad_pi) - _vector_laplacian(w) * mu0, grad_pi

    def heat(w: VectorField) -> VectorField:
        return heat_propagate(w, mu0, dt)

    u0 = state.u
    F1 = forcing(u0)
    k1, gp1 = explicit_rate(F1, u0, state.gradPi)
    u_star = heat(u0 + k1 * dt)
    F2 = forcing(u_star)
    k2, gp2 = explicit_rate(F2, u_star, gp1)
    u_new = heat(u0) + (heat(k1) + k2) * (0.5 * dt)

    if split_m is not None:
        if ladder is None:
            ladder = build_ladder(grid)
        b = SpectralField.from_physical(grid, visc.b_values(a_vals))
        b_low = low_pass(b, split_m, ladder)
        correction = _strain_divergence(b_low, u_new) - _strain_divergence(b_low, u_star)
        F2s = F2 + correction
        k2s, gp2 = explicit_rate(F2s, u_star, gp2)
        u_new = heat(u0) + (heat(k1) + k2s) * (0.5 * dt)

    u_new = leray_project(u_new)
    grad_pi_end, _ = solve_pressure(
        a, forcing(u_new), tol=pressure_tol, max_iter=pressure_max_iter, initial_guess=gp2
    )
    return StateSnapshot(state.t + dt, a, u_new, grad_pi_end, kappa=state.kappa)


# ---------------------------------------------------------------------------
# full integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegrationConfig:
    """Knobs for :func:`ns_integrate`.

    ``epsilon_budget`` stops the run once the accumulated correction
    functional Z exceeds it; the large default effectively disables the stop.
    ``monitor_ms`` asks for the viscosity-tail smallness monitors
    (1+A)^3 |b - S_m b, lam - S_m lam| at those low-pass octaves.
    """

    T: float
    dt: float
    visc: ViscosityLaw = ViscosityLaw.constant(1.0)
    p: float = 2.0
    scheme: str = "spectral"
    split_m: int | None = None
    epsilon_budget: float = 1e3
    snapshot_every: int = 1
    monitor_ms: tuple[int, ...] = ()
    pressure_tol: float = 1e-10
    pressure_max_iter: int = 500

    def __post_init__(self) -> None:
        if not (self.T > 0.0 and self.dt > 0.0 and self.dt <= self.T + 1e-15):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"horizon T={self.T} is not an integer number of steps of dt={self.dt}")
        if self.scheme not in _TRANSPORT_SCHEMES:
            raise ValueError(f"unknown transport scheme {self.scheme!r}")
        if not 1.0 < self.p < 4.0:
            raise ValueError(f"exponent p must lie in (1, 4), got {self.p}")
        if self.epsilon_budget <= 0.0:
            raise ValueError("epsilon budget must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot cadence must be >= 1")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)


class _BlockSupAccumulator:
    """Running per-block supremum of weighted block norms; reports the sum."""

    def __init__(self, spec: BesovSpec, ladder: DyadicLadder):
        self.spec = spec
        self.ladder = ladder
        self.peaks: dict[int, float] = {}

    def update(self, f: SpectralField | VectorField) -> float:
        _, profile = besov_norm(f, self.spec, self.ladder)
        for j, v in zip(profile.js, profile.values):
            if v > self.peaks.get(j, 0.0):
                self.peaks[j] = v
        return sum(self.peaks.values())


class _TrapezoidAccumulator:
    """Running time integral of a sampled nonnegative scalar."""

    def __init__(self) -> None:
        self.total = 0.0
        self._last: tuple[float, float] | None = None

    def update(self, t: float, value: float) -> float:
        if self._last is not None:
            t0, v0 = self._last
            self.total += 0.5 * (v0 + value) * (t - t0)
        self._last = (t, value)
        return self.total


def _besov_value(f: SpectralField | VectorField, spec: BesovSpec, ladder: DyadicLadder) -> float:
    value, _ = besov_norm(f, spec, ladder)
    return value


def _center_vector(u: VectorField) -> VectorField:
    return VectorField(_centered(u.u1), _centered(u.u2))


def ns_integrate(
    config: IntegrationConfig, a0: SpectralField, u0: VectorField
) -> tuple[list[StateSnapshot], DiagnosticsSeries]:
    """Advance the coupled system to the horizon, collecting diagnostics.

    Each step is a Strang composition: half a transport step, a full momentum
    step, half a transport step.  The run ends early — with the reason in
    ``DiagnosticsSeries.stop_reason`` — if the accumulated correction
    functional exceeds the configured budget, if the velocity outgrows the
    CFL bound, or if a pressure solve fails.
    """
    grid = a0.grid
    kappa = coefficient_floor(a0)
    if kappa <= 0.0:
        raise ValueError(f"initial data violates the coefficient floor: min(1+a0) = {kappa:.3e}")
    a_range = (float(a0.values.real.min()), float(a0.values.real.max()))
    config.visc.require_positive(*a_range)

    ladder = build_ladder(grid)
    mu0 = float(config.visc.mu_tilde(0.0))
    p = config.p
    spec_scalar = BesovSpec(s=2.0 / p, p=p, r=1.0)
    spec_low = BesovSpec(s=2.0 / p - 1.0, p=p, r=1.0)
    spec_high = BesovSpec(s=2.0 / p + 1.0, p=p, r=1.0)

    u_start = leray_project(u0)
    grad_pi0, _ = solve_pressure(
        a0,
        _weight_by(a0, _strain_divergence(
            SpectralField.from_physical(grid, np.asarray(config.visc.mu_tilde(a0.values.real), dtype=float)),
            u_start,
        )) - advect_vector(u_start, u_start),
        tol=config.pressure_tol,
        max_iter=config.pressure_max_iter,
    )
    state = StateSnapshot(0.0, a0, u_start, grad_pi0, kappa=kappa)

    acc_A = _BlockSupAccumulator(spec_scalar, ladder)
    acc_ubar_sup = _BlockSupAccumulator(spec_low, ladder)
    acc_ubar_smooth = _TrapezoidAccumulator()
    acc_pressure = _TrapezoidAccumulator()

    times: list[float] = []
    series_A: list[float] = []
    series_Z: list[float] = []
    series_E0: list[float] = []
    series_E1: list[float] = []
    series_E2: list[float] = []
    extra: dict[str, list[float]] = {"cfl": [], "uL_smooth_integral": []}
    for m in config.monitor_ms:
        extra[f"smallness_m{m}"] = []
    acc_uL = _TrapezoidAccumulator()
    prev_ubar: tuple[float, VectorField] | None = None

    def sample(st: StateSnapshot) -> float:
        nonlocal prev_ubar
        u_L = heat_propagate(u_start, mu0, st.t)
        ubar = st.u - u_L
        ubar_c = _center_vector(ubar)
        a_c = _centered(st.a)
        A_val = acc_A.update(a_c)
        z_sup = acc_ubar_sup.update(ubar_c)
        z_smooth = acc_ubar_smooth.update(st.t, _besov_value(ubar_c, spec_high, ladder))
        z_press = acc_pressure.update(st.t, _besov_value(_center_vector(st.gradPi), spec_low, ladder))
        Z_val = z_sup + z_smooth + z_press
        rho = st.rho_values()
        area = grid.cell_area
        e0 = float(np.sum(rho * (ubar.u1.values.real**2 + ubar.u2.values.real**2))) * area
        e1 = _l2(derivative(ubar, (1, 0))) ** 2 + _l2(derivative(ubar, (0, 1))) ** 2
        if prev_ubar is None or st.t <= prev_ubar[0]:
            e2 = 0.0
        else:
            t_prev, ubar_prev = prev_ubar
            dudt = (ubar - ubar_prev) * (1.0 / (st.t - t_prev))
            e2 = float(np.sum(rho * (dudt.u1.values.real**2 + dudt.u2.values.real**2))) * area
        prev_ubar = (st.t, ubar)

        times.append(st.t)
        series_A.append(A_val)
        series_Z.append(Z_val)
        series_E0.append(e0)
        series_E1.append(e1)
        series_E2.append(e2)
        extra["cfl"].append(cfl_number(st.u, config.dt))
        extra["uL_smooth_integral"].append(
            acc_uL.update(st.t, _besov_value(_center_vector(u_L), spec_high, ladder))
        )
        for m in config.monitor_ms:
            a_vals = st.a.values.real
            b_f = SpectralField.from_physical(grid, config.visc.b_values(a_vals))
            lam_f = SpectralField.from_physical(grid, np.asarray(config.visc.lam(a_vals), dtype=float))
            tail = _besov_value(_centered(b_f) - low_pass(_centered(b_f), m, ladder), spec_scalar, ladder)
            tail += _besov_value(_centered(lam_f) - low_pass(_centered(lam_f), m, ladder), spec_scalar, ladder)
            extra[f"smallness_m{m}"].append((1.0 + A_val) ** 3 * tail)
        return Z_val

    trajectory = [state]
    stop_reason = "completed"
    z_now = sample(state)
    if z_now > config.epsilon_budget:
        stop_reason = "budget_exceeded"
    else:
        for step in range(1, config.steps + 1):
            if cfl_number(state.u, config.dt) > 0.5 + 1e-12:
                stop_reason = "cfl_violation"
                break
            try:
                a_half = transport_step(state.a, state.u, 0.5 * config.dt, config.scheme)
                mid = StateSnapshot(state.t, a_half, state.u, state.gradPi, kappa=kappa)
                moved = momentum_step(
                    mid,
                    config.visc,
                    config.dt,
                    config.split_m,
                    pressure_tol=config.pressure_tol,
                    pressure_max_iter=config.pressure_max_iter,
                    ladder=ladder,
                )
                a_new = transport_step(a_half, moved.u, 0.5 * config.dt, config.scheme)
                state = StateSnapshot(moved.t, a_new, moved.u, moved.gradPi, kappa=kappa)
            except CFLViolation:
                stop_reason = "cfl_violation"
                break
            except RuntimeError:
                stop_reason = "solver_failure"
                break
            if step % config.snapshot_every == 0 or step == config.steps:
                trajectory.append(state)
                z_now = sample(state)
                if z_now > config.epsilon_budget:
                    stop_reason = "budget_exceeded"
                    break

    diagnostics = DiagnosticsSeries(
        times=tuple(times),
        A=tuple(series_A),
        Z=tuple(series_Z),
        E0=tuple(series_E0),
        E1=tuple(series_E1),
        E2=tuple(series_E2),
        p=p,
        stop_reason=stop_reason,
        extra={k: tuple(v) for k, v in extra.items()},
    )
    return trajectory, diagnostics


# ---------------------------------------------------------------------------
# energy bookkeeping
# ---------------------------------------------------------------------------

def energy_diagnostics(
    trajectory: list[StateSnapshot],
    t1: float,
    *,
    visc: ViscosityLaw | None = None,
) -> DiagnosticsSeries:
    """Energy balance of the correction velocity against a heat reference.

    From the snapshot nearest to ``t1`` a pure diffusion reference u_F
    evolves forward; the correction ubar = u - u_F then satisfies an energy
    identity whose residual is measured here by finite differences:

        defect(t) = | d/dt E0 / 2 + mu E1 - int ubar . Gforce |

    with Gforce collecting the density-weighted interaction of the reference
    flow with itself and with the correction.  Only constant viscosity laws
    are admitted.  Returned series: E0, E1, E2 plus the defect, the pointwise
    density range, and the reference convection size in ``extra``.
    """
    if visc is None:
        visc = ViscosityLaw.constant(1.0)
    if visc.kind != "constant":
        raise ValueError("energy diagnostics require a constant viscosity law")
    if not trajectory:
        raise ValueError("empty trajectory")
    mu = float(visc.mu_tilde(0.0))
    times = [s.t for s in trajectory]
    if not times[0] <= t1 <= times[-1]:
        raise ValueError(f"sampling time t1={t1} outside trajectory range [{times[0]}, {times[-1]}]")
    i1 = int(np.argmin([abs(t - t1) for t in times]))
    base = trajectory[i1]
    tail = trajectory[i1:]
    grid = base.grid
    area = grid.cell_area

    ubars: list[VectorField] = []
    rhos: list[np.ndarray] = []
    e0s: list[float] = []
    e1s: list[float] = []
    rhs: list[float] = []
    conv: list[float] = []
    rho_min: list[float] = []
    rho_max: list[float] = []
    for st in tail:
        u_F = heat_propagate(base.u, mu, st.t - base.t)
        ubar = st.u - u_F
        rho = st.rho_values()
        rho_f = SpectralField.from_physical(grid, rho)
        lap_uF = _vector_laplacian(u_F)
        conv_F = advect_vector(u_F, u_F)
        cross = advect_vector(ubar, u_F)
        gforce = (
            lap_uF * mu
            - VectorField(multiply(rho_f, lap_uF.u1), multiply(rho_f, lap_uF.u2)) * mu
            - VectorField(multiply(rho_f, conv_F.u1), multiply(rho_f, conv_F.u2))
            - VectorField(multiply(rho_f, cross.u1), multiply(rho_f, cross.u2))
        )
        ubars.append(ubar)
        rhos.append(rho)
        e0s.append(float(np.sum(rho * (ubar.u1.values.real**2 + ubar.u2.values.real**2))) * area)
        e1s.append(_l2(derivative(ubar, (1, 0))) ** 2 + _l2(derivative(ubar, (0, 1))) ** 2)
        rhs.append(
            float(
                np.sum(
                    ubar.u1.values.real * gforce.u1.values.real
                    + ubar.u2.values.real * gforce.u2.values.real
                )
            )
            * area
        )
        conv.append(_l2(conv_F))
        rho_min.append(float(rho.min()))
        rho_max.append(float(rho.max()))

    k = len(tail)
    t_arr = np.array([s.t for s in tail])
    e0_arr = np.array(e0s)
    defect: list[float] = []
    e2s: list[float] = []
    for i in range(k):
        if k == 1:
            de0 = 0.0
        elif i == 0:
            de0 = (e0_arr[1] - e0_arr[0]) / (t_arr[1] - t_arr[0])
        elif i == k - 1:
            de0 = (e0_arr[-1] - e0_arr[-2]) / (t_arr[-1] - t_arr[-2])
        else:
            de0 = (e0_arr[i + 1] - e0_arr[i - 1]) / (t_arr[i + 1] - t_arr[i - 1])
        defect.append(abs(0.5 * de0 + mu * e1s[i] - rhs[i]))
        if i == 0:
            e2s.append(0.0)
        else:
            dudt = (ubars[i] - ubars[i - 1]) * (1.0 / (t_arr[i] - t_arr[i - 1]))
            e2s.append(
                float(np.sum(rhos[i] * (dudt.u1.values.real**2 + dudt.u2.values.real**2))) * area
            )

    zeros = tuple(0.0 for _ in range(k))
    return DiagnosticsSeries(
        times=tuple(float(t) for t in t_arr),
        A=zeros,
        Z=zeros,
        E0=tuple(e0s),
        E1=tuple(e1s),
        E2=tuple(e2s),
        stop_reason="completed",
        extra={
            "energy_defect": tuple(defect),
            "energy_rhs": tuple(rhs),
            "convection_l2": tuple(conv),
            "rho_min": tuple(rho_min),
            "rho_max": tuple(rho_max),
        },
    )
