"""Pressure solver for the rough-coefficient divergence-form equation.

Solves div((1+a) grad Pi) = div F on the torus for the gradient part of the
unknown.  The equation only constrains grad Pi, so everything here is posed
modulo constants: the scalar potential is kept mean free and the stopping
criterion measures the gradient part of the defect.

Three mechanisms are provided:

* preconditioned conjugate gradients on the symmetric positive form
  <(1+a) grad p, grad q>, with the constant-coefficient inverse Laplacian as
  preconditioner (the default, and the robust choice for any 1+a >= kappa);
* a Richardson fixed point  grad Pi <- Q(F - a grad Pi), convergent when
  max|a| < 1;
* an outer low/high coefficient splitting: the low-frequency part of the
  coefficient is handled by an inner conjugate-gradient solve while the
  high-frequency remainder is relaxed explicitly.  Its convergence rate is an
  observable stand-in for the smallness condition on the unsmoothed part of
  the coefficient.

The problem is posed on the subspace of modes with well-defined first
derivatives (the unpaired half-Nyquist lines of an even grid are excluded, see
spectral.drop_nyquist).  On that subspace the discrete form is symmetric
positive definite, the constant-coefficient preconditioner is exact, and the
residual below is the full defect of the projected equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicLadder, build_ladder
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    divergence,
    drop_nyquist,
    gradient,
    gradient_part,
    multiply,
    potential_from_gradient,
)

__all__ = [
    "EllipticSolveStats",
    "coefficient_floor",
    "residual",
    "solve_pressure",
]


@dataclass(frozen=True)
class EllipticSolveStats:
    """Outcome record of one pressure solve."""

    iterations: int
    residual: float
    split_m: int | None
    relaxation: float


def coefficient_floor(a: SpectralField) -> float:
    """Minimum of 1 + a over the grid nodes."""
    return float(1.0 + np.min(a.values.real))


def _coeff_gradient(a: SpectralField, g: VectorField) -> VectorField:
    # (1 + a) g with the variable part dealiased
    return g + VectorField(multiply(a, g.u1), multiply(a, g.u2))


def _q_norm_of_divergence(r: SpectralField) -> float:
    # L2 norm of the gradient field whose divergence is r (mean mode ignored)
    grid = r.grid
    ksq = grid.k_squared.copy()
    ksq[0, 0] = 1.0
    weighted = np.abs(r.modes) ** 2 / ksq
    weighted[0, 0] = 0.0
    return math.sqrt(float(np.sum(weighted))) * grid.L / grid.n**2


def _l2(f: SpectralField | VectorField) -> float:
    if isinstance(f, VectorField):
        return math.sqrt(_l2(f.u1) ** 2 + _l2(f.u2) ** 2)
    return float(np.linalg.norm(f.modes)) * f.grid.L / f.grid.n**2


def _inner(u: SpectralField, v: SpectralField) -> float:
    w = u.grid.L / u.grid.n**2
    return float(np.real(np.vdot(u.modes, v.modes))) * w**2


def residual(a: SpectralField, grad_pi: VectorField, F: VectorField) -> float:
    """L2 norm of the gradient part of the equation defect F - (1+a) grad Pi.

    Measured on the derivative-resolved subspace (half-Nyquist lines dropped),
    matching how the solve itself is posed.
    """
    defect = drop_nyquist(F - _coeff_gradient(a, grad_pi))
    return _l2(gradient_part(defect))


def _apply_form(a: SpectralField, p: SpectralField) -> SpectralField:
    return drop_nyquist(-1.0 * divergence(_coeff_gradient(a, gradient(p))))


def _pcg_potential(
    a: SpectralField,
    rhs_div: SpectralField,
    q_denominator: float,
    tol: float,
    max_iter: int,
    pi0: SpectralField | None = None,
) -> tuple[SpectralField, int, float]:
    """Conjugate gradients for -div((1+a) grad pi) = rhs_div, mean-free pi."""
    grid = a.grid
    pi = SpectralField.zero(grid) if pi0 is None else pi0
    r = rhs_div - _apply_form(a, pi)
    qres = _q_norm_of_divergence(r) / q_denominator
    rz_old = 0.0
    p = None
    iterations = 0
    while qres > tol and iterations < max_iter:
        iterations += 1
        z = _neg_inverse_laplacian(r)
        rz = _inner(r, z)
        p = z if p is None else z + (rz / rz_old) * p
        rz_old = rz
        ap = _apply_form(a, p)
        alpha = rz / _inner(p, ap)
        pi = pi + alpha * p
        r = r - alpha * ap
        qres = _q_norm_of_divergence(r) / q_denominator
    return pi, iterations, qres


def _neg_inverse_laplacian(r: SpectralField) -> SpectralField:
    grid = r.grid
    ksq = grid.k_squared.copy()
    ksq[0, 0] = 1.0
    modes = r.modes / ksq
    modes[0, 0] = 0.0
    return SpectralField(grid, modes, real=r.real)


def solve_pressure(
    a: SpectralField,
    F: VectorField,
    tol: float = 1e-10,
    max_iter: int = 500,
    *,
    method: str = "auto",
    split_m: int | None = None,
    relaxation: float = 1.0,
    ladder: DyadicLadder | None = None,
    initial_guess: VectorField | None = None,
) -> tuple[VectorField, EllipticSolveStats]:
    """Solve div((1+a) grad Pi) = div F for the mean-free gradient field grad Pi.

    The relative stopping criterion is on the gradient part of the defect:
    |Q(F - (1+a) grad Pi)| <= tol |QF| in L2.  Methods: "pcg", "richardson"
    (requires max|a| < 1), or "auto" (conjugate gradients, falling back to
    Richardson if the coefficient allows it).  Passing split_m switches to the
    outer low/high splitting iteration at that octave.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    kappa = coefficient_floor(a)
    if kappa <= 0.0:
        raise ValueError(f"coefficient violation: min(1+a) = {kappa:.3e} <= 0")
    grid = a.grid
    if F.u1.grid != grid:
        raise ValueError("coefficient and forcing must share one grid")

    qf = gradient_part(drop_nyquist(F))
    q_den = _l2(qf)
    if q_den == 0.0:
        zero = VectorField(SpectralField.zero(grid), SpectralField.zero(grid))
        return zero, EllipticSolveStats(0, 0.0, split_m, relaxation)

    if split_m is not None:
        return _solve_split(a, F, tol, max_iter, split_m, relaxation, ladder, q_den)

    if method not in ("auto", "pcg", "richardson"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "pcg"):
        rhs = drop_nyquist(-1.0 * divergence(F))
        pi = None if initial_guess is None else potential_from_gradient(drop_nyquist(initial_guess))
        total = 0
        while total < max_iter:
            pi, iters, _ = _pcg_potential(a, rhs, q_den, tol, max_iter - total, pi0=pi)
            total += max(iters, 1)
            g = gradient(pi)
            true_res = residual(a, g, F) / q_den
            if true_res <= tol:
                return g, EllipticSolveStats(total, true_res, None, relaxation)
        if method == "pcg" or float(np.max(np.abs(a.values))) >= 1.0:
            raise RuntimeError(
                f"pressure solve did not reach tol={tol:.1e} in {max_iter} iterations"
            )
    if float(np.max(np.abs(a.values))) >= 1.0:
        raise ValueError("Richardson iteration requires max|a| < 1")
    if initial_guess is None:
        g = VectorField(SpectralField.zero(grid), SpectralField.zero(grid))
    else:
        g = gradient_part(drop_nyquist(initial_guess))
    for it in range(1, max_iter + 1):
        ag = VectorField(multiply(a, g.u1), multiply(a, g.u2))
        g_new = gradient_part(drop_nyquist(F - ag))
        g = (1.0 - relaxation) * g + relaxation * g_new
        qres = residual(a, g, F) / q_den
        if qres <= tol:
            return g, EllipticSolveStats(it, qres, None, relaxation)
    raise RuntimeError(
        f"Richardson iteration did not reach tol={tol:.1e} in {max_iter} iterations"
    )


def _solve_split(
    a: SpectralField,
    F: VectorField,
    tol: float,
    max_iter: int,
    split_m: int,
    relaxation: float,
    ladder: DyadicLadder | None,
    q_den: float,
) -> tuple[VectorField, EllipticSolveStats]:
    grid = a.grid
    if ladder is None:
        ladder = build_ladder(grid)
    a_low = ladder.low_pass(a, split_m)
    a_high = a - a_low
    if coefficient_floor(a_low) <= 0.0:
        raise ValueError("low-frequency coefficient part loses positivity; raise split_m")
    g = VectorField(SpectralField.zero(grid), SpectralField.zero(grid))
    inner_tol = max(0.1 * tol, 1e-14)
    for it in range(1, max_iter + 1):
        hg = VectorField(multiply(a_high, g.u1), multiply(a_high, g.u2))
        rhs = drop_nyquist(-1.0 * divergence(F - hg))
        pi, _, _ = _pcg_potential(a_low, rhs, q_den, inner_tol, 10 * max_iter)
        g = (1.0 - relaxation) * g + relaxation * gradient(pi)
        qres = residual(a, g, F) / q_den
        if qres <= tol:
            return g, EllipticSolveStats(it, qres, split_m, relaxation)
    raise RuntimeError(
        f"splitting iteration (m={split_m}) did not reach tol={tol:.1e}"
        f" in {max_iter} outer steps"
    )
