"""Periodic pseudo-spectral core: grids, transform-backed fields, exact operators.

Everything downstream (dyadic decompositions, norms, solvers, integrators)
manipulates fields through this module.  A field is stored by its 2-D DFT
coefficients on an ``n x n`` torus of side ``L``; derivatives, projections and
heat propagation act as exact spectral multipliers, and all pointwise products
are dealiased by zero padding onto a doubled grid before multiplication.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "SpectralField",
    "VectorField",
    "make_grid",
    "multiply",
    "derivative",
    "drop_nyquist",
    "gradient",
    "divergence",
    "advect",
    "advect_vector",
    "leray_project",
    "gradient_part",
    "heat_propagate",
    "inverse_laplacian",
    "potential_from_gradient",
    "refine",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform n-by-n lattice on the periodic square [0, L)^2."""

    n: int
    L: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not (self.L > 0.0) or not np.isfinite(self.L):
            raise ValueError(f"domain side must be positive and finite, got {self.L}")

    @property
    def h(self) -> float:
        """Mesh spacing L/n."""
        return self.L / self.n

    @property
    def cell_area(self) -> float:
        return (self.L / self.n) ** 2

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer frequency indices in FFT layout (0, 1, ..., -n/2, ..., -1)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def kx(self) -> np.ndarray:
        k1 = 2.0 * np.pi / self.L * self.mode_index
        return np.broadcast_to(k1[:, None], (self.n, self.n))

    @cached_property
    def ky(self) -> np.ndarray:
        k1 = 2.0 * np.pi / self.L * self.mode_index
        return np.broadcast_to(k1[None, :], (self.n, self.n))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @cached_property
    def k_magnitude(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical node coordinates (x varies along axis 0, y along axis 1)."""
        s = np.arange(self.n) * self.h
        return np.meshgrid(s, s, indexing="ij")

    @property
    def k_min_nonzero(self) -> float:
        """Magnitude of the smallest nonzero resolvable wavenumber."""
        return 2.0 * np.pi / self.L

    @property
    def k_max(self) -> float:
        """Magnitude of the largest resolvable wavenumber (corner mode)."""
        return 2.0 * np.pi / self.L * (self.n / 2) * np.sqrt(2.0)

    @property
    def k_max_axis(self) -> float:
        """Largest resolvable wavenumber along a single axis."""
        return 2.0 * np.pi / self.L * (self.n / 2)


def make_grid(n: int, L: float = 2.0 * np.pi) -> Grid:
    """Build a periodic grid; n must be a power of two >= 8."""
    return Grid(int(n), float(L))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpectralField:
    """Scalar field on a Grid, stored by its DFT coefficients (FFT layout).

    Fields are immutable values: every operator returns a new instance and the
    coefficient array is marked read-only.  ``real`` records whether the field
    is a real-valued function (coefficients Hermitian-symmetric); complex
    probe fields such as single Fourier modes carry ``real=False``.
    """

    grid: Grid
    modes: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        m = np.asarray(self.modes, dtype=np.complex128)
        if m.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"coefficient array shape {m.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "modes", _freeze(m))

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "SpectralField":
        v = np.asarray(values)
        if v.shape != (grid.n, grid.n):
            raise ValueError(f"value array shape {v.shape} does not match grid n={grid.n}")
        real = not np.iscomplexobj(v)
        return cls(grid, np.fft.fft2(v), real=real)

    @classmethod
    def zero(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((grid.n, grid.n), dtype=np.complex128), real=True)

    @cached_property
    def values(self) -> np.ndarray:
        """Physical node values (real array when the field is real)."""
        v = np.fft.ifft2(self.modes)
        return _freeze(v.real.copy() if self.real else v)

    @property
    def mean(self) -> complex | float:
        m = self.modes[0, 0] / self.grid.n**2
        return m.real if self.real else m

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_modes(self, modes: np.ndarray, real: bool | None = None) -> "SpectralField":
        return SpectralField(self.grid, modes, real=self.real if real is None else real)

    def filtered(self, multiplier: np.ndarray) -> "SpectralField":
        """Apply a real, radially symmetric spectral multiplier table."""
        return self.with_modes(self.modes * multiplier)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.modes + other.modes, real=self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.modes - other.modes, real=self.real and other.real)

    def __mul__(self, c: float) -> "SpectralField":
        if isinstance(c, SpectralField):
            raise TypeError("use multiply(f, g) for pointwise field products (dealiased)")
        return SpectralField(self.grid, self.modes * c, real=self.real and not np.iscomplexobj(np.asarray(c)))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.modes, real=self.real)


@dataclass(frozen=True)
class VectorField:
    """Pair of scalar fields forming a planar vector field (u1, u2)."""

    u1: SpectralField
    u2: SpectralField

    def __post_init__(self) -> None:
        _check_same_grid(self.u1.grid, self.u2.grid)

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    @classmethod
    def from_physical(cls, grid: Grid, v1: np.ndarray, v2: np.ndarray) -> "VectorField":
        return cls(SpectralField.from_physical(grid, v1), SpectralField.from_physical(grid, v2))

    @classmethod
    def zero(cls, grid: Grid) -> "VectorField":
        return cls(SpectralField.zero(grid), SpectralField.zero(grid))

    @property
    def components(self) -> tuple[SpectralField, SpectralField]:
        return (self.u1, self.u2)

    def magnitude_values(self) -> np.ndarray:
        """Pointwise Euclidean magnitude on the grid."""
        return np.sqrt(np.abs(self.u1.values) ** 2 + np.abs(self.u2.values) ** 2)

    def linf(self) -> float:
        return float(np.max(self.magnitude_values()))

    def map(self, op) -> "VectorField":
        return VectorField(op(self.u1), op(self.u2))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, c: float) -> "VectorField":
        return VectorField(self.u1 * c, self.u2 * c)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(-self.u1, -self.u2)


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a.n != b.n or a.L != b.L:
        raise ValueError(f"grid mismatch: ({a.n}, {a.L}) vs ({b.n}, {b.L})")


# ---------------------------------------------------------------------------
# dealiased products
# ---------------------------------------------------------------------------

def _pad_modes(modes: np.ndarray, factor: int = 2) -> np.ndarray:
    """Embed coefficients into a grid ``factor`` times finer.

    The lone Nyquist row/column is split evenly between +n/2 and -n/2 on the
    fine grid so that real fields stay real.  Output is scaled so that the
    fine-grid inverse transform samples the same trigonometric polynomial.
    """
    n = modes.shape[0]
    N = factor * n
    off = (N - n) // 2
    S = np.fft.fftshift(modes)
    P = np.zeros((N, N), dtype=np.complex128)
    P[off : off + n, off : off + n] = S
    # axis 0 Nyquist split
    P[off + n, off : off + n] = 0.5 * P[off, off : off + n]
    P[off, off : off + n] *= 0.5
    # axis 1 Nyquist split (includes the freshly created +n/2 row)
    P[off : off + n + 1, off + n] = 0.5 * P[off : off + n + 1, off]
    P[off : off + n + 1, off] *= 0.5
    return np.fft.ifftshift(P) * factor**2


def _truncate_modes(modes_fine: np.ndarray, n: int) -> np.ndarray:
    """Restrict fine-grid coefficients back to the coarse mode set (adjoint of _pad_modes)."""
    N = modes_fine.shape[0]
    factor = N // n
    off = (N - n) // 2
    T = np.fft.fftshift(modes_fine).copy()
    T[:, off] += T[:, off + n]
    T[off, :] += T[off + n, :]
    return np.fft.ifftshift(T[off : off + n, off : off + n]) / factor**2


def refine(f: SpectralField, factor: int = 2) -> SpectralField:
    """Resample the same trigonometric polynomial on a grid ``factor`` times finer."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"refinement factor must be a positive integer, got {factor}")
    if factor == 1:
        return f
    fine = Grid(f.grid.n * factor, f.grid.L)
    return SpectralField(fine, _pad_modes(f.modes, factor), real=f.real)


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product fg, dealiased by forming it on a 2x refined grid."""
    _check_same_grid(f.grid, g.grid)
    pf = np.fft.ifft2(_pad_modes(f.modes))
    pg = np.fft.ifft2(_pad_modes(g.modes))
    if f.real:
        pf = pf.real
    if g.real:
        pg = pg.real
    prod = np.fft.fft2(pf * pg)
    return SpectralField(f.grid, _truncate_modes(prod, f.grid.n), real=f.real and g.real)


# ---------------------------------------------------------------------------
# spectral multipliers
# ---------------------------------------------------------------------------

def _axis_derivative_multiplier(grid: Grid, order: int, axis: int) -> np.ndarray:
    k = grid.kx if axis == 0 else grid.ky
    mult = (1j * k) ** order
    if order % 2 == 1:
        # the unpaired -n/2 frequency has no conjugate partner; an odd power of
        # (ik) there would inject a spurious imaginary part into real fields
        idx = grid.mode_index == -(grid.n // 2)
        mult = mult.copy()
        if axis == 0:
            mult[idx, :] = 0.0
        else:
            mult[:, idx] = 0.0
    return mult


def derivative(f: SpectralField | VectorField, alpha: tuple[int, int]):
    """Mixed partial derivative of multi-order alpha = (ax, ay)."""
    ax, ay = alpha
    if ax < 0 or ay < 0 or int(ax) != ax or int(ay) != ay:
        raise ValueError(f"derivative orders must be nonnegative integers, got {alpha}")
    if isinstance(f, VectorField):
        return f.map(lambda c: derivative(c, alpha))
    mult = np.ones((f.grid.n, f.grid.n), dtype=np.complex128)
    if ax:
        mult = mult * _axis_derivative_multiplier(f.grid, ax, axis=0)
    if ay:
        mult = mult * _axis_derivative_multiplier(f.grid, ay, axis=1)
    return f.with_modes(f.modes * mult)


def drop_nyquist(f: SpectralField | VectorField):
    """Zero every mode on an unpaired half-Nyquist line (index -n/2 in either axis).

    First derivatives are not well defined on those lines (see
    _axis_derivative_multiplier), so operators that must be exactly
    skew-adjoint or invertible work on the complementary subspace.
    """
    if isinstance(f, VectorField):
        return f.map(drop_nyquist)
    idx = f.grid.mode_index == -(f.grid.n // 2)
    modes = f.modes.copy()
    modes[idx, :] = 0.0
    modes[:, idx] = 0.0
    return SpectralField(f.grid, modes, real=f.real)


def gradient(f: SpectralField) -> VectorField:
    return VectorField(derivative(f, (1, 0)), derivative(f, (0, 1)))


def divergence(V: VectorField) -> SpectralField:
    return derivative(V.u1, (1, 0)) + derivative(V.u2, (0, 1))


def advect(V: VectorField, f: SpectralField) -> SpectralField:
    """Convective derivative V . grad(f), with dealiased products."""
    return multiply(V.u1, derivative(f, (1, 0))) + multiply(V.u2, derivative(f, (0, 1)))


def advect_vector(V: VectorField, W: VectorField) -> VectorField:
    """Componentwise convective derivative (V . grad) W."""
    return VectorField(advect(V, W.u1), advect(V, W.u2))


def _projector_tables(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Use the same wavevector convention as `derivative`: the unpaired -n/2
    # frequency carries no first derivative, so the projector must treat that
    # component as zero or projected fields would fail the divergence check.
    idx = grid.mode_index == -(grid.n // 2)
    kx = grid.kx.copy()
    ky = grid.ky.copy()
    kx[idx, :] = 0.0
    ky[:, idx] = 0.0
    k2 = kx * kx + ky * ky
    k2[k2 == 0.0] = 1.0  # mean mode and the corner where both lines cross
    return kx / np.sqrt(k2), ky / np.sqrt(k2), k2


def leray_project(V: VectorField) -> VectorField:
    """Divergence-free part of V; modes with no derivative (the mean and the
    unpaired Nyquist corner) are kept verbatim."""
    grid = V.grid
    ex, ey, _ = _projector_tables(grid)
    kdotu = ex * V.u1.modes + ey * V.u2.modes
    m1 = V.u1.modes - ex * kdotu
    m2 = V.u2.modes - ey * kdotu
    m1 = m1.copy()
    m2 = m2.copy()
    m1[0, 0] = V.u1.modes[0, 0]
    m2[0, 0] = V.u2.modes[0, 0]
    return VectorField(V.u1.with_modes(m1), V.u2.with_modes(m2))


def gradient_part(V: VectorField) -> VectorField:
    """Curl-free (gradient) part of V; zero on the mean mode."""
    grid = V.grid
    ex, ey, _ = _projector_tables(grid)
    kdotu = ex * V.u1.modes + ey * V.u2.modes
    m1 = ex * kdotu
    m2 = ey * kdotu
    m1[0, 0] = 0.0
    m2[0, 0] = 0.0
    return VectorField(V.u1.with_modes(m1), V.u2.with_modes(m2))


def heat_propagate(f: SpectralField | VectorField, nu: float, t: float):
    """Exact heat semigroup: damp each mode by exp(-nu t |k|^2)."""
    if t < 0:
        raise ValueError(f"heat propagation requires t >= 0, got t={t}")
    if nu < 0:
        raise ValueError(f"heat propagation requires nu >= 0, got nu={nu}")
    if isinstance(f, VectorField):
        return f.map(lambda c: heat_propagate(c, nu, t))
    damp = np.exp(-nu * t * f.grid.k_squared)
    return f.with_modes(f.modes * damp)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """Solve Laplace(g) = f for the mean-zero g; requires mean-zero input."""
    scale = max(1.0, float(np.max(np.abs(f.modes))) / f.grid.n**2)
    if abs(f.mean) > 1e-12 * scale:
        raise ValueError(f"inverse Laplacian needs mean-zero input, got mean {f.mean:.3e}")
    k2 = f.grid.k_squared.copy()
    k2[0, 0] = 1.0
    out = f.modes / (-k2)
    out[0, 0] = 0.0
    return f.with_modes(out)


def potential_from_gradient(V: VectorField) -> SpectralField:
    """Recover the mean-zero scalar g with grad(g) = V (V must be curl-free)."""
    grid = V.grid
    k2 = grid.k_squared.copy()
    k2[0, 0] = 1.0
    g = (grid.kx * V.u1.modes + grid.ky * V.u2.modes) / (1j * k2)
    g[0, 0] = 0.0
    return SpectralField(grid, g, real=V.u1.real and V.u2.real)
