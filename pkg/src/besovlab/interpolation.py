"""Off-grid evaluation of periodic fields.

Query points rarely fall on grid nodes: particle trackers need velocities at
departure points, and pullbacks need fields along a deformed mesh.  The
sampler here evaluates a field anywhere on the torus in two stages.  First the
field is resampled exactly onto a uniform grid ``upsample`` times finer (a
trigonometric identity, no information is lost).  Then tensor-product cubic
Lagrange interpolation on the surrounding 4x4 stencil produces the value at
the query point.  The refinement factor trades memory for accuracy while the
per-point cost stays constant.

For schemes that must not create new extrema, :func:`cell_bounds` returns the
min/max of the four base-grid corners enclosing each query point; clipping an
interpolated value to that range keeps it inside the local data hull.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, SpectralField, VectorField, refine

__all__ = [
    "PeriodicSampler",
    "cell_bounds",
]

_OFFSETS = np.array([-1, 0, 1, 2])


def _cubic_weights(s: np.ndarray) -> np.ndarray:
    """Lagrange weights on the nodes {-1, 0, 1, 2} at offsets s in [0, 1).

    Returns an array with a trailing axis of length 4; the weights sum to one
    identically, so constants are reproduced exactly.
    """
    w = np.empty(s.shape + (4,), dtype=float)
    w[..., 0] = -s * (s - 1.0) * (s - 2.0) / 6.0
    w[..., 1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
    w[..., 2] = -(s + 1.0) * s * (s - 2.0) / 2.0
    w[..., 3] = (s + 1.0) * s * (s - 1.0) / 6.0
    return w


def _index_split(x: np.ndarray, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split physical coordinates into wrapped base indices and offsets."""
    ix = np.asarray(x, dtype=float) / h
    base = np.floor(ix)
    return base.astype(np.int64) % n, ix - base


@dataclass(frozen=True)
class PeriodicSampler:
    """Evaluates one or more periodic planes at arbitrary torus points.

    Planes share one grid; they are stored as physical values on the refined
    mesh.  Construct via :meth:`of_scalar` or :meth:`of_vector`.
    """

    length: float
    planes: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.planes:
            raise ValueError("sampler needs at least one plane")
        shape = self.planes[0].shape
        for p in self.planes:
            if p.shape != shape or p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise ValueError("sampler planes must be square and share one shape")

    @classmethod
    def of_scalar(cls, f: SpectralField, upsample: int = 1) -> "PeriodicSampler":
        fine = refine(f, upsample)
        return cls(f.grid.L, (np.ascontiguousarray(fine.values.real),))

    @classmethod
    def of_vector(cls, V: VectorField, upsample: int = 1) -> "PeriodicSampler":
        f1 = refine(V.u1, upsample)
        f2 = refine(V.u2, upsample)
        return cls(
            V.grid.L,
            (np.ascontiguousarray(f1.values.real), np.ascontiguousarray(f2.values.real)),
        )

    @property
    def n(self) -> int:
        return self.planes[0].shape[0]

    @property
    def h(self) -> float:
        return self.length / self.n

    def at(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, ...]:
        """Sample every plane at the points (x, y); shapes broadcast together."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        bx, sx = _index_split(x, self.h, self.n)
        by, sy = _index_split(y, self.h, self.n)
        rows = (bx[..., None] + _OFFSETS) % self.n
        cols = (by[..., None] + _OFFSETS) % self.n
        w = _cubic_weights(sx)[..., :, None] * _cubic_weights(sy)[..., None, :]
        ri = rows[..., :, None]
        ci = cols[..., None, :]
        return tuple((p[ri, ci] * w).sum(axis=(-2, -1)) for p in self.planes)

    def scalar_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Sample a single-plane sampler, returning the plane directly."""
        if len(self.planes) != 1:
            raise ValueError(f"scalar_at needs exactly one plane, sampler has {len(self.planes)}")
        return self.at(x, y)[0]


def cell_bounds(
    f: SpectralField, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Min and max of the four base-grid corner values around each point.

    The bounds come from the original grid, not any refinement, so clipping to
    them guarantees values stay within the range of the stored data.
    """
    grid: Grid = f.grid
    vals = f.values.real
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    bx, _ = _index_split(x, grid.h, grid.n)
    by, _ = _index_split(y, grid.h, grid.n)
    corners = np.stack(
        [vals[(bx + dx) % grid.n, (by + dy) % grid.n] for dx in (0, 1) for dy in (0, 1)],
        axis=-1,
    )
    return corners.min(axis=-1), corners.max(axis=-1)
