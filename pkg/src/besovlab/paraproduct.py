"""Bony decomposition of a pointwise product, and two multiplier commutators.

The product of two fields splits into a low-high paraproduct, its transpose,
and a near-diagonal remainder.  On a torus the dyadic ladder is finite and the
mean modes sit below the lowest octave, so the splitting here attaches the
product of the two mean parts to the lowest remainder/transpose term; with
that bookkeeping both telescoping identities

    u v = para_T(u, v) + para_T_conj(u, v)
    u v = para_T(u, v) + para_T(v, u) + remainder_R(u, v)

hold exactly (to rounding) for every pair of fields, whatever their means.
All products are dealiased, so each identity is a finite sum of exactly
bilinear terms.
"""

from __future__ import annotations

from .dyadic import DyadicLadder
from .spectral import SpectralField, VectorField, advect, derivative, multiply

__all__ = [
    "para_T",
    "para_T_conj",
    "remainder_R",
    "commutator_block",
    "transport_commutator",
]


def _check_same_grid(u: SpectralField, v: SpectralField, ladder: DyadicLadder) -> None:
    if u.grid != v.grid or u.grid != ladder.grid:
        raise ValueError("paraproduct factors and ladder must share one grid")


def _mean_product(u: SpectralField, v: SpectralField, ladder: DyadicLadder) -> SpectralField:
    # product of the two sub-ladder (mean) parts; constant field
    return multiply(ladder.low_pass(u, ladder.j_min), ladder.low_pass(v, ladder.j_min))


def para_T(u: SpectralField, v: SpectralField, ladder: DyadicLadder) -> SpectralField:
    """Low-high paraproduct: sum over octaves of low_pass(u, j-1) * block_j(v).

    The partial sums of u include its mean at every octave, while v enters
    only through annular blocks; with a constant first factor c this returns
    c * (v - mean of v).
    """
    _check_same_grid(u, v, ladder)
    acc = SpectralField.zero(u.grid)
    for j in ladder.js:
        acc = acc + multiply(ladder.low_pass(u, j - 1), ladder.block(v, j))
    return acc


def para_T_conj(u: SpectralField, v: SpectralField, ladder: DyadicLadder) -> SpectralField:
    """Transpose sum block_j(u) * low_pass(v, j+2), plus the mean-mean product.

    Complements para_T exactly: para_T(u, v) + para_T_conj(u, v) == u*v.
    """
    _check_same_grid(u, v, ladder)
    acc = _mean_product(u, v, ladder)
    for j in ladder.js:
        acc = acc + multiply(ladder.block(u, j), ladder.low_pass(v, j + 2))
    return acc


def remainder_R(u: SpectralField, v: SpectralField, ladder: DyadicLadder) -> SpectralField:
    """Near-diagonal remainder: block pairs at most one octave apart.

    Includes the mean-mean product so that the three-term splitting
    para_T(u, v) + para_T(v, u) + remainder_R(u, v) reproduces u*v exactly.
    Symmetric in its two arguments.
    """
    _check_same_grid(u, v, ladder)
    acc = _mean_product(u, v, ladder)
    for j in ladder.js:
        bu = ladder.block(u, j)
        for jp in range(max(ladder.j_min, j - 1), min(ladder.j_max, j + 1) + 1):
            acc = acc + multiply(bu, ladder.block(v, jp))
    return acc


def commutator_block(a: SpectralField, f: SpectralField | VectorField, j: int, ladder: DyadicLadder):
    """Commutator of the octave-j block with multiplication by a: block_j(a f) - a block_j(f).

    Linear in f; vanishes identically for constant a.  Applied componentwise
    to vector fields.
    """
    if isinstance(f, VectorField):
        return VectorField(
            commutator_block(a, f.u1, j, ladder),
            commutator_block(a, f.u2, j, ladder),
        )
    _check_same_grid(a, f, ladder)
    return ladder.block(multiply(a, f), j) - multiply(a, ladder.block(f, j))


def _relative_divergence(u: VectorField) -> float:
    import numpy as np

    div = derivative(u.u1, (1, 0)) + derivative(u.u2, (0, 1))
    num = float(np.linalg.norm(div.modes))
    den = sum(
        float(np.linalg.norm(derivative(c, alpha).modes))
        for c in (u.u1, u.u2)
        for alpha in ((1, 0), (0, 1))
    )
    return num / den if den > 0 else 0.0


def transport_commutator(u: VectorField, a: SpectralField, j: int, ladder: DyadicLadder) -> SpectralField:
    """Commutator of advection along u with the octave-j block.

    Returns u . grad(block_j a) - block_j(u . grad a) for a divergence-free
    velocity; the divergence-free requirement is enforced because only then
    does the commutator carry the one-octave smoothing that makes it useful.
    """
    _check_same_grid(a, u.u1, ladder)
    if _relative_divergence(u) > 1e-10:
        raise ValueError("transport commutator requires a divergence-free velocity")
    return advect(u, ladder.block(a, j)) - ladder.block(advect(u, a), j)
