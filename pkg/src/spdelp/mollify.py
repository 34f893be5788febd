"""Mollification ``h -> h * zeta_eps`` on the periodic lattice.

The kernel is the standard bump ``exp(-1/(1-|y|^2))`` rescaled to radius
``eps``, sampled on the lattice and renormalized so that its discrete integral
is exactly one. Convolution is a direct sum over the kernel support (a fixed
sequence of periodic shifts), which keeps results bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import GridSpec, ScalarField, SeqField, _same_grid


class KernelResolutionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    grid: GridSpec
    eps: float
    weights: ScalarField = field(repr=False)
    # lattice shifts inside the support and the matching weights * h**dim
    shifts: tuple[tuple[int, ...], ...] = field(repr=False, default=())
    masses: tuple[float, ...] = field(repr=False, default=())


def make_kernel(grid: GridSpec, eps: float) -> MollifierKernel:
    if not (2 * grid.h <= eps < grid.length / 4):
        raise KernelResolutionError(
            f"kernel resolution error: need {2 * grid.h} <= eps < {grid.length / 4}, got {eps}"
        )
    offs = grid.periodic_offsets((0.0,) * grid.dim)
    s = sum(d * d for d in offs) / eps**2
    w = np.zeros(grid.shape)
    inside = s < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - s[inside])) / eps**grid.dim
    w /= w.sum() * grid.cell_volume

    idx = np.argwhere(w > 0)
    shifts, masses = [], []
    for ix in idx:
        shift = tuple(int(i) if i < grid.n // 2 else int(i) - grid.n for i in ix)
        shifts.append(shift)
        masses.append(float(w[tuple(ix)] * grid.cell_volume))
    return MollifierKernel(grid, float(eps), ScalarField(grid, w), tuple(shifts), tuple(masses))


def mollify_values(values: np.ndarray, k: MollifierKernel) -> np.ndarray:
    """Periodic convolution over the trailing ``dim`` axes (batch-friendly)."""
    axes = k.grid.axes
    out = np.zeros(np.shape(values))
    for shift, mass in zip(k.shifts, k.masses):
        out += mass * np.roll(values, shift, axis=axes)
    return out


def mollify(u: ScalarField, k: MollifierKernel) -> ScalarField:
    _same_grid(u.grid, k.grid)
    return ScalarField(u.grid, mollify_values(u.values, k))


def mollify_seq(g: SeqField, k: MollifierKernel) -> SeqField:
    _same_grid(g.grid, k.grid)
    return SeqField(g.grid, mollify_values(g.values, k))
