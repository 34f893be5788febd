"""Periodic lattice fields and the discrete calculus used throughout the package.

The spatial domain is the torus ``[0, L)^d`` sampled on ``n`` points per axis.
Derivatives are second-order centered differences with periodic wrap; on a
periodic lattice these are exactly skew-adjoint with respect to the Riemann-sum
pairing ``(u, v) = sum(u * v) * h**d``, which is what makes integration by
parts hold to rounding error.

Two layers are exposed:

* array kernels (``*_values``) acting on the trailing ``dim`` axes of an
  ndarray, so a leading batch of Monte Carlo replicates or time steps is
  handled for free;
* typed wrappers (:class:`ScalarField`, :class:`VectorField`,
  :class:`SeqField`) used at API boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class LatticeError(ValueError):
    """Raised on invalid grids, non-finite fields or grid mismatches."""


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise LatticeError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise LatticeError(f"n must be even and >= 8, got {self.n}")
        if not (self.length > 0 and np.isfinite(self.length)):
            raise LatticeError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "length", float(self.length))

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.length**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        """Negative indices of the spatial axes of a (possibly batched) array."""
        return tuple(range(-self.dim, 0))

    def coords(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def periodic_offsets(self, center: Sequence[float]) -> tuple[np.ndarray, ...]:
        """Minimum-image displacement ``x - center`` along each axis."""
        center = _as_point(center, self.dim)
        out = []
        for xi, ci in zip(self.coords(), center):
            d = xi - ci
            d -= self.length * np.round(d / self.length)
            out.append(d)
        return tuple(out)


def _as_point(center, dim: int) -> tuple[float, ...]:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if c.shape != (dim,):
        raise LatticeError(f"point must have {dim} coordinates, got {c.shape}")
    return tuple(float(v) for v in c)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.flags.writeable = False
    return values


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise LatticeError("non-finite field")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real lattice function. ``values`` may be given flat (row-major) or shaped."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.n**self.grid.dim:
            raise LatticeError(
                f"field has {v.size} entries, grid needs {self.grid.n ** self.grid.dim}"
            )
        v = v.reshape(self.grid.shape)
        _check_finite(v)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def zeros(cls, grid: GridSpec) -> ScalarField:
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(c)))

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __abs__(self):
        return ScalarField(self.grid, np.abs(self.values))

    def __pow__(self, q):
        return ScalarField(self.grid, self.values**q)


@dataclass(frozen=True, eq=False)
class VectorField:
    """``dim`` components stacked along the first axis of ``values``."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape((self.grid.dim,) + self.grid.shape)
        _check_finite(v)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_comps(cls, comps: Sequence[ScalarField]) -> VectorField:
        comps = list(comps)
        if not comps:
            raise LatticeError("VectorField needs at least one component")
        grid = comps[0].grid
        for c in comps:
            _same_grid(grid, c.grid)
        if len(comps) != grid.dim:
            raise LatticeError(f"expected {grid.dim} components, got {len(comps)}")
        return cls(grid, np.stack([c.values for c in comps]))

    @classmethod
    def zeros(cls, grid: GridSpec) -> VectorField:
        return cls(grid, np.zeros((grid.dim,) + grid.shape))

    @property
    def comps(self) -> tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, c) for c in self.values)


@dataclass(frozen=True, eq=False)
class SeqField:
    """Truncated l2-valued field: ``K`` modes stacked along the first axis."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0:
            v = v.reshape((0,) + self.grid.shape)
        else:
            v = v.reshape((-1,) + self.grid.shape)
        _check_finite(v)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes: Sequence[ScalarField]) -> SeqField:
        modes = list(modes)
        for m in modes:
            _same_grid(grid, m.grid)
        if not modes:
            return cls(grid, np.zeros((0,) + grid.shape))
        return cls(grid, np.stack([m.values for m in modes]))

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def modes(self) -> tuple[ScalarField, ...]:
        return tuple(ScalarField(self.grid, m) for m in self.values)


def _same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise LatticeError(f"grid mismatch: {a} vs {b}")


# -- array kernels -----------------------------------------------------------


def lp_pow_values(values: np.ndarray, p: float, grid: GridSpec) -> np.ndarray:
    """Riemann sum of ``|values|**p`` over the trailing spatial axes."""
    a = np.abs(values)
    powered = a * a if p == 2 else a**p
    return powered.sum(axis=grid.axes) * grid.cell_volume


def inner_values(u: np.ndarray, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (u * v).sum(axis=grid.axes) * grid.cell_volume


def ell2_values(g: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Pointwise l2 norm over the mode axis, which precedes the spatial axes."""
    return np.sqrt((g * g).sum(axis=-grid.dim - 1))


def dcenter(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * h)


def grad_values(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Centered gradient; the component axis is inserted before the spatial axes."""
    return np.stack([dcenter(u, ax, grid.h) for ax in grid.axes], axis=-grid.dim - 1)


def div_values(F: np.ndarray, grid: GridSpec) -> np.ndarray:
    d = grid.dim
    rest = (slice(None),) * d
    out = dcenter(F[(Ellipsis, 0) + rest], -d, grid.h)
    for i in range(1, d):
        out = out + dcenter(F[(Ellipsis, i) + rest], -d + i, grid.h)
    return out


# -- typed operations --------------------------------------------------------


def lp_norm_pow(u: ScalarField, p: float) -> float:
    """``||u||_p^p`` by the lattice Riemann sum."""
    if p < 2:
        raise LatticeError(f"p must be >= 2, got {p}")
    _check_finite(u.values)
    return float(lp_pow_values(u.values, p, u.grid))


def seq_ell2_pointwise(g: SeqField) -> ScalarField:
    return ScalarField(g.grid, ell2_values(g.values, g.grid) if g.K else np.zeros(g.grid.shape))


def grad(u: ScalarField) -> VectorField:
    return VectorField(u.grid, grad_values(u.values, u.grid))


def div(F: VectorField) -> ScalarField:
    return ScalarField(F.grid, div_values(F.values, F.grid))


def inner(u: ScalarField, v: ScalarField) -> float:
    _same_grid(u.grid, v.grid)
    return float(inner_values(u.values, v.values, u.grid))


def bump_values(grid: GridSpec, center, radius: float) -> np.ndarray:
    """``exp(1 - 1/(1 - r^2/R^2))`` inside radius ``R``, zero outside (periodic distance)."""
    offs = grid.periodic_offsets(center)
    s = sum(d * d for d in offs) / radius**2
    out = np.zeros(grid.shape)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def bump_test_function(grid: GridSpec, center, radius: float) -> ScalarField:
    if not (0 < radius < grid.length / 2):
        raise LatticeError(f"radius must lie in (0, {grid.length / 2}), got {radius}")
    return ScalarField(grid, bump_values(grid, center, radius))
