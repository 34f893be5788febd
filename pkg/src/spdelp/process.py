"""Discrete paths of ``du = (D_i f^i + f^0) dt + g^k dw^k`` on the lattice.

Time stepping is explicit Euler-Maruyama with every coefficient evaluated at
the left endpoint of the step (the discrete form of predictability). The
stepper :func:`euler_steps` works on raw arrays and accepts a leading batch
axis, so Monte Carlo code can advance many replicates at once and consume
each step as it is produced instead of storing whole paths.

Coefficient evaluators take ``(t, u)`` where ``u`` is the current lattice
array (possibly batched) and return arrays broadcastable to:

* ``f0``:   ``(..., *grid.shape)``
* ``fvec``: ``(..., dim, *grid.shape)``
* ``g``:    ``(..., K, *grid.shape)``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .lattice import (
    GridSpec,
    LatticeError,
    ScalarField,
    SeqField,
    VectorField,
    _same_grid,
    div_values,
    grad_values,
    inner_values,
)
from .noise import NoisePath, TimeGrid

Evaluator = Callable[[float, np.ndarray], np.ndarray]


class StabilityError(ValueError):
    """Feedback diffusion step larger than the explicit stability bound."""


class BlowUpError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"blow-up at step {step}")
        self.step = step


def _constant(value: np.ndarray | None, shape: tuple[int, ...]) -> Evaluator:
    arr = np.zeros(shape) if value is None else np.broadcast_to(np.asarray(value, float), shape)
    arr = np.array(arr)
    arr.flags.writeable = False
    return lambda t, u: arr


def _as_evaluator(value, shape: tuple[int, ...]) -> Evaluator:
    """None -> zero, array -> constant in time, callable of t -> time-dependent."""
    if callable(value):
        return lambda t, u: np.broadcast_to(value(t), shape)
    if isinstance(value, (ScalarField, VectorField, SeqField)):
        value = value.values
    return _constant(value, shape)


@dataclass(frozen=True, eq=False)
class CoefficientSpec:
    mode: str
    grid: GridSpec
    K: int
    f0: Evaluator
    fvec: Evaluator
    g: Evaluator
    # coefficient a in f^i = a * D_i u (feedback mode only); drives the step-size check
    diffusion: float = 0.0

    def __post_init__(self):
        if self.mode not in ("explicit", "feedback"):
            raise ValueError(f"unknown coefficient mode {self.mode!r}")
        if self.K < 0:
            raise ValueError("K must be >= 0")

    @classmethod
    def explicit(cls, grid: GridSpec, K: int, f0=None, fvec=None, g=None) -> CoefficientSpec:
        """Coefficients independent of ``u``: each argument is None, an array or ``t -> array``."""
        return cls(
            "explicit",
            grid,
            K,
            _as_evaluator(f0, grid.shape),
            _as_evaluator(fvec, (grid.dim,) + grid.shape),
            _as_evaluator(g, (K,) + grid.shape),
        )

    @classmethod
    def zero(cls, grid: GridSpec, K: int = 0) -> CoefficientSpec:
        return cls.explicit(grid, K)

    @classmethod
    def feedback(
        cls,
        grid: GridSpec,
        K: int,
        diffusion: float,
        reaction: float = 0.0,
        noise_mult: Sequence[float] | None = None,
        f0=None,
        g=None,
    ) -> CoefficientSpec:
        """Linear feedback: ``f^i = a D_i u``, ``f^0 = b u + f0(t)``, ``g^k = c_k u + g^k(t)``."""
        if diffusion < 0:
            raise ValueError("diffusion must be >= 0")
        c = np.zeros(K) if noise_mult is None else np.asarray(noise_mult, dtype=float)
        if c.shape != (K,):
            raise ValueError(f"noise_mult needs {K} entries, got {c.shape}")
        f0_ext = _as_evaluator(f0, grid.shape)
        g_ext = _as_evaluator(g, (K,) + grid.shape)
        cb = c.reshape((K,) + (1,) * grid.dim)
        a, b = float(diffusion), float(reaction)

        def f0_ev(t, u):
            return b * u + f0_ext(t, u)

        def fvec_ev(t, u):
            return a * grad_values(u, grid)

        def g_ev(t, u):
            return cb * np.expand_dims(u, -grid.dim - 1) + g_ext(t, u) if K else g_ext(t, u)

        return cls("feedback", grid, K, f0_ev, fvec_ev, g_ev, diffusion=a)

    @classmethod
    def tabulated(
        cls, grid: GridSpec, tg: TimeGrid, f0s: np.ndarray, fvecs: np.ndarray, gs: np.ndarray
    ) -> CoefficientSpec:
        """Explicit coefficients given per step, e.g. the caches of a :class:`ProcessPath`."""
        f0s, fvecs, gs = (np.asarray(a, dtype=float) for a in (f0s, fvecs, gs))
        M = tg.M
        if f0s.shape[0] != M or fvecs.shape[0] != M or gs.shape[0] != M:
            raise ValueError("tabulated coefficients need one entry per time step")

        def at(table):
            return lambda t, u: table[min(int(round(t / tg.dt)), M - 1)]

        return cls("explicit", grid, gs.shape[1], at(f0s), at(fvecs), at(gs))

    def max_stable_dt(self) -> float:
        if self.mode != "feedback" or self.diffusion == 0:
            return np.inf
        return self.grid.h**2 / (2 * self.grid.dim * self.diffusion)


class Step(NamedTuple):
    m: int
    t: float
    u: np.ndarray
    f0: np.ndarray | None
    fvec: np.ndarray | None
    g: np.ndarray | None


def check_stability(coeffs: CoefficientSpec, tg: TimeGrid):
    if tg.dt > coeffs.max_stable_dt():
        raise StabilityError(
            f"dt={tg.dt:.3g} exceeds the diffusion stability bound {coeffs.max_stable_dt():.3g}"
        )


def euler_steps(
    u0: np.ndarray, coeffs: CoefficientSpec, dW: np.ndarray, tg: TimeGrid
) -> Iterator[Step]:
    """Yield the left-endpoint state of every step, then the terminal state.

    ``dW`` has shape ``(K, M)`` or ``(B, K, M)``; with a batch axis ``u0`` is
    broadcast to ``(B, *grid.shape)``. The final yielded step has index ``M``
    and ``None`` coefficients.
    """
    grid = coeffs.grid
    dW = np.asarray(dW, dtype=float)
    if dW.shape[-2:] != (coeffs.K, tg.M):
        raise ValueError(f"noise has shape {dW.shape}, expected (..., {coeffs.K}, {tg.M})")
    check_stability(coeffs, tg)
    batch = dW.shape[:-2]
    u = np.array(np.broadcast_to(u0, batch + grid.shape), dtype=float)
    expand = (slice(None),) * len(batch) + (slice(None),) + (None,) * grid.dim
    dt = tg.dt
    for m in range(tg.M):
        t = m * dt
        f0 = coeffs.f0(t, u)
        fvec = coeffs.fvec(t, u)
        g = coeffs.g(t, u)
        yield Step(m, t, u, f0, fvec, g)
        incr = dt * (div_values(fvec, grid) + f0)
        if coeffs.K:
            incr = incr + (g * dW[..., m][expand]).sum(axis=-grid.dim - 1)
        u = u + incr
        if not np.all(np.isfinite(u)):
            raise BlowUpError(m)
    yield Step(tg.M, tg.T, u, None, None, None)


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """Snapshots ``u_0..u_M`` plus the left-endpoint coefficients used on each step."""

    grid: GridSpec
    tg: TimeGrid
    snapshots: np.ndarray = field(repr=False)
    f0: np.ndarray = field(repr=False)
    fvec: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    def __post_init__(self):
        M, shape = self.tg.M, self.grid.shape
        if self.snapshots.shape != (M + 1,) + shape:
            raise ValueError("snapshots must have shape (M + 1, *grid.shape)")
        if self.f0.shape != (M,) + shape or self.fvec.shape != (M, self.grid.dim) + shape:
            raise ValueError("coefficient caches must have one entry per step")
        if self.g.shape[0] != M or self.g.shape[2:] != shape:
            raise ValueError("g cache must have shape (M, K, *grid.shape)")
        for a in (self.snapshots, self.f0, self.fvec, self.g):
            if not np.all(np.isfinite(a)):
                raise LatticeError("non-finite field")
            a.flags.writeable = False

    @property
    def K(self) -> int:
        return self.g.shape[1]

    def u(self, m: int) -> ScalarField:
        return ScalarField(self.grid, self.snapshots[m])

    def coefficients(self, m: int) -> tuple[ScalarField, VectorField, SeqField]:
        return (
            ScalarField(self.grid, self.f0[m]),
            VectorField(self.grid, self.fvec[m]),
            SeqField(self.grid, self.g[m]),
        )


def collect_path(u0: np.ndarray, coeffs: CoefficientSpec, dW: np.ndarray, tg: TimeGrid) -> ProcessPath:
    grid = coeffs.grid
    snaps = np.empty((tg.M + 1,) + grid.shape)
    f0 = np.empty((tg.M,) + grid.shape)
    fvec = np.empty((tg.M, grid.dim) + grid.shape)
    g = np.empty((tg.M, coeffs.K) + grid.shape)
    for st in euler_steps(u0, coeffs, dW, tg):
        snaps[st.m] = st.u
        if st.m < tg.M:
            f0[st.m] = st.f0
            fvec[st.m] = st.fvec
            g[st.m] = st.g
    return ProcessPath(grid, tg, snaps, f0, fvec, g)


def integrate(u0: ScalarField, coeffs: CoefficientSpec, noise: NoisePath) -> ProcessPath:
    """Euler-Maruyama path driven by ``noise``; raises :class:`BlowUpError` on overflow."""
    _same_grid(u0.grid, coeffs.grid)
    if noise.K != coeffs.K:
        raise ValueError(f"noise has K={noise.K} modes, coefficients expect {coeffs.K}")
    return collect_path(u0.values, coeffs, noise.dW, noise.tg)


# -- step processes -----------------------------------------------------------


@dataclass(frozen=True)
class HittingTime:
    """First grid time with ``|w^k| >= level``, capped at ``cap`` (or the horizon)."""

    k: int
    level: float
    cap: float | None = None


StageTime = float | HittingTime


@dataclass(frozen=True, eq=False)
class StepProcessSpec:
    """``g^k_t = sum_i g^{ik} 1_{(tau_{i-1}, tau_i]}(t)`` for ``i, k = 1..j``.

    ``gik`` has shape ``(j, j, *grid.shape)`` indexed ``[stage, mode]``;
    ``taus`` holds ``j + 1`` stage boundaries, each a deterministic time or a
    :class:`HittingTime`.
    """

    grid: GridSpec
    gik: np.ndarray = field(repr=False)
    taus: tuple[StageTime, ...]

    def __post_init__(self):
        gik = np.asarray(self.gik, dtype=float)
        j = gik.shape[0] if gik.ndim else 0
        if j < 1 or gik.shape != (j, j) + self.grid.shape:
            raise ValueError(f"gik must have shape (j, j, *grid.shape), got {gik.shape}")
        if len(self.taus) != j + 1:
            raise ValueError(f"need {j + 1} stage times, got {len(self.taus)}")
        fixed = [t for t in self.taus if not isinstance(t, HittingTime)]
        if any(b < a for a, b in zip(fixed, fixed[1:])):
            raise ValueError("deterministic stage times must be nondecreasing")
        object.__setattr__(self, "gik", gik)
        object.__setattr__(self, "taus", tuple(self.taus))

    @property
    def j(self) -> int:
        return self.gik.shape[0]


def _snap(t: float, tg: TimeGrid) -> int:
    """Grid index of the first grid time >= t, clipped to ``[0, M]``."""
    m = int(np.ceil(t / tg.dt - 1e-9))
    return min(max(m, 0), tg.M)


def resolve_stage_indices(sp: StepProcessSpec, noise: NoisePath) -> np.ndarray:
    """Grid indices of the stage times; later stages are raised to keep the order."""
    w = noise.brownian()
    out = []
    for tau in sp.taus:
        if isinstance(tau, HittingTime):
            cap = noise.tg.M if tau.cap is None else _snap(tau.cap, noise.tg)
            hits = np.flatnonzero(np.abs(w[tau.k]) >= tau.level)
            m = min(int(hits[0]) if hits.size else noise.tg.M, cap)
        else:
            m = _snap(float(tau), noise.tg)
        out.append(m)
    return np.maximum.accumulate(np.asarray(out, dtype=int))


def step_process_g(sp: StepProcessSpec, noise: NoisePath) -> np.ndarray:
    """Per-step ``g`` table ``(M, K, *shape)`` (left-endpoint convention)."""
    if noise.K < sp.j:
        raise ValueError(f"step process needs K >= {sp.j} noise modes, got {noise.K}")
    idx = resolve_stage_indices(sp, noise)
    M = noise.tg.M
    g = np.zeros((M, noise.K) + sp.grid.shape)
    steps = np.arange(M)
    for i in range(sp.j):
        on = (steps >= idx[i]) & (steps < idx[i + 1])
        g[on, : sp.j] += sp.gik[i]
    return g


def step_process_coefficients(sp: StepProcessSpec, noise: NoisePath) -> CoefficientSpec:
    M, grid = noise.tg.M, sp.grid
    return CoefficientSpec.tabulated(
        grid,
        noise.tg,
        np.zeros((M,) + grid.shape),
        np.zeros((M, grid.dim) + grid.shape),
        step_process_g(sp, noise),
    )


def integrate_step_process(sp: StepProcessSpec, noise: NoisePath) -> ProcessPath:
    """Closed form ``u_t = sum_{i,k} g^{ik} (w^k_{t^tau_i} - w^k_{t^tau_{i-1}})``.

    Stage times that fall between grid points are snapped to the next grid time.
    """
    grid, tg = sp.grid, noise.tg
    g = step_process_g(sp, noise)
    idx = resolve_stage_indices(sp, noise)
    w = noise.brownian()[: sp.j]  # (j, M+1)
    m = np.arange(tg.M + 1)
    snaps = np.zeros((tg.M + 1,) + grid.shape)
    for i in range(sp.j):
        # (j, M+1): w^k_{m ^ tau_i} - w^k_{m ^ tau_{i-1}}
        dw = w[:, np.minimum(m, idx[i + 1])] - w[:, np.minimum(m, idx[i])]
        snaps += np.tensordot(dw.T, sp.gik[i], axes=(1, 0))
    return ProcessPath(
        grid,
        tg,
        snaps,
        np.zeros((tg.M,) + grid.shape),
        np.zeros((tg.M, grid.dim) + grid.shape),
        g,
    )


# -- weak form ----------------------------------------------------------------


def weak_form_series(path: ProcessPath, noise: NoisePath, phi: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Signed weak-form defect per step and a magnitude scale for it."""
    _same_grid(path.grid, phi.grid)
    if noise.tg != path.tg or noise.K != path.K:
        raise ValueError("noise does not match the path")
    grid, dt = path.grid, path.tg.dt
    ph = phi.values
    dphi = grad_values(ph, grid)
    pair_u = inner_values(path.snapshots, ph, grid)
    drift = inner_values(path.f0, ph, grid) - inner_values(path.fvec, dphi, grid).sum(axis=1)
    if path.K:
        stoch = (inner_values(path.g, ph, grid) * noise.dW.T).sum(axis=1)
    else:
        stoch = np.zeros(path.tg.M)
    incr = drift * dt + stoch
    predicted = pair_u[0] + np.concatenate([[0.0], np.cumsum(incr)])
    defect = pair_u - predicted
    scale = max(np.abs(pair_u).max(), np.abs(pair_u[0]) + np.abs(incr).sum(), np.finfo(float).tiny)
    return defect, scale


def weak_form_residual(path: ProcessPath, noise: NoisePath, phi: ScalarField, relative: bool = True) -> float:
    """Max over steps of the weak-form defect against the test function ``phi``."""
    defect, scale = weak_form_series(path, noise, phi)
    res = float(np.abs(defect).max())
    return res / scale if relative else res
