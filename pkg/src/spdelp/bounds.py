"""Monte Carlo and deterministic checks of the L_p estimates and auxiliary inequalities.

The estimates involve constants ``N(d, p)`` that are never made explicit, so
stochastic checks report *implied* constants (left side over the right-hand
structure with ``N = 1``) and the tests look at their stability rather than
at a fixed value. Expectations of ``L_p(0, tau; L_p)`` norms are taken over
the same replicate paths as the left side (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .ito import stream_ito, xi_increment
from .lattice import GridSpec, ScalarField, ell2_values, grad_values, lp_pow_values
from .mollify import make_kernel, mollify_values
from .noise import TimeGrid, map_chunks, sample_batch, sample_noise
from .process import ProcessPath, StepProcessSpec, euler_steps, integrate_step_process

N_CAL = 10.0  # calibrated constant used to flag sup-estimate violations


# -- estimates and reports ----------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    replicates: int
    seed_base: int

    @classmethod
    def from_samples(cls, x: np.ndarray, seed_base: int) -> McEstimate:
        x = np.asarray(x, dtype=float)
        if x.size < 2:
            raise ValueError("a Monte Carlo estimate needs at least 2 replicates")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), int(seed_base))


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs <= 0 else math.inf


@dataclass(frozen=True)
class BoundReport:
    """``lhs_est`` against the right-hand structure of an estimate.

    ``ratio`` divides by the sum of ``rhs_components`` (every unknown constant
    set to one); ``implied_N`` is the constant this report alone implies, equal
    to ``ratio``. ``excess_N`` is the smallest multiplier of the non-initial
    components that makes the estimate hold when the initial term keeps its
    fixed factor.
    """

    scenario: str
    lhs_est: McEstimate
    rhs_components: dict[str, float]
    ratio: float
    implied_N: float
    holds_with: float
    excess_N: float = 0.0
    violated: bool = False

    @property
    def rhs_total(self) -> float:
        return float(sum(self.rhs_components.values()))


def _bound_report(name, lhs: McEstimate, comps: dict[str, float], n_cal: float, fixed=("initial",)) -> BoundReport:
    total = sum(comps.values())
    ratio = _ratio(lhs.mean, total)
    base = sum(v for k, v in comps.items() if k in fixed)
    rest = total - base
    excess = _ratio(max(0.0, lhs.mean - base), rest)
    violated = lhs.mean - 3 * lhs.std_error > base + n_cal * rest
    return BoundReport(name, lhs, dict(comps), ratio, ratio, n_cal, excess, bool(violated))


def mix_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from several integers."""
    ss = np.random.SeedSequence([int(p) & ((1 << 64) - 1) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- sup estimate -------------------------------------------------------------


SUP_COMPONENTS = ("initial", "f0", "fvec", "g", "Du")


def _sup_block(built, dW: np.ndarray, tg: TimeGrid) -> dict[str, np.ndarray]:
    grid, p, tau, coeffs = built.grid, built.p, built.tau, built.coeffs
    R = dW.shape[0]
    cap = tau.cap_index(tg)
    active = np.ones(R, dtype=bool)
    sup = np.zeros(R)
    xi = np.zeros(R)
    acc = {k: np.zeros(R) for k in ("f0", "fvec", "g", "Du")}
    initial = None
    for st in euler_steps(built.u0.values, coeffs, dW, tg):
        lhs = lp_pow_values(st.u, p, grid)
        if initial is None:
            initial = np.broadcast_to(lhs, (R,)).copy()
        if tau.kind == "hitting":
            F = lhs if tau.functional == "lp_norm_pow" else xi
            fire = active & ((F >= tau.level) | (st.m >= cap))
        else:
            fire = active & (st.m >= cap)
        sup = np.where(active, np.maximum(sup, lhs), sup)
        active &= ~fire
        if st.m == tg.M:
            break
        dt = tg.dt
        du = grad_values(st.u, grid)
        terms = {
            "f0": lp_pow_values(st.f0, p, grid),
            "fvec": lp_pow_values(st.fvec, p, grid).sum(axis=-1),
            "g": lp_pow_values(ell2_values(st.g, grid), p, grid) if built.K else 0.0,
            "Du": lp_pow_values(np.sqrt((du * du).sum(axis=-grid.dim - 1)), p, grid),
        }
        for k, v in terms.items():
            acc[k] += np.where(active, dt * np.broadcast_to(v, (R,)), 0.0)
        if tau.kind == "hitting" and tau.functional == "xi":
            xi += np.where(active, xi_increment(st.u, st.g, dt, p, grid), 0.0)
    return {"sup": sup, "initial": initial, **acc}


def sup_estimate_check(
    scenario,
    replicates: int = 100,
    seed: int | None = None,
    n_cal: float = N_CAL,
    threads: int | None = 1,
) -> BoundReport:
    """``E sup_{m <= m_tau} ||u_m||_p^p`` against ``2E||u_0||^p + T^{p-1}||f^0||^p + T^{(p-2)/2}(...)``."""
    if replicates < 50:
        raise ValueError("sup estimate needs at least 50 replicates")
    built = scenario.build()
    seed = built.seed if seed is None else seed
    tg, p = built.tg, built.p

    def block(b: range):
        return _sup_block(built, sample_batch(tg, built.K, seed, b), tg)

    parts = map_chunks(block, range(replicates), threads)
    cat = {k: np.concatenate([d[k] for d in parts]) for k in parts[0]}
    T = tg.T
    comps = {
        "initial": 2.0 * float(cat["initial"].mean()),
        "f0": T ** (p - 1) * float(cat["f0"].mean()),
        "fvec": T ** ((p - 2) / 2) * float(cat["fvec"].mean()),
        "g": T ** ((p - 2) / 2) * float(cat["g"].mean()),
        "Du": T ** ((p - 2) / 2) * float(cat["Du"].mean()),
    }
    lhs = McEstimate.from_samples(cat["sup"], seed)
    return _bound_report(built.name, lhs, comps, n_cal)


@dataclass(frozen=True)
class Campaign:
    reports: tuple[BoundReport, ...]

    @property
    def implied_N(self) -> float:
        return max(r.ratio for r in self.reports)

    @property
    def violated(self) -> bool:
        return any(r.violated for r in self.reports)


def sup_estimate_campaign(
    specs: Iterable,
    replicates: int = 100,
    seed: int = 0,
    n_cal: float = N_CAL,
    threads: int | None = 1,
) -> Campaign:
    """Sup-estimate reports for many scenarios; each draws noise keyed on ``(seed, scenario seed)``."""
    reports = [
        sup_estimate_check(s, replicates, mix_seed(seed, s.seed), n_cal, threads) for s in specs
    ]
    return Campaign(tuple(reports))


# -- energy identity ----------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    """Both sides of the energy relation for a bounded stopping time.

    ``lhs`` is ``E||u_0||^p + E sum_{m < m_tau} dt (drift bracket)``, ``rhs`` is
    ``E||u_{m_tau}||^p``. ``bias`` is the rectangle-rule bias estimated from a
    rerun at ``dt/2`` on the same Brownian paths.
    """

    scenario: str
    lhs: McEstimate
    rhs: McEstimate
    combined_se: float
    gap: float
    gap_half: float
    bias: float

    @property
    def allowance(self) -> float:
        return 3 * self.combined_se + abs(self.bias)

    @property
    def identity_holds(self) -> bool:
        return abs(self.gap) <= self.allowance

    @property
    def direction_holds(self) -> bool:
        """``lhs >= rhs`` up to three combined standard errors plus the time-step bias."""
        return self.gap >= -self.allowance


def energy_identity_check(
    scenario,
    replicates: int = 400,
    seed: int | None = None,
    threads: int | None = 1,
    divergence: str = "chain",
) -> EnergyReport:
    built = scenario.build()
    if built.tau.kind == "hitting" and built.tau.cap is not None and built.tau.cap > built.tg.T:
        raise ValueError("stopping time is not bounded by the horizon")
    seed = built.seed if seed is None else seed
    tg = built.tg
    fine = tg.refined(2)

    def block(b: range):
        dW_fine = sample_batch(fine, built.K, seed, b)
        dW = dW_fine.reshape(len(b), built.K, tg.M, 2).sum(axis=-1)
        out = []
        for g, w in ((tg, dW), (fine, dW_fine)):
            run = stream_ito(built.u0.values, built.coeffs, w, g, built.p, built.tau, divergence)
            out.append((run.initial + run.drift, run.terminal))
        return out

    parts = map_chunks(block, range(replicates), threads)
    L = np.concatenate([p[0][0] for p in parts])
    Rt = np.concatenate([p[0][1] for p in parts])
    Lh = np.concatenate([p[1][0] for p in parts])
    Rh = np.concatenate([p[1][1] for p in parts])
    lhs = McEstimate.from_samples(L, seed)
    rhs = McEstimate.from_samples(Rt, seed)
    gap = lhs.mean - rhs.mean
    gap_half = float(Lh.mean() - Rh.mean())
    return EnergyReport(
        built.name,
        lhs,
        rhs,
        math.hypot(lhs.std_error, rhs.std_error),
        gap,
        gap_half,
        2.0 * (gap - gap_half),
    )


# -- noise truncation ---------------------------------------------------------


@dataclass(frozen=True)
class TruncationRow:
    K: int
    mean_gap: float  # E ||u^K_T - u_T||_p^p against the run with every mode
    std_error: float


def _terminal(u0, coeffs, dW, tg) -> np.ndarray:
    for st in euler_steps(u0, coeffs, dW, tg):
        u = st.u
    return u


def truncation_study(
    scenario, Ks: Sequence[int], replicates: int = 100, seed: int | None = None, threads: int | None = 1
) -> tuple[TruncationRow, ...]:
    """Effect of keeping only the first ``K' < K`` noise modes.

    Every truncated run reuses the Brownian paths of the retained modes (modes
    draw from independent streams), so the gap to the full run isolates the
    dropped part of the series.
    """
    built = scenario.build()
    Ks = [int(k) for k in Ks]
    if any(not 0 <= k <= built.K for k in Ks):
        raise ValueError(f"truncation levels must lie in [0, {built.K}]")
    if replicates < 2:
        raise ValueError("truncation study needs at least 2 replicates")
    seed = built.seed if seed is None else seed
    grid, tg, p, full = built.grid, built.tg, built.p, built.coeffs

    def truncated(k: int):
        mask = (np.arange(built.K) < k).astype(float).reshape((built.K,) + (1,) * grid.dim)
        return replace(full, g=lambda t, u: full.g(t, u) * mask)

    levels = [truncated(k) for k in Ks]

    def block(b: range) -> list[np.ndarray]:
        dW = sample_batch(tg, built.K, seed, b)
        ref = _terminal(built.u0.values, full, dW, tg)
        return [lp_pow_values(_terminal(built.u0.values, c, dW, tg) - ref, p, grid) for c in levels]

    parts = map_chunks(block, range(replicates), threads)
    rows = []
    for i, k in enumerate(Ks):
        est = McEstimate.from_samples(np.concatenate([q[i] for q in parts]), seed)
        rows.append(TruncationRow(k, est.mean, est.std_error))
    return tuple(rows)


# -- pointwise-sup bounds for step processes and pure drift -------------------


def _pointwise_sup(paths: Sequence[ProcessPath], p: float) -> np.ndarray:
    out = []
    for path in paths:
        sup = np.abs(path.snapshots).max(axis=0)
        out.append(float(lp_pow_values(sup, p, path.grid)))
    return np.asarray(out)


def simple_g_bound_check(paths: Sequence[ProcessPath], p: float, seed_base: int = 0, name: str = "step-process") -> BoundReport:
    """``E int sup_t |u_t(x)|^p dx`` against ``T^{(p-2)/2} E int_0^T ||g_s||_p^p ds``."""
    if not p >= 2:
        raise ValueError(f"p must be >= 2, got {p}")
    paths = list(paths)
    tg = paths[0].tg
    lhs = McEstimate.from_samples(_pointwise_sup(paths, p), seed_base)
    rhs = np.mean([tg.dt * lp_pow_values(ell2_values(q.g, q.grid), p, q.grid).sum() if q.K else 0.0 for q in paths])
    comps = {"g": tg.T ** ((p - 2) / 2) * float(rhs)}
    return _bound_report(name, lhs, comps, math.inf, fixed=())


def step_process_paths(sp: StepProcessSpec, tg: TimeGrid, replicates: int, seed: int, K: int | None = None) -> list[ProcessPath]:
    K = sp.j if K is None else K
    return [integrate_step_process(sp, sample_noise(tg, K, seed, r)) for r in range(replicates)]


def drift_only_bound_check(paths: Sequence[ProcessPath], p: float, name: str = "drift-only") -> BoundReport:
    """``E int sup_t |u_t(x)|^p dx`` against ``T^{p-1} E int_0^T ||f_s||_p^p ds`` for pure-drift paths."""
    if not p >= 2:
        raise ValueError(f"p must be >= 2, got {p}")
    paths = list(paths)
    for q in paths:
        if np.any(q.fvec) or np.any(q.g):
            raise ValueError("drift-only check needs paths with fvec = 0 and g = 0")
    tg = paths[0].tg
    lhs_samples = _pointwise_sup([_shift_to_zero(q) for q in paths], p)
    if len(paths) == 1:
        # a single deterministic path: exact value, no sampling error
        lhs = McEstimate(float(lhs_samples[0]), 0.0, 1, 0)
    else:
        lhs = McEstimate.from_samples(lhs_samples, 0)
    rhs = np.mean([tg.dt * lp_pow_values(q.f0, p, q.grid).sum() for q in paths])
    comps = {"f0": tg.T ** (p - 1) * float(rhs)}
    return _bound_report(name, lhs, comps, math.inf, fixed=())


def _shift_to_zero(path: ProcessPath) -> ProcessPath:
    """The estimate concerns ``u`` started from zero; subtract ``u_0``."""
    if not np.any(path.snapshots[0]):
        return path
    return ProcessPath(path.grid, path.tg, path.snapshots - path.snapshots[0], path.f0, path.fvec, path.g)


# -- convergence lemmas -------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    """``status`` is ``"pass"``, ``"fail"`` or ``"vacuous"`` (hypotheses not met)."""

    status: str
    errors: tuple[float, ...] = ()
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _lr(values: np.ndarray, r: float, grid: GridSpec) -> float:
    return float((np.abs(values) ** r).sum() * grid.cell_volume) ** (1.0 / r)


def _hypotheses(seq: Sequence[np.ndarray], target: np.ndarray, r: float, grid: GridSpec, eta: float) -> str:
    """Empty string if the tail of ``seq`` converges to ``target`` in measure and in norm."""
    last = np.asarray(seq[-1], dtype=float)
    measure = np.count_nonzero(np.abs(last - target) > eta) * grid.cell_volume
    if measure > eta:
        return f"not converging in measure (measure {measure:.3g} of |u_n - u| > {eta:g})"
    gap = abs(_lr(last, r, grid) - _lr(target, r, grid))
    if gap > eta:
        return f"norms not converging (gap {gap:.3g})"
    return ""


def scheffe_check(
    us: Sequence, u, r: float, grid: GridSpec | None = None, eta: float = 1e-6, tol: float = 1e-2
) -> Verdict:
    """Convergence in measure plus convergence of norms forces ``||u_n - u||_r -> 0``.

    The hypotheses are checked at the end of the schedule with tolerance
    ``eta``; the verdict is ``vacuous`` when they fail. Otherwise the tail
    envelope ``sup_{k >= n} ||u_k - u||_r`` must end below ``tol``.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    grid, seq, target = _unpack(us, u, grid)
    errs = np.array([_lr(v - target, r, grid) for v in seq])
    envelope = np.maximum.accumulate(errs[::-1])[::-1]
    why = _hypotheses(seq, target, r, grid, eta)
    if why:
        return Verdict("vacuous", tuple(envelope), why)
    if envelope[-1] <= tol:
        return Verdict("pass", tuple(envelope))
    return Verdict("fail", tuple(envelope), f"||u_n - u||_r = {envelope[-1]:.3g} > {tol:g}")


def product_limit_check(
    us: Sequence,
    u,
    vs: Sequence,
    v,
    r: float,
    s: float,
    grid: GridSpec | None = None,
    eta: float = 1e-6,
    tol: float = 1e-2,
) -> Verdict:
    """``int |u_n v_n - u v| -> 0`` and ``int u_n v_n -> int u v`` for conjugate ``r, s``."""
    if not (r > 1 and s > 1) or abs(1 / r + 1 / s - 1) > 1e-12:
        raise ValueError(f"exponents r={r}, s={s} are not conjugate")
    grid, useq, ut = _unpack(us, u, grid)
    _, vseq, vt = _unpack(vs, v, grid)
    if len(useq) != len(vseq):
        raise ValueError("sequences must have the same length")
    errs = np.array([float(np.abs(a * b - ut * vt).sum() * grid.cell_volume) for a, b in zip(useq, vseq)])
    envelope = np.maximum.accumulate(errs[::-1])[::-1]
    why = _hypotheses(useq, ut, r, grid, eta) or _hypotheses(vseq, vt, s, grid, eta)
    if why:
        return Verdict("vacuous", tuple(envelope), why)
    pair_gap = abs(float(((useq[-1] * vseq[-1]).sum() - (ut * vt).sum()) * grid.cell_volume))
    if envelope[-1] <= tol and pair_gap <= tol:
        return Verdict("pass", tuple(envelope))
    return Verdict("fail", tuple(envelope), f"product error {envelope[-1]:.3g} > {tol:g}")


def _unpack(seq, target, grid):
    if isinstance(target, ScalarField):
        grid = target.grid
        target = target.values
    if grid is None:
        raise ValueError("grid required for raw arrays")
    vals = [x.values if isinstance(x, ScalarField) else np.asarray(x, dtype=float) for x in seq]
    if not vals:
        raise ValueError("empty sequence")
    return grid, vals, np.asarray(target, dtype=float)


# -- randomized inequality suite ----------------------------------------------


REL_TOL = 1e-10
TINY = 1e-300


@dataclass(frozen=True)
class Draw:
    """Random lattice data for one draw of the property suite."""

    grid: GridSpec
    t: float
    u: np.ndarray  # (S, *shape): time samples of u
    f: np.ndarray  # (S, *shape)
    g: np.ndarray  # (S, K, *shape)
    fvec: np.ndarray  # (dim, *shape)
    scalars: np.ndarray  # (3, 64) nonnegative a, b, c


def draw_seed(seed: int, draw: int) -> int:
    return mix_seed(seed, draw)


def make_draw(rng: np.random.Generator) -> Draw:
    dim = int(rng.integers(1, 3))
    grid = GridSpec(dim, 16 if dim == 1 else 8, float(rng.uniform(0.5, 2.0)))
    S = 8
    K = int(rng.integers(0, 4))

    def field(*lead):
        if rng.random() < 0.05:
            return np.zeros(lead + grid.shape)
        scale = 10.0 ** rng.uniform(-3, 3)
        return scale * rng.standard_normal(lead + grid.shape)

    scalars = np.abs(rng.standard_normal((3, 64))) * 10.0 ** rng.uniform(-3, 3, size=(3, 1))
    scalars[:, :2] = [[0, 1], [0, 1], [0, 1]]
    return Draw(grid, float(rng.uniform(0.01, 10.0)), field(S), field(S), field(S, K), field(dim), scalars)


def _gamma_exp(gamma: float, p: float, q: float) -> float:
    """``gamma^{p/q}`` with the convention gamma = 1 when ``q = 0``."""
    return 1.0 if q == 0 else gamma ** (p / q)


def ineq_young_f(d: Draw, p: float, gamma: float):
    """Time integral of ``|u|^{p-1}|f|`` split by Young's inequality, pointwise in x."""
    ds = d.t / d.u.shape[0]
    lhs = (np.abs(d.u) ** (p - 1) * np.abs(d.f)).sum(axis=0) * ds
    rhs = gamma ** (p / (p - 1)) / d.t * (np.abs(d.u) ** p).sum(axis=0) * ds + d.t ** (p - 1) / gamma**p * (
        np.abs(d.f) ** p
    ).sum(axis=0) * ds
    return lhs, rhs


def ineq_young_g(d: Draw, p: float, gamma: float):
    """Time integral of ``|u|^{p-2}|g|^2`` split by Young's inequality (gamma = 1 at p = 2)."""
    if p == 2:
        gamma = 1.0
    ds = d.t / d.u.shape[0]
    gl2 = np.sqrt((d.g * d.g).sum(axis=1))
    w = np.ones_like(d.u) if p == 2 else np.abs(d.u) ** (p - 2)
    lhs = (w * gl2**2).sum(axis=0) * ds
    rhs = _gamma_exp(gamma, p, p - 2) / d.t * (np.abs(d.u) ** p).sum(axis=0) * ds + d.t ** ((p - 2) / 2) / gamma ** (
        p / 2
    ) * (gl2**p).sum(axis=0) * ds
    return lhs, rhs


def ineq_minkowski(d: Draw, p: float, gamma: float):
    """``sum_k (int |u|^{p-1}|g^k|)^2 <= (int |u|^{p-1}|g|_l2)^2``."""
    grid = d.grid
    a = np.abs(d.u) ** (p - 1)  # (S, *shape)
    pairs = lp_pow_values(np.expand_dims(a, 1) * np.abs(d.g), 1, grid)  # (S, K)
    lhs = (pairs**2).sum(axis=-1)
    rhs = lp_pow_values(a * np.sqrt((d.g * d.g).sum(axis=1)), 1, grid) ** 2
    return lhs, rhs


def ineq_holder(d: Draw, p: float, gamma: float):
    """``(int |u|^{p-1}|g|_l2)^2 <= ||u||_p^{2(p-1)} ||g||_p^2``."""
    grid = d.grid
    gl2 = np.sqrt((d.g * d.g).sum(axis=1))
    lhs = lp_pow_values(np.abs(d.u) ** (p - 1) * gl2, 1, grid) ** 2
    rhs = lp_pow_values(d.u, p, grid) ** (2 * (p - 1) / p) * lp_pow_values(gl2, p, grid) ** (2 / p)
    return lhs, rhs


def ineq_abc_scalar(d: Draw, p: float, gamma: float):
    """``a^{p-2} b c <= a^p + b^p + c^p`` for nonnegative reals."""
    a, b, c = d.scalars
    w = np.ones_like(a) if p == 2 else a ** (p - 2)
    return w * b * c, a**p + b**p + c**p


def ineq_abc_integral(d: Draw, p: float, gamma: float):
    """``int |u|^{p-2} f^i D_i u <= gamma^{p/(p-2)}/T int|u|^p + T^{(p-2)/2}/gamma^{p/2} int(|f|^p + |Du|^p)``."""
    if p == 2:
        gamma = 1.0
    grid, T = d.grid, d.t
    u = d.u[0]
    du = grad_values(u, grid)
    w = np.ones_like(u) if p == 2 else np.abs(u) ** (p - 2)
    lhs = float((w * (d.fvec * du).sum(axis=0)).sum() * grid.cell_volume)
    fabs = np.sqrt((d.fvec * d.fvec).sum(axis=0))
    duabs = np.sqrt((du * du).sum(axis=0))
    rhs = _gamma_exp(gamma, p, p - 2) / T * lp_pow_values(u, p, grid) + T ** ((p - 2) / 2) / gamma ** (p / 2) * (
        lp_pow_values(fabs, p, grid) + lp_pow_values(duabs, p, grid)
    )
    return lhs, rhs


Inequality = Callable[[Draw, float, float], tuple]

INEQUALITIES: dict[str, Inequality] = {
    "young-f": ineq_young_f,
    "young-g": ineq_young_g,
    "minkowski": ineq_minkowski,
    "holder": ineq_holder,
    "abc-scalar": ineq_abc_scalar,
    "abc-integral": ineq_abc_integral,
}

P_VALUES = (2.0, 3.0, 4.0, 6.0)
GAMMAS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class PropertyRow:
    check: str
    draw: int
    seed: int
    p: float
    gamma: float
    holds: bool
    worst: float = 0.0  # largest (lhs - rhs) / max(|rhs|, tiny), or the error measure
    detail: str = ""


def _holds(lhs, rhs) -> tuple[bool, float]:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(rhs))):
        return False, math.inf
    excess = (lhs - rhs) / np.maximum(np.abs(rhs), TINY)
    ok = np.all(lhs <= rhs + REL_TOL * np.abs(rhs) + TINY)
    return bool(ok), float(excess.max()) if excess.size else 0.0


def inequality_row(name: str, seed: int, draw: int = 0, p: float | None = None, gamma: float | None = None) -> PropertyRow:
    """Evaluate one inequality on the draw generated from ``seed`` (replayable)."""
    rng = np.random.default_rng(seed)
    d = make_draw(rng)
    p = float(rng.choice(P_VALUES)) if p is None else p
    gamma = float(rng.choice(GAMMAS)) if gamma is None else gamma
    ok, worst = _holds(*INEQUALITIES[name](d, p, gamma))
    return PropertyRow(name, draw, seed, p, gamma, ok, worst)


def inequality_suite(draws: int = 1000, seed: int = 0) -> list[PropertyRow]:
    rows = []
    for i in range(draws):
        s = draw_seed(seed, i)
        for name in INEQUALITIES:
            rows.append(inequality_row(name, s, i))
    return rows


# -- randomized convergence-lemma and mollifier rows --------------------------


def scheffe_row(seed: int, draw: int = 0) -> PropertyRow:
    rng = np.random.default_rng(seed)
    grid = GridSpec(int(rng.integers(1, 3)), 8 + 2 * int(rng.integers(0, 5)), float(rng.uniform(0.5, 2)))
    r = float(rng.uniform(1.0, 6.0))
    u = rng.standard_normal(grid.shape) * 10.0 ** rng.uniform(-2, 2)
    rho = rng.uniform(-1, 1, size=grid.shape)
    us = [u + 2.0**-k * rho for k in range(1, 41)]
    v = scheffe_check(us, u, r, grid)
    return PropertyRow("scheffe", draw, seed, r, 0.0, v.status == "pass", v.errors[-1], v.detail)


def product_limit_row(seed: int, draw: int = 0) -> PropertyRow:
    rng = np.random.default_rng(seed)
    grid = GridSpec(int(rng.integers(1, 3)), 8 + 2 * int(rng.integers(0, 5)), float(rng.uniform(0.5, 2)))
    r = float(rng.uniform(1.1, 6.0))
    s = r / (r - 1)
    u = rng.standard_normal(grid.shape)
    v = rng.standard_normal(grid.shape)
    ru, rv = rng.uniform(-1, 1, size=(2,) + grid.shape)
    us = [u + 2.0**-k * ru for k in range(1, 41)]
    vs = [v + 2.0**-k * rv for k in range(1, 41)]
    verdict = product_limit_check(us, u, vs, v, r, s, grid)
    return PropertyRow("product-limit", draw, seed, r, 0.0, verdict.status == "pass", verdict.errors[-1], verdict.detail)


MOLLIFIER_TOL = 1e-12


def random_kernel_field(rng: np.random.Generator):
    dim = int(rng.integers(1, 3))
    n = 32 if dim == 1 else 16
    grid = GridSpec(dim, n, 1.0)
    eps = float(rng.uniform(2 * grid.h, 0.2499))
    k = make_kernel(grid, eps)
    u = rng.standard_normal(grid.shape) * 10.0 ** rng.uniform(-3, 3)
    return grid, k, u


def mollifier_rows(seed: int, draw: int = 0) -> list[PropertyRow]:
    """Contraction, pointwise power bound and mass conservation on one random field."""
    rng = np.random.default_rng(seed)
    grid, k, u = random_kernel_field(rng)
    p = float(rng.choice(P_VALUES))
    mu = mollify_values(u, k)
    rows = []
    a, b = lp_pow_values(mu, p, grid), lp_pow_values(u, p, grid)
    rows.append(PropertyRow("mollifier-contraction", draw, seed, p, 0.0, bool(a <= b * (1 + MOLLIFIER_TOL)), float(a / b - 1)))
    lhs = np.abs(mu) ** p
    rhs = mollify_values(np.abs(u) ** p, k)
    scale = float(rhs.max())
    worst = float((lhs - rhs).max() / scale)
    rows.append(PropertyRow("mollifier-power", draw, seed, p, 0.0, worst <= MOLLIFIER_TOL, worst))
    m1, m0 = mu.sum(), u.sum()
    err = abs(m1 - m0) / max(np.abs(u).sum(), TINY)
    rows.append(PropertyRow("mollifier-mass", draw, seed, p, 0.0, bool(err <= MOLLIFIER_TOL), float(err)))
    return rows


def mollifier_convergence(u: np.ndarray, grid: GridSpec, eps_list: Sequence[float], p: float = 2.0) -> np.ndarray:
    """``||u^(eps) - u||_p`` for each ``eps``."""
    return np.array([lp_pow_values(mollify_values(u, make_kernel(grid, e)) - u, p, grid) ** (1 / p) for e in eps_list])


def property_suite(draws: int = 1000, seed: int = 0) -> list[PropertyRow]:
    """Every randomized property row: inequalities, convergence lemmas, mollifier invariants."""
    if draws < 100:
        raise ValueError("property suite needs at least 100 draws")
    rows = inequality_suite(draws, seed)
    for i in range(draws):
        s = draw_seed(seed, i)
        rows.append(scheffe_row(s, i))
        rows.append(product_limit_row(s, i))
        rows.extend(mollifier_rows(s, i))
    return rows
