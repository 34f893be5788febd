"""Reproducible experiment descriptions and the shipped scenario catalog.

A :class:`ScenarioSpec` is pure data: grid, time grid, exponent ``p``, noise
truncation ``K``, initial profile, coefficient recipes and stopping rule. It
round-trips through a TOML document with the sections ``[grid]``, ``[time]``,
``[initial]``, ``[coefficients]``, ``[noise]`` and ``[stopping]``; unknown or
missing keys are errors.

Profiles (``profile = ...``) and their keys:

* ``zero``
* ``constant``: ``amplitude``
* ``bump``: ``amplitude``, ``center``, ``radius``
* ``sine``: ``amplitude``, ``wavenumber``, ``phase``  (``a sin(2 pi k.x / L + phase)``)
* ``gaussian``: ``amplitude``, ``center``, ``width``  (periodized)

Any coefficient profile may add ``modulation = w`` to multiply it by
``cos(2 pi w t)``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ito import StoppingRule
from .lattice import GridSpec, LatticeError, ScalarField, bump_values, lp_pow_values
from .noise import TimeGrid
from .process import CoefficientSpec


class ScenarioError(ValueError):
    pass


PROFILE_KEYS = {
    "zero": set(),
    "constant": {"amplitude"},
    "bump": {"amplitude", "center", "radius"},
    "sine": {"amplitude", "wavenumber", "phase"},
    "gaussian": {"amplitude", "center", "width"},
}


def _check_keys(where: str, d: dict, required: set, optional: set = frozenset()):
    missing = required - d.keys()
    unknown = d.keys() - required - optional
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")


def _check_profile(where: str, recipe: dict, allow_modulation: bool):
    if not isinstance(recipe, dict) or "profile" not in recipe:
        raise ScenarioError(f"{where}: profile recipe needs a 'profile' key")
    kind = recipe["profile"]
    if kind not in PROFILE_KEYS:
        raise ScenarioError(f"{where}: unknown profile {kind!r}")
    optional = {"modulation"} if allow_modulation else set()
    _check_keys(where, recipe, PROFILE_KEYS[kind] | {"profile"}, optional)


def profile_values(recipe: dict, grid: GridSpec) -> np.ndarray:
    """Spatial part of a profile recipe sampled on ``grid``."""
    kind = recipe["profile"]
    if kind == "zero":
        return np.zeros(grid.shape)
    a = float(recipe["amplitude"])
    if kind == "constant":
        return np.full(grid.shape, a)
    if kind == "bump":
        r = float(recipe["radius"])
        if not 0 < r < grid.length / 2:
            raise ScenarioError(f"bump radius {r} outside (0, L/2)")
        return a * bump_values(grid, recipe["center"], r)
    if kind == "sine":
        k = np.asarray(recipe["wavenumber"], dtype=float)
        if k.shape != (grid.dim,):
            raise ScenarioError(f"sine wavenumber needs {grid.dim} entries")
        phase = sum(ki * xi for ki, xi in zip(k, grid.coords())) * (2 * np.pi / grid.length)
        return a * np.sin(phase + float(recipe["phase"]))
    if kind == "gaussian":
        s = float(recipe["width"])
        if s <= 0:
            raise ScenarioError("gaussian width must be positive")
        c = np.asarray(recipe["center"], dtype=float)
        if c.shape != (grid.dim,):
            raise ScenarioError(f"gaussian center needs {grid.dim} entries")
        out = np.zeros(grid.shape)
        L = grid.length
        for image in np.ndindex(*(3,) * grid.dim):
            shift = (np.asarray(image) - 1) * L
            r2 = sum((x - ci - si) ** 2 for x, ci, si in zip(grid.coords(), c, shift))
            out += np.exp(-r2 / (2 * s * s))
        return a * out
    raise ScenarioError(f"unknown profile {kind!r}")


def profile_evaluator(recipe: dict, grid: GridSpec):
    """Array (constant in time) or ``t -> array`` for a coefficient recipe."""
    arr = profile_values(recipe, grid)
    w = float(recipe.get("modulation", 0.0))
    if w == 0.0:
        return arr
    return lambda t: arr * math.cos(2 * math.pi * w * t)


def _is_zero(recipe: dict) -> bool:
    return recipe["profile"] == "zero" or float(recipe.get("amplitude", 0.0)) == 0.0


def scaled_recipe(recipe: dict, c: float) -> dict:
    out = dict(recipe)
    if "amplitude" in out:
        out["amplitude"] = float(out["amplitude"]) * c
    return out


@dataclass(frozen=True)
class CoefficientRecipe:
    mode: str = "explicit"
    f0: dict = field(default_factory=lambda: {"profile": "zero"})
    fvec: tuple[dict, ...] = ()
    g: tuple[dict, ...] = ()
    diffusion: float = 0.0
    reaction: float = 0.0
    noise_mult: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fvec", tuple(dict(r) for r in self.fvec))
        object.__setattr__(self, "g", tuple(dict(r) for r in self.g))
        object.__setattr__(self, "noise_mult", tuple(float(c) for c in self.noise_mult))
        object.__setattr__(self, "diffusion", float(self.diffusion))
        object.__setattr__(self, "reaction", float(self.reaction))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "mode": self.mode,
            "f0": dict(self.f0),
            "fvec": [dict(r) for r in self.fvec],
            "g": [dict(r) for r in self.g],
        }
        if self.mode == "feedback":
            d.update(diffusion=self.diffusion, reaction=self.reaction, noise_mult=list(self.noise_mult))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CoefficientRecipe:
        mode = d.get("mode")
        base = {"mode", "f0", "fvec", "g"}
        if mode == "explicit":
            _check_keys("[coefficients]", d, base)
        elif mode == "feedback":
            _check_keys("[coefficients]", d, base | {"diffusion", "reaction", "noise_mult"})
        else:
            raise ScenarioError(f"[coefficients]: unknown mode {mode!r}")
        return cls(
            mode=mode,
            f0=dict(d["f0"]),
            fvec=tuple(d["fvec"]),
            g=tuple(d["g"]),
            diffusion=d.get("diffusion", 0.0),
            reaction=d.get("reaction", 0.0),
            noise_mult=tuple(d.get("noise_mult", ())),
        )


class BuiltScenario(NamedTuple):
    name: str
    grid: GridSpec
    tg: TimeGrid
    u0: ScalarField
    coeffs: CoefficientSpec
    tau: StoppingRule
    p: float
    K: int
    seed: int


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    grid: GridSpec
    tg: TimeGrid
    p: float
    K: int
    u0: dict
    coeffs: CoefficientRecipe
    tau: StoppingRule = StoppingRule()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "u0", dict(self.u0))

    def build(self) -> BuiltScenario:
        return build(self)

    def with_time(self, tg: TimeGrid) -> ScenarioSpec:
        return replace(self, tg=tg)

    def scaled(self, c: float) -> ScenarioSpec:
        """Multiply ``u0`` and every additive coefficient amplitude by ``c``.

        The path scales by ``c``, so a hitting level is rescaled as well
        (``|c|^p`` for the norm, ``|c|^(2p)`` for xi) to keep the same stopping index.
        """
        co = self.coeffs
        tau = self.tau
        if tau.kind == "hitting" and math.isfinite(tau.level):
            power = self.p if tau.functional == "lp_norm_pow" else 2 * self.p
            tau = replace(tau, level=tau.level * abs(c) ** power)
        return replace(
            self,
            tau=tau,
            u0=scaled_recipe(self.u0, c),
            coeffs=replace(
                co,
                f0=scaled_recipe(co.f0, c),
                fvec=tuple(scaled_recipe(r, c) for r in co.fvec),
                g=tuple(scaled_recipe(r, c) for r in co.g),
            ),
        )

    def is_deterministic(self) -> bool:
        co = self.coeffs
        return self.K == 0 or (all(_is_zero(r) for r in co.g) and not any(co.noise_mult))

    def is_degenerate(self) -> bool:
        """No drift and no noise at all: the path never moves."""
        co = self.coeffs
        drift = not _is_zero(co.f0) or any(not _is_zero(r) for r in co.fvec)
        if co.mode == "feedback":
            drift = drift or co.diffusion != 0 or co.reaction != 0
        return self.is_deterministic() and not drift

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        stop: dict[str, Any] = {"kind": self.tau.kind}
        if self.tau.kind == "hitting":
            stop.update(level=self.tau.level, functional=self.tau.functional)
        if self.tau.cap is not None:
            stop["cap"] = self.tau.cap
        return {
            "name": self.name,
            "p": self.p,
            "grid": {"dim": self.grid.dim, "n": self.grid.n, "len": self.grid.length},
            "time": {"T": self.tg.T, "M": self.tg.M},
            "initial": dict(self.u0),
            "coefficients": self.coeffs.to_dict(),
            "noise": {"K": self.K, "seed": self.seed},
            "stopping": stop,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioSpec:
        _check_keys(
            "scenario",
            d,
            {"name", "p", "grid", "time", "initial", "coefficients", "noise", "stopping"},
        )
        try:
            _check_keys("[grid]", d["grid"], {"dim", "n", "len"})
            _check_keys("[time]", d["time"], {"T", "M"})
            _check_keys("[noise]", d["noise"], {"K", "seed"})
            st = d["stopping"]
            if st.get("kind") == "hitting":
                _check_keys("[stopping]", st, {"kind", "level", "functional"}, {"cap"})
            else:
                _check_keys("[stopping]", st, {"kind"}, {"cap"})
            grid = GridSpec(int(d["grid"]["dim"]), int(d["grid"]["n"]), float(d["grid"]["len"]))
            tg = TimeGrid(float(d["time"]["T"]), int(d["time"]["M"]))
            tau = StoppingRule(
                kind=st["kind"],
                level=float(st.get("level", math.inf)),
                functional=st.get("functional", "lp_norm_pow"),
                cap=None if "cap" not in st else float(st["cap"]),
            )
            spec = cls(
                name=str(d["name"]),
                grid=grid,
                tg=tg,
                p=float(d["p"]),
                K=int(d["noise"]["K"]),
                u0=dict(d["initial"]),
                coeffs=CoefficientRecipe.from_dict(d["coefficients"]),
                tau=tau,
                seed=int(d["noise"]["seed"]),
            )
        except (TypeError, AttributeError, LatticeError) as exc:
            raise ScenarioError(str(exc)) from exc
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc
        validate(spec)
        return spec

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> ScenarioSpec:
        try:
            d = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"malformed scenario file: {exc}") from exc
        return cls.from_dict(d)


def load(path: str | Path) -> ScenarioSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    return ScenarioSpec.from_toml(text)


def dump(spec: ScenarioSpec, path: str | Path):
    Path(path).write_text(spec.to_toml())


def validate(spec: ScenarioSpec):
    if not spec.p >= 2:
        raise ScenarioError(f"p must be >= 2, got {spec.p}")
    if spec.K < 0:
        raise ScenarioError("K must be >= 0")
    co = spec.coeffs
    _check_profile("[initial]", spec.u0, allow_modulation=False)
    _check_profile("[coefficients].f0", co.f0, allow_modulation=True)
    for r in co.fvec:
        _check_profile("[coefficients].fvec", r, allow_modulation=True)
    for r in co.g:
        _check_profile("[coefficients].g", r, allow_modulation=True)
    if len(co.g) != spec.K:
        raise ScenarioError(f"[coefficients].g has {len(co.g)} entries, K = {spec.K}")
    if co.mode == "explicit":
        if len(co.fvec) != spec.grid.dim:
            raise ScenarioError(f"[coefficients].fvec needs {spec.grid.dim} entries")
    else:
        if co.fvec:
            raise ScenarioError("feedback mode sets fvec = diffusion * grad u; give fvec = []")
        if len(co.noise_mult) != spec.K:
            raise ScenarioError(f"noise_mult needs {spec.K} entries")
        if co.diffusion < 0:
            raise ScenarioError("diffusion must be >= 0")
        if co.diffusion > 0:
            bound = spec.grid.h**2 / (2 * spec.grid.dim * co.diffusion)
            if spec.tg.dt > bound:
                raise ScenarioError(
                    f"stability violation: dt={spec.tg.dt:.4g} > h^2/(2 dim a) = {bound:.4g}"
                )


def build(spec: ScenarioSpec) -> BuiltScenario:
    validate(spec)
    grid, co, K = spec.grid, spec.coeffs, spec.K
    try:
        u0 = ScalarField(grid, profile_values(spec.u0, grid))
        f0 = profile_evaluator(co.f0, grid)
        gs = [profile_evaluator(r, grid) for r in co.g]
    except (LatticeError, KeyError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc
    g = _stack_evaluators(gs, (K,) + grid.shape)
    if co.mode == "explicit":
        fvec = _stack_evaluators([profile_evaluator(r, grid) for r in co.fvec], (grid.dim,) + grid.shape)
        coeffs = CoefficientSpec.explicit(grid, K, f0=f0, fvec=fvec, g=g)
    else:
        coeffs = CoefficientSpec.feedback(
            grid, K, co.diffusion, co.reaction, co.noise_mult, f0=f0, g=g
        )
    return BuiltScenario(spec.name, grid, spec.tg, u0, coeffs, spec.tau, spec.p, K, spec.seed)


def _stack_evaluators(items: list, shape: tuple[int, ...]):
    if not any(callable(x) for x in items):
        return np.stack(items) if items else np.zeros(shape)
    parts = [x if callable(x) else (lambda t, a=x: a) for x in items]
    return lambda t: np.stack([f(t) for f in parts])


# -- shipped catalog ----------------------------------------------------------

ZERO = {"profile": "zero"}


def _explicit(dim: int, K: int, f0=ZERO, fvec=None, g=None) -> CoefficientRecipe:
    return CoefficientRecipe(
        "explicit",
        f0=f0,
        fvec=tuple(fvec) if fvec is not None else (ZERO,) * dim,
        g=tuple(g) if g is not None else (ZERO,) * K,
    )


def _catalog() -> dict[str, ScenarioSpec]:
    g1 = GridSpec(1, 32, 1.0)
    g64 = GridSpec(1, 64, 1.0)
    g2 = GridSpec(2, 16, 1.0)
    specs = [
        ScenarioSpec("zero", g1, TimeGrid(1.0, 64), 2.0, 1, ZERO, _explicit(1, 1), seed=11),
        ScenarioSpec(
            "const-noise-p4",
            g1,
            TimeGrid(1.0, 256),
            4.0,
            1,
            ZERO,
            _explicit(1, 1, g=[{"profile": "constant", "amplitude": 1.0}]),
            seed=20240601,
        ),
        ScenarioSpec(
            "deterministic-bump",
            g64,
            TimeGrid(1.0, 1024),
            4.0,
            0,
            ZERO,
            _explicit(1, 0, f0={"profile": "bump", "amplitude": 0.2, "center": [0.5], "radius": 0.25}),
            seed=3,
        ),
        ScenarioSpec(
            "heat-feedback",
            g1,
            TimeGrid(0.25, 512),
            2.0,
            1,
            {"profile": "sine", "amplitude": 1.0, "wavenumber": [1], "phase": 0.0},
            CoefficientRecipe(
                "feedback",
                g=({"profile": "bump", "amplitude": 0.5, "center": [0.5], "radius": 0.3},),
                diffusion=1.0,
                reaction=0.0,
                noise_mult=(0.0,),
            ),
            seed=5,
        ),
        ScenarioSpec(
            "heat-multiplicative-2d",
            g2,
            TimeGrid(0.25, 256),
            3.0,
            2,
            {"profile": "gaussian", "amplitude": 1.0, "center": [0.5, 0.5], "width": 0.15},
            CoefficientRecipe(
                "feedback",
                f0={"profile": "bump", "amplitude": 0.5, "center": [0.3, 0.6], "radius": 0.2},
                g=(ZERO, {"profile": "sine", "amplitude": 0.3, "wavenumber": [1, 0], "phase": 0.0}),
                diffusion=0.5,
                reaction=-0.5,
                noise_mult=(0.5, 0.0),
            ),
            seed=8,
        ),
        ScenarioSpec(
            "mixed-explicit-2d",
            g2,
            TimeGrid(0.5, 128),
            3.0,
            2,
            {"profile": "bump", "amplitude": 1.0, "center": [0.5, 0.5], "radius": 0.3},
            _explicit(
                2,
                2,
                f0={"profile": "gaussian", "amplitude": 1.0, "center": [0.4, 0.5], "width": 0.1, "modulation": 1.0},
                fvec=[
                    {"profile": "sine", "amplitude": 0.5, "wavenumber": [1, 1], "phase": 0.3},
                    {"profile": "bump", "amplitude": 0.7, "center": [0.5, 0.5], "radius": 0.25},
                ],
                g=[
                    {"profile": "bump", "amplitude": 1.0, "center": [0.5, 0.5], "radius": 0.35},
                    {"profile": "sine", "amplitude": 0.5, "wavenumber": [0, 1], "phase": 0.0, "modulation": 0.5},
                ],
            ),
            seed=13,
        ),
        ScenarioSpec(
            "stopped-hitting-p4",
            g1,
            TimeGrid(1.0, 256),
            4.0,
            1,
            ZERO,
            _explicit(1, 1, g=[{"profile": "constant", "amplitude": 1.0}]),
            tau=StoppingRule("hitting", level=1.0, functional="lp_norm_pow"),
            seed=21,
        ),
    ]
    return {s.name: s for s in specs}


CATALOG = _catalog()


def catalog_scenario(name: str) -> ScenarioSpec:
    try:
        return CATALOG[name]
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; known: {sorted(CATALOG)}") from None


# -- randomized catalog -------------------------------------------------------


def _random_profile(rng: np.random.Generator, dim: int, modulate: bool = False) -> dict:
    kind = rng.choice(["bump", "sine", "gaussian"])
    amp = float(rng.uniform(0.1, 2.0))
    center = [float(c) for c in rng.uniform(0.3, 0.7, size=dim)]
    if kind == "bump":
        out = {"profile": "bump", "amplitude": amp, "center": center, "radius": float(rng.uniform(0.2, 0.4))}
    elif kind == "sine":
        k = [int(v) for v in rng.integers(0, 3, size=dim)]
        k[int(rng.integers(dim))] = max(1, k[0])
        out = {"profile": "sine", "amplitude": amp, "wavenumber": k, "phase": float(rng.uniform(0, 2 * np.pi))}
    else:
        out = {"profile": "gaussian", "amplitude": amp, "center": center, "width": float(rng.uniform(0.08, 0.2))}
    if modulate and rng.random() < 0.3:
        out["modulation"] = float(rng.uniform(0.5, 2.0))
    return out


def _pow2_at_least(x: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(x, 1.0))))


def randomized_catalog(count: int = 20, master_seed: int = 2024) -> list[ScenarioSpec]:
    """Deterministic list of random but valid scenarios (amplitudes in [0.1, 2])."""
    if count < 1:
        raise ScenarioError("count must be >= 1")
    rng = np.random.default_rng(master_seed)
    out = []
    for i in range(count):
        dim = int(rng.choice([1, 2]))
        grid = GridSpec(dim, 32 if dim == 1 else 16, 1.0)
        p = float(rng.choice([2.0, 3.0, 4.0]))
        K = int(rng.integers(1, 4))
        u0 = _random_profile(rng, dim)
        if rng.random() < 0.5:
            coeffs = CoefficientRecipe(
                "explicit",
                f0=_random_profile(rng, dim, True),
                fvec=tuple(_random_profile(rng, dim, True) for _ in range(dim)),
                g=tuple(_random_profile(rng, dim, True) for _ in range(K)),
            )
            tg = TimeGrid(0.5, 128)
        else:
            a = float(rng.uniform(0.1, 2.0))
            coeffs = CoefficientRecipe(
                "feedback",
                f0=_random_profile(rng, dim, True),
                g=tuple(_random_profile(rng, dim, True) for _ in range(K)),
                diffusion=a,
                reaction=float(rng.uniform(-1.0, 1.0)),
                noise_mult=tuple(float(c) for c in rng.uniform(0.1, 1.0, size=K) / math.sqrt(K)),
            )
            T = 0.25
            M = max(128, _pow2_at_least(T * 2 * dim * a / grid.h**2))
            tg = TimeGrid(T, M)
        if rng.random() < 0.3:
            norm0 = float(lp_pow_values(profile_values(u0, grid), p, grid))
            tau = StoppingRule("hitting", level=float((1.0 + rng.uniform(0.5, 2.0)) * (norm0 + 0.1)))
        else:
            tau = StoppingRule()
        seed = int(rng.integers(0, 2**62))
        spec = ScenarioSpec(f"random-{master_seed}-{i:02d}", grid, tg, p, K, u0, coeffs, tau, seed)
        validate(spec)
        out.append(spec)
    return out
