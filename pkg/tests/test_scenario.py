import math

import numpy as np
import pytest

from spdelp.ito import run_replicates
from spdelp.lattice import GridSpec
from spdelp.noise import TimeGrid, sample_noise
from spdelp.process import collect_path
from spdelp.scenario import (
    CATALOG,
    ScenarioError,
    ScenarioSpec,
    catalog_scenario,
    dump,
    load,
    profile_values,
    randomized_catalog,
)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_round_trips_through_toml(name, tmp_path):
    spec = catalog_scenario(name)
    path = tmp_path / f"{name}.toml"
    dump(spec, path)
    again = load(path)
    assert again.to_dict() == spec.to_dict()
    assert again.to_toml() == spec.to_toml()


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_builds(name):
    b = catalog_scenario(name).build()
    assert b.u0.grid == b.grid and b.coeffs.K == b.K


def test_unknown_catalog_name():
    with pytest.raises(ScenarioError, match="unknown scenario"):
        catalog_scenario("nope")


def _mutated(mutate):
    d = catalog_scenario("mixed-explicit-2d").to_dict()
    mutate(d)
    return d


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(extra=1),
        lambda d: d["grid"].update(spacing=0.1),
        lambda d: d["coefficients"].update(mode="implicit"),
        lambda d: d["initial"].update(profile="triangle"),
        lambda d: d["initial"].update(amplitude=1.0, width=0.1),
        lambda d: d.pop("noise"),
        lambda d: d["noise"].update(K=3),
        lambda d: d.update(p=1.5),
        lambda d: d["grid"].update(dim=5),
        lambda d: d["time"].update(M=0),
        lambda d: d["coefficients"].update(fvec=[]),
        lambda d: d["stopping"].update(kind="random"),
        lambda d: d["initial"].update(modulation=1.0),
    ],
)
def test_invalid_scenarios_rejected(mutate):
    with pytest.raises(ScenarioError):
        ScenarioSpec.from_dict(_mutated(mutate))


def test_feedback_stability_rejected():
    d = catalog_scenario("heat-feedback").to_dict()
    d["coefficients"]["diffusion"] = 50.0
    with pytest.raises(ScenarioError, match="stability violation"):
        ScenarioSpec.from_dict(d)


def test_malformed_toml():
    with pytest.raises(ScenarioError, match="malformed"):
        ScenarioSpec.from_toml("name = [")


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load(tmp_path / "absent.toml")


def test_profiles():
    g = GridSpec(1, 32, 1.0)
    (x,) = g.coords()
    assert np.all(profile_values({"profile": "zero"}, g) == 0)
    assert np.all(profile_values({"profile": "constant", "amplitude": 2.5}, g) == 2.5)
    s = profile_values({"profile": "sine", "amplitude": 2.0, "wavenumber": [1], "phase": 0.0}, g)
    assert np.allclose(s, 2 * np.sin(2 * np.pi * x), atol=1e-14)
    b = profile_values({"profile": "bump", "amplitude": 3.0, "center": [0.5], "radius": 0.25}, g)
    assert b.max() == 3.0 and b[0] == 0.0
    ga = profile_values({"profile": "gaussian", "amplitude": 1.0, "center": [0.0], "width": 0.1}, g)
    assert ga[0] == pytest.approx(1.0, abs=1e-12) and ga[1] == pytest.approx(ga[-1])


def test_modulated_coefficient_varies_in_time():
    b = catalog_scenario("mixed-explicit-2d").build()
    u = b.u0.values
    assert not np.array_equal(b.coeffs.g(0.0, u), b.coeffs.g(0.3, u))


def test_classification():
    assert catalog_scenario("zero").is_degenerate()
    assert catalog_scenario("deterministic-bump").is_deterministic()
    assert not catalog_scenario("deterministic-bump").is_degenerate()
    assert not catalog_scenario("const-noise-p4").is_deterministic()


def test_randomized_catalog_is_deterministic():
    a = [s.to_dict() for s in randomized_catalog(20, 2024)]
    b = [s.to_dict() for s in randomized_catalog(20, 2024)]
    c = [s.to_dict() for s in randomized_catalog(20, 2025)]
    assert a == b and a != c
    assert len({d["name"] for d in a}) == 20


def test_randomized_catalog_is_valid_and_stays_finite():
    specs = randomized_catalog(20, 2024)
    for s in specs:
        ScenarioSpec.from_toml(s.to_toml())
        batch = run_replicates(s.build(), 8)
        assert np.all(np.isfinite(batch.terminal))
    kinds = {s.coeffs.mode for s in specs}
    assert kinds == {"explicit", "feedback"}
    assert any(s.tau.kind == "hitting" for s in specs)


@pytest.mark.parametrize("name", ["mixed-explicit-2d", "stopped-hitting-p4"])
def test_scaled_scenario_scales_paths(name):
    spec = catalog_scenario(name)
    c = 2.0
    a, b = spec.build(), spec.scaled(c).build()
    noise = sample_noise(a.tg, a.K, seed=3)
    pa = collect_path(a.u0.values, a.coeffs, noise.dW, a.tg).snapshots
    pb = collect_path(b.u0.values, b.coeffs, noise.dW, b.tg).snapshots
    assert np.max(np.abs(pb - c * pa)) <= 1e-12 * max(1.0, np.abs(pb).max())
    if spec.tau.kind == "hitting":
        assert math.isclose(b.tau.level, a.tau.level * c**spec.p)


def test_with_time():
    spec = catalog_scenario("const-noise-p4").with_time(TimeGrid(1.0, 32))
    assert spec.build().tg.M == 32


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_shipped_files_match_catalog(name):
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "scenarios" / f"{name}.toml"
    assert load(path).to_dict() == catalog_scenario(name).to_dict()
