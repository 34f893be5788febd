import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelp import bounds
from spdelp.bounds import (
    INEQUALITIES,
    McEstimate,
    Verdict,
    drift_only_bound_check,
    energy_identity_check,
    inequality_row,
    mix_seed,
    mollifier_rows,
    product_limit_check,
    product_limit_row,
    property_suite,
    scheffe_check,
    scheffe_row,
    simple_g_bound_check,
    step_process_paths,
    sup_estimate_campaign,
    sup_estimate_check,
)
from spdelp.lattice import GridSpec, ScalarField
from spdelp.noise import TimeGrid, sample_noise
from spdelp.process import CoefficientSpec, HittingTime, StepProcessSpec, collect_path
from spdelp.scenario import ScenarioSpec, catalog_scenario


def _brownian_p2():
    d = catalog_scenario("const-noise-p4").to_dict()
    d["p"] = 2.0
    d["name"] = "const-noise-p2"
    return ScenarioSpec.from_dict(d)


def test_mc_estimate():
    e = McEstimate.from_samples(np.array([1.0, 3.0]), 5)
    assert e.mean == 2.0 and e.std_error == 1.0 and e.replicates == 2
    with pytest.raises(ValueError):
        McEstimate.from_samples(np.array([1.0]), 0)


def test_mix_seed():
    assert mix_seed(1, 2) == mix_seed(1, 2)
    assert mix_seed(1, 2) != mix_seed(2, 1)
    assert 0 <= mix_seed(-1, 2**70) < 2**63


# -- sup estimate -------------------------------------------------------------


def test_sup_estimate_trivial_scenario():
    rep = sup_estimate_check(catalog_scenario("zero"), replicates=50)
    assert rep.lhs_est.mean == 0.0 and rep.ratio == 0.0 and not rep.violated


def test_sup_estimate_needs_replicates():
    with pytest.raises(ValueError):
        sup_estimate_check(catalog_scenario("zero"), replicates=49)


def test_brownian_ratio_within_doob():
    # E sup_t |w_t|^2 <= 4 E |w_T|^2 = 4 T, and the right-hand side is T
    rep = sup_estimate_check(_brownian_p2(), replicates=400, seed=1)
    assert 1.0 <= rep.ratio <= 4.5
    assert rep.rhs_components["g"] == pytest.approx(1.0, rel=1e-12)


def test_ratio_is_scale_invariant():
    spec = catalog_scenario("mixed-explicit-2d")
    a = sup_estimate_check(spec, replicates=64, seed=4)
    b = sup_estimate_check(spec.scaled(3.0), replicates=64, seed=4)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-9)


def test_campaign_reports_max():
    specs = [catalog_scenario("zero"), catalog_scenario("const-noise-p4")]
    camp = sup_estimate_campaign(specs, replicates=64, seed=3)
    assert camp.implied_N == max(r.ratio for r in camp.reports)
    assert camp.reports[0].ratio == 0.0 and not camp.violated


def test_violation_flag():
    lhs = McEstimate(100.0, 1.0, 100, 0)
    rep = bounds._bound_report("x", lhs, {"initial": 1.0, "g": 1.0}, n_cal=10.0)
    assert rep.violated and rep.excess_N == pytest.approx(99.0)
    assert not bounds._bound_report("x", lhs, {"initial": 1.0, "g": 10.0}, n_cal=10.0).violated


# -- energy relation ----------------------------------------------------------


def test_energy_trivial_scenario():
    rep = energy_identity_check(catalog_scenario("zero"), replicates=20)
    assert rep.gap == 0.0 and rep.identity_holds and rep.direction_holds


def test_energy_identity_brownian():
    rep = energy_identity_check(_brownian_p2(), replicates=200, seed=2)
    assert rep.identity_holds
    assert rep.lhs.mean == pytest.approx(1.0, abs=4 * rep.lhs.std_error)


def test_energy_unbounded_cap_rejected():
    spec = catalog_scenario("stopped-hitting-p4")
    d = spec.to_dict()
    d["stopping"]["cap"] = 5.0
    with pytest.raises(ValueError):
        energy_identity_check(ScenarioSpec.from_dict(d), replicates=10)


# -- pointwise-sup bounds -----------------------------------------------------


def _drift_path(f0, tg, grid, u0=None):
    u0 = np.zeros(grid.shape) if u0 is None else u0
    coeffs = CoefficientSpec.explicit(grid, 0, f0=f0)
    return collect_path(u0, coeffs, np.zeros((0, tg.M)), tg)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_drift_only_constant_forcing_is_sharp(p):
    grid, tg = GridSpec(1, 16), TimeGrid(2.0, 64)
    f = np.sin(2 * np.pi * grid.coords()[0]) + 0.5
    rep = drift_only_bound_check([_drift_path(f, tg, grid)], p)
    assert rep.ratio == pytest.approx(1.0, rel=1e-12)
    assert rep.lhs_est.std_error == 0.0 and rep.lhs_est.replicates == 1


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_drift_only_time_varying_below_one(p):
    grid, tg = GridSpec(1, 16), TimeGrid(1.0, 64)
    x = grid.coords()[0]
    path = _drift_path(lambda t: np.cos(3 * t) * (1 + x), tg, grid, u0=np.ones(16))
    assert drift_only_bound_check([path], p).ratio <= 1.0


def test_drift_only_rejects_noise():
    grid, tg = GridSpec(1, 8), TimeGrid(1.0, 8)
    noise = sample_noise(tg, 1, 0)
    path = collect_path(np.zeros(8), CoefficientSpec.explicit(grid, 1, g=np.ones((1, 8))), noise.dW, tg)
    with pytest.raises(ValueError):
        drift_only_bound_check([path], 2.0)


def test_simple_g_bound_on_step_processes():
    grid = GridSpec(1, 16)
    gik = np.random.default_rng(0).standard_normal((2, 2) + grid.shape)
    sp = StepProcessSpec(grid, gik, (0.0, HittingTime(0, 0.5, cap=0.5), 1.0))
    paths = step_process_paths(sp, TimeGrid(1.0, 128), 100, seed=7)
    rep = simple_g_bound_check(paths, 4.0)
    assert 0 < rep.ratio < 20 and math.isfinite(rep.ratio)
    assert not rep.violated


# -- convergence lemmas -------------------------------------------------------


def test_scheffe_verdicts():
    grid = GridSpec(1, 16)
    u = np.sin(2 * np.pi * grid.coords()[0])
    good = [u + 2.0**-k for k in range(1, 41)]
    assert scheffe_check(good, u, 2.0, grid).status == "pass"
    spike = [u + (np.arange(16) == k % 16) * 5.0 for k in range(40)]
    v = scheffe_check(spike, u, 2.0, grid)
    assert v.status == "vacuous" and "measure" in v.detail and v.ok
    sf = ScalarField(grid, u)
    assert scheffe_check([sf, sf], sf, 3.0).status == "pass"


def test_scheffe_envelope_is_monotone():
    grid = GridSpec(1, 16)
    u = np.ones(16)
    seq = [u + (-1) ** k * 2.0**-k for k in range(1, 30)]
    errs = np.array(scheffe_check(seq, u, 2.0, grid).errors)
    assert np.all(np.diff(errs) <= 0)


def test_product_limit():
    grid = GridSpec(2, 8)
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2,) + grid.shape)
    us = [u + 2.0**-k for k in range(1, 41)]
    vs = [v - 2.0**-k for k in range(1, 41)]
    assert product_limit_check(us, u, vs, v, 1.5, 3.0, grid).status == "pass"
    with pytest.raises(ValueError, match="not conjugate"):
        product_limit_check(us, u, vs, v, 3.0, 3.0, grid)
    with pytest.raises(ValueError):
        product_limit_check(us, u, vs[:-1], v, 2.0, 2.0, grid)


def test_verdict_ok():
    assert Verdict("pass").ok and Verdict("vacuous").ok and not Verdict("fail").ok


# -- randomized inequality suite ----------------------------------------------


@given(st.integers(0, 2**63 - 1), st.sampled_from(sorted(INEQUALITIES)))
def test_inequalities_hold(seed, name):
    row = inequality_row(name, seed)
    assert row.holds, row


@pytest.mark.parametrize("name", sorted(INEQUALITIES))
@pytest.mark.parametrize("p", [2.0, 6.0])
@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_inequalities_hold_at_fixed_parameters(name, p, gamma):
    for seed in range(20):
        assert inequality_row(name, seed, p=p, gamma=gamma).holds


def test_inequality_rows_replay():
    a = inequality_row("holder", 99)
    b = inequality_row("holder", 99)
    assert a == b


def test_holds_detects_violation():
    ok, worst = bounds._holds(np.array([1.0, 2.0]), np.array([1.0, 1.0]))
    assert not ok and worst == pytest.approx(1.0)
    assert bounds._holds(np.zeros(3), np.zeros(3))[0]
    assert not bounds._holds(np.array([np.nan]), np.array([1.0]))[0]


@given(st.integers(0, 2**63 - 1))
def test_lemma_and_mollifier_rows(seed):
    assert scheffe_row(seed).holds
    assert product_limit_row(seed).holds
    assert all(r.holds for r in mollifier_rows(seed))


def test_property_suite_minimum_draws():
    with pytest.raises(ValueError):
        property_suite(99)


# -- noise truncation ---------------------------------------------------------


def _geometric_modes(K):
    d = catalog_scenario("const-noise-p4").to_dict()
    d.update(name="geometric-modes", p=2.0)
    d["noise"]["K"] = K
    d["coefficients"]["g"] = [{"profile": "constant", "amplitude": 2.0**-k} for k in range(K)]
    return ScenarioSpec.from_dict(d)


def test_truncation_gap_matches_dropped_variance():
    # additive noise: u^K' - u^K = -sum_{k >= K'} g^k w^k_T, so the mean
    # squared L2 gap is T len sum_{k >= K'} 4^-k
    spec = _geometric_modes(6)
    rows = bounds.truncation_study(spec, [0, 1, 2, 4, 6], replicates=400, seed=11)
    for row in rows:
        want = sum(4.0**-k for k in range(row.K, 6))
        assert abs(row.mean_gap - want) <= 4 * row.std_error + 1e-15
    gaps = [r.mean_gap for r in rows]
    assert np.all(np.diff(gaps) < 0) and gaps[-1] == 0.0


def test_truncation_study_on_feedback_scenario():
    rows = bounds.truncation_study(catalog_scenario("heat-multiplicative-2d"), [0, 1, 2], replicates=20)
    assert rows[-1].mean_gap == 0.0 and rows[0].mean_gap > rows[1].mean_gap >= 0.0


def test_truncation_levels_checked():
    with pytest.raises(ValueError):
        bounds.truncation_study(_geometric_modes(2), [3])
