import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelp.bounds import mollifier_convergence
from spdelp.lattice import GridSpec, ScalarField, SeqField, ell2_values, lp_norm_pow
from spdelp.mollify import KernelResolutionError, make_kernel, mollify, mollify_seq, mollify_values


def direct_convolution(u, w, grid):
    """Independent oracle: explicit double loop over a 1-d periodic grid."""
    n = grid.n
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            out[i] += u[(i - j) % n] * w[j] * grid.h
    return out


def test_kernel_unit_mass_and_support():
    g = GridSpec(1, 64, 1.0)
    k = make_kernel(g, g.length / 8)
    w = k.weights.values
    assert abs(w.sum() * g.cell_volume - 1.0) <= 1e-14
    assert np.all(w >= 0)
    (d,) = g.periodic_offsets((0.0,))
    assert np.all(w[np.abs(d) >= k.eps] == 0)


@pytest.mark.parametrize("eps", [0.01, 0.25, 0.3])
def test_kernel_resolution_errors(eps):
    with pytest.raises(KernelResolutionError, match="kernel resolution error"):
        make_kernel(GridSpec(1, 64, 1.0), eps)


def test_constant_is_fixed_point():
    g = GridSpec(2, 16)
    k = make_kernel(g, 0.2)
    out = mollify(ScalarField.constant(g, 3.7), k).values
    assert np.max(np.abs(out - 3.7)) <= 1e-13


def test_delta_gives_kernel_shape():
    g = GridSpec(1, 32, 1.0)
    k = make_kernel(g, 0.2)
    spike = np.zeros(32)
    spike[5] = 1.0 / g.h
    out = mollify_values(spike, k)
    assert np.max(np.abs(out - np.roll(k.weights.values, 5))) <= 1e-13


def test_matches_direct_convolution(rng):
    g = GridSpec(1, 24, 1.0)
    k = make_kernel(g, 0.2)
    u = rng.standard_normal(24)
    assert np.allclose(mollify_values(u, k), direct_convolution(u, k.weights.values, g), rtol=0, atol=1e-13)


@given(st.integers(0, 2**31), st.sampled_from([2.0, 3.0, 4.0, 7.0]), st.sampled_from([1, 2]))
def test_contraction_and_mass(seed, p, dim):
    g = GridSpec(dim, 16)
    rng = np.random.default_rng(seed)
    k = make_kernel(g, float(rng.uniform(2 * g.h, 0.24)))
    u = ScalarField(g, rng.standard_normal(g.shape))
    mu = mollify(u, k)
    assert lp_norm_pow(mu, p) <= lp_norm_pow(u, p) * (1 + 1e-12)
    assert abs(mu.values.sum() - u.values.sum()) <= 1e-12 * np.abs(u.values).sum()


@given(st.integers(0, 2**31), st.sampled_from([2.0, 3.0, 4.0]))
def test_pointwise_power_bound(seed, p):
    g = GridSpec(1, 32)
    rng = np.random.default_rng(seed)
    k = make_kernel(g, 0.15)
    u = rng.standard_normal(g.shape)
    lhs = np.abs(mollify_values(u, k)) ** p
    rhs = mollify_values(np.abs(u) ** p, k)
    assert np.all(lhs <= rhs + 1e-12 * rhs.max())


def test_mollify_seq_modes():
    g = GridSpec(1, 32)
    k = make_kernel(g, 0.1)
    assert mollify_seq(SeqField(g, np.zeros((0, 32))), k).K == 0
    vals = np.random.default_rng(1).standard_normal((3, 32))
    out = mollify_seq(SeqField(g, vals), k)
    for i in range(3):
        assert np.array_equal(out.values[i], mollify(ScalarField(g, vals[i]), k).values)
    # |g^(eps)|_l2 <= (|g|_l2)^(eps)
    lhs = ell2_values(out.values, g)
    rhs = mollify_values(ell2_values(vals, g), k)
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-15)


def test_grid_mismatch():
    k = make_kernel(GridSpec(1, 32), 0.1)
    with pytest.raises(Exception):
        mollify(ScalarField.zeros(GridSpec(1, 16)), k)


def test_convergence_as_eps_halves():
    g = GridSpec(1, 256, 1.0)
    (x,) = g.coords()
    u = np.sin(2 * np.pi * x) + 0.5 * np.cos(4 * np.pi * x)
    errs = mollifier_convergence(u, g, [1 / 8, 1 / 16, 1 / 32])
    assert np.all(np.diff(errs) < 0)
