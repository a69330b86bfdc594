import math

import numpy as np
import pytest

from brancolab.branco import RateParams
from brancolab.lattice import custom_lattice, torus_1d
from brancolab.oracle import (
    build_truncated_chain,
    carre_du_champ,
    covariance_formula_check,
    covariance_kernels,
    evolve_function,
    exponential_covariance_bound_check,
    kernel_sum_bounds,
    transient_distribution,
)

SITE1 = custom_lattice(1, [])
TWO_SITE = custom_lattice(2, [(0, 1, 1.0), (1, 0, 1.0)])


def test_state_enumeration_site_major():
    chain = build_truncated_chain(TWO_SITE, RateParams(1, 0, 1, 0), 2)
    assert chain.n_states == 9
    assert chain.index_of([1, 2]) == 5
    assert (chain.states[5] == [1, 2]).all()


def test_generator_rows_sum_to_zero():
    chain = build_truncated_chain(TWO_SITE, RateParams(1, 0.5, 1, 0.5), 3)
    assert np.abs(chain.generator.sum(axis=1)).max() < 1e-12
    # blocked flux present exactly where a birth or inbound jump is capped
    full = chain.index_of([3, 3])
    assert chain.blocked[full] > 0


def test_transient_distribution_at_zero_time():
    chain = build_truncated_chain(SITE1, RateParams(1, 0, 0, 0), 2)
    mu0 = chain.delta([2])
    assert np.allclose(transient_distribution(chain, mu0, 0.0), mu0)


def test_transient_annihilation_closed_form():
    chain = build_truncated_chain(SITE1, RateParams(1, 0, 0, 0), 2)
    for t in (0.2, 1.0):
        dist = transient_distribution(chain, chain.delta([2]), t)
        assert dist[chain.index_of([0])] == pytest.approx(1 - math.exp(-2 * t), abs=1e-10)
        assert dist.sum() == pytest.approx(1.0, abs=1e-10)


def test_chapman_kolmogorov():
    chain = build_truncated_chain(SITE1, RateParams(1, 3, 1, 0), 12)
    mu0 = chain.delta([3])
    one_hop = transient_distribution(chain, mu0, 0.9)
    two_hop = transient_distribution(chain, transient_distribution(chain, mu0, 0.5), 0.4)
    assert np.abs(one_hop - two_hop).max() < 1e-9


def test_evolve_function_is_adjoint_of_distribution_flow():
    chain = build_truncated_chain(SITE1, RateParams(1, 1, 1, 0.5), 6)
    rng = np.random.default_rng(3)
    f = rng.random(chain.n_states)
    mu = rng.random(chain.n_states)
    mu /= mu.sum()
    t = 0.6
    lhs = float(transient_distribution(chain, mu, t) @ f)
    rhs = float(mu @ evolve_function(chain, f, t))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_carre_du_champ_constant_function_vanishes():
    f = lambda s: 3.5
    assert carre_du_champ(f, f, np.array([4]), RateParams(1, 1, 1, 1), SITE1) == 0.0


def test_carre_du_champ_death_only():
    # f = g = x(0), death only: 2 Gamma = d x
    d = 1.5
    f = lambda s: float(s[0])
    val = carre_du_champ(f, f, np.array([3]), RateParams(0, 0, 0, d), SITE1)
    assert 2 * val == pytest.approx(d * 3)


def test_carre_du_champ_matches_matrix_form():
    params = RateParams(1, 0.5, 1, 0.5)
    chain = build_truncated_chain(TWO_SITE, params, 3)
    rng = np.random.default_rng(7)
    fv = rng.random(chain.n_states)
    gv = rng.random(chain.n_states)
    gamma_vec = chain.gamma(fv, gv)
    f = lambda s: fv[chain.index_of(s)]
    g = lambda s: gv[chain.index_of(s)]
    for idx in range(chain.n_states):
        direct = carre_du_champ(f, g, chain.states[idx], params, TWO_SITE, cap=3)
        assert direct == pytest.approx(gamma_vec[idx], abs=1e-10)


def test_carre_du_champ_positive_semidefinite():
    params = RateParams(1, 1, 1, 1)
    chain = build_truncated_chain(TWO_SITE, params, 3)
    rng = np.random.default_rng(8)
    for _ in range(20):
        fv = rng.random(chain.n_states)
        assert (chain.gamma(fv, fv) >= -1e-12).all()


def test_covariance_formula_zero_time():
    params = RateParams(1, 0.5, 1, 0.5)
    chain = build_truncated_chain(SITE1, params, 6)
    rng = np.random.default_rng(9)
    mu0 = rng.random(chain.n_states)
    mu0 /= mu0.sum()
    f = lambda s: float(s[0])
    g = lambda s: float(s[0] ** 2)
    res = covariance_formula_check(f, g, mu0, 0.0, params, SITE1, cap=6, n_quad=4, chain=chain)
    assert res.deviation < 1e-12


def test_covariance_formula_variance_form():
    params = RateParams(1, 0.5, 1, 0.5)
    chain = build_truncated_chain(SITE1, params, 6)
    f = lambda s: float(s[0])
    res = covariance_formula_check(f, f, chain.delta([1]), 0.3, params, SITE1, cap=6, n_quad=128, chain=chain)
    # lhs is the variance of x(0) at time t
    dist = transient_distribution(chain, chain.delta([1]), 0.3)
    counts = chain.states[:, 0].astype(float)
    var = float(dist @ counts**2 - (dist @ counts) ** 2)
    assert res.lhs == pytest.approx(var, abs=1e-9)
    assert res.deviation < 1e-8


def test_covariance_formula_quadrature_refinement():
    params = RateParams(1, 0.5, 1, 0.5)
    chain = build_truncated_chain(SITE1, params, 6)
    f = lambda s: float(s[0])
    g = lambda s: math.exp(-0.5 * float(s[0]))
    devs = [
        covariance_formula_check(f, g, chain.delta([1]), 0.3, params, SITE1, 6, n_quad=n, chain=chain).deviation
        for n in (16, 32, 64)
    ]
    assert devs[2] < devs[0]
    assert devs[2] < 1e-8


def test_covariance_formula_rejects_small_caps():
    params = RateParams(0.2, 3.0, 0.2, 0.0)
    chain = build_truncated_chain(SITE1, params, 2)
    f = lambda s: float(s[0])
    with pytest.raises(ValueError):
        covariance_formula_check(f, f, chain.delta([2]), 1.0, params, SITE1, cap=2, n_quad=16, chain=chain)


def test_kernels_vanish_at_zero_time():
    tabs = covariance_kernels(torus_1d(3), RateParams(1, 0.5, 1, 0.5), 0.0, n_quad=8)
    assert (tabs.K == 0).all() and (tabs.L == 0).all()
    assert (tabs.A >= 0).all() and (tabs.B >= 0).all()


def test_kernel_shift_invariance_on_torus():
    tabs = covariance_kernels(torus_1d(3), RateParams(1, 0.5, 1, 0.5), 0.4, n_quad=16)
    shift = lambda i: (i + 1) % 3
    for i in range(3):
        for k in range(3):
            for l in range(3):
                assert tabs.K[shift(i), shift(k), shift(l)] == pytest.approx(tabs.K[i, k, l], abs=1e-10)
                for j in range(3):
                    assert tabs.L[shift(i), shift(j), shift(k), shift(l)] == pytest.approx(
                        tabs.L[i, j, k, l], abs=1e-10
                    )


def test_kernel_sum_bounds_hold():
    lat = torus_1d(3)
    params = RateParams(1, 0.5, 1, 0.5)
    tabs = covariance_kernels(lat, params, 0.4, n_quad=32)
    k_bound, l_bound = kernel_sum_bounds(lat, params, 0.4)
    for l in range(3):
        assert tabs.K[:, :, l].sum() <= k_bound + 1e-6
        assert tabs.L[:, :, :, l].sum() <= l_bound + 1e-6
    # the L bound is attained exactly on doubly balanced kernels
    assert tabs.L[:, :, :, 0].sum() == pytest.approx(l_bound, abs=1e-6)


def test_exponential_bound_single_site_support_trivial():
    lat = torus_1d(3)
    mu = np.array([0.8, 0.0, 0.0])
    res = exponential_covariance_bound_check([1, 1, 1], mu, 0.4, RateParams(1, 0.5, 1, 0.5), lat, cap=5, n_quad=16)
    assert res.lhs == pytest.approx(0.0, abs=1e-12)
    assert res.bound >= 0.0


def test_exponential_bound_zero_start_trivial():
    lat = torus_1d(3)
    res = exponential_covariance_bound_check(
        [0, 0, 0], np.full(3, 0.5), 0.4, RateParams(1, 0.5, 1, 0.5), lat, cap=4, n_quad=16
    )
    assert res.lhs == pytest.approx(0.0, abs=1e-10)


def test_exponential_bound_holds_with_margin():
    lat = torus_1d(3)
    res = exponential_covariance_bound_check(
        [1, 1, 1], np.full(3, 0.5), 0.4, RateParams(1, 0.5, 1, 0.5), lat, cap=5, n_quad=32
    )
    assert abs(res.lhs) <= res.bound + 3 * res.truncation_budget
    assert res.slack > 0


def test_state_space_overflow_guarded():
    with pytest.raises(ValueError):
        build_truncated_chain(torus_1d(8), RateParams(1, 0, 1, 0), 12)
