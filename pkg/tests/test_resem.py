import math

import numpy as np
import pytest

from brancolab.lattice import custom_lattice, torus_1d
from brancolab.resem import (
    ResemParams,
    extinction_batch,
    extinction_probability,
    frequency_paths,
    moment_dual_expectation,
    simulate_resem,
    wf_pair_batch,
    wf_pair_simulate,
    wf_terminal_batch,
)
from brancolab.streams import substream

SITE1 = custom_lattice(1, [])


def test_params_nonnegative():
    with pytest.raises(ValueError):
        ResemParams(-0.1, 0, 0)


def test_constant_when_all_rates_zero():
    lat = custom_lattice(2, [])
    out = simulate_resem([0.3, 0.8], ResemParams(0, 0, 0), lat, 1e-2, [0.5, 2.0], substream(1, 0))
    assert np.allclose(out, [[0.3, 0.8], [0.3, 0.8]])


def test_zero_is_a_trap():
    lat = torus_1d(3)
    out = simulate_resem(np.zeros(3), ResemParams(2, 4.5, 1.5), lat, 1e-3, [1.0, 3.0], substream(2, 0))
    assert (out == 0.0).all()


def test_out_of_range_start_rejected():
    with pytest.raises(ValueError):
        simulate_resem([1.2], ResemParams(1, 0, 0), SITE1, 1e-3, [1.0], substream(1, 1))
    with pytest.raises(ValueError):
        simulate_resem([0.5], ResemParams(1, 0, 0), SITE1, -1e-3, [1.0], substream(1, 1))


def test_paths_stay_in_unit_interval():
    lat = torus_1d(3)
    for scheme in ("euler", "hybrid"):
        paths = frequency_paths(
            np.full(3, 0.5), ResemParams(2, 4.5, 1.5), lat, 1e-3, [0.2, 1.0], substream(3, 0), 500, scheme
        )
        assert paths.min() >= 0.0 and paths.max() <= 1.0


def test_mutation_only_mean_decay():
    # single site, s = 0: E[X_t] = phi0 e^{-m t}
    m, phi0, t = 1.2, 0.6, 0.8
    n_rep = 40000
    for scheme in ("euler", "hybrid"):
        paths = frequency_paths(
            np.array([phi0]), ResemParams(1.0, 0.0, m), SITE1, 1e-3, [t], substream(4, 0), n_rep, scheme
        )
        vals = paths[:, 0, 0]
        se = vals.std(ddof=1) / math.sqrt(n_rep)
        assert abs(vals.mean() - phi0 * math.exp(-m * t)) < 4 * se + 2e-3


def test_euler_projection_moves_at_most_the_increment():
    # the clip can only pull a proposal back toward the previous point
    lat = torus_1d(2)
    p = ResemParams(3.0, 2.0, 1.0)
    rng = substream(5, 0)
    phi = np.array([0.02, 0.98])
    q = lat.rates
    for _ in range(200):
        drift = phi @ q - phi * lat.in_rates + p.s * phi * (1 - phi) - p.m * phi
        noise = rng.standard_normal(2)
        h = 1e-2
        proposal = phi + drift * h + np.sqrt(2 * p.r * np.clip(phi - phi * phi, 0, None) * h) * noise
        clipped = np.clip(proposal, 0.0, 1.0)
        assert (np.abs(clipped - proposal) <= np.abs(proposal - phi) + 1e-15).all()
        phi = clipped


def test_boundary_occupation_vanishes_with_h():
    # Wright-Fisher with downward mutation pressure: paths exactly at 1 are a
    # discretization artifact and must be rare at small h
    n_rep = 2000
    xs = wf_terminal_batch(0.8, 1.0, 0.5, 1.0, 1e-4, 0.25, substream(6, 0), n_rep, "euler")
    assert (xs == 1.0).mean() < 0.01


def test_extinction_trivial_from_zero():
    est = extinction_probability(np.zeros(3), ResemParams(2, 4.5, 1.5), torus_1d(3), 2.0, 1e-3, substream(7, 0), 500)
    assert est.estimate == 1.0
    assert est.alive_fraction == 0.0


def test_extinction_certain_without_selection():
    # s = 0, m > 0: the total mass is a supermartingale pushed to 0
    lat = torus_1d(3)
    est = extinction_probability(
        np.full(3, 0.4), ResemParams(1.0, 0.0, 1.0), lat, 14.0, 2e-3, substream(8, 0), 1500
    )
    assert est.alive_fraction < 0.01
    assert est.estimate > 0.99


def test_extinction_interior_value_positive():
    lat = torus_1d(4)
    phi = np.array([0.5, 0, 0, 0])
    est = extinction_probability(phi, ResemParams(2, 4.5, 1.5), lat.transpose(), 6.0, 2e-3, substream(9, 0), 2000)
    assert 0.0 < est.estimate < 1.0


def test_wf_pair_trivial_at_zero():
    out = wf_pair_simulate(0.0, 0.0, 0.5, 1.0, 1.0, 1e-3, [0.5], substream(10, 0))
    assert out[0, 0] == 0.0 and out[0, 1] == 0.0


def test_wf_pair_mean_decay_of_second_coordinate():
    # E[Y_t] = z e^{-ct}
    z, c, t = 0.4, 1.5, 0.5
    n_rep = 30000
    out = wf_pair_batch(z, 1.0, 0.5, c, 1.0, 1e-3, [t], substream(11, 0), n_rep)
    vals = out[:, 0, 1]
    se = vals.std(ddof=1) / math.sqrt(n_rep)
    assert abs(vals.mean() - z * math.exp(-c * t)) < 4 * se + 2e-3


def test_wf_pair_linear_lower_estimate_scan():
    # E[Y_t ∧ (1 - X_t)] >= z/4 on a small (z, t) region near the origin
    a, b, c, r = 1.0, 0.5, 1.5, 1.0
    n_rep = 20000
    admissible = []
    for z in (0.02, 0.05, 0.1):
        for t in (0.02, 0.05):
            out = wf_pair_batch(z, a, b, c, r, 5e-4, [t], substream(12, 0), n_rep)
            vals = np.minimum(out[:, 0, 1], 1.0 - out[:, 0, 0])
            se = vals.std(ddof=1) / math.sqrt(n_rep)
            if vals.mean() - 3 * se >= z / 4.0:
                admissible.append((z, t))
    assert admissible, "no (z, t) pair satisfied the z/4 lower estimate"


def test_moment_dual_trivial_frozen():
    assert moment_dual_expectation(0.37, 1, 0.0, 0.0, 2.0, 5.0) == pytest.approx(0.37)


def test_moment_dual_closed_forms():
    x, t = 0.3, 0.8
    assert moment_dual_expectation(x, 1, 0.0, 0.7, 1.0, t) == pytest.approx(x * math.exp(-0.7 * t), abs=1e-10)
    r = 1.3
    expected = x + (x * x - x) * math.exp(-2 * r * t)
    assert moment_dual_expectation(x, 2, 0.0, 0.0, r, t) == pytest.approx(expected, abs=1e-10)


def test_moment_duality_monte_carlo_panel():
    # Euler estimate of E[X_t^k] vs the exact dual-chain value
    x0, t, n_rep = 0.3, 0.5, 20000
    for (a, b, r) in ((0.0, 0.7, 1.0), (0.5, 0.5, 1.0)):
        xs_h = wf_terminal_batch(x0, a, b, r, 1e-3, t, substream(13, 0), n_rep, "euler")
        xs_h2 = wf_terminal_batch(x0, a, b, r, 5e-4, t, substream(13, 0), n_rep, "euler")
        for k in (1, 2, 3):
            est = float((xs_h2**k).mean())
            se = float((xs_h2**k).std(ddof=1) / math.sqrt(n_rep))
            budget = abs(float((xs_h**k).mean()) - est)
            exact = moment_dual_expectation(x0, k, a, b, r, t)
            assert abs(est - exact) <= 3 * se + budget


def test_hybrid_and_euler_agree_on_smooth_case():
    # away from boundaries the two schemes estimate the same mean
    lat = torus_1d(3)
    p = ResemParams(0.5, 1.0, 0.5)
    n_rep = 20000
    means = {}
    for scheme in ("euler", "hybrid"):
        paths = frequency_paths(np.full(3, 0.5), p, lat, 1e-3, [0.4], substream(14, 0), n_rep, scheme)
        means[scheme] = paths[:, 0, :].mean()
    assert abs(means["euler"] - means["hybrid"]) < 4e-3


def test_extinction_batch_reports_mass():
    lat = torus_1d(3)
    absorbed, mass = extinction_batch(np.full(3, 0.3), ResemParams(2, 4.5, 1.5), lat, 3.0, 2e-3, substream(15, 0), 800)
    extinct = ~np.isnan(absorbed)
    assert (mass[extinct] == 0.0).all()
    assert (mass[~extinct] > 0.0).all()
