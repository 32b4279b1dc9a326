import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from ipslab.duality import (
    DualityReport,
    duality_value,
    mc_deterministic_duality_check,
    mc_duality_check,
    single_site_weight,
    site_weights,
)
from ipslab.engine import Configuration, DualConfiguration, RngStream
from ipslab.exactcheck import SectorSpace, build_generator
from ipslab.instances import toy_model


@pytest.mark.parametrize(
    "s, alpha, k, n, expected",
    [
        (-1, 2, 1, 1, 0.5),
        (-1, 3, 0, 2, 1.0),
        (1, 2.5, 0, 7, 1.0),
        (0, 1, 0, 0, 1.0),
        (-1, 2, 2, 1, 0.0),
        (1, 1.0, 2, 3, 3.0),
        (0, 1, 2, 4, 12.0),
    ],
)
def test_single_site_weight_examples(s, alpha, k, n, expected):
    assert single_site_weight(s, alpha, k, n) == pytest.approx(expected, rel=1e-15)


def test_single_site_weight_rejects_k_above_alpha():
    with pytest.raises(ValueError):
        single_site_weight(-1, 2, 3, 5)


def test_site_weights_vectorised_agree():
    n = np.arange(8)
    for s, a in ((-1, 3), (1, 0.7), (0, 1)):
        for k in range(4):
            expected = [single_site_weight(s, a, k, int(x)) for x in n]
            assert np.allclose(site_weights(s, a, k, n), expected, rtol=1e-14, atol=0)


def normaliser(s, alpha, k):
    if s == -1:
        return math.factorial(int(alpha) - k) / math.factorial(int(alpha))
    if s == 1:
        return math.exp(math.lgamma(alpha) - math.lgamma(alpha + k))
    return 1.0


kinds = st.sampled_from([(-1, 4), (-1, 6), (1, 1.0), (1, 2.5), (1, 0.3), (0, 1)])


@given(kinds, st.integers(0, 4), st.integers(0, 30))
def test_weight_support_and_sign(kind, k, n):
    s, alpha = kind
    w = single_site_weight(s, alpha, k, n)
    assert w >= 0
    assert (w == 0) == (k > n)


@given(kinds, st.integers(0, 4))
def test_weight_is_degree_k_polynomial(kind, k):
    s, alpha = kind
    # divide out the alpha-dependent constant; what remains is the falling factorial n(n-1)...(n-k+1)
    values = [round(single_site_weight(s, alpha, k, n) / normaliser(s, alpha, k)) for n in range(k + 8)]
    assert values[k] == math.factorial(k)
    diffs = values
    for _ in range(k + 1):
        diffs = [b - a for a, b in zip(diffs, diffs[1:])]
    assert all(x == 0 for x in diffs)


def test_duality_value_examples(sep_model):
    eta = np.array([1, 0, 1, 1, 0, 0, 1, 0])
    assert duality_value(sep_model, {}, eta) == 1.0
    irw = toy_model(0)
    occ = np.array([3, 0, 2, 0, 0, 0, 0, 5])
    assert duality_value(irw, DualConfiguration((7,)), occ) == 5.0


@given(st.lists(st.integers(0, 7), max_size=3), st.lists(st.integers(0, 7), max_size=3),
       st.lists(st.integers(0, 6), min_size=8, max_size=8))
def test_duality_value_factorises(a, b, occ):
    m = toy_model(1, 1.5)
    if set(a) & set(b):
        b = [v for v in b if v not in set(a)]
    both = duality_value(m, DualConfiguration(tuple(a + b)), occ)
    assert both == pytest.approx(duality_value(m, DualConfiguration(tuple(a)), occ)
                                 * duality_value(m, DualConfiguration(tuple(b)), occ), rel=1e-13)


# --------------------------------------------------------------------- Monte Carlo


def test_mc_at_time_zero_exact(sep_model):
    eta = Configuration.from_particles([0, 2, 5], 8)
    rep = mc_duality_check(sep_model, {0: 1, 5: 1}, eta, 0.0, 10, 0)
    assert rep.lhs_mean == rep.rhs_mean == duality_value(sep_model, {0: 1, 5: 1}, eta)
    assert rep.z == 0.0


@pytest.mark.parametrize("model", [toy_model(-1, 2), toy_model(1, 1.5), toy_model(0, kappa=1, lam=0.8)],
                         ids=["sep", "sip", "rtp"])
def test_mc_empty_xi_is_one(model):
    rep = mc_duality_check(model, {}, Configuration.from_particles([1, 1], 8), 1.0, 10, 0)
    assert rep.lhs_mean == rep.rhs_mean == 1.0 and rep.z == 0.0


def exact_forward_expectation(model, xi, eta, t):
    """E_eta D(xi, eta(t)) from the exponential of the full SEP generator."""
    space = SectorSpace.sector(model.num_sites, int(np.sum(eta)), int(model.alpha))
    Q = build_generator(model, space).dense()
    row = expm(t * Q)[space.index(eta)]
    values = np.array([duality_value(model, xi, s) for s in space.states])
    return float(row @ values)


def test_mc_duality_agrees_with_exact_semigroup(sep_model):
    eta = np.array([1, 1, 0, 1, 0, 0, 1, 0])
    xi = {1: 1, 6: 1}
    rep = mc_duality_check(sep_model, xi, eta, 1.0, 20000, RngStream(3))
    exact = exact_forward_expectation(sep_model, xi, eta, 1.0)
    assert rep.z <= 4
    assert abs(rep.lhs_mean - exact) <= 4 * rep.lhs_se
    assert abs(rep.rhs_mean - exact) <= 4 * rep.rhs_se


def test_mc_duality_backends_identical(sip_model):
    args = (sip_model, {0: 2, 3: 1}, Configuration.from_particles([0, 1, 1, 4], 8), 0.7, 300, RngStream(4))
    a = mc_duality_check(*args, backend="python")
    try:
        b = mc_duality_check(*args, backend="cython")
    except ValueError:
        pytest.skip("compiled kernel not built")
    assert a == b


def test_mc_duality_workers_identical(rtp_model):
    args = (rtp_model, {1: 1, 2: 1}, Configuration.from_particles([1, 2, 2], 8), 0.5, 5000, RngStream(7))
    assert mc_duality_check(*args, workers=1, block_size=512) == mc_duality_check(*args, workers=3, block_size=512)


def test_report_pass_threshold():
    assert DualityReport(1.0, 1.1, 0.01, 0.02, 3.9, 10).passed()
    assert not DualityReport(1.0, 1.1, 0.01, 0.02, 4.1, 10).passed()


# --------------------------------------------------------------------- deterministic dual


def test_deterministic_constant_profile(rtp_model):
    rep = mc_deterministic_duality_check(rtp_model, np.ones(8), [1, 0, 0, 2, 0, 0, 0, 0], 1.0, 1000, 0)
    assert rep.lhs_mean == rep.rhs_mean == 1.0 and rep.z == 0.0


def test_deterministic_time_zero(rtp_model):
    f = np.linspace(0.1, 0.9, 8)
    eta = [2, 0, 1, 0, 0, 0, 0, 0]
    rep = mc_deterministic_duality_check(rtp_model, f, eta, 0.0, 10, 0)
    assert rep.lhs_mean == rep.rhs_mean == pytest.approx(f[0] ** 2 * f[2]) and rep.z == 0


def test_deterministic_single_particle(rtp_model):
    f = np.zeros(8)
    f[[1, 2]] = 1.0
    eta = [1, 0, 0, 0, 0, 0, 0, 0]
    rep = mc_deterministic_duality_check(rtp_model, f, eta, 1.0, 20000, RngStream(2))
    # oracle: p_t f from a hand-assembled generator
    lat = rtp_model.lattice
    sites = list(lat.sites())
    Q = np.array([[0.0 if i == j else rtp_model.pair_rate(a, b) for j, b in enumerate(sites)]
                  for i, a in enumerate(sites)])
    np.fill_diagonal(Q, -Q.sum(axis=1))
    assert rep.rhs_mean == pytest.approx((expm(Q) @ f)[0], abs=1e-12)
    assert rep.z <= 4


def test_deterministic_rejects_bad_input(rtp_model, sep_model):
    with pytest.raises(ValueError):
        mc_deterministic_duality_check(rtp_model, np.full(8, 1.5), [1] + [0] * 7, 1.0, 10, 0)
    with pytest.raises(ValueError):
        mc_deterministic_duality_check(sep_model, np.ones(8), [1] + [0] * 7, 1.0, 10, 0)
