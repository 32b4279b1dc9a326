import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ipslab.engine import RngStream
from ipslab.instances import toy_model
from ipslab.lattice import Lattice
from ipslab.measures import (
    DTransformEstimate,
    ProductMeasure,
    exact_dtransform_site,
    mc_invariance_check,
    mixing_estimator,
    pmf_table,
    sample_configuration,
    sample_occupancies,
    site_pmf,
    theta,
)


def test_site_pmf_examples():
    assert site_pmf(ProductMeasure(-1, 0.5, 2), 1) == pytest.approx(0.5)
    assert site_pmf(ProductMeasure(1, 0.5, 1.0), 2) == pytest.approx(0.125)
    assert site_pmf(ProductMeasure(0, 1.0), 0) == pytest.approx(0.3678794, abs=1e-7)


def mp_pmf(kind, rho, alpha, n):
    """Reference marginals in 40-digit arithmetic."""
    with mpmath.workdps(40):
        rho, alpha = mpmath.mpf(rho), mpmath.mpf(alpha)
        if kind == -1:
            return float(mpmath.binomial(alpha, n) * rho**n * (1 - rho) ** (alpha - n)) if n <= alpha else 0.0
        if kind == 1:
            return float(mpmath.gamma(alpha + n) / (mpmath.gamma(alpha) * mpmath.factorial(n))
                         * rho**n * (1 - rho) ** alpha)
        return float(mpmath.exp(-rho) * rho**n / mpmath.factorial(n))


@settings(max_examples=50)
@given(st.floats(0.0, 0.95), st.floats(0.2, 5.0), st.integers(0, 25))
def test_site_pmf_matches_reference(rho, alpha, n):
    a = max(1, round(alpha))
    for kind, r, al in ((1, rho, alpha), (0, 3 * rho, 1.0), (-1, rho, a)):
        got = site_pmf(ProductMeasure(kind, r, al), n)
        assert got == pytest.approx(mp_pmf(kind, r, al, n), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("measure", [ProductMeasure(1, 0.7, 2.5), ProductMeasure(0, 4.0)])
def test_pmf_table_tail(measure):
    table = pmf_table(measure)
    assert 0 <= 1 - table.sum() < 1e-11


@pytest.mark.parametrize("bad", [(-1, 1.2, 1), (-1, 0.5, 1.5), (1, 1.0, 1.0), (1, 0.5, 0.0), (0, -0.1, 1), (2, 0.1, 1)])
def test_measure_parameter_ranges(bad):
    with pytest.raises(ValueError):
        ProductMeasure(*bad)


def test_sample_degenerate_cases():
    lat = Lattice(1, 6, 2)
    assert sample_configuration(ProductMeasure(0, 0.0), lat, 1).total == 0
    assert sample_configuration(ProductMeasure(1, 0.0, 2.0), lat, 1).total == 0
    full = sample_configuration(ProductMeasure(-1, 1.0, 3), lat, 1)
    assert (full.occupancy == 3).all()


@pytest.mark.parametrize(
    "measure, mean",
    [
        (ProductMeasure(-1, 0.3, 2), 0.6),
        (ProductMeasure(1, 0.4, 1.5), 1.5 * 0.4 / 0.6),
        (ProductMeasure(0, 0.7), 0.7),
    ],
)
def test_sample_means(measure, mean):
    x = sample_occupancies(measure, 1, 100_000, np.random.default_rng(12))[:, 0]
    assert abs(x.mean() - mean) <= 4 * x.std(ddof=1) / math.sqrt(len(x))
    assert measure.mean == pytest.approx(mean)


def test_theta_examples():
    assert theta(ProductMeasure(-1, 0.3, 1)) == 0.3
    assert theta(ProductMeasure(1, 0.5, 1.0)) == pytest.approx(1.0)
    assert theta(ProductMeasure(0, 0.0)) == 0.0


def test_dtransform_examples():
    assert exact_dtransform_site(ProductMeasure(-1, 0.5, 2), 2) == pytest.approx(0.25, abs=1e-15)
    assert exact_dtransform_site(ProductMeasure(0, 0.7), 2) == pytest.approx(0.49, abs=1e-12)
    for m in (ProductMeasure(-1, 0.2, 3), ProductMeasure(1, 0.3, 0.5), ProductMeasure(0, 2.0)):
        assert exact_dtransform_site(m, 0) == 1.0


def brute_dtransform(measure, k):
    """Independent oracle: direct sum of d(k, n) pmf(n), with scipy marginals."""
    s, rho, a = measure.kind, measure.rho, measure.alpha
    if s == -1:
        dist, top = stats.binom(int(a), rho), int(a)
    elif s == 1:
        dist, top = stats.nbinom(a, 1 - rho), 4000
    else:
        dist, top = stats.poisson(rho), 400
    n = np.arange(top + 1)
    falling = np.ones_like(n, dtype=float)
    for m in range(k):
        falling *= n - m
    if s == -1:
        scale = math.factorial(int(a) - k) / math.factorial(int(a))
    elif s == 1:
        scale = math.exp(math.lgamma(a) - math.lgamma(a + k))
    else:
        scale = 1.0
    return float(np.sum(dist.pmf(n) * falling) * scale)


measures = st.one_of(
    st.builds(lambda r, a: ProductMeasure(-1, r, a), st.floats(0, 1), st.integers(1, 6)),
    st.builds(lambda r, a: ProductMeasure(1, r, a), st.floats(0, 0.8), st.floats(0.2, 4)),
    st.builds(lambda r: ProductMeasure(0, r), st.floats(0, 5)),
)


@settings(max_examples=80)
@given(measures, st.integers(0, 4))
def test_dtransform_factorises(measure, k):
    if measure.kind == -1 and k > measure.alpha:
        return
    value = exact_dtransform_site(measure, k)
    assert abs(value - theta(measure) ** k) <= 1e-10 * max(1.0, theta(measure) ** k)
    assert value == pytest.approx(brute_dtransform(measure, k), rel=1e-8, abs=1e-12)


def test_estimate_exact_flag():
    DTransformEstimate((0,), 0.3)
    with pytest.raises(ValueError):
        DTransformEstimate((0,), 0.3, se=0.1, exact=True)


# --------------------------------------------------------------------- Monte Carlo


def test_invariance_empty_xi(sep_model):
    rep = mc_invariance_check(sep_model, ProductMeasure(-1, 0.4, 1), {}, 1.0, 10, 0)
    assert rep.lhs_mean == rep.rhs_mean == 1.0 and rep.z == 0.0


@pytest.mark.parametrize("t", [0.0, 1.0])
@pytest.mark.parametrize("model", [toy_model(-1, 2), toy_model(1, 1.5), toy_model(0)], ids=["sep", "sip", "irw"])
def test_invariance(model, t):
    measure = ProductMeasure.for_model(model, 0.4)
    xi = {0: 2, 5: 1}
    rep = mc_invariance_check(model, measure, xi, t, 20000, RngStream(6))
    assert rep.rhs_mean == pytest.approx(theta(measure) ** 3)
    assert rep.z <= 4


def test_invariance_rejects_mismatched_measure(sep_model):
    with pytest.raises(ValueError):
        mc_invariance_check(sep_model, ProductMeasure(1, 0.4, 1.0), {0: 1}, 1.0, 10, 0)


def test_mixing_variance_at_zero():
    model = toy_model(0, L=5, layers=1)
    rho = 0.7
    series = mixing_estimator(model, ProductMeasure(0, rho), {2: 1}, {2: 1}, [0.0], 40000, RngStream(1))
    assert abs(series.cov[0] - rho) <= 4 * series.se[0]


def test_mixing_empty_is_zero(sep_model):
    series = mixing_estimator(sep_model, ProductMeasure(-1, 0.5, 1), {}, {0: 1}, [0.0, 1.0], 100, 0)
    assert series.cov == (0.0, 0.0)


def test_mixing_decays_on_large_torus():
    model = toy_model(0, L=41, layers=1, rates=(0.5,))
    times = [0.0, 1.0, 4.0, 16.0]
    s = mixing_estimator(model, ProductMeasure(0, 0.4), {20: 1}, {20: 1}, times, 20000, RngStream(3))
    # the series decreases along the grid beyond noise
    for a, b, sa, sb in zip(s.cov, s.cov[1:], s.se, s.se[1:]):
        assert b < a + 2 * math.hypot(sa, sb)
    assert s.cov[-1] < s.cov[0] - 4 * math.hypot(s.se[0], s.se[-1])
