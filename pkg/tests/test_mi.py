import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from lava.errors import ConfigError, DegenerateBandwidth, SingleClass, TooFewSamples
from lava.probing.mi import equal_frequency_bins, mutual_information_discrete, mutual_information_kde

# I(z; y) for z | y ~ N(4y, 1), y ~ Bernoulli(1/2), by scipy quadrature (see test below)
MIXTURE_MI_BITS = 0.9128222857744821


def _mixture_mi_quadrature():
    p = lambda t: 0.5 * stats.norm.pdf(t) + 0.5 * stats.norm.pdf(t, 4)
    h = -integrate.quad(lambda t: p(t) * np.log2(p(t)), -15, 19, limit=200)[0]
    return h - 0.5 * np.log2(2 * np.pi * np.e)


def test_frozen_quadrature_value():
    assert _mixture_mi_quadrature() == pytest.approx(MIXTURE_MI_BITS, abs=1e-9)


def test_identical_balanced_binary():
    y = np.repeat([0, 1], 500)
    mi = mutual_information_discrete(y.astype(float), y, bins=2)
    assert mi.value_bits == pytest.approx(1.0, abs=1e-9)
    assert mi.estimator == "discrete_binned"


def test_product_table_zero():
    z = np.array([0.0, 0.0, 1.0, 1.0])
    y = np.array([0, 1, 0, 1])
    assert mutual_information_discrete(z, y, bins=2).value_bits == pytest.approx(0.0, abs=1e-15)


def test_independent_null():
    rng = np.random.default_rng(1)
    mi = mutual_information_discrete(rng.normal(size=10_000), rng.integers(0, 2, 10_000), bins=8)
    assert mi.value_bits < 0.02


def test_default_bins():
    rng = np.random.default_rng(2)
    assert mutual_information_discrete(rng.normal(size=50), rng.integers(0, 2, 50)).bins == 7
    assert mutual_information_discrete(rng.normal(size=3), [0, 1, 0]).bins == 2


def test_equal_frequency_bins_balanced():
    z = np.arange(100.0)[::-1]
    counts = np.bincount(equal_frequency_bins(z, 4))
    np.testing.assert_array_equal(counts, [25, 25, 25, 25])


def test_discrete_errors():
    with pytest.raises(TooFewSamples):
        mutual_information_discrete([1.0, 2.0], [0, 1], bins=3)
    with pytest.raises(ConfigError):
        mutual_information_discrete([1.0, 2.0], [0, 1], bins=1)
    with pytest.raises(ConfigError):
        mutual_information_discrete([1.0, 2.0], [0, 2], bins=2)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 300), bins=st.integers(2, 6))
def test_discrete_nonnegative_and_bounded(seed, n, bins):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n).round(1)
    y = rng.integers(0, 2, n)
    if n < bins:
        return
    mi = mutual_information_discrete(z, y, bins)
    assert mi.value_bits >= 0
    pz = np.bincount(equal_frequency_bins(z, bins)) / n
    pz = pz[pz > 0]
    py = np.bincount(y) / n
    py = py[py > 0]
    hz = -(pz * np.log2(pz)).sum()
    hy = -(py * np.log2(py)).sum()
    assert mi.value_bits <= min(hz, hy) + 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_discrete_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=200)
    y = (z + rng.normal(size=200) > 0).astype(int)
    a = mutual_information_discrete(z, y, 6).value_bits
    b = mutual_information_discrete(np.exp(3 * z) + 5, y, 6).value_bits
    assert a == pytest.approx(b, abs=1e-12)


def test_kde_mixture_close_to_quadrature():
    rng = np.random.default_rng(3)
    y = np.repeat([0, 1], 5000)
    z = rng.normal(4.0 * y, 1.0)
    mi = mutual_information_kde(z, y)
    assert abs(mi.value_bits - MIXTURE_MI_BITS) < 0.1
    assert mi.estimator == "kde"


def test_kde_null():
    rng = np.random.default_rng(4)
    assert mutual_information_kde(rng.normal(size=10_000), rng.integers(0, 2, 10_000)).value_bits < 0.03


def test_kde_explicit_bandwidth():
    rng = np.random.default_rng(5)
    y = np.repeat([0, 1], 200)
    z = rng.normal(3.0 * y, 1.0)
    assert mutual_information_kde(z, y, bandwidth=0.3).value_bits > 0.5


def test_kde_errors():
    with pytest.raises(DegenerateBandwidth):
        mutual_information_kde(np.ones(20), np.arange(20) % 2)
    with pytest.raises(SingleClass):
        mutual_information_kde(np.arange(20.0), np.zeros(20))
    with pytest.raises(TooFewSamples):
        mutual_information_kde(np.arange(4.0), [0, 1, 0, 1])
    with pytest.raises(DegenerateBandwidth):
        mutual_information_kde(np.arange(20.0), np.arange(20) % 2, bandwidth=-1)
