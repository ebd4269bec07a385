"""Tests for the statistical instruments."""

import math

import numpy as np
import pytest
from scipy import stats as sps
from smalltime.stats import (
    chi2_quantile,
    cramer_wold_directions,
    dkw_epsilon,
    estimate_probability,
    gamma_cdf,
    ks_critical,
    ks_normal,
    ks_one_sample,
    ks_two_sample,
    normal_cdf,
    normal_quantile,
    prob_exceed,
    wilson_interval,
)


class TestDistributionFunctions:
    """Normal and gamma helpers."""

    def test_normal_quantile_inverts_cdf(self):
        """Phi^-1(Phi(x)) = x."""
        x = np.array([-3.0, -0.5, 0.0, 1.25, 4.0])
        np.testing.assert_allclose(normal_quantile(normal_cdf(x)), x, atol=1e-10)

    def test_normal_quantile_domain(self):
        """p must lie strictly inside (0, 1)."""
        with pytest.raises(ValueError, match=r"p in \(0, 1\)"):
            normal_quantile(0.0)
        with pytest.raises(ValueError):
            normal_quantile([0.5, 1.0])

    def test_gamma_cdf_exponential(self):
        """Shape 1 is the exponential law."""
        assert float(gamma_cdf(2.0, shape=1.0, scale=2.0)) == pytest.approx(1.0 - math.exp(-1.0))

    def test_gamma_cdf_matches_scipy(self):
        """Agrees with scipy's gamma distribution."""
        x = np.linspace(0.0, 10.0, 11)
        np.testing.assert_allclose(gamma_cdf(x, 2.5, 1.5), sps.gamma.cdf(x, 2.5, scale=1.5), rtol=1e-12)

    def test_gamma_cdf_domain(self):
        """Negative x and non-positive shape are rejected."""
        with pytest.raises(ValueError):
            gamma_cdf(-1.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="shape > 0"):
            gamma_cdf(1.0, 0.0, 1.0)

    def test_chi2_quantile(self):
        """The 99% quantile of chi-square(1) is 2.5758^2."""
        assert chi2_quantile(0.99) == pytest.approx(2.5758293035489004**2, rel=1e-10)


class TestKolmogorovSmirnov:
    """One- and two-sample KS."""

    def test_critical_value(self):
        """About 1.9495 / sqrt(n) at the 0.001 level."""
        assert ks_critical(10_000) == pytest.approx(1.9495 / 100.0, rel=1e-3)

    def test_empty_sample(self):
        """An empty sample is a precondition violation."""
        with pytest.raises(ValueError, match="nonempty"):
            ks_one_sample([], normal_cdf)

    def test_non_finite_sample(self):
        """NaN or inf in the sample is rejected."""
        with pytest.raises(ValueError, match="finite"):
            ks_one_sample([0.0, np.nan], normal_cdf)

    def test_normal_sample_passes(self):
        """A correct law passes."""
        sample = np.random.default_rng(11).normal(0.0, 2.0, 20_000)
        report = ks_normal(sample, 4.0)
        assert report.passed
        assert report.n == 20_000
        assert report.level == 0.001

    def test_wrong_variance_fails(self):
        """A 20% error in the standard deviation is detected."""
        sample = np.random.default_rng(12).normal(0.0, 1.2, 20_000)
        assert not ks_normal(sample, 1.0).passed

    def test_statistic_matches_scipy(self):
        """The statistic is the exact sup-distance."""
        sample = np.random.default_rng(13).standard_normal(500)
        assert ks_one_sample(sample, normal_cdf).statistic == pytest.approx(
            sps.kstest(sample, "norm").statistic, rel=1e-12
        )

    def test_two_sample(self):
        """Two samples from one law pass, from shifted laws fail."""
        rng = np.random.default_rng(14)
        a, b = rng.standard_normal(10_000), rng.standard_normal(10_000)
        assert ks_two_sample(a, b).passed
        assert not ks_two_sample(a, b + 0.2).passed
        with pytest.raises(ValueError):
            ks_two_sample(a, [])


class TestProbabilities:
    """Exceedance estimates and intervals."""

    def test_wilson_contains_estimate(self):
        """The score interval brackets the observed proportion."""
        low, high = wilson_interval(30, 100, 0.99)
        assert low < 0.3 < high
        assert 0.0 <= low and high <= 1.0

    def test_wilson_rejects_bad_inputs(self):
        """n and confidence are validated."""
        with pytest.raises(ValueError, match="n > 0"):
            wilson_interval(0, 0)
        with pytest.raises(ValueError, match="confidence"):
            wilson_interval(1, 2, 1.0)

    def test_all_successes(self):
        """The interval touches 1 when every trial succeeds."""
        est = estimate_probability(np.ones(50, dtype=bool))
        assert est.p_hat == 1.0
        assert est.ci_high == pytest.approx(1.0)
        assert est.ci_low < 1.0

    def test_strict_exceedance(self):
        """Ties at the level do not count."""
        est = prob_exceed(np.array([[0.0], [0.0], [1.0]]), 0, 0.0)
        assert est.p_hat == pytest.approx(1.0 / 3.0)

    def test_one_dimensional_input(self):
        """A plain vector is treated as one column."""
        assert prob_exceed(np.array([-1.0, 2.0, 3.0, 4.0]), level=2.5).p_hat == 0.5

    def test_bad_coordinate(self):
        """Out-of-range columns raise."""
        with pytest.raises(IndexError):
            prob_exceed(np.zeros((4, 1)), coordinate=1)

    def test_contains_with_slack(self):
        """Slack widens the interval on both sides."""
        est = estimate_probability(np.array([True] * 60 + [False] * 40), confidence=0.95)
        assert not est.contains(0.5)
        assert est.contains(0.5, slack=0.05)

    def test_dkw(self):
        """DKW half-width sqrt(log(2 / alpha) / (2 n))."""
        assert dkw_epsilon(10_000, 0.999) == pytest.approx(math.sqrt(math.log(2000.0) / 20_000.0))


class TestCramerWold:
    """Projection directions."""

    def test_axes_then_random(self):
        """Axes first, then unit vectors."""
        d = cramer_wold_directions(3)
        assert d.shape == (11, 3)
        np.testing.assert_array_equal(d[:3], np.eye(3))
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)

    def test_deterministic(self):
        """The extra directions come from a fixed seed."""
        np.testing.assert_array_equal(cramer_wold_directions(2), cramer_wold_directions(2))
