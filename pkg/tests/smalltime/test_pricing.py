"""Tests for the pricing layer."""

import math
from dataclasses import replace

import numpy as np
import pytest
from smalltime.errors import ConfigError, DegenerateLimit, NoArbViolation, OutOfScope, UnsupportedModel
from smalltime.models import drifted_bm, gbm, heston, poisson_martingale, quantile_drift_bm, squared_bessel
from smalltime.pricing import (
    MarketParams,
    RateCurve,
    atm_digital_limit_check,
    batch_digital,
    bs_call,
    bs_digital,
    bs_put,
    bs_vega,
    digital_limit,
    implied_vol,
    mc_call,
    mc_digital,
)
from smalltime.simulate import simulate_terminal


class TestBlackScholes:
    """Closed forms."""

    def test_put_call_parity(self):
        """C - P = S0 - K e^{-rT}."""
        c = bs_call(100.0, 95.0, 0.03, 0.25, 0.75)
        p = bs_put(100.0, 95.0, 0.03, 0.25, 0.75)
        assert c - p == pytest.approx(100.0 - 95.0 * math.exp(-0.03 * 0.75))

    def test_digital_is_strike_derivative(self):
        """The digital is -dC/dK."""
        h = 1e-4
        up, down = bs_call(100.0, 100.0 + h, 0.02, 0.2, 0.5), bs_call(100.0, 100.0 - h, 0.02, 0.2, 0.5)
        slope = (up - down) / (2 * h)
        assert bs_digital(100.0, 100.0, 0.02, 0.2, 0.5) == pytest.approx(-slope, rel=1e-6)

    def test_vega(self):
        """Vega matches a central difference in sigma."""
        h = 1e-5
        bump = (bs_call(100.0, 90.0, 0.0, 0.3 + h, 1.0) - bs_call(100.0, 90.0, 0.0, 0.3 - h, 1.0)) / (2 * h)
        assert bs_vega(100.0, 90.0, 0.0, 0.3, 1.0) == pytest.approx(bump, rel=1e-6)

    def test_vectorized(self):
        """Strikes may be an array."""
        K = np.array([90.0, 100.0, 110.0])
        prices = bs_call(100.0, K, 0.0, 0.2, 1.0)
        assert prices.shape == (3,)
        assert np.all(np.diff(prices) < 0)

    def test_positive_inputs(self):
        """Non-positive sigma or T is rejected."""
        with pytest.raises(ValueError, match="sigma"):
            bs_call(100.0, 100.0, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError, match="T"):
            bs_digital(100.0, 100.0, 0.0, 0.2, -1.0)


class TestImpliedVol:
    """Inversion of the call price."""

    @pytest.mark.parametrize("K, T, sigma", [(100.0, 1.0, 0.2), (90.0, 0.05, 0.5), (130.0, 0.25, 0.35)])
    def test_round_trip(self, K, T, sigma):
        """The implied vol of a Black-Scholes price is its sigma."""
        price = float(bs_call(100.0, K, 0.01, sigma, T))
        quote = implied_vol(price, 100.0, K, 0.01, T)
        assert quote.sigma_imp == pytest.approx(sigma, rel=1e-8)
        assert quote.solver_residual <= 1e-10 * 100.0

    def test_outside_no_arbitrage_interval(self):
        """Prices at or above S0, or below intrinsic value, have no implied vol."""
        with pytest.raises(NoArbViolation):
            implied_vol(100.0, 100.0, 100.0, 0.0, 1.0)
        with pytest.raises(NoArbViolation):
            implied_vol(15.0, 100.0, 80.0, 0.0, 1.0)

    def test_above_bracket_ceiling(self):
        """A price above the sigma = 10 price has no vol in the bracket."""
        with pytest.raises(NoArbViolation, match="above the price"):
            implied_vol(50.0, 100.0, 100.0, 0.0, 1e-4)


class TestRateCurve:
    """Deterministic rates."""

    def test_constant(self):
        """A flat curve discounts with e^{-rT}."""
        curve = RateCurve.constant(0.05)
        assert curve.discount(2.0) == pytest.approx(math.exp(-0.1))
        assert curve.equivalent_rate(3.0) == pytest.approx(0.05)

    def test_step(self):
        """The integral adds the pieces."""
        curve = RateCurve.step([1.0, 2.0], [0.01, 0.02, 0.04])
        assert curve.integral(0.5) == pytest.approx(0.005)
        assert curve.integral(2.5) == pytest.approx(0.01 + 0.02 + 0.02)

    def test_from_value(self):
        """Numbers, mappings and curves are accepted."""
        assert RateCurve.from_value(0.03) == RateCurve.constant(0.03)
        curve = RateCurve.from_value({"breaks": [1.0], "rates": [0.0, 0.1]})
        assert curve.integral(2.0) == pytest.approx(0.1)
        with pytest.raises(ConfigError, match="Unknown rate keys"):
            RateCurve.from_value({"rates": [0.1], "tenor": 1})

    def test_invalid(self):
        """Rates and breaks must line up."""
        with pytest.raises(ConfigError, match="one more rate"):
            RateCurve.step([1.0], [0.01])
        with pytest.raises(ConfigError, match="increasing"):
            RateCurve.step([2.0, 1.0], [0.01, 0.02, 0.03])

    def test_market_params(self):
        """Market entries validate their keys."""
        market = MarketParams.from_dict({"S0": 100, "K": 105, "T": 0.5, "r": 0.02})
        assert market.discount == pytest.approx(math.exp(-0.01))
        with pytest.raises(ConfigError, match="missing"):
            MarketParams.from_dict({"S0": 100, "K": 105})
        with pytest.raises(ConfigError, match="Unknown market keys"):
            MarketParams.from_dict({"S0": 100, "K": 105, "T": 1, "q": 0.0})


class TestMonteCarlo:
    """Monte Carlo digitals and calls."""

    def test_digital_limit(self):
        """Short-maturity limits in, at and out of the money."""
        assert digital_limit(100.0, 100.0) == 0.5
        assert digital_limit(100.0, 99.0) == 1.0
        assert digital_limit(100.0, 101.0) == 0.0

    def test_digital_matches_black_scholes(self, small_sim):
        """The discounted estimate brackets e^{-rT} Phi(d2) under GBM."""
        model = gbm(0.2, r=0.05)
        est = mc_digital(model, 105.0, 0.5, cfg=small_sim)
        exact = float(bs_digital(100.0, 105.0, 0.05, 0.2, 0.5))
        assert est.ci_low <= exact <= est.ci_high
        assert est.discount == pytest.approx(math.exp(-0.025))

    def test_call_within_standard_errors(self, small_sim):
        """The call estimate lies within 5 standard errors of Black-Scholes."""
        model = gbm(0.3, r=0.02)
        sample = simulate_terminal(model, 0.25, small_sim)
        est = mc_call(model, 100.0, 0.25, sample=sample)
        exact = float(bs_call(100.0, 100.0, 0.02, 0.3, 0.25))
        assert abs(est.price - exact) < 5 * est.se

    def test_requires_price_model(self, small_sim):
        """Models that can go negative have no digital price here."""
        with pytest.raises(ValueError, match="positive-price"):
            mc_digital(drifted_bm(), 0.0, 1.0, cfg=small_sim)
        with pytest.raises(ValueError, match="cfg or a sample"):
            mc_call(gbm(0.2), 100.0, 1.0)


class TestAtmDigitalLimit:
    """P(S_T > S0) -> 1/2 for non-degenerate limits."""

    def test_gbm(self, small_sim):
        """GBM with a rate passes within the discount slack."""
        report = atm_digital_limit_check(gbm(0.2, r=0.05), [1e-2, 1e-4], small_sim)
        assert report.passed
        assert report.gated
        assert report.levels == (100.0, 100.0)
        assert list(report.to_frame()["T"]) == [1e-2, 1e-4]

    def test_heston(self, euler_sim):
        """Heston in price coordinates passes at small maturity."""
        model = heston(0.04, 2.0, 0.04, 0.3, rho=-0.7)
        report = atm_digital_limit_check(model, [1e-2, 1e-4], euler_sim)
        assert report.passed
        assert report.limit_estimate.contains(0.5)

    def test_degenerate_limit_refused(self, small_sim):
        """The squared Bessel process from 0 has L = 0."""
        with pytest.raises(DegenerateLimit):
            atm_digital_limit_check(squared_bessel(2.0), [1e-2, 1e-3], small_sim)

    def test_pure_jump_refused(self, small_sim):
        """The compensated Poisson process has no diffusion limit."""
        with pytest.raises(UnsupportedModel):
            atm_digital_limit_check(poisson_martingale(), [1e-2, 1e-3], small_sim)

    def test_violated_hypothesis_refused(self, small_sim):
        """An unbounded drift is out of scope."""
        with pytest.raises(OutOfScope, match="hypotheses"):
            atm_digital_limit_check(quantile_drift_bm(0.25), [1e-2, 1e-3], small_sim)

    def test_bessel_ungated(self, small_sim):
        """Without the gate the compensated Bessel probability stays at e^{-1}."""
        report = atm_digital_limit_check(
            squared_bessel(2.0), [1e-2, 1e-3], small_sim, martingale=True, require_clt=False
        )
        assert not report.passed
        assert not report.gated
        assert report.levels == pytest.approx((0.02, 0.002))
        assert report.limit_estimate.contains(math.exp(-1.0))

    def test_poisson_ungated(self, small_sim):
        """P(rate T - N_T > 0) = e^{-rate T} tends to 1."""
        report = atm_digital_limit_check(
            poisson_martingale(), [1e-2, 1e-3], small_sim, martingale=True, require_clt=False
        )
        assert not report.passed
        assert report.limit_estimate.p_hat > 0.99

    def test_schedule(self, small_sim):
        """Maturities must decrease."""
        with pytest.raises(ValueError, match="strictly decreasing"):
            atm_digital_limit_check(gbm(0.2), [1e-3, 1e-2], small_sim)


class TestBatch:
    """Batch digital pricing."""

    def test_columns_and_overrides(self, small_sim):
        """Each entry prices at its own spot and rate."""
        markets = [
            {"S0": 100.0, "K": 100.0, "T": 0.25, "r": 0.0},
            MarketParams(50.0, 55.0, 1.0, 0.03),
        ]
        frame = batch_digital(gbm(0.2), markets, replace(small_sim, n_paths=40_000))
        assert list(frame.columns) == ["K", "T", "price", "ci_low", "ci_high"]
        assert frame["K"].tolist() == [100.0, 55.0]
        inputs = [(100.0, 100.0, 0.25, 0.0), (50.0, 55.0, 1.0, 0.03)]
        for row, (S0, K, T, r) in zip(frame.itertuples(), inputs):
            exact = float(bs_digital(S0, K, r, 0.2, T))
            assert row.ci_low <= exact <= row.ci_high
