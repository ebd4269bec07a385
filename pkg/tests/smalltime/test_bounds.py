"""Tests for the Girsanov-Hoelder bounds and their bracketing checks."""

import logging
import math

import numpy as np
import pytest
from smalltime.bounds import (
    EXPANSION_SLOPE,
    DriftDiffusionBound,
    bracketing_frame,
    bracketing_probability,
    conjugate_exponent,
    drift_bound_for_model,
    expansion_bounded,
    expansion_error,
    expansion_limit_ratio,
    girsanov_bounds,
    verify_bracketing,
)
from smalltime.errors import OutOfScope
from smalltime.models import cev, drifted_bm, gbm, jump_diffusion
from smalltime.simulate import SimConfig


class TestGirsanovBounds:
    """Closed forms of the bounds."""

    def test_known_values(self):
        """c = 0.5, t = 0.01 gives k = 0.0025."""
        curve = girsanov_bounds(0.5, [0.01])
        assert curve.e_f1[0] == pytest.approx(0.470830, abs=1e-5)
        assert curve.e_f2[0] == pytest.approx(0.529660, abs=1e-5)
        assert curve.f1[0] == pytest.approx(math.log(curve.e_f1[0]))
        assert curve.f2[0] == pytest.approx(math.log(curve.e_f2[0]))

    def test_zero_drift(self):
        """c = 0 pins both bounds at 1/2 with an infinite horizon."""
        curve = girsanov_bounds(0.0, [1e-6, 1.0, 100.0])
        np.testing.assert_array_equal(curve.e_f1, 0.5)
        np.testing.assert_array_equal(curve.e_f2, 0.5)
        assert curve.horizon == math.inf
        assert curve.in_horizon.all()

    def test_ordering_and_monotonicity(self):
        """e^{f1} <= 1/2 <= e^{f2}; the gap widens with t."""
        t = np.logspace(-8, -1, 30)
        curve = girsanov_bounds(1.0, t)
        assert np.all(curve.e_f1 <= 0.5)
        assert np.all(curve.e_f2 >= 0.5)
        assert np.all(np.diff(curve.e_f1) < 0)
        assert np.all(np.diff(curve.e_f2) > 0)

    def test_scaling_law(self):
        """The bounds depend on (c, t) only through c^2 t."""
        t = np.logspace(-8, -1, 15)
        for lam in (2.0, 0.5, 10.0):
            base = girsanov_bounds(0.5, t)
            scaled = girsanov_bounds(lam * 0.5, t / lam**2)
            np.testing.assert_allclose(scaled.e_f1, base.e_f1, rtol=0, atol=1e-10)
            np.testing.assert_allclose(scaled.e_f2, base.e_f2, rtol=0, atol=1e-10)
            assert scaled.horizon == pytest.approx(base.horizon / lam**2)

    def test_bracket_half_on_full_grid(self):
        """e^{f1} <= 1/2 <= e^{f2} for every c and every t, past the horizon included."""
        t = np.logspace(-8, 0, 40)
        for c in (0.0, 0.1, 0.5, 1.0, 2.0, 5.0):
            curve = girsanov_bounds(c, t)
            assert np.all(curve.e_f1 <= 0.5), c
            assert np.all(curve.e_f2 >= 0.5), c

    def test_optimal_exponents(self):
        """p_lower = 1 + sqrt(k / (2 log 2)) and p_upper is its reciprocal part."""
        curve = girsanov_bounds(1.0, [0.02])
        a = math.sqrt(0.02 / (2.0 * math.log(2.0)))
        assert curve.p_lower[0] == pytest.approx(1.0 + a)
        assert curve.p_upper[0] == pytest.approx(1.0 / a)

    def test_beyond_horizon(self, caplog):
        """At or past t* the upper bound is the trivial 1, with a warning."""
        bound = DriftDiffusionBound(2.0)
        with caplog.at_level(logging.WARNING):
            curve = girsanov_bounds(bound, [0.1, bound.horizon, 1.0])
        assert curve.in_horizon.tolist() == [True, False, False]
        assert curve.e_f2[1:].tolist() == [1.0, 1.0]
        assert np.isnan(curve.p_upper[1:]).all()
        assert "horizon" in caplog.text

    def test_continuity_at_horizon(self):
        """e^{f2} tends to 1 just below t*."""
        bound = DriftDiffusionBound(1.0)
        curve = girsanov_bounds(bound, [bound.horizon * (1 - 1e-9)])
        assert curve.e_f2[0] == pytest.approx(1.0, abs=1e-6)

    def test_bad_inputs(self):
        """c must be non-negative and times positive."""
        with pytest.raises(ValueError, match="c must be"):
            DriftDiffusionBound(-1.0)
        with pytest.raises(ValueError, match="> 0"):
            girsanov_bounds(1.0, [0.0, 0.1])

    def test_frame(self):
        """The table has one row per time."""
        frame = girsanov_bounds(0.5, [1e-4, 1e-3]).to_frame()
        assert len(frame) == 2
        assert {"t", "e_f1", "e_f2", "expansion_lo", "expansion_hi", "in_horizon"} <= set(frame.columns)


class TestExpansion:
    """The sqrt(t) expansion is accurate to O(t)."""

    def test_remainder_ratio_bounded(self):
        """|e^{f_i} - (1/2 -+ slope c sqrt(t))| / t stays bounded as t -> 0."""
        t = np.logspace(-8, -2, 13)
        lower, upper = expansion_error(0.15, t)
        assert np.all(lower < 1.0)
        assert np.all(upper < 1.0)

    def test_slope(self):
        """The sqrt(t) slope is sqrt(log 2 / 2)."""
        assert EXPANSION_SLOPE == pytest.approx(0.5887050112577373)

    def test_outside_range(self):
        """Times at or beyond min(t*, 1) are rejected."""
        with pytest.raises(ValueError, match="min"):
            expansion_error(0.1, [0.5, 1.0])

    def test_limit_ratio(self):
        """Both ratios approach (2 log 2 - 1) c^2 / 4."""
        assert expansion_limit_ratio(1.0) == pytest.approx((2.0 * math.log(2.0) - 1.0) / 4.0)
        lower, upper = expansion_error(0.5, [1e-8])
        assert lower[0] == pytest.approx(expansion_limit_ratio(0.5), rel=1e-2)
        assert upper[0] == pytest.approx(expansion_limit_ratio(0.5), rel=1e-2)

    def test_bounded_on_acceptance_grid(self):
        """The ratios stay bounded for c in {0.25, 0.5, 1} on t in [1e-8, 1e-2]."""
        t = np.geomspace(1e-8, 1e-2, 13)
        for c in (0.25, 0.5, 1.0):
            assert expansion_bounded(c, t), c

    def test_growing_ratio_detected(self, monkeypatch, caplog):
        """A remainder that blows up as t -> 0 fails the check."""
        monkeypatch.setattr(
            "smalltime.bounds.expansion_error", lambda c, t: (1.0 / np.asarray(t), 1.0 / np.asarray(t))
        )
        with caplog.at_level(logging.WARNING):
            assert not expansion_bounded(0.5, np.geomspace(1e-8, 1e-2, 13))

    def test_bounded_needs_small_times(self):
        """Grids entirely above the window are refused."""
        with pytest.raises(ValueError, match="needs times"):
            expansion_bounded(0.5, [0.1, 0.5])

    def test_conjugate_exponent(self):
        """1/p + 1/q = 1."""
        assert conjugate_exponent(2.0) == pytest.approx(2.0)
        assert conjugate_exponent(4.0) == pytest.approx(4.0 / 3.0)


class TestModelBounds:
    """c from model parameters and the bracketing check."""

    def test_drift_bound(self):
        """|sigma^-1 b| for the in-scope models."""
        assert drift_bound_for_model(drifted_bm(b=0.5, sigma=2.0)).c == pytest.approx(0.25)
        assert drift_bound_for_model(drifted_bm(b=1.0, dim=4)).c == pytest.approx(2.0)
        assert drift_bound_for_model(gbm(0.2, r=0.05)).c == pytest.approx(0.15)

    def test_out_of_scope(self):
        """State-dependent diffusions and sigma = 0 are refused."""
        with pytest.raises(OutOfScope):
            drift_bound_for_model(cev(2.0, 0.5))
        with pytest.raises(OutOfScope, match="sigma = 0"):
            drift_bound_for_model(drifted_bm(b=1.0, sigma=0.0))

    def test_bracketing_probability(self):
        """Phi(b sqrt(t) / sigma)."""
        assert bracketing_probability(drifted_bm(b=0.5), 0.01) == pytest.approx(0.519939, abs=1e-6)
        assert bracketing_probability(drifted_bm(b=0.0), 0.3) == pytest.approx(0.5)

    def test_exact_models_bracketed(self):
        """The Gaussian probabilities lie inside the band at every time."""
        for model in (drifted_bm(b=0.5), gbm(0.3, r=0.01)):
            results = verify_bracketing(model, np.logspace(-6, -1, 20))
            assert all(r.passed for r in results)
            assert all(r.estimate is None for r in results)

    def test_jump_diffusion_needs_simulation(self):
        """Monte Carlo settings are mandatory for non-Gaussian models."""
        with pytest.raises(ValueError, match="Monte Carlo settings"):
            verify_bracketing(jump_diffusion(b=0.5, sigma=1.0, intensity=1.0, a=0.5), [0.01])

    def test_jump_diffusion_bracketed(self):
        """The Wilson interval of the Monte Carlo estimate overlaps the band."""
        model = jump_diffusion(b=0.5, sigma=1.0, intensity=1.0, a=0.5)
        cfg = SimConfig(n_paths=50_000, seed=4, scheme="EulerMaruyama")
        results = verify_bracketing(model, [1e-3, 1e-2], cfg)
        assert all(r.passed for r in results)
        assert all(r.estimate is not None for r in results)

    def test_frame(self):
        """The bracketing table has fixed columns."""
        frame = bracketing_frame(verify_bracketing(drifted_bm(b=0.5), [1e-3, 1e-2]))
        assert list(frame.columns) == [
            "t", "e_f1", "e_f2", "probability", "ci_low", "ci_high", "in_horizon", "pass"
        ]
        assert frame["ci_low"].isna().all()
