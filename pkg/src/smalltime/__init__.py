"""
Small-time central limit experiments for semimartingale models.

Simulate catalog SDE models, test the normalized increments
(f(X_t) - f(x0)) / sqrt(t) against their Gaussian limit, evaluate the
Girsanov-Hoelder bounds on P(X_t > X_0), and check the consequences for
short-maturity ATM digitals and the implied-volatility skew.
"""

from ._version import __version__
from .bounds import girsanov_bounds, verify_bracketing
from .clt import clt_check, fclt_check, ldp_rate, limit_covariance
from .models import ModelKind, ModelSpec, check_assumptions, small_time_matrix
from .pricing import atm_digital_limit_check, implied_vol, mc_digital
from .simulate import MCSample, SimConfig, simulate_paths, simulate_terminal
from .skew import atm_slope, clt_slope_bounds, skew_report

__all__ = [
    "MCSample",
    "ModelKind",
    "ModelSpec",
    "SimConfig",
    "__version__",
    "atm_digital_limit_check",
    "atm_slope",
    "check_assumptions",
    "clt_check",
    "clt_slope_bounds",
    "fclt_check",
    "girsanov_bounds",
    "implied_vol",
    "ldp_rate",
    "limit_covariance",
    "mc_digital",
    "simulate_paths",
    "simulate_terminal",
    "skew_report",
    "verify_bracketing",
]
