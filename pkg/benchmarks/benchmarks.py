"""Runtime benchmarks for the hot paths: bound evaluation, exact sampling and implied vols.

See https://asv.readthedocs.io/en/stable/writing_benchmarks.html."""

import numpy as np
from smalltime.bounds import girsanov_bounds
from smalltime.clt import clt_check, log_map
from smalltime.models import gbm, heston, squared_bessel
from smalltime.pricing import bs_call, implied_vol
from smalltime.simulate import SimConfig, simulate_terminal

GRID = np.geomspace(1e-8, 1e-1, 10_000)


def time_girsanov_bounds():
    """Evaluate both bounds on a dense log grid."""
    curve = girsanov_bounds(0.5, GRID)
    assert np.all(curve.e_f1 <= curve.e_f2)


def time_exact_gbm_terminal():
    """One million exact GBM draws."""
    simulate_terminal(gbm(0.2), 0.01, SimConfig(n_paths=1_000_000, seed=1))


def time_exact_squared_bessel_terminal():
    """Poisson-gamma mixture sampling of the squared Bessel transition."""
    simulate_terminal(squared_bessel(2.0, x0=1.0), 0.01, SimConfig(n_paths=200_000, seed=2))


def time_euler_heston_terminal():
    """Euler steps of a two-factor model."""
    cfg = SimConfig(n_paths=50_000, seed=3, scheme="EulerMaruyama", h_fraction=0.01)
    simulate_terminal(heston(0.04, 2.0, 0.04, 0.3, rho=-0.7), 0.01, cfg)


def time_implied_vol_strip():
    """Invert a strip of 200 strikes."""
    strikes = np.linspace(80.0, 120.0, 200)
    prices = bs_call(100.0, strikes, 0.01, 0.25, 0.5)
    for K, price in zip(strikes, prices):
        implied_vol(float(price), 100.0, float(K), 0.01, 0.5)


def time_clt_check_gbm():
    """A full fixed-time CLT check."""
    model = gbm(0.2)
    clt_check(model, log_map(model.x0), [1e-2, 1e-4, 1e-6], SimConfig(n_paths=100_000, seed=4))
