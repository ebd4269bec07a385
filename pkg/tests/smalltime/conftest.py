import pytest
from smalltime.simulate import SimConfig


@pytest.fixture
def small_sim():
    """A quick exact-sampling configuration."""
    return SimConfig(n_paths=20_000, seed=20240601, chunk_size=4096)


@pytest.fixture
def euler_sim():
    """A quick Euler configuration with 50 steps per horizon."""
    return SimConfig(n_paths=20_000, seed=20240602, scheme="EulerMaruyama", chunk_size=4096, h_fraction=0.02)
