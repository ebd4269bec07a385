"""Tests for the Monte Carlo engine."""

import math
import threading
from dataclasses import replace

import numpy as np
import pytest
import smalltime.simulate as simulate_module
from smalltime.errors import ConfigError, SchemeUnavailable, StepUnstable
from smalltime.models import cev, drifted_bm, gbm, heston, jump_diffusion, poisson_martingale, squared_bessel
from smalltime.simulate import (
    MCSample,
    Scheme,
    SimConfig,
    derive_seed,
    exact_available,
    resolve_threads,
    simulate_paths,
    simulate_terminal,
    substream_rng,
)
from smalltime.stats import dkw_epsilon, ks_two_sample, normal_cdf


class TestSimConfig:
    """Validation of the settings."""

    def test_rejects_bad_values(self):
        """Paths, grid, seed and step settings are validated."""
        with pytest.raises(ConfigError, match="n_paths"):
            SimConfig(n_paths=0)
        with pytest.raises(ConfigError, match="start at 0"):
            SimConfig(n_paths=10, t_grid=(0.1, 1.0))
        with pytest.raises(ConfigError, match="strictly increasing"):
            SimConfig(n_paths=10, t_grid=(0.0, 1.0, 0.5))
        with pytest.raises(ConfigError, match="seed"):
            SimConfig(n_paths=10, seed=-1)
        with pytest.raises(ConfigError, match="h_fraction"):
            SimConfig(n_paths=10, h_fraction=0.0)

    def test_step_cap(self):
        """The default step follows the horizon; an explicit h_max wins."""
        assert SimConfig(n_paths=1, t_grid=(0.0, 2.0)).step_cap == pytest.approx(2e-4)
        assert SimConfig(n_paths=1, h_max=0.01).step_cap == 0.01
        assert SimConfig(n_paths=1).for_terminal(0.5).step_cap == pytest.approx(0.5e-4)

    def test_from_dict(self):
        """Unknown keys are rejected and the thread cap is not part of the identity."""
        cfg = SimConfig.from_dict({"n_paths": 100, "seed": 3, "scheme": "EulerMaruyama", "threads": 2})
        assert cfg.scheme == Scheme.EULER_MARUYAMA
        assert "threads" not in cfg.to_dict()
        assert cfg == replace(cfg, threads=8)
        with pytest.raises(ConfigError, match="Unknown simulation keys"):
            SimConfig.from_dict({"n_paths": 100, "paths": 10})
        with pytest.raises(ConfigError, match="n_paths"):
            SimConfig.from_dict({"seed": 1})


class TestRandomStreams:
    """Counter-based substreams."""

    def test_substreams_differ(self):
        """Different chunks or seeds give different streams."""
        a = substream_rng(1, 0).random(4)
        assert not np.array_equal(a, substream_rng(1, 1).random(4))
        assert not np.array_equal(a, substream_rng(2, 0).random(4))

    def test_derive_seed(self):
        """Derived seeds are deterministic, distinct and 64-bit."""
        assert derive_seed(5, 0) == derive_seed(5, 0)
        assert derive_seed(5, 0) != derive_seed(5, 1)
        assert 0 <= derive_seed(5, 3) < 2**64

    def test_resolve_threads(self, monkeypatch):
        """Explicit cap, then the environment, then the CPU count."""
        monkeypatch.setenv("SMALLTIME_THREADS", "3")
        assert resolve_threads() == 3
        assert resolve_threads(5) == 5
        monkeypatch.setenv("SMALLTIME_THREADS", "many")
        with pytest.raises(ConfigError, match="SMALLTIME_THREADS"):
            resolve_threads()


class TestReproducibility:
    """Results depend on the seed only, not on the worker count."""

    def test_thread_count_invariance(self):
        """One worker and eight workers produce identical bytes."""
        model = gbm(0.2, r=0.05)
        base = SimConfig(n_paths=50_000, seed=42, chunk_size=4096)
        one = simulate_terminal(model, 0.5, replace(base, threads=1))
        eight = simulate_terminal(model, 0.5, replace(base, threads=8))
        assert one.values.tobytes() == eight.values.tobytes()
        assert one.meta == eight.meta

    def test_euler_thread_count_invariance(self):
        """The invariance also holds for Euler paths with jumps."""
        model = jump_diffusion(b=0.1, sigma=0.5, intensity=3.0, a=0.2)
        base = SimConfig(
            n_paths=9_000, t_grid=(0.0, 0.5, 1.0), seed=7, scheme="EulerMaruyama", chunk_size=1000
        )
        one = simulate_paths(model, replace(base, threads=1))
        four = simulate_paths(model, replace(base, threads=4))
        np.testing.assert_array_equal(one.values, four.values)
        np.testing.assert_array_equal(one.jump_counts, four.jump_counts)

    def test_concurrent_callers(self):
        """Several threads simulating at once get the same sample."""
        model = squared_bessel(2.0, x0=1.0)
        cfg = SimConfig(n_paths=10_000, seed=9, chunk_size=2048)
        results = []
        errors = []

        def simulate_in_thread():
            """Simulate in a thread."""
            try:
                results.append(simulate_terminal(model, 0.25, cfg).values.copy())
            except Exception as e:
                errors.append(e)

        threads = [threading.Thread(target=simulate_in_thread) for _ in range(6)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        assert len(errors) == 0, f"Expected no errors, but got: {errors}"
        assert len(results) == 6
        for values in results[1:]:
            np.testing.assert_array_equal(values, results[0])


class TestExactSamplers:
    """Moments and laws of the exact samplers."""

    def test_drifted_bm_moments(self, small_sim):
        """Mean b t and variance sigma^2 t."""
        t = 0.3
        x = simulate_terminal(drifted_bm(b=0.5, sigma=2.0, x0=1.0), t, small_sim).values[:, 0]
        n = x.size
        assert abs(x.mean() - (1.0 + 0.5 * t)) < 5 * math.sqrt(4.0 * t / n)
        assert x.var(ddof=1) == pytest.approx(4.0 * t, rel=0.05)

    def test_gbm_log_law(self, small_sim):
        """log(S_t / S0) is N((r - sigma^2 / 2) t, sigma^2 t) within the DKW band."""
        t, sigma, r = 0.5, 0.3, 0.02
        s = simulate_terminal(gbm(sigma, r=r), t, small_sim).values[:, 0]
        z = np.sort((np.log(s / 100.0) - (r - 0.5 * sigma**2) * t) / (sigma * math.sqrt(t)))
        n = z.size
        ecdf = np.arange(1, n + 1) / n
        assert np.max(np.abs(ecdf - normal_cdf(z))) < dkw_epsilon(n)

    def test_squared_bessel_mean_from_positive_start(self, small_sim):
        """E R_t = x0 + delta t with Var R_t = 2 delta t^2 + 4 x0 t."""
        t, delta, x0 = 0.5, 3.0, 2.0
        r = simulate_terminal(squared_bessel(delta, x0=x0), t, small_sim).values[:, 0]
        se = math.sqrt((2 * delta * t**2 + 4 * x0 * t) / r.size)
        assert abs(r.mean() - (x0 + delta * t)) < 5 * se
        assert np.all(r >= 0)

    def test_poisson_counts(self, small_sim):
        """The state is x0 + rate t - N_t with E N_t = rate t."""
        cfg = replace(small_sim, t_grid=(0.0, 0.5, 2.0))
        sample = simulate_paths(poisson_martingale(rate=1.5), cfg)
        counts = sample.jump_counts
        assert counts.shape == (cfg.n_paths, 3)
        assert np.all(counts[:, 0] == 0)
        assert np.all(np.diff(counts, axis=1) >= 0)
        np.testing.assert_allclose(sample.states()[:, 2, 0], 1.5 * 2.0 - counts[:, 2])
        assert abs(counts[:, 2].mean() - 3.0) < 5 * math.sqrt(3.0 / cfg.n_paths)

    def test_exact_unavailable(self, small_sim):
        """CEV, Heston and JumpDiffusion need Euler."""
        assert not exact_available(cev(2.0, 0.5))
        with pytest.raises(SchemeUnavailable):
            simulate_terminal(heston(0.04, 2.0, 0.04, 0.3), 0.1, small_sim)


class TestEuler:
    """Euler-Maruyama against exact sampling."""

    def test_cev_unit_elasticity_matches_gbm(self, euler_sim):
        """CEV with beta = 1 is GBM; Euler and exact agree in two-sample KS."""
        t = 0.1
        euler = simulate_terminal(cev(0.2, 1.0), t, euler_sim).values[:, 0]
        exact_cfg = replace(euler_sim, scheme="Exact", seed=euler_sim.seed + 1)
        exact = simulate_terminal(gbm(0.2), t, exact_cfg).values[:, 0]
        assert ks_two_sample(euler, exact).passed

    def test_state_free_models_take_one_step(self, euler_sim):
        """DriftedBM under Euler has the exact law."""
        euler = simulate_terminal(drifted_bm(b=1.0), 0.2, euler_sim).values[:, 0]
        exact = simulate_terminal(drifted_bm(b=1.0), 0.2, replace(euler_sim, scheme="Exact", seed=5)).values
        assert ks_two_sample(euler, exact[:, 0]).passed

    def test_heston_stays_positive(self, euler_sim):
        """Price-coordinate Heston is stepped in log space, so prices stay positive."""
        model = heston(0.04, 1.0, 0.01, 0.9, rho=-0.9)
        sample = simulate_terminal(model, 0.5, replace(euler_sim, n_paths=2_000))
        assert np.all(sample.values[:, 0] > 0)
        assert np.all(np.isfinite(sample.values))

    def test_non_finite_states(self, small_sim, monkeypatch):
        """A chunk with non-finite states raises StepUnstable."""

        def broken(model, t_grid, rng, rows, antithetic):
            return np.full((rows, t_grid.size, model.dim), np.nan), None

        monkeypatch.setattr(simulate_module, "_exact_chunk", broken)
        with pytest.raises(StepUnstable, match="non-finite"):
            simulate_terminal(gbm(0.2), 0.1, small_sim)


class TestMCSample:
    """Layout, immutability and file formats."""

    @pytest.fixture
    def sample(self):
        """A short path sample of a two-dimensional jump diffusion."""
        model = jump_diffusion(b=0.0, sigma=1.0, intensity=2.0, a=0.5, dim=2)
        cfg = SimConfig(n_paths=64, t_grid=(0.0, 0.1, 0.2), seed=3, scheme="EulerMaruyama", chunk_size=16)
        return simulate_paths(model, cfg)

    def test_layout(self, sample):
        """Columns are time-major and the first time is x0."""
        assert sample.values.shape == (64, 6)
        assert sample.labels[:3] == ("x1@t=0", "x2@t=0", "x1@t=0.1")
        assert sample.times == (0.0, 0.1, 0.2)
        assert sample.states().shape == (64, 3, 2)
        np.testing.assert_array_equal(sample.states()[:, 0, :], 0.0)
        np.testing.assert_array_equal(sample.column("x2@t=0.2"), sample.states()[:, 2, 1])

    def test_read_only(self, sample):
        """Values cannot be modified in place."""
        with pytest.raises(ValueError):
            sample.values[0, 0] = 1.0

    def test_binary_round_trip(self, sample, tmp_path):
        """to_binary / from_binary restore values, labels, meta and jump counts."""
        path = sample.to_binary(tmp_path / "paths.bin")
        assert path.read_bytes()[:8] == b"SMTMCS01"
        assert (tmp_path / "paths.bin.json").exists()
        restored = MCSample.from_binary(path)
        np.testing.assert_array_equal(restored.values, sample.values)
        np.testing.assert_array_equal(restored.jump_counts, sample.jump_counts)
        assert restored.labels == sample.labels
        assert restored.meta == sample.meta

    def test_not_a_sample_file(self, sample, tmp_path):
        """A wrong magic header is rejected."""
        path = sample.to_binary(tmp_path / "paths.bin")
        path.write_bytes(b"XXXXXXXX" + path.read_bytes()[8:])
        with pytest.raises(ValueError, match="not an MCSample"):
            MCSample.from_binary(path)

    def test_csv(self, sample, tmp_path):
        """The CSV header carries the labels."""
        path = sample.to_csv(tmp_path / "paths.csv")
        header = path.read_text().splitlines()[0]
        assert header.split(",") == list(sample.labels)

    def test_shape_mismatch(self):
        """Labels must match the columns."""
        with pytest.raises(ValueError, match="labels"):
            MCSample(np.zeros((2, 2)), ("a",), {})
