import math

import numpy as np
import pytest

from varsurv.errors import ConfigError
from varsurv.simulate import (
    PRESETS,
    GompertzConfig,
    event_time_from_uniform,
    linear_predictor,
    simulate,
    truth_cdf,
)


class TestGompertz:
    def test_inversion_round_trip(self):
        cfg = GompertzConfig()
        rng = np.random.default_rng(0)
        x = np.column_stack([rng.normal(24, 8, 500), rng.normal(260, 500, 500)])
        u = rng.uniform(size=500)
        t = event_time_from_uniform(cfg, u, x)
        np.testing.assert_allclose(truth_cdf(cfg, x, t), 1 - u, rtol=1e-9, atol=1e-12)

    def test_cdf_matches_hazard_integral(self):
        # numerically integrate the hazard lambda exp(beta.x) exp(alpha s)
        cfg = GompertzConfig()
        x = np.array([[30.0, 100.0]])
        t = 40.0
        s = np.linspace(0, t, 200_001)
        h = cfg.lam * np.exp(linear_predictor(cfg, x)[0]) * np.exp(cfg.alpha * s)
        H = np.sum((h[1:] + h[:-1]) / 2 * np.diff(s))
        assert truth_cdf(cfg, x, np.array([t]))[0] == pytest.approx(1 - math.exp(-H), rel=1e-8)

    def test_cdf_table_broadcast(self):
        cfg = GompertzConfig()
        x = np.array([[20.0, 0.0], [40.0, 0.0], [30.0, 50.0]])
        grid = np.array([10.0, 30.0])
        tab = truth_cdf(cfg, x, grid[None, :])
        assert tab.shape == (3, 2)
        assert np.all(tab[1] > tab[0])  # older subjects fail earlier
        np.testing.assert_allclose(tab[:, 1], [truth_cdf(cfg, x[i:i + 1], np.array([30.0]))[0] for i in range(3)])

    def test_probability_integral_transform_uniform(self):
        sim = simulate(GompertzConfig.preset("er100", N=20_000, seed=3))
        cfg = GompertzConfig.preset("er100")
        pit = np.sort(truth_cdf(cfg, sim.x, sim.event_time))
        ks = np.max(np.abs(pit - (np.arange(1, len(pit) + 1) / len(pit))))
        # 1.63 / sqrt(n) is the 99% Kolmogorov critical value
        assert ks < 1.63 / np.sqrt(len(pit))


class TestSimulate:
    @pytest.mark.parametrize("name, rate", [("er100", 1.0), ("er50", 0.5), ("er30", 0.3)])
    def test_preset_event_rates(self, name, rate):
        sim = simulate(GompertzConfig.preset(name, N=50_000, seed=1))
        assert sim.event.mean() == pytest.approx(rate, abs=0.03)

    def test_censoring_rule(self):
        sim = simulate(GompertzConfig.preset("er50", N=2000, seed=2))
        np.testing.assert_array_equal(sim.time, np.minimum(sim.event_time, sim.censor_time))
        np.testing.assert_array_equal(sim.event, sim.event_time < sim.censor_time)
        assert np.all((sim.censor_time >= 0) & (sim.censor_time <= PRESETS["er50"]))

    def test_no_censoring_horizon(self):
        sim = simulate(GompertzConfig(N=100, seed=0))
        assert np.all(sim.event == 1) and np.all(np.isinf(sim.censor_time))

    def test_seeded(self):
        a = simulate(GompertzConfig(N=50, seed=9))
        b = simulate(GompertzConfig(N=50, seed=9))
        c = simulate(GompertzConfig(N=50, seed=10))
        np.testing.assert_array_equal(a.time, b.time)
        assert not np.array_equal(a.time, c.time)

    def test_covariate_moments(self):
        sim = simulate(GompertzConfig(N=100_000, seed=4))
        assert sim.age.mean() == pytest.approx(24.3, abs=0.1)
        assert sim.age.std() == pytest.approx(8.4, rel=0.01)
        assert sim.radon.std() == pytest.approx(507.8, rel=0.01)

    def test_table_columns(self):
        t = simulate(GompertzConfig(N=10, seed=0)).table()
        assert t.names == ("age", "radon")

    @pytest.mark.parametrize("kw", [{"alpha": 0}, {"lam": -1}, {"N": 0}, {"censor_horizon": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            GompertzConfig(**kw)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="er10"):
            GompertzConfig.preset("er10")
