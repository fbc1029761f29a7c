import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varsurv import autodiff as ad
from varsurv.errors import ConfigError
from varsurv.grid import likelihood_masks
from varsurv.model import (
    GaussianDiag,
    TrainConfig,
    VsiModel,
    elbo_censored,
    elbo_event,
    fit,
    kl_diag_gaussian,
    kl_tape,
    masked_logsumexp,
    sample_reparam,
)

from conftest import encoder_as_prior, small_config, uniform_decoder


@pytest.fixture
def model(tiny):
    tr, _, _ = tiny
    return VsiModel.initialize(tr, small_config())


def g(mean, log_var):
    return GaussianDiag(np.atleast_1d(np.asarray(mean, float)), np.atleast_1d(np.asarray(log_var, float)))


class TestGaussian:
    def test_clamp(self):
        d = GaussianDiag.from_output(np.array([0.3, 50.0]))
        assert d.mean[0] == 0.3 and d.log_var[0] == 10.0
        assert GaussianDiag.from_output(np.array([0.0, -99.0])).log_var[0] == -10.0

    def test_zero_prior_net_is_standard(self, model):
        for k in model.params:
            if k.startswith("prior."):
                model.params[k] = np.zeros_like(model.params[k])
        d = model.prior(np.ones((2, model.n_features)))
        np.testing.assert_array_equal(d.mean, 0.0)
        np.testing.assert_array_equal(d.log_var, 0.0)

    def test_log_density_matches_univariate_product(self):
        d = g([0.5, -1.0], [0.2, -0.3])
        z = np.array([0.1, 0.4])
        sd = np.exp(0.5 * d.log_var)
        ref = np.sum(-0.5 * ((z - d.mean) / sd) ** 2 - np.log(sd) - 0.5 * np.log(2 * np.pi))
        assert d.log_density(z) == pytest.approx(ref, rel=1e-12)


class TestKl:
    def test_identity_is_zero(self):
        d = g([0.3, -2.0], [1.0, -4.0])
        assert kl_diag_gaussian(d, d) == 0.0

    def test_shifted_mean(self):
        assert kl_diag_gaussian(g(1.0, 0.0), g(0.0, 0.0)) == pytest.approx(0.5, abs=1e-15)

    def test_scaled_variance(self):
        assert kl_diag_gaussian(g(0.0, 1.0), g(0.0, 0.0)) == pytest.approx(0.5 * (np.e - 2.0), rel=1e-12)
        assert 0.5 * (np.e - 2.0) == pytest.approx(0.3591, abs=1e-4)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(*[st.floats(-5, 5)] * 4), min_size=1, max_size=6))
    def test_nonnegative(self, rows):
        a = np.array(rows)
        assert kl_diag_gaussian(g(a[:, 0], a[:, 1]), g(a[:, 2], a[:, 3])) >= -1e-12

    def test_gradient_zero_at_match(self):
        mp, lp = np.array([0.2, -0.1]), np.array([0.3, -0.5])
        _, gr = ad.gradients(lambda p: ad.sum(kl_tape(p["mq"], p["lq"], mp, lp)), {"mq": mp.copy(), "lq": lp.copy()})
        np.testing.assert_allclose(gr["mq"], 0.0, atol=1e-15)
        np.testing.assert_allclose(gr["lq"], 0.0, atol=1e-15)

    def test_tape_matches_numpy(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 3, 5))
        got = kl_tape(*(ad.Tensor(v) for v in a)).value
        np.testing.assert_allclose(got, kl_diag_gaussian(g(a[0], a[1]), g(a[2], a[3])), rtol=1e-13)


class TestSampling:
    def test_tiny_variance(self):
        rng = np.random.default_rng(0)
        d = GaussianDiag.from_output(np.array([[1.5, -2.0, -1e6, -1e6]]))
        eps = np.random.default_rng(0).standard_normal((1, 2))
        z = sample_reparam(d, rng)
        assert np.all(np.abs(z - d.mean) <= 0.01 * np.abs(eps))

    def test_mean_of_draws(self):
        d = g(np.full(100_000, 0.7), np.full(100_000, np.log(4.0)))
        z = sample_reparam(d, np.random.default_rng(1))
        assert abs(z.mean() - 0.7) < 3 * 2.0 / np.sqrt(1e5)

    def test_seeded(self):
        d = g([0.0, 1.0], [0.0, 0.0])
        np.testing.assert_array_equal(sample_reparam(d, np.random.default_rng(3)), sample_reparam(d, np.random.default_rng(3)))


class TestDecoder:
    def test_uniform_and_shift(self, model):
        uniform_decoder(model)
        z = np.random.default_rng(0).normal(size=(4, model.latent_dim))
        np.testing.assert_allclose(model.decoder_pmf(z), 1.0 / model.grid.n_bins)
        model.params["decoder.b3"] = model.params["decoder.b3"] + 7.0
        np.testing.assert_allclose(model.decoder_pmf(z), 1.0 / model.grid.n_bins, rtol=1e-12)

    def test_normalized(self, model):
        z = np.random.default_rng(0).normal(size=(50, model.latent_dim)) * 5
        np.testing.assert_allclose(model.decoder_pmf(z).sum(axis=1), 1.0, atol=1e-12)


class TestEncoder:
    def test_depends_on_target(self, model, tiny):
        tr = tiny[0]
        x = tr.x[:1]
        a = model.encoder(x, model.encoder_targets([0.5], [1]))
        b = model.encoder(x, model.encoder_targets([0.5], [0]))
        assert not np.allclose(a.mean, b.mean)

    def test_time_delta_variant(self, tiny):
        tr, va, _ = tiny
        m = VsiModel.initialize(tr, small_config(encoder_input="time_delta"))
        assert m.params["encoder.W0"].shape[0] == tr.x.shape[1] + 2
        fit(m, tr, va, small_config(encoder_input="time_delta", max_epochs=2))


class TestElbo:
    def test_uniform_decoder_prior_encoder_event(self, model, tiny):
        uniform_decoder(model)
        encoder_as_prior(model)
        x = tiny[0].x[:5]
        val = elbo_event(model, x, np.full(5, 1.0), np.random.default_rng(0))
        np.testing.assert_allclose(val, -np.log(model.grid.n_bins), rtol=1e-12)

    def test_uniform_decoder_censored_tails(self, model, tiny):
        uniform_decoder(model)
        encoder_as_prior(model)
        x = tiny[0].x[:2]
        M, nb = model.grid.M, model.grid.n_bins
        first = model.grid.edges[0] / 2
        last_real = (model.grid.edges[-2] + model.grid.edges[-1]) / 2
        val = elbo_censored(model, x, np.array([first, last_real]), np.random.default_rng(0))
        np.testing.assert_allclose(val, [np.log(M / nb), np.log(1 / nb)], rtol=1e-12)

    def test_encoder_prior_kills_kl(self, model, tiny):
        encoder_as_prior(model)
        x = tiny[0].x[:4]
        q = model.encoder(x, model.encoder_targets(np.ones(4), np.ones(4)))
        np.testing.assert_array_equal(kl_diag_gaussian(q, model.prior(x)), 0.0)

    def test_batch_objective_matches_row_elbos(self, model, tiny):
        data = tiny[0].subset(np.arange(40))
        batch = model.prepare(data)
        consts = {k: ad.Tensor(v) for k, v in model.params.items()}
        obj = model.batch_objective(consts, batch, np.random.default_rng(4)).value
        ref = model.elbo(data.x, data.time, data.event, np.random.default_rng(4))
        np.testing.assert_allclose(obj, ref, rtol=1e-10)

    def test_event_and_censored_rows(self, model, tiny):
        data = tiny[0].subset(np.arange(40))
        eps_rng = np.random.default_rng(9)
        eps = eps_rng.standard_normal((40, model.latent_dim))
        batch = model.prepare(data)
        consts = {k: ad.Tensor(v) for k, v in model.params.items()}
        mixed = model.elbo_tape(consts, batch["x"], batch["targets"], batch["mask_log"], eps).value
        for flag in (1, 0):
            rows = np.flatnonzero(data.event == flag)
            q = model.encoder(data.x[rows], model.encoder_targets(data.time[rows], data.event[rows]))
            z = q.mean + np.exp(0.5 * q.log_var) * eps[rows]
            mask = likelihood_masks(data.time[rows], np.full(len(rows), flag), model.grid)
            ref = masked_logsumexp(model.decoder_logpmf(z), mask) - kl_diag_gaussian(q, model.prior(data.x[rows]))
            np.testing.assert_allclose(mixed[rows], ref, rtol=1e-10)

    def test_permutation_invariant(self, model, tiny):
        data = tiny[0].subset(np.arange(30))
        perm = np.random.default_rng(2).permutation(30)
        eps = np.random.default_rng(3).standard_normal((30, model.latent_dim))
        b = model.prepare(data)
        consts = {k: ad.Tensor(v) for k, v in model.params.items()}
        a = model.elbo_tape(consts, b["x"], b["targets"], b["mask_log"], eps).value
        c = model.elbo_tape(consts, b["x"][perm], b["targets"][perm], b["mask_log"][perm], eps[perm]).value
        np.testing.assert_allclose(a[perm], c, rtol=1e-12)


class TestTraining:
    def test_improves_and_restores_best(self, tiny):
        tr, va, _ = tiny
        hist = []
        m = fit(VsiModel.initialize(tr, small_config()), tr, va, history=hist)
        vals = [h["valid_objective"] for h in hist]
        assert max(vals[1:]) > vals[0]
        assert vals[m.best_epoch] == max(vals)
        assert all(np.isfinite(h["valid_objective"]) for h in hist)

    def test_patience_zero(self, tiny):
        tr, va, _ = tiny
        hist = []
        cfg = small_config(patience=0, max_epochs=200, learning_rate=0.05)
        m = fit(VsiModel.initialize(tr, cfg), tr, va, cfg, history=hist)
        vals = [h["valid_objective"] for h in hist]
        # the last epoch is the first one that failed to improve on the best so far
        assert vals[-1] <= max(vals[:-1])
        assert all(vals[i] > max(vals[:i]) for i in range(1, len(vals) - 1))
        assert m.best_epoch == len(vals) - 2

    def test_deterministic(self, tiny):
        tr, va, _ = tiny
        cfg = small_config(max_epochs=3)
        a = fit(VsiModel.initialize(tr, cfg), tr, va, cfg)
        b = fit(VsiModel.initialize(tr, cfg), tr, va, cfg)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])

    def test_mc_samples(self, tiny):
        tr, va, _ = tiny
        cfg = small_config(max_epochs=1, mc_samples_train=3)
        fit(VsiModel.initialize(tr, cfg), tr, va, cfg)

    def test_architecture(self, tiny):
        m = VsiModel.initialize(tiny[0], TrainConfig(M=10))
        assert m.prior_net.widths == (2, 32, 32, 64)
        assert m.encoder_net.widths == (2 + m.grid.n_bins, 32, 32, 64)
        assert m.decoder_net.widths == (32, 32, 32, 32, m.grid.n_bins)


class TestConfig:
    @pytest.mark.parametrize("bad", [{"learning_rate": 0}, {"batch_size": -1}, {"patience": -1}, {"encoder_input": "x"}, {"dropout": 1.0}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            TrainConfig.from_dict({"bogus": 1})

    def test_roundtrip(self):
        c = TrainConfig(M=77, seed=4)
        assert TrainConfig.from_dict(c.to_dict()) == c
