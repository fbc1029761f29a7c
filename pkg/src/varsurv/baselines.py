"""Ablations of the variational model and a Weibull AFT reference.

* :class:`NoQModel` keeps the stochastic prior layer but drops the encoder;
  its likelihood is a Monte-Carlo marginal over prior draws.
* :class:`MlpModel` maps covariates straight to softmax logits.
* :class:`AftWeibullModel` is the parametric accelerated-failure-time model,
  scored on the same bins as the neural models.
"""
from __future__ import annotations

import logging

import numpy as np

from varsurv import autodiff as ad
from varsurv.errors import DataError
from varsurv.grid import likelihood_masks
from varsurv.model import (
    DiscreteSurvivalModel,
    GaussianDiag,
    _fit_grid,
    fit,
    gaussian_tape,
    log_softmax_np,
    mask_to_log,
    masked_logsumexp,
)
from varsurv.nn import Mlp
from varsurv.seeding import derive_rng

log = logging.getLogger(__name__)

NOQ_EVAL_SAMPLES = 100
LOG_FLOOR = np.log(1e-300)


class NoQModel(DiscreteSurvivalModel):
    kind = "vsi_noq"

    def __init__(self, grid, schema, na_curve, params, config, n_features=None):
        super().__init__(grid, schema, na_curve, params, config)
        self._n_features = n_features
        p, m, h = self.n_features, config.latent_dim, config.hidden
        self.prior_net = Mlp("prior", (p, h, h, 2 * m))
        self.decoder_net = Mlp("decoder", (m, h, h, h, grid.n_bins))

    @classmethod
    def initialize(cls, train, cfg):
        grid, na = _fit_grid(train, cfg)
        model = cls(grid, train.schema, na, {}, cfg, n_features=train.x.shape[1])
        rng = derive_rng(cfg.seed, cls.kind, "init")
        for net in (model.prior_net, model.decoder_net):
            model.params.update(net.init(rng))
        return model

    @property
    def latent_dim(self):
        return self.config.latent_dim

    def prior(self, x):
        return GaussianDiag.from_output(self.prior_net.forward(self.params, x))

    def decoder_logpmf(self, z):
        return log_softmax_np(self.decoder_net.forward(self.params, z))

    def prepare(self, data):
        return {"x": data.x, "mask_log": mask_to_log(likelihood_masks(data.time, data.event, self.grid))}

    def loss_tape(self, params, x, mask_log, eps):
        """Per-row negative log of the K-draw marginal; ``eps`` is (K, n, m)."""
        K, n, m = eps.shape
        mp, lp = gaussian_tape(self.prior_net.forward_tape(params, x), m)
        sd = ad.exp(0.5 * lp)
        # stack the K draws along the batch axis: row k*n + i is draw k of subject i
        rows = ad.reshape(ad.concat([mp + sd * eps[k] for k in range(K)], axis=0), (K * n, m))
        logp = ad.log_softmax(self.decoder_net.forward_tape(params, rows))
        per_draw = ad.reshape(ad.logsumexp(logp + np.tile(mask_log, (K, 1)), axis=-1), (K, n))
        return -(ad.logsumexp(per_draw, axis=0) - np.log(K))

    def batch_objective(self, params, batch, rng, train=True):
        K = self.config.noq_samples_train
        eps = rng.standard_normal((K, len(batch["x"]), self.latent_dim))
        return -self.loss_tape(params, batch["x"], batch["mask_log"], eps)

    def predict_pmf(self, x, rng, n_samples=200):
        from varsurv.inference import predict_distribution

        return predict_distribution(self, x, rng, n_samples)

    def loglik(self, x, time, event, rng, n_samples=NOQ_EVAL_SAMPLES):
        return -noq_loss(self, x, time, event, rng, n_samples)


def noq_loss(model, x, time, event, rng, n_samples=NOQ_EVAL_SAMPLES):
    """Per-row ``-log mean_k p(t | z_k)`` (tail mass for censored rows), z_k ~ prior."""
    x = np.atleast_2d(x)
    mask = likelihood_masks(np.atleast_1d(time), np.atleast_1d(event), model.grid)
    p = model.prior(x)
    logs = np.empty((n_samples, len(x)))
    for k in range(n_samples):
        z = p.mean + np.exp(0.5 * p.log_var) * rng.standard_normal(p.mean.shape)
        logs[k] = masked_logsumexp(model.decoder_logpmf(z), mask)
    mx = logs.max(axis=0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(logs - np.where(np.isfinite(mx), mx, 0.0)).mean(axis=0)) + np.where(np.isfinite(mx), mx, 0.0)
    floored = out < LOG_FLOOR
    if floored.any():
        log.warning("noq_loss: %d zero marginals floored at 1e-300", int(floored.sum()))
        out = np.maximum(out, LOG_FLOOR)
    return -out


class MlpModel(DiscreteSurvivalModel):
    kind = "mlp"

    def __init__(self, grid, schema, na_curve, params, config, n_features=None):
        super().__init__(grid, schema, na_curve, params, config)
        self._n_features = n_features
        h = config.hidden
        # prior and decoder bodies joined without the stochastic layer
        self.net = Mlp("mlp", (self.n_features, h, h, config.latent_dim, h, h, h, grid.n_bins))

    @classmethod
    def initialize(cls, train, cfg):
        grid, na = _fit_grid(train, cfg)
        model = cls(grid, train.schema, na, {}, cfg, n_features=train.x.shape[1])
        model.params.update(model.net.init(derive_rng(cfg.seed, cls.kind, "init")))
        return model

    def logpmf(self, x):
        return log_softmax_np(self.net.forward(self.params, x))

    def prepare(self, data):
        return {"x": data.x, "mask_log": mask_to_log(likelihood_masks(data.time, data.event, self.grid))}

    def batch_objective(self, params, batch, rng, train=True):
        rate = self.config.dropout if train else 0.0
        logp = ad.log_softmax(self.net.forward_tape(params, batch["x"], dropout=rate, rng=rng))
        return ad.logsumexp(logp + batch["mask_log"], axis=-1)

    def predict_pmf(self, x, rng=None, n_samples=None):
        return np.exp(self.logpmf(np.atleast_2d(x)))

    def loglik(self, x, time, event, rng=None, n_samples=None):
        return -direct_mlp_loss(self, x, time, event)


def direct_mlp_loss(model, x, time, event):
    """Per-row cross-entropy at the event bin, or ``-log`` tail mass if censored."""
    mask = likelihood_masks(np.atleast_1d(time), np.atleast_1d(event), model.grid)
    return -masked_logsumexp(model.logpmf(np.atleast_2d(x)), mask)


# AFT-Weibull -------------------------------------------------------------

def weibull_loglik_rows(mu, log_sigma, theta, x, time, event):
    """Per-row Weibull AFT log-likelihood in continuous time (numpy)."""
    sigma = np.exp(log_sigma)
    z = (np.log(time) - mu - x @ theta) / sigma
    return event * (-log_sigma - np.log(time) + z) - np.exp(z)


def weibull_loglik_tape(params, x, log_t, event):
    """Graph version; ``params`` holds tensors ``mu``, ``log_sigma``, ``theta``."""
    inv_sigma = ad.exp(-params["log_sigma"])
    lin = ad.matmul(x, params["theta"]) + params["mu"]
    z = (log_t - lin) * inv_sigma
    return event * (z - params["log_sigma"] - log_t) - ad.exp(z)


class AftWeibullModel(DiscreteSurvivalModel):
    """Weibull AFT with ``z = (log t - mu - theta.x) / sigma``.

    Shape ``nu = 1/sigma``; baseline scale ``lambda = exp(-mu/sigma)``.
    """

    kind = "aft_weibull"

    def __init__(self, grid, schema, na_curve, params, config, n_features=None, time_shift=0.0):
        super().__init__(grid, schema, na_curve, params, config)
        self._n_features = n_features
        self.time_shift = time_shift

    @classmethod
    def initialize(cls, train, cfg):
        grid, na = _fit_grid(train, cfg)
        shift = _zero_time_shift(train.time)
        lt = np.log(train.time[train.event == 1] + shift)
        params = {
            "mu": np.array(lt.mean()),
            "log_sigma": np.array(np.log(max(lt.std(), 1e-3))),
            "theta": np.zeros(train.x.shape[1]),
        }
        return cls(grid, train.schema, na, params, cfg, n_features=train.x.shape[1], time_shift=shift)

    @property
    def shape(self):
        return float(np.exp(-self.params["log_sigma"]))

    @property
    def scale(self):
        return float(np.exp(-self.params["mu"] / np.exp(self.params["log_sigma"])))

    def prepare(self, data):
        if np.any(data.time + self.time_shift <= 0):
            raise DataError("AFT-Weibull needs strictly positive times")
        return {"x": data.x, "log_t": np.log(data.time + self.time_shift), "event": data.event.astype(float)}

    def batch_objective(self, params, batch, rng, train=True):
        return weibull_loglik_tape(params, batch["x"], batch["log_t"], batch["event"])

    def continuous_loglik(self, x, time, event):
        p = self.params
        return weibull_loglik_rows(p["mu"], p["log_sigma"], p["theta"], x, np.asarray(time) + self.time_shift, np.asarray(event))

    def cdf(self, x, t):
        """Conditional CDF ``1 - exp(-exp(z))`` at times ``t`` (broadcast against rows of ``x``)."""
        p = self.params
        lin = (np.atleast_2d(x) @ p["theta"] + p["mu"])[:, None]
        with np.errstate(divide="ignore"):
            z = (np.log(np.asarray(t, dtype=float) + self.time_shift) - lin) / np.exp(p["log_sigma"])
        return -np.expm1(-np.exp(z))

    def predict_pmf(self, x, rng=None, n_samples=None):
        return aft_predict_pmf(self, x)

    def loglik(self, x, time, event, rng=None, n_samples=None):
        pmf = self.predict_pmf(x)
        mask = likelihood_masks(np.atleast_1d(time), np.atleast_1d(event), self.grid)
        with np.errstate(divide="ignore"):
            out = masked_logsumexp(np.log(pmf), mask)
        return np.maximum(out, LOG_FLOOR)


def _zero_time_shift(time):
    if np.any(time <= 0):
        pos = time[time > 0]
        shift = (pos.min() if len(pos) else 1.0) * 1e-3
        log.warning("AFT-Weibull: shifting times by %g to make them positive", shift)
        return float(shift)
    return 0.0


def aft_predict_pmf(model, x):
    """Bin probabilities from the Weibull CDF at the grid edges."""
    F = model.cdf(x, model.grid.edges[None, :])
    n = F.shape[0]
    cdf = np.concatenate([np.zeros((n, 1)), F, np.ones((n, 1))], axis=1)
    return np.diff(cdf, axis=1)


def fit_aft_weibull(train, valid, cfg):
    model = AftWeibullModel.initialize(train, cfg)
    return fit(model, train, valid, cfg)


def fit_noq(train, valid, cfg):
    return fit(NoQModel.initialize(train, cfg), train, valid, cfg)


def fit_mlp(train, valid, cfg):
    return fit(MlpModel.initialize(train, cfg), train, valid, cfg)


__all__ = [
    "AftWeibullModel",
    "MlpModel",
    "NoQModel",
    "aft_predict_pmf",
    "direct_mlp_loss",
    "fit_aft_weibull",
    "fit_mlp",
    "fit_noq",
    "noq_loss",
    "weibull_loglik_rows",
    "weibull_loglik_tape",
]
