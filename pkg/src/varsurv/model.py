"""Variational survival model: covariate prior, (x, t) encoder, softmax decoder.

Training maximizes the event ELBO on uncensored rows and the censored ELBO
(log tail mass of the decoder instead of the event-bin mass) on censored rows.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from varsurv import autodiff as ad
from varsurv.errors import ConfigError, NumericalError
from varsurv.grid import build_grid, encode_targets, likelihood_masks, nelson_aalen
from varsurv.nn import Adam, Mlp
from varsurv.seeding import derive_rng

log = logging.getLogger(__name__)

LOG_VAR_MIN, LOG_VAR_MAX = -10.0, 10.0
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 100
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    latent_dim: int = 32
    M: int = 50
    mc_samples_train: int = 1
    hidden: int = 32
    encoder_input: str = "soft"  # "soft" | "time_delta"
    noq_samples_train: int = 10
    dropout: float = 0.0

    def __post_init__(self):
        for f in ("learning_rate", "batch_size", "max_epochs", "latent_dim", "M", "mc_samples_train", "hidden", "noq_samples_train"):
            if not getattr(self, f) > 0:
                raise ConfigError(f"{f} must be positive, got {getattr(self, f)!r}")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.encoder_input not in ("soft", "time_delta"):
            raise ConfigError(f"encoder_input must be 'soft' or 'time_delta', got {self.encoder_input!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class GaussianDiag:
    mean: np.ndarray
    log_var: np.ndarray

    @classmethod
    def from_output(cls, out):
        m = out.shape[-1] // 2
        return cls(out[..., :m], np.clip(out[..., m:], LOG_VAR_MIN, LOG_VAR_MAX))

    def log_density(self, z):
        """Diagonal multivariate normal log-density, summed over the last axis."""
        d = z - self.mean
        return -0.5 * np.sum(self.log_var + d * d * np.exp(-self.log_var) + LOG_2PI, axis=-1)


def kl_diag_gaussian(q, p):
    """KL(q || p) for diagonal Gaussians, summed over the last axis."""
    return 0.5 * np.sum(
        np.exp(q.log_var - p.log_var)
        + (p.mean - q.mean) ** 2 * np.exp(-p.log_var)
        - 1.0
        + p.log_var
        - q.log_var,
        axis=-1,
    )


def kl_tape(mq, lq, mp, lp):
    """Graph version of :func:`kl_diag_gaussian` on tape tensors."""
    diff = mp - mq
    terms = ad.exp(lq - lp) + ad.square(diff) * ad.exp(-lp) - 1.0 + lp - lq
    return 0.5 * ad.sum(terms, axis=-1)


def sample_reparam(d, rng):
    eps = rng.standard_normal(np.shape(d.mean))
    return d.mean + np.exp(0.5 * d.log_var) * eps


def gaussian_tape(out, m):
    mean, raw = ad.split_last(out, m)
    return mean, ad.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX)


def log_softmax_np(logits):
    m = logits.max(axis=-1, keepdims=True)
    s = logits - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def masked_logsumexp(logp, mask):
    """log Σ_{mask} exp(logp) along the last axis."""
    masked = np.where(mask, logp, -np.inf)
    m = masked.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(masked - m).sum(axis=-1)) + m[..., 0]


def mask_to_log(mask):
    return np.where(mask, 0.0, -np.inf)


class DiscreteSurvivalModel:
    """Shared state for models emitting a pmf over ``grid.n_bins`` bins."""

    kind = None

    def __init__(self, grid, schema, na_curve, params, config):
        self.grid = grid
        self.schema = schema
        self.na_curve = na_curve
        self.params = params
        self.config = config

    @property
    def n_features(self):
        return self.schema.width if self.schema is not None else self._n_features

    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    # subclasses implement: prepare, batch_objective, predict_pmf, loglik


def _fit_grid(train, cfg):
    grid = build_grid(train.time[train.event == 1], cfg.M)
    return grid, nelson_aalen(train.time, train.event, grid)


class VsiModel(DiscreteSurvivalModel):
    kind = "vsi"

    def __init__(self, grid, schema, na_curve, params, config, n_features=None):
        super().__init__(grid, schema, na_curve, params, config)
        self._n_features = n_features
        p, m, h = self.n_features, config.latent_dim, config.hidden
        extra = grid.n_bins if config.encoder_input == "soft" else 2
        self.prior_net = Mlp("prior", (p, h, h, 2 * m))
        self.encoder_net = Mlp("encoder", (p + extra, h, h, 2 * m))
        self.decoder_net = Mlp("decoder", (m, h, h, h, grid.n_bins))

    @classmethod
    def initialize(cls, train, cfg):
        grid, na = _fit_grid(train, cfg)
        model = cls(grid, train.schema, na, {}, cfg, n_features=train.x.shape[1])
        rng = derive_rng(cfg.seed, cls.kind, "init")
        for net in (model.prior_net, model.encoder_net, model.decoder_net):
            model.params.update(net.init(rng))
        return model

    @property
    def latent_dim(self):
        return self.config.latent_dim

    def prior(self, x):
        return GaussianDiag.from_output(self.prior_net.forward(self.params, x))

    def encoder_targets(self, time, event):
        """Time-dependent part of the encoder input for each row."""
        if self.config.encoder_input == "soft":
            return encode_targets(time, event, self.grid, self.na_curve)
        scale = self.grid.edges[-1]
        return np.column_stack([np.asarray(time, dtype=float) / scale, np.asarray(event, dtype=float)])

    def encoder_targets_for_bins(self, bins):
        """Encoder input for a predicted event in each of ``bins``."""
        bins = np.asarray(bins)
        if self.config.encoder_input == "soft":
            out = np.zeros((len(bins), self.grid.n_bins))
            out[np.arange(len(bins)), bins] = 1.0
            return out
        t = self.grid.representative_times[bins] / self.grid.edges[-1]
        return np.column_stack([t, np.ones(len(bins))])

    def encoder(self, x, targets):
        return GaussianDiag.from_output(self.encoder_net.forward(self.params, np.hstack([x, targets])))

    def decoder_logpmf(self, z):
        return log_softmax_np(self.decoder_net.forward(self.params, z))

    def decoder_pmf(self, z):
        return np.exp(self.decoder_logpmf(z))

    # training objective -------------------------------------------------
    def prepare(self, data):
        return {
            "x": data.x,
            "targets": self.encoder_targets(data.time, data.event),
            "mask_log": mask_to_log(likelihood_masks(data.time, data.event, self.grid)),
        }

    def elbo_tape(self, params, x, targets, mask_log, eps):
        """Per-row ELBO (event or censored form chosen by ``mask_log``)."""
        m = self.latent_dim
        mp, lp = gaussian_tape(self.prior_net.forward_tape(params, x), m)
        mq, lq = gaussian_tape(self.encoder_net.forward_tape(params, np.hstack([x, targets])), m)
        z = mq + ad.exp(0.5 * lq) * eps
        logp = ad.log_softmax(self.decoder_net.forward_tape(params, z))
        recon = ad.logsumexp(logp + mask_log, axis=-1)
        return recon - kl_tape(mq, lq, mp, lp)

    def batch_objective(self, params, batch, rng, train=True):
        S = self.config.mc_samples_train
        x, targets, mask_log = batch["x"], batch["targets"], batch["mask_log"]
        if S > 1:
            x, targets, mask_log = (np.tile(a, (S, 1)) for a in (x, targets, mask_log))
        eps = rng.standard_normal((len(x), self.latent_dim))
        return self.elbo_tape(params, x, targets, mask_log, eps)

    def elbo(self, x, time, event, rng, n_samples=1):
        """Monte-Carlo ELBO per row, averaged over ``n_samples`` draws."""
        q = self.encoder(x, self.encoder_targets(time, event))
        p = self.prior(x)
        mask = likelihood_masks(time, event, self.grid)
        recon = np.zeros(len(x))
        for _ in range(n_samples):
            z = sample_reparam(q, rng)
            recon += masked_logsumexp(self.decoder_logpmf(z), mask)
        return recon / n_samples - kl_diag_gaussian(q, p)

    def predict_pmf(self, x, rng, n_samples=200):
        from varsurv.inference import predict_distribution

        return predict_distribution(self, x, rng, n_samples)

    def loglik(self, x, time, event, rng, n_samples=500):
        from varsurv.inference import iw_loglik

        return iw_loglik(self, x, time, event, rng, n_samples)


def elbo_event(model, x, t, rng, n_samples=1):
    """ELBO of observed event times ``t`` (all rows treated as events)."""
    t = np.atleast_1d(t)
    return model.elbo(np.atleast_2d(x), t, np.ones(len(t), dtype=int), rng, n_samples)


def elbo_censored(model, x, t, rng, n_samples=1):
    """Censored-observation ELBO at censoring times ``t``."""
    t = np.atleast_1d(t)
    return model.elbo(np.atleast_2d(x), t, np.zeros(len(t), dtype=int), rng, n_samples)


def _batches(rng, n, size):
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def _take(prepared, idx):
    return {k: v[idx] for k, v in prepared.items()}


def fit(model, train, valid, cfg=None, history=None):
    """Minibatch Adam on the model's objective with early stopping.

    The validation objective is evaluated once before training (epoch 0) and
    after every epoch with fixed noise.  Training stops after ``patience``
    consecutive epochs without improvement and the best-epoch parameters are
    restored.  ``history`` (a list) receives one dict per epoch.
    """
    cfg = cfg or model.config
    rng = derive_rng(cfg.seed, model.kind, "train")
    tr = model.prepare(train)
    va = model.prepare(valid)
    opt = Adam(lr=cfg.learning_rate)

    def valid_objective(params):
        vrng = derive_rng(cfg.seed, model.kind, "valid")
        consts = {k: ad.Tensor(v) for k, v in params.items()}
        return float(np.mean(model.batch_objective(consts, va, vrng, train=False).value))

    best = valid_objective(model.params)
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_epoch, stale = 0, 0
    if history is not None:
        history.append({"epoch": 0, "train_objective": float("nan"), "valid_objective": best})
    for epoch in range(1, cfg.max_epochs + 1):
        total, count = 0.0, 0
        for bi, idx in enumerate(_batches(rng, len(train), cfg.batch_size)):
            batch = _take(tr, idx)

            def loss_fn(leaves):
                return -ad.mean(model.batch_objective(leaves, batch, rng))

            loss, grads = ad.gradients(loss_fn, model.params)
            if not np.isfinite(loss):
                raise NumericalError(f"{model.kind}: non-finite loss at epoch {epoch}, batch {bi}")
            opt.step(model.params, grads)
            total += -loss * len(idx)
            count += len(idx)
        score = valid_objective(model.params)
        if not np.isfinite(score):
            raise NumericalError(f"{model.kind}: non-finite validation objective at epoch {epoch}")
        if history is not None:
            history.append({"epoch": epoch, "train_objective": total / count, "valid_objective": score})
        log.info("%s epoch %d train %.5f valid %.5f", model.kind, epoch, total / count, score)
        if score > best:
            best, best_epoch, stale = score, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if stale > cfg.patience:
                break
    model.params = best_params
    model.best_epoch = best_epoch
    return model


def train(train_set, valid_set, cfg):
    """Fit a VSI model; returns the model with best-validation parameters."""
    model = VsiModel.initialize(train_set, cfg)
    return fit(model, train_set, valid_set, cfg)
