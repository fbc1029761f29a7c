"""Predictions and likelihood estimates from a trained model."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from varsurv.grid import likelihood_masks
from varsurv.model import masked_logsumexp

log = logging.getLogger(__name__)

# rows of (sample, subject) pairs pushed through the decoder at once
CHUNK_ROWS = 100_000

EVENT = "event"
CENSORED = "censored"


@dataclass(frozen=True)
class PredictedDistribution:
    pmf: np.ndarray
    grid: object

    def survival(self, b):
        return survival_from_pmf(self.pmf, b)

    def cdf_at_edges(self):
        return np.cumsum(self.pmf, axis=-1)[..., :-1]


@dataclass(frozen=True)
class IwEstimate:
    log_value: np.ndarray
    L: int
    kind: str


def _chunks(n, L):
    step = max(1, CHUNK_ROWS // max(L, 1))
    for lo in range(0, n, step):
        yield slice(lo, min(n, lo + step))


def _draws(d, rng, L):
    """(L, n, m) reparameterized draws from a diagonal Gaussian batch."""
    eps = rng.standard_normal((L,) + d.mean.shape)
    return d.mean[None] + np.exp(0.5 * d.log_var)[None] * eps


def predict_distribution(model, x, rng, n_samples=200):
    """Monte-Carlo predictive pmf: average decoder pmf over prior draws."""
    x = np.atleast_2d(x)
    out = np.empty((len(x), model.grid.n_bins))
    for sl in _chunks(len(x), n_samples):
        p = model.prior(x[sl])
        z = _draws(p, rng, n_samples)
        L, n, m = z.shape
        pmf = np.exp(model.decoder_logpmf(z.reshape(L * n, m))).reshape(L, n, -1)
        out[sl] = pmf.mean(axis=0)
    return out


def iw_log_weights(model, x, time, event, rng, n_samples):
    """(L, n) importance log-weights with the encoder as proposal.

    ``log w = log p(t | z) + log p(z | x) - log q(z | x, t)``, where the
    first term is the decoder tail mass for censored rows.
    """
    x = np.atleast_2d(x)
    time = np.atleast_1d(np.asarray(time, dtype=float))
    event = np.atleast_1d(np.asarray(event)).astype(int)
    targets = model.encoder_targets(time, event)
    mask = likelihood_masks(time, event, model.grid)
    out = np.empty((n_samples, len(x)))
    for sl in _chunks(len(x), n_samples):
        q = model.encoder(x[sl], targets[sl])
        p = model.prior(x[sl])
        z = _draws(q, rng, n_samples)
        L, n, m = z.shape
        logpmf = model.decoder_logpmf(z.reshape(L * n, m)).reshape(L, n, -1)
        out[:, sl] = masked_logsumexp(logpmf, mask[sl][None]) + p.log_density(z) - q.log_density(z)
    return out


def logmeanexp(a, axis=0):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(np.log(np.mean(np.exp(a - m), axis=axis, keepdims=True)) + m, axis=axis)


def iw_loglik(model, x, time, event, rng, n_samples=500):
    """Importance-weighted log-likelihood per subject (log p or log S)."""
    est = logmeanexp(iw_log_weights(model, x, time, event, rng, n_samples), axis=0)
    bad = ~np.isfinite(est)
    if bad.any():
        log.warning("iw_loglik: %d subjects with all-zero importance weights", int(bad.sum()))
    return est


def iw_loglik_event(model, x, t, rng, L=500):
    t = np.atleast_1d(t)
    return IwEstimate(iw_loglik(model, x, t, np.ones(len(t), dtype=int), rng, L), L, EVENT)


def iw_loglik_censored(model, x, t, rng, L=500):
    t = np.atleast_1d(t)
    return IwEstimate(iw_loglik(model, x, t, np.zeros(len(t), dtype=int), rng, L), L, CENSORED)


def survival_from_pmf(pmf, b):
    """Mass beyond the first ``b`` bins, ``sum(pmf[b:])``.

    ``b = 0`` gives 1 and ``b = n_bins`` gives 0.
    """
    return np.sum(np.asarray(pmf)[..., b:], axis=-1)


def cdf_at_bins(pmf, bins):
    """Per-row cumulative mass through (and including) bin ``bins[i]``."""
    cum = np.cumsum(pmf, axis=-1)
    return cum[np.arange(len(cum)), np.asarray(bins)]


def pmf_quantile(pmf, grid, q):
    """Representative time of the first bin whose cumulative mass reaches ``q``."""
    cum = np.cumsum(np.atleast_2d(pmf), axis=-1)
    # tolerate rounding in the final cumulative sum
    idx = np.argmax(cum >= q - 1e-12, axis=-1)
    return grid.representative_times[idx]


def point_estimate_median(pmf, grid):
    return pmf_quantile(pmf, grid, 0.5)


def point_estimate_mean(pmf, grid):
    """Predictive mean over representative bin times."""
    return np.atleast_2d(pmf) @ grid.representative_times


def point_estimate_weighted(model, x, rng, n_samples=200, pmf=None):
    """Importance-weighted average of sampled times.

    For each subject, bins ``b_l`` are drawn from the predictive pmf, each
    mapped to its representative time ``t_l``; ``z_l`` is drawn from the
    encoder given ``b_l`` and weighted by ``p(z_l | x) / q(z_l | x, b_l)``.
    Subjects whose weights are all non-finite fall back to the plain mean.
    """
    x = np.atleast_2d(x)
    if pmf is None:
        pmf = predict_distribution(model, x, rng)
    grid = model.grid
    n, L = len(x), n_samples
    cum = np.cumsum(pmf, axis=1)
    out = np.empty(n)
    for sl in _chunks(n, L):
        u = rng.random((L, sl.stop - sl.start))
        b = np.minimum((u[:, :, None] > cum[sl][None]).sum(axis=2), grid.n_bins - 1)  # (L, n)
        times = grid.representative_times[b]
        Lk, nk = b.shape
        xx = np.broadcast_to(x[sl][None], (Lk, nk, x.shape[1])).reshape(Lk * nk, -1)
        targets = model.encoder_targets_for_bins(b.reshape(-1))
        q = model.encoder(xx, targets)
        p = model.prior(xx)
        z = q.mean + np.exp(0.5 * q.log_var) * rng.standard_normal(q.mean.shape)
        logw = (p.log_density(z) - q.log_density(z)).reshape(Lk, nk)
        out[sl] = _weighted_mean(times, logw)
    return out


def _weighted_mean(times, logw):
    m = np.max(logw, axis=0, keepdims=True)
    ok = np.isfinite(m[0])
    w = np.exp(logw - np.where(np.isfinite(m), m, 0.0))
    w = np.where(np.isfinite(w), w, 0.0)
    tot = w.sum(axis=0)
    ok &= tot > 0
    res = np.where(ok, (w * times).sum(axis=0) / np.where(ok, tot, 1.0), times.mean(axis=0))
    if (~ok).any():
        log.warning("point_estimate_weighted: %d subjects with degenerate weights", int((~ok).sum()))
    return res


def risk_point_estimate(model, x, rng, pmf, n_samples=200):
    """Point estimate used for concordance: weighted average for models with an
    encoder, predictive mean otherwise."""
    if hasattr(model, "encoder"):
        return point_estimate_weighted(model, x, rng, n_samples, pmf=pmf)
    return point_estimate_mean(pmf, model.grid)


__all__ = [
    "IwEstimate",
    "PredictedDistribution",
    "cdf_at_bins",
    "iw_log_weights",
    "iw_loglik",
    "iw_loglik_censored",
    "iw_loglik_event",
    "logmeanexp",
    "pmf_quantile",
    "point_estimate_mean",
    "point_estimate_median",
    "point_estimate_weighted",
    "predict_distribution",
    "risk_point_estimate",
    "survival_from_pmf",
]
