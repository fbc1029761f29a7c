"""Evaluation metrics: concordance, time-dependent concordance, KS distance,
held-out log-likelihood summaries and coverage rates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from varsurv.errors import DataError
from varsurv.inference import pmf_quantile

EVENT_RANGES = tuple((round(0.05 * k, 2), round(1 - 0.05 * k, 2)) for k in range(1, 10))
CENSOR_LEVELS = tuple(round(0.1 * k, 1) for k in range(1, 10))


def concordance_counts(scores, times, events, weights=None, strict=False):
    """Weighted concordant / comparable pair totals.

    Comparable pairs are ``(i, j)`` with ``events[i] == 1`` and
    ``times[i] < times[j]``; a pair is concordant when
    ``scores[i] > scores[j]``.  Score ties add 0.5 unless ``strict``.
    ``weights`` may be ``(n,)`` or ``(n, B)`` (B replicate weightings, as in
    a bootstrap); pair weight is ``w_i * w_j``.  Runs in O(n log n) per
    replicate column using a Fenwick tree over score ranks.
    """
    scores = np.asarray(scores, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    n = len(scores)
    if weights is None:
        weights = np.ones((n, 1))
    weights = np.asarray(weights, dtype=float)
    squeeze = weights.ndim == 1
    if squeeze:
        weights = weights[:, None]
    B = weights.shape[1]
    uniq, rank = np.unique(scores, return_inverse=True)
    rank = rank + 1  # 1-based for the tree
    K = len(uniq)
    tree = np.zeros((K + 1, B))

    def prefix(r):
        acc = np.zeros(B)
        while r > 0:
            acc += tree[r]
            r -= r & -r
        return acc

    def insert(r, w):
        while r <= K:
            tree[r] += w
            r += r & -r

    at_risk = np.zeros(B)
    num = np.zeros(B)
    den = np.zeros(B)
    order = np.argsort(-times, kind="stable")
    i = 0
    while i < n:
        j = i
        while j < n and times[order[j]] == times[order[i]]:
            j += 1
        group = order[i:j]
        for s in group:
            if events[s] != 1:
                continue
            w = weights[s]
            r = rank[s]
            below = prefix(r - 1)
            den += w * at_risk
            if strict:
                num += w * below
            else:
                num += w * (below + 0.5 * (prefix(r) - below))
        for s in group:
            insert(rank[s], weights[s])
            at_risk += weights[s]
        i = j
    if squeeze:
        return num[0], den[0]
    return num, den


def c_index(scores, times, deltas, strict=False):
    """Fraction of comparable pairs where the earlier event has the higher score.

    Pass a risk score (higher = earlier event), e.g. negated predicted times.
    """
    num, den = concordance_counts(scores, times, deltas, weights=np.ones(len(scores)), strict=strict)
    if den == 0:
        raise DataError("no comparable pairs for concordance")
    return float(num / den)


def c_index_ci(scores, times, deltas, n_boot=1000, seed=0, strict=False, block=100):
    """Percentile bootstrap (2.5%, 97.5%) interval over resampled subjects."""
    n = len(scores)
    rng = np.random.default_rng(seed)
    stats = []
    for lo in range(0, n_boot, block):
        B = min(block, n_boot - lo)
        w = np.stack([np.bincount(rng.integers(0, n, n), minlength=n) for _ in range(B)], axis=1)
        num, den = concordance_counts(scores, times, deltas, weights=w.astype(float), strict=strict)
        stats.append(num[den > 0] / den[den > 0])
    stats = np.concatenate(stats)
    if len(stats) == 0:
        raise DataError("no comparable pairs in any bootstrap resample")
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi)


def c_td(cdf_at_own_time, times, deltas, strict=False):
    """Time-dependent concordance from each subject's CDF at its own time.

    Pairs compare ``F_i(t_i)`` with ``F_j(t_j)``.  Because a CDF grows with
    time this form sits below 0.5 whenever predictions are similar; see
    :func:`c_td_same_time` for the form that compares both subjects at
    ``t_i``.
    """
    return c_index(cdf_at_own_time, times, deltas, strict=strict)


def c_td_same_time(cdf_table, cols, times, deltas, chunk=2_000_000):
    """Concordance of ``F_i(t_i)`` against ``F_j(t_i)`` over pairs ``t_i < t_j``.

    ``cdf_table`` is ``(n, K)`` (e.g. cumulative pmf per bin) and ``cols[i]``
    the column holding time ``t_i``.  Ties count 0.5.
    """
    cdf_table = np.asarray(cdf_table, dtype=float)
    cols = np.asarray(cols)
    times = np.asarray(times, dtype=float)
    ev = np.flatnonzero(np.asarray(deltas).astype(int) == 1)
    n = len(times)
    step = max(1, chunk // max(n, 1))
    num = den = 0.0
    for lo in range(0, len(ev), step):
        idx = ev[lo:lo + step]
        later = times[None, :] > times[idx, None]  # (k, n)
        own = cdf_table[idx, cols[idx]][:, None]
        other = cdf_table[:, cols[idx]].T
        num += np.sum(later & (own > other)) + 0.5 * np.sum(later & (own == other))
        den += np.sum(later)
    if den == 0:
        raise DataError("no comparable pairs for concordance")
    return float(num / den)


def ks_distance(pmf, grid, truth_cdf_at_edges):
    """Per-subject sup-distance between predicted and true CDFs at grid edges.

    ``truth_cdf_at_edges`` is ``(n, M)``: the true CDF of each subject at
    every edge.  Returns the per-subject distances; average them for the
    reported statistic.
    """
    pred = np.cumsum(np.atleast_2d(pmf), axis=-1)[:, : grid.M]
    return np.max(np.abs(pred - np.atleast_2d(truth_cdf_at_edges)), axis=-1)


def loglik_summary(values, deltas):
    """Mean log-likelihood and per-stratum 10%-90% quantile ranges."""
    values = np.asarray(values, dtype=float)
    deltas = np.asarray(deltas).astype(int)
    out = {"mean_loglik": float(np.mean(values))}
    for name, sel in (("event", deltas == 1), ("censored", deltas == 0)):
        if sel.any():
            q10, q90 = np.quantile(values[sel], [0.1, 0.9])
            out[f"loglik_qrange_{name}"] = float(q90 - q10)
            out[f"mean_loglik_{name}"] = float(values[sel].mean())
    return out


def coverage(pmf, grid, times, deltas, event_ranges=EVENT_RANGES, censor_levels=CENSOR_LEVELS):
    """Event coverage ``P(l < t < u)`` and censoring coverage ``P(t <= l)``.

    ``l``/``u`` are per-subject predicted quantiles (bin representative
    times).  Maps are omitted (``None``) when the stratum is empty.
    """
    times = np.asarray(times, dtype=float)
    deltas = np.asarray(deltas).astype(int)
    pmf = np.atleast_2d(pmf)
    ev, ce = deltas == 1, deltas == 0
    events = None
    if ev.any():
        events = {}
        for lo, hi in event_ranges:
            ql = pmf_quantile(pmf[ev], grid, lo)
            qu = pmf_quantile(pmf[ev], grid, hi)
            events[(lo, hi)] = float(np.mean((ql < times[ev]) & (times[ev] < qu)))
    censored = None
    if ce.any():
        censored = {}
        for lv in censor_levels:
            censored[lv] = float(np.mean(times[ce] <= pmf_quantile(pmf[ce], grid, lv)))
    return events, censored


@dataclass
class EvalReport:
    model: str
    c_index: float
    c_index_ci: tuple
    c_td: float
    ks: Optional[float]
    mean_loglik: float
    loglik_stats: dict = field(default_factory=dict)
    coverage_events: Optional[dict] = None
    coverage_censored: Optional[dict] = None
    c_index_median: Optional[float] = None
    c_td_own_time: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def flat(self):
        """Ordered flat key/value mapping (values already formatted)."""
        out = {k: str(v) for k, v in self.meta.items()}
        out["model"] = self.model
        out["c_index"] = _f(self.c_index)
        out["c_index_ci_lo"] = _f(self.c_index_ci[0])
        out["c_index_ci_hi"] = _f(self.c_index_ci[1])
        if self.c_index_median is not None:
            out["c_index_median"] = _f(self.c_index_median)
        out["c_td"] = _f(self.c_td)
        if self.c_td_own_time is not None:
            out["c_td_own_time"] = _f(self.c_td_own_time)
        out["ks"] = "absent" if self.ks is None else _f(self.ks)
        out["mean_loglik"] = _f(self.mean_loglik)
        for k, v in self.loglik_stats.items():
            if k != "mean_loglik":
                out[k] = _f(v)
        for (lo, hi), v in (self.coverage_events or {}).items():
            out[f"coverage_event_{lo:.2f}_{hi:.2f}"] = _f(v)
        for lv, v in (self.coverage_censored or {}).items():
            out[f"coverage_censor_{lv:.1f}"] = _f(v)
        return out

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.flat().items())

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def _f(v):
    return repr(float(v))


def read_report(path):
    """Parse a key = value report file back into a dict of strings."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out
