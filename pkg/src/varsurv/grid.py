"""Discretized time axis, target encodings and the Nelson-Aalen curve.

Bins are indexed from 0.  With edges ``e[0] < ... < e[M-1]``, bin ``b < M``
covers ``(e[b-1], e[b]]`` (``e[-1] := 0``, bin 0 also holds ``t = 0``) and
bin ``M`` is the overflow bin ``(e[M-1], inf)``.  Vectors over bins have
length ``M + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from varsurv.errors import DataError

EVENT_ONEHOT = "event_onehot"
CENSORED_SOFT = "censored_soft"


@dataclass(frozen=True)
class TimeGrid:
    edges: np.ndarray
    representative_times: np.ndarray

    @property
    def M(self):
        return len(self.edges)

    @property
    def n_bins(self):
        """Number of bins including the overflow bin."""
        return len(self.edges) + 1

    def bin_index(self, t):
        """Bin of each time; exact-edge times fall in the lower bin."""
        return np.searchsorted(self.edges, np.asarray(t, dtype=float), side="left")

    def lower_bounds(self):
        return np.concatenate([[0.0], self.edges])

    def to_dict(self):
        return {"edges": self.edges.tolist(), "representative_times": self.representative_times.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["edges"], dtype=float), np.array(d["representative_times"], dtype=float))

    def to_text(self, path):
        """Two-column table (bin index, upper edge); bin indices start at 1."""
        with open(path, "w") as fh:
            fh.write("bin\tedge\n")
            for b, e in enumerate(self.edges, start=1):
                fh.write(f"{b}\t{float(e)!r}\n")


def build_grid(event_times, M=50):
    """Percentile grid over observed event times.

    Edges are the k/M quantiles (k = 1..M) with duplicates removed, so the
    effective bin count can be smaller than ``M``.
    """
    t = np.asarray(event_times, dtype=float)
    if M < 2:
        raise ValueError("M must be at least 2")
    if len(np.unique(t)) < 2:
        raise DataError("need at least 2 distinct event times to build a grid")
    edges = np.unique(np.quantile(t, np.arange(1, M + 1) / M))
    if len(edges) < 2:
        raise DataError("quantile edges collapsed to a single point")
    lo = np.concatenate([[0.0], edges[:-1]])
    reps = np.concatenate([(lo + edges) / 2.0, [t.max()]])
    return TimeGrid(edges, reps)


@dataclass(frozen=True)
class TargetEncoding:
    weights: np.ndarray
    kind: str


@dataclass(frozen=True)
class NelsonAalenCurve:
    cumulative_hazard: np.ndarray  # length M
    survival: np.ndarray  # length M
    pmf: np.ndarray  # length M + 1

    def to_dict(self):
        return {"cumulative_hazard": self.cumulative_hazard.tolist(), "survival": self.survival.tolist(), "pmf": self.pmf.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.array(d[k], dtype=float) for k in ("cumulative_hazard", "survival", "pmf")))


def nelson_aalen(time, event, grid):
    """Binned Nelson-Aalen estimate.

    ``d_b`` counts events in bin ``b``; ``n_b`` counts subjects whose time
    falls in bin ``b`` or later.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    if len(time) == 0:
        raise DataError("Nelson-Aalen needs a nonempty dataset")
    M = grid.M
    b = grid.bin_index(time)
    d = np.bincount(b[event == 1], minlength=M + 1)[:M]
    n_in = np.bincount(b, minlength=M + 1)
    at_risk = np.cumsum(n_in[::-1])[::-1][:M]
    assert np.all(at_risk[d > 0] > 0)
    inc = np.divide(d, at_risk, out=np.zeros(M), where=at_risk > 0)
    H = np.cumsum(inc)
    S = np.exp(-H)
    f = np.empty(M + 1)
    f[0] = 1.0 - S[0]
    f[1:M] = S[:-1] - S[1:]
    f[M] = 1.0 - f[:M].sum()
    return NelsonAalenCurve(H, S, f)


def encode_event(t, grid):
    if t < 0:
        raise DataError(f"negative event time {t}")
    w = np.zeros(grid.n_bins)
    w[grid.bin_index(t)] = 1.0
    return TargetEncoding(w, EVENT_ONEHOT)


def encode_censored(t, grid, na):
    """Renormalized Nelson-Aalen mass on the bins after the censoring bin."""
    if t < 0:
        raise DataError(f"negative censoring time {t}")
    return TargetEncoding(_soft_rows(np.array([grid.bin_index(t)]), na.pmf)[0], CENSORED_SOFT)


def _soft_rows(k, pmf):
    n_bins = len(pmf)
    after = np.arange(n_bins)[None, :] > k[:, None]
    w = np.where(after, pmf[None, :], 0.0)
    tot = w.sum(axis=1, keepdims=True)
    # censored in the overflow bin, or a degenerate empty tail
    empty = tot[:, 0] <= 0
    w[empty] = 0.0
    w[empty, -1] = 1.0
    tot[empty] = 1.0
    return w / tot


def encode_targets(time, event, grid, na):
    """Row-wise encodings: one-hot for events, soft tail for censored rows."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    k = grid.bin_index(time)
    out = np.zeros((len(time), grid.n_bins))
    ev = event == 1
    out[np.flatnonzero(ev), k[ev]] = 1.0
    if (~ev).any():
        out[~ev] = _soft_rows(k[~ev], na.pmf)
    return out


def likelihood_masks(time, event, grid):
    """Bins whose predicted mass forms each row's likelihood term.

    Events use their own bin; censored rows use every bin strictly after
    the censoring bin, or the overflow bin alone when censored there.
    """
    k = grid.bin_index(np.asarray(time, dtype=float))
    event = np.asarray(event).astype(int)
    cols = np.arange(grid.n_bins)[None, :]
    mask = np.where(event[:, None] == 1, cols == k[:, None], cols > k[:, None])
    mask[(event == 0) & (k == grid.M), grid.M] = True
    return mask
