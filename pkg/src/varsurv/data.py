"""Survival data ingestion: CSV parsing, imputation, encoding, splitting."""
from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from varsurv.errors import ConfigError, DataError

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class SurvivalRecord(NamedTuple):
    covariates: np.ndarray
    time: float
    event_indicator: int


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns hold time, event indicator and covariates.

    ``covariates=None`` means every remaining column.  Columns listed in
    ``categorical`` are one-hot encoded; the rest are treated as continuous.
    """

    time: str = "time"
    event: str = "event"
    covariates: Optional[tuple] = None
    categorical: tuple = ()


@dataclass
class RawTable:
    """Parsed rows before encoding.  Missing cells are ``None``."""

    names: tuple
    kinds: dict
    values: dict
    time: np.ndarray
    event: np.ndarray

    def __len__(self):
        return len(self.time)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return RawTable(
            self.names,
            dict(self.kinds),
            {k: [v[i] for i in idx] for k, v in self.values.items()},
            self.time[idx],
            self.event[idx],
        )

    def n_missing(self):
        return sum(v is None for col in self.values.values() for v in col)

    def column_array(self, name):
        """Continuous column as float array with NaN for missing (read-only use)."""
        return np.array([np.nan if v is None else v for v in self.values[name]], dtype=float)

    def to_csv(self, path, header_comment=None, delimiter=","):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(list(self.names) + ["time", "event"])
            for i in range(len(self)):
                row = ["" if self.values[n][i] is None else _fmt(self.values[n][i]) for n in self.names]
                w.writerow(row + [repr(float(self.time[i])), int(self.event[i])])


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _parse_float(text, row, col):
    try:
        return float(text)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} is not numeric: {text!r}") from None


def load_csv(path, roles=None, delimiter=",", missing=("",), comment="#"):
    """Parse a delimited file into a :class:`RawTable`.

    Row indices in error messages count data rows from 1.  Lines starting
    with ``comment`` are skipped.
    """
    roles = roles or ColumnRoles()
    missing = set(missing)
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not (comment and ln.startswith(comment)))
        reader = csv.reader(lines, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, no header") from None
        for role in (roles.time, roles.event):
            if role not in header:
                raise ConfigError(f"column {role!r} not found in header {header}")
        if roles.covariates is None:
            names = tuple(h for h in header if h not in (roles.time, roles.event))
        else:
            names = tuple(roles.covariates)
        unknown = [c for c in tuple(names) + tuple(roles.categorical) if c not in header]
        if unknown:
            raise ConfigError(f"unknown columns in roles: {unknown}")
        kinds = {n: CATEGORICAL if n in roles.categorical else CONTINUOUS for n in names}
        pos = {h: i for i, h in enumerate(header)}
        values = {n: [] for n in names}
        times, events = [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {r}: expected {len(header)} fields, got {len(row)}")
            t_txt = row[pos[roles.time]].strip()
            e_txt = row[pos[roles.event]].strip()
            if t_txt in missing or e_txt in missing:
                raise DataError(f"row {r}: time/event may not be missing")
            t = _parse_float(t_txt, r, roles.time)
            if not np.isfinite(t) or t < 0:
                raise DataError(f"row {r}: time must be finite and >= 0, got {t_txt!r}")
            e = _parse_float(e_txt, r, roles.event)
            if e not in (0.0, 1.0):
                raise DataError(f"row {r}: event indicator must be 0 or 1, got {e_txt!r}")
            times.append(t)
            events.append(int(e))
            for n in names:
                cell = row[pos[n]].strip()
                if cell in missing:
                    values[n].append(None)
                elif kinds[n] == CONTINUOUS:
                    values[n].append(_parse_float(cell, r, n))
                else:
                    values[n].append(cell)
    return RawTable(names, kinds, values, np.array(times, dtype=float), np.array(events, dtype=int))


def table_from_arrays(covariates, time, event, categorical=()):
    """Build a :class:`RawTable` from in-memory columns (NaN / None = missing)."""
    names = tuple(covariates)
    kinds = {n: CATEGORICAL if n in categorical else CONTINUOUS for n in names}
    values = {}
    for n, col in covariates.items():
        if kinds[n] == CONTINUOUS:
            values[n] = [None if (v is None or np.isnan(v)) else float(v) for v in col]
        else:
            values[n] = [None if v is None else str(v) for v in col]
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    if np.any(time < 0):
        raise DataError("negative survival time")
    if not np.isin(event, (0, 1)).all():
        raise DataError("event indicator must be 0 or 1")
    return RawTable(names, kinds, values, time, event)


@dataclass
class CovariateSchema:
    """Encoding learned on the training split.

    ``columns`` holds ``(name, kind, levels)`` for every kept column, in
    output order; constant continuous columns are listed in ``dropped``.
    """

    columns: list
    continuous_stats: dict = field(default_factory=dict)
    imputation_values: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)

    @property
    def width(self):
        return sum(1 if kind == CONTINUOUS else len(levels) for _, kind, levels in self.columns)

    def feature_names(self):
        out = []
        for name, kind, levels in self.columns:
            out += [name] if kind == CONTINUOUS else [f"{name}={lv}" for lv in levels]
        return out

    def to_dict(self):
        return {
            "columns": [[n, k, list(lv)] for n, k, lv in self.columns],
            "continuous_stats": {k: list(v) for k, v in self.continuous_stats.items()},
            "imputation_values": dict(self.imputation_values),
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [(n, k, tuple(lv)) for n, k, lv in d["columns"]],
            {k: tuple(v) for k, v in d["continuous_stats"].items()},
            dict(d["imputation_values"]),
            list(d["dropped"]),
        )


def fit_schema(train):
    """Learn imputation values, z-transform statistics and category levels."""
    if len(train) == 0:
        raise DataError("cannot fit a schema on an empty training set")
    columns, stats, impute, dropped = [], {}, {}, []
    for name in train.names:
        col = train.values[name]
        present = [v for v in col if v is not None]
        if not present:
            raise DataError(f"column {name!r} is entirely missing in the training split")
        if train.kinds[name] == CONTINUOUS:
            med = float(np.median(present))
            filled = np.array([med if v is None else v for v in col])
            mu, sd = float(filled.mean()), float(filled.std())
            if sd == 0.0:
                log.warning("dropping constant column %r", name)
                dropped.append(name)
                continue
            impute[name] = med
            stats[name] = (mu, sd)
            columns.append((name, CONTINUOUS, ()))
        else:
            counts = Counter(present)
            # ties broken by first appearance
            mode = max(counts, key=lambda lv: (counts[lv], -present.index(lv)))
            impute[name] = mode
            columns.append((name, CATEGORICAL, tuple(sorted(counts))))
    return CovariateSchema(columns, stats, impute, dropped)


@dataclass
class SurvivalDataset:
    """Encoded covariates ``x`` (n, p) with times and event indicators."""

    x: np.ndarray
    time: np.ndarray
    event: np.ndarray
    schema: Optional[CovariateSchema] = None

    def __len__(self):
        return len(self.time)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.time = np.asarray(self.time, dtype=float)
        self.event = np.asarray(self.event).astype(int)
        if self.x.ndim != 2 or len(self.x) != len(self.time) or len(self.time) != len(self.event):
            raise DataError("inconsistent dataset shapes")
        if self.schema is not None and self.x.shape[1] != self.schema.width:
            raise DataError(f"covariate width {self.x.shape[1]} != schema width {self.schema.width}")

    @property
    def records(self):
        return [SurvivalRecord(self.x[i], float(self.time[i]), int(self.event[i])) for i in range(len(self))]

    @property
    def events(self):
        """Indices of D_e (event rows)."""
        return np.flatnonzero(self.event == 1)

    @property
    def censored(self):
        """Indices of D_c (censored rows)."""
        return np.flatnonzero(self.event == 0)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return SurvivalDataset(self.x[idx], self.time[idx], self.event[idx], self.schema)

    def to_csv(self, path, header_comment=None):
        names = self.schema.feature_names() if self.schema else [f"x{j}" for j in range(self.x.shape[1])]
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["time", "event"])
            for i in range(len(self)):
                w.writerow([repr(float(v)) for v in self.x[i]] + [repr(float(self.time[i])), int(self.event[i])])


def transform(table, schema):
    """Impute, one-hot and z-transform ``table`` using a fitted schema."""
    needed = [n for n, _, _ in schema.columns]
    absent = [n for n in needed if n not in table.values]
    if absent:
        raise DataError(f"columns missing from data: {absent}")
    n = len(table)
    blocks = []
    for name, kind, levels in schema.columns:
        col = table.values[name]
        fill = schema.imputation_values[name]
        if kind == CONTINUOUS:
            mu, sd = schema.continuous_stats[name]
            vals = np.array([fill if v is None else v for v in col], dtype=float)
            blocks.append(((vals - mu) / sd)[:, None])
        else:
            index = {lv: j for j, lv in enumerate(levels)}
            block = np.zeros((n, len(levels)))
            for i, v in enumerate(col):
                j = index.get(fill if v is None else v)
                if j is not None:
                    block[i, j] = 1.0
            blocks.append(block)
    x = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return SurvivalDataset(x, table.time.copy(), table.event.copy(), schema)


def split(data, fractions=(0.6, 0.2, 0.2), seed=0):
    """Shuffle records uniformly and cut into train/valid/test parts.

    Works on anything with ``len`` and ``subset`` (raw tables or datasets).
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three nonnegative numbers summing to 1: {fractions}")
    n = len(data)
    if n < 3:
        raise DataError(f"need at least 3 records to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    n_valid = min(n_valid, n - n_train)
    cuts = (perm[:n_train], perm[n_train:n_train + n_valid], perm[n_train + n_valid:])
    return tuple(data.subset(np.sort(c)) for c in cuts)
