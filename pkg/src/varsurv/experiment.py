"""Evaluation of trained models and the simulation-study sweep.

The sweep trains every model kind on every event-rate preset for a few
seeds, evaluates on the held-out split against the exact Gompertz CDF, and
summarizes the median over seeds next to the published reference numbers.
Finished cells are cached on disk, keyed by their configuration and a hash
of the package source, so repeated runs only pay for what changed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from varsurv import inference
from varsurv.baselines import AftWeibullModel, MlpModel, NoQModel
from varsurv.data import fit_schema, split, transform
from varsurv.errors import ConfigError
from varsurv.metrics import EvalReport, c_index, c_index_ci, c_td, c_td_same_time, coverage, ks_distance, loglik_summary
from varsurv.model import TrainConfig, VsiModel, fit
from varsurv.seeding import derive_rng
from varsurv.simulate import RATE_TO_PRESET, GompertzConfig, simulate, truth_cdf

log = logging.getLogger(__name__)

MODEL_CLASSES = {cls.kind: cls for cls in (VsiModel, NoQModel, MlpModel, AftWeibullModel)}
MODEL_KINDS = ("vsi", "vsi_noq", "mlp", "aft_weibull")
RATES = (100, 50, 30)
SEEDS = (1, 2, 3)
# bin count matching the published log-likelihood scale (see README)
SWEEP_M = 100

# Published simulation-study numbers, indexed by event rate 100 / 50 / 30.
REFERENCE_KS = {
    "aft_weibull": (0.057, 0.058, 0.068),
    "mlp": (0.047, 0.063, 0.064),
    "vsi_noq": (0.049, 0.068, 0.066),
    "vsi": (0.044, 0.052, 0.059),
}
REFERENCE_CTD = {
    "aft_weibull": (0.742, 0.750, 0.768),
    "mlp": (0.744, 0.751, 0.770),
    "vsi_noq": (0.748, 0.749, 0.763),
    "vsi": (0.748, 0.756, 0.772),
}
REFERENCE_CINDEX = {
    "aft_weibull": (0.773, 0.781, 0.793),
    "mlp": (0.772, 0.781, 0.793),
    "vsi_noq": (0.772, 0.781, 0.793),
    "vsi": (0.773, 0.781, 0.793),
}
REFERENCE_LOGLIK = {
    "aft_weibull": (-4.43, -2.29, -1.47),
    "mlp": (-4.15, -2.22, -1.41),
    "vsi_noq": (-4.16, -2.22, -1.41),
    "vsi": (-4.15, -2.22, -1.40),
}

LOGLIK_HIST_EDGES = np.linspace(-16.0, 0.0, 65)

# bump when evaluate() or run_cell() change what they compute
RESULTS_VERSION = "1"
COMPUTE_MODULES = ("autodiff", "nn", "data", "grid", "seeding", "model", "baselines", "inference", "metrics", "simulate")


@dataclass(frozen=True)
class EvalSettings:
    L_mc: int = 200  # prior draws for the predictive pmf
    L_iw: int = 500  # importance samples for VSI log-likelihood
    L_noq: int = 100  # prior draws for the NoQ marginal
    L_weighted: int = 200  # samples for the weighted-average point estimate
    n_boot: int = 1000

    def to_dict(self):
        return asdict(self)


@dataclass
class Truth:
    """Exact simulator configuration plus the raw covariates of the test rows."""

    cfg: GompertzConfig
    x_raw: np.ndarray

    def cdf_at(self, t):
        return truth_cdf(self.cfg, self.x_raw, t)


@dataclass
class Evaluation:
    report: EvalReport
    pmf: np.ndarray
    weighted: np.ndarray
    median: np.ndarray
    loglik: np.ndarray


def config_hash(obj):
    """Short stable hash of a JSON-serializable object."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def source_hash():
    """Hash of the modules that determine numerical results.

    Cached sweep cells are invalid when it changes.  This module is covered
    by ``RESULTS_VERSION`` instead so that table formatting edits keep the
    cache.
    """
    h = hashlib.sha256(RESULTS_VERSION.encode())
    here = Path(__file__).parent
    for name in COMPUTE_MODULES:
        h.update(name.encode())
        h.update((here / f"{name}.py").read_bytes())
    return h.hexdigest()[:16]


def evaluate(model, test, seed=0, truth=None, settings=None):
    """Full metric suite on a held-out dataset.

    ``truth`` enables the KS distance; without it KS is reported as absent.
    """
    settings = settings or EvalSettings()
    kind = model.kind
    grid = model.grid
    pmf = model.predict_pmf(test.x, derive_rng(seed, kind, "eval", "pmf"), settings.L_mc)
    if kind == "vsi":
        ll = model.loglik(test.x, test.time, test.event, derive_rng(seed, kind, "eval", "loglik"), settings.L_iw)
    elif kind == "vsi_noq":
        ll = model.loglik(test.x, test.time, test.event, derive_rng(seed, kind, "eval", "loglik"), settings.L_noq)
    else:
        ll = model.loglik(test.x, test.time, test.event)
    weighted = inference.risk_point_estimate(
        model, test.x, derive_rng(seed, kind, "eval", "weighted"), pmf, settings.L_weighted
    )
    median = inference.point_estimate_median(pmf, grid)
    risk = -weighted
    ci = c_index_ci(risk, test.time, test.event, n_boot=settings.n_boot, seed=int(derive_rng(seed, kind, "boot").integers(2**31)))
    bins = grid.bin_index(test.time)
    cum = np.cumsum(pmf, axis=1)
    ks = None
    if truth is not None:
        ks = float(np.mean(ks_distance(pmf, grid, truth.cdf_at(grid.edges[None, :]))))
    cov_e, cov_c = coverage(pmf, grid, test.time, test.event)
    stats = loglik_summary(ll, test.event)
    report = EvalReport(
        model=kind,
        c_index=c_index(risk, test.time, test.event),
        c_index_ci=ci,
        c_td=c_td_same_time(cum, bins, test.time, test.event),
        ks=ks,
        mean_loglik=stats["mean_loglik"],
        loglik_stats=stats,
        coverage_events=cov_e,
        coverage_censored=cov_c,
        c_index_median=c_index(-median, test.time, test.event),
        c_td_own_time=c_td(inference.cdf_at_bins(pmf, bins), test.time, test.event),
        meta={"seed": seed, "n_test": len(test), "M": grid.M},
    )
    return Evaluation(report, pmf, weighted, median, ll)


def write_predictions(path, ev, header_comment=None):
    """Per-subject CSV: id, pmf columns, weighted-average and median estimates."""
    n_bins = ev.pmf.shape[1]
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(["id"] + [f"pmf_{b}" for b in range(n_bins)] + ["weighted", "median"]) + "\n")
        for i in range(len(ev.pmf)):
            row = [str(i)] + [repr(float(v)) for v in ev.pmf[i]] + [repr(float(ev.weighted[i])), repr(float(ev.median[i]))]
            fh.write(",".join(row) + "\n")


def loglik_histogram(ll, event):
    """Counts of per-subject log-likelihood per stratum over fixed edges."""
    ll = np.clip(np.asarray(ll, dtype=float), LOGLIK_HIST_EDGES[0], LOGLIK_HIST_EDGES[-1])
    out = {}
    for name, sel in (("event", event == 1), ("censored", event == 0)):
        out[name] = np.histogram(ll[sel], bins=LOGLIK_HIST_EDGES)[0].tolist()
    return out


# sweep -------------------------------------------------------------------

@dataclass
class SweepData:
    train: object
    valid: object
    test: object
    truth: Truth


def prepare_synthetic(rate, seed, N=50_000):
    """Simulate a preset, split 60/20/20 and standardize on the training part."""
    if rate not in RATE_TO_PRESET:
        raise ConfigError(f"event rate must be one of {sorted(RATE_TO_PRESET)}, got {rate}")
    cfg = GompertzConfig.preset(RATE_TO_PRESET[rate], N=N, seed=seed)
    tr, va, te = split(simulate(cfg).table(), seed=seed)
    schema = fit_schema(tr)
    x_raw = np.column_stack([np.asarray(te.column_array(c), dtype=float) for c in ("age", "radon")])
    return SweepData(transform(tr, schema), transform(va, schema), transform(te, schema), Truth(cfg, x_raw))


def train_kind(kind, train, valid, cfg, history=None):
    if kind not in MODEL_CLASSES:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {list(MODEL_CLASSES)}")
    model = MODEL_CLASSES[kind].initialize(train, cfg)
    return fit(model, train, valid, cfg, history=history)


def run_cell(rate, kind, seed, N=50_000, M=SWEEP_M, settings=None, cache_dir=None, data=None):
    """Train and evaluate one (rate, model, seed) cell; returns a result dict."""
    settings = settings or EvalSettings()
    cfg = TrainConfig(M=M, seed=seed)
    key = config_hash({
        "rate": rate, "kind": kind, "seed": seed, "N": N, "train": cfg.to_dict(),
        "eval": settings.to_dict(), "source": source_hash(),
    })
    path = Path(cache_dir) / f"{kind}_er{rate}_s{seed}_{key}.json" if cache_dir else None
    if path is not None and path.exists():
        with open(path) as fh:
            return json.load(fh)
    data = data or prepare_synthetic(rate, seed, N)
    t0 = time.time()
    history = []
    model = train_kind(kind, data.train, data.valid, cfg, history)
    t1 = time.time()
    ev = evaluate(model, data.test, seed, data.truth, settings)
    result = {
        "rate": rate,
        "kind": kind,
        "seed": seed,
        "config_hash": key,
        "report": ev.report.flat(),
        "best_epoch": model.best_epoch,
        "epochs_run": len(history) - 1,
        "train_seconds": round(t1 - t0, 1),
        "eval_seconds": round(time.time() - t1, 1),
        "event_rate": float(np.mean(np.concatenate([data.train.event, data.valid.event, data.test.event]))),
        "loglik_hist": loglik_histogram(ev.loglik, data.test.event),
    }
    log.info("cell %s er%d seed %d: %s", kind, rate, seed, {k: result["report"][k] for k in ("ks", "c_index", "c_td", "mean_loglik")})
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(result, fh, sort_keys=True, indent=1)
        os.replace(tmp, path)
    return result


def run_sweep(rates=RATES, kinds=MODEL_KINDS, seeds=SEEDS, N=50_000, M=SWEEP_M, settings=None, cache_dir=None):
    results = []
    for rate in rates:
        for seed in seeds:
            data = None
            for kind in kinds:
                if data is None and not _cached(rate, kind, seed, N, M, settings, cache_dir):
                    data = prepare_synthetic(rate, seed, N)
                results.append(run_cell(rate, kind, seed, N, M, settings, cache_dir, data))
    return results


def _cached(rate, kind, seed, N, M, settings, cache_dir):
    if cache_dir is None:
        return False
    settings = settings or EvalSettings()
    key = config_hash({
        "rate": rate, "kind": kind, "seed": seed, "N": N, "train": TrainConfig(M=M, seed=seed).to_dict(),
        "eval": settings.to_dict(), "source": source_hash(),
    })
    return (Path(cache_dir) / f"{kind}_er{rate}_s{seed}_{key}.json").exists()


# tables ------------------------------------------------------------------

def metric(result, name):
    v = result["report"].get(name)
    return None if v in (None, "absent") else float(v)


def median_table(results, name):
    """{(kind, rate): median over seeds} for one report field."""
    cells = {}
    for r in results:
        v = metric(r, name)
        if v is not None:
            cells.setdefault((r["kind"], r["rate"]), []).append(v)
    return {k: float(np.median(v)) for k, v in cells.items()}


@dataclass
class Check:
    criterion: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.criterion}: {self.detail}"


def _within(value, target, tol):
    return value is not None and abs(value - target) <= tol + 1e-12


def quantitative_checks(results):
    """Pass/fail of the simulation-table criteria on median-of-seeds values."""
    ks = median_table(results, "ks")
    ci = median_table(results, "c_index")
    ll = median_table(results, "mean_loglik")
    ctd = median_table(results, "c_td")
    checks = []
    bounds = dict(zip(RATES, (0.065, 0.075, 0.085)))
    for rate in RATES:
        v = ks.get(("vsi", rate))
        checks.append(Check(f"ks_vsi_er{rate}", v is not None and v <= bounds[rate], f"{_fmt(v)} <= {bounds[rate]}"))
    for rate in (50, 30):
        wins = 0
        seeds = sorted({r["seed"] for r in results if r["rate"] == rate})
        for s in seeds:
            a = _lookup(results, "vsi", rate, s, "ks")
            b = _lookup(results, "vsi_noq", rate, s, "ks")
            wins += a is not None and b is not None and a <= b
        checks.append(Check(f"ks_order_vsi_le_noq_er{rate}", wins >= 2, f"{wins} of {len(seeds)} seeds"))
    for kind in ("vsi", "vsi_noq", "mlp"):
        for j, rate in enumerate(RATES):
            target = REFERENCE_CINDEX["vsi"][j]
            v = ci.get((kind, rate))
            checks.append(Check(f"c_index_{kind}_er{rate}", _within(v, target, 0.02), f"{_fmt(v)} vs {target} +/- 0.02"))
    for kind in ("vsi", "mlp"):
        for j, rate in enumerate(RATES):
            target = REFERENCE_LOGLIK[kind][j]
            v = ll.get((kind, rate))
            checks.append(Check(f"loglik_{kind}_er{rate}", _within(v, target, 0.20), f"{_fmt(v)} vs {target} +/- 0.20"))
    for j, rate in enumerate(RATES):
        target = REFERENCE_CTD["vsi"][j]
        v = ctd.get(("vsi", rate))
        checks.append(Check(f"c_td_vsi_er{rate}", _within(v, target, 0.03), f"{_fmt(v)} vs {target} +/- 0.03"))
    for j, rate in enumerate(RATES):
        target = REFERENCE_LOGLIK["aft_weibull"][j]
        v = ll.get(("aft_weibull", rate))
        checks.append(Check(f"loglik_aft_er{rate}", _within(v, target, 0.25), f"{_fmt(v)} vs {target} +/- 0.25"))
        target = REFERENCE_KS["aft_weibull"][j]
        v = ks.get(("aft_weibull", rate))
        checks.append(Check(f"ks_aft_er{rate}", _within(v, target, 0.02), f"{_fmt(v)} vs {target} +/- 0.02"))
    return checks


def _lookup(results, kind, rate, seed, name):
    for r in results:
        if (r["kind"], r["rate"], r["seed"]) == (kind, rate, seed):
            return metric(r, name)
    return None


def _fmt(v, digits=3):
    return "NA" if v is None else f"{v:.{digits}f}"


def table1(results):
    """Rows of (model, ours and reference KS per rate)."""
    ks = median_table(results, "ks")
    rows = []
    for kind in MODEL_KINDS:
        row = {"model": kind}
        for j, rate in enumerate(RATES):
            row[f"ks_er{rate}"] = _fmt(ks.get((kind, rate)))
            row[f"ref_ks_er{rate}"] = _fmt(REFERENCE_KS[kind][j])
        rows.append(row)
    return rows


def table2(results):
    ctd = median_table(results, "c_td")
    ci = median_table(results, "c_index")
    ll = median_table(results, "mean_loglik")
    rows = []
    for kind in MODEL_KINDS:
        row = {"model": kind}
        for name, ours, ref, digits in (
            ("c_td", ctd, REFERENCE_CTD, 3),
            ("c_index", ci, REFERENCE_CINDEX, 3),
            ("loglik", ll, REFERENCE_LOGLIK, 2),
        ):
            for j, rate in enumerate(RATES):
                row[f"{name}_er{rate}"] = _fmt(ours.get((kind, rate)), digits)
                row[f"ref_{name}_er{rate}"] = _fmt(ref[kind][j], digits)
        rows.append(row)
    return rows


def write_rows(path, rows, header_comment=None):
    cols = list(rows[0])
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in cols) + "\n")


def coverage_rows(results):
    """Long-format coverage curves (median over seeds) for plotting."""
    rows = []
    keys = sorted({k for r in results for k in r["report"] if k.startswith("coverage_")})
    rates = sorted({r["rate"] for r in results}, reverse=True)
    for kind in MODEL_KINDS:
        for rate in rates:
            for k in keys:
                v = median_table([r for r in results if r["kind"] == kind and r["rate"] == rate], k).get((kind, rate))
                if v is None:
                    continue
                parts = k.split("_")
                if parts[1] == "event":
                    lo, hi = float(parts[2]), float(parts[3])
                    rows.append({"model": kind, "rate": rate, "stratum": "event", "nominal": f"{hi - lo:.2f}", "observed": f"{v:.4f}"})
                else:
                    rows.append({"model": kind, "rate": rate, "stratum": "censored", "nominal": parts[2], "observed": f"{v:.4f}"})
    return rows


def histogram_rows(results):
    rows = []
    for r in results:
        for stratum, counts in r["loglik_hist"].items():
            for b, c in enumerate(counts):
                rows.append({
                    "model": r["kind"], "rate": r["rate"], "seed": r["seed"], "stratum": stratum,
                    "lo": f"{LOGLIK_HIST_EDGES[b]:.2f}", "hi": f"{LOGLIK_HIST_EDGES[b + 1]:.2f}", "count": c,
                })
    return rows


def reproduce_tables(out_dir, rates=RATES, kinds=MODEL_KINDS, seeds=SEEDS, N=50_000, M=SWEEP_M, settings=None, cache_dir=None):
    """Run (or reuse) the sweep and write both tables, plot data and checks."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(rates, kinds, seeds, N, M, settings, cache_dir or out / "cache")
    tag = f"config_hash={config_hash({'rates': rates, 'kinds': kinds, 'seeds': seeds, 'N': N, 'M': M})} seeds={list(seeds)}"
    write_rows(out / "table1_ks.csv", table1(results), tag)
    write_rows(out / "table2_summary.csv", table2(results), tag)
    cov = coverage_rows(results)
    if cov:
        write_rows(out / "coverage_curves.csv", cov, tag)
    write_rows(out / "loglik_histograms.csv", histogram_rows(results), tag)
    checks = quantitative_checks(results)
    with open(out / "checks.txt", "w") as fh:
        fh.write(f"# {tag}\n")
        for c in checks:
            fh.write(c.line() + "\n")
    return results, checks
