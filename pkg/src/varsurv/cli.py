"""Command-line driver: ``varsurv {simulate,train,evaluate,reproduce-tables}``.

Every written file carries the configuration hash and seed (CSV comment
header, manifest field or report line).  Exit codes: 0 success, 1 config
error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from varsurv import artifact
from varsurv.config import ExperimentConfig, load_config
from varsurv.data import ColumnRoles, fit_schema, load_csv, split, transform
from varsurv.errors import ConfigError, DataError, NumericalError
from varsurv.experiment import (
    MODEL_KINDS,
    Truth,
    config_hash,
    coverage_rows,
    evaluate,
    histogram_rows,
    loglik_histogram,
    reproduce_tables,
    train_kind,
    write_predictions,
    write_rows,
)
from varsurv.simulate import RATE_TO_PRESET, GompertzConfig, simulate

log = logging.getLogger("varsurv")

EXIT_CODES = {ConfigError: 1, DataError: 2, NumericalError: 3}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, float) and not np.isfinite(v):
        return repr(v)
    if isinstance(v, (np.integer, np.floating)):
        return v.item()
    raise TypeError(type(v).__name__)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing file {path}") from exc


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "model", None):
        cfg.model = args.model
    return cfg


def _gompertz_dict(g):
    # JSON has no inf; spell the no-censoring horizon out
    return {k: ("inf" if isinstance(v, float) and np.isinf(v) else v) for k, v in g.to_dict().items()}


def _gompertz_from_dict(d):
    return GompertzConfig(**{k: (float("inf") if v == "inf" else v) for k, v in d.items()})


def cmd_simulate(args):
    cfg = _config(args)
    override = {}
    if args.N is not None:
        override["N"] = args.N
    preset = RATE_TO_PRESET[args.event_rate] if args.event_rate is not None else None
    g = cfg.gompertz(preset, **override)
    sim = simulate(g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(_gompertz_dict(g))
    sim.table().to_csv(out / "dataset.csv", header_comment=f"config_hash={h} seed={g.seed}")
    manifest = {
        "command": "simulate",
        "config_hash": h,
        "seed": g.seed,
        "simulator": _gompertz_dict(g),
        "event_rate": float(sim.event.mean()),
        "files": ["dataset.csv"],
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {len(sim.time)} records to {out / 'dataset.csv'} (event rate {sim.event.mean():.3f})")


def _data_path(cfg, out):
    if cfg.data.path:
        return Path(cfg.data.path)
    default = out / "dataset.csv"
    if default.exists():
        return default
    raise ConfigError("no dataset: set [data] path in the config or run `varsurv simulate` into --out first")


def cmd_train(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config()
    path = _data_path(cfg, out)
    roles = ColumnRoles(cfg.data.time, cfg.data.event, cfg.data.covariates, tuple(cfg.data.categorical))
    table = load_csv(path, roles, delimiter=cfg.data.delimiter, missing=tuple(cfg.data.missing))
    tr, va, te = split(table, seed=cfg.seed)
    schema = fit_schema(tr)
    h = config_hash({"experiment": cfg.to_dict(), "train": tcfg.to_dict(), "data": str(path)})
    tag = f"config_hash={h} seed={cfg.seed}"
    for name, part in (("train", tr), ("valid", va), ("test", te)):
        part.to_csv(out / f"{name}.csv", header_comment=tag)
    history = []
    try:
        model = train_kind(cfg.model, transform(tr, schema), transform(va, schema), tcfg, history)
    except NumericalError as exc:
        raise NumericalError(f"training {cfg.model}: {exc}") from exc
    artifact.save_model(model, out / "model.json", meta={"config_hash": h, "seed": cfg.seed})
    with open(out / "train_log.csv", "w") as fh:
        fh.write(f"# {tag}\nepoch,train_objective,valid_objective\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['train_objective']!r},{row['valid_objective']!r}\n")
    manifest = {"command": "train", "config_hash": h, "seed": cfg.seed, "model": cfg.model, "config": cfg.to_dict(),
                "data": str(path), "best_epoch": model.best_epoch, "epochs_run": len(history) - 1,
                "files": ["train.csv", "valid.csv", "test.csv", "model.json", "train_log.csv"]}
    sim_manifest = path.parent / "manifest.json"
    if sim_manifest.exists():
        sim = _read_json(sim_manifest)
        if "simulator" in sim:
            manifest["simulator"] = sim["simulator"]
    _write_json(out / "train_manifest.json", manifest)
    print(f"trained {cfg.model}: best epoch {model.best_epoch} of {len(history) - 1}; artifact {out / 'model.json'}")


def cmd_evaluate(args):
    cfg = _config(args)
    out = Path(args.out)
    model = artifact.load_model(args.model_file or out / "model.json")
    test_path = Path(args.test or out / "test.csv")
    roles = ColumnRoles(cfg.data.time, cfg.data.event, cfg.data.covariates, tuple(cfg.data.categorical))
    table = load_csv(test_path, roles, delimiter=cfg.data.delimiter, missing=tuple(cfg.data.missing))
    test = transform(table, model.schema)
    truth = None
    if args.truth:
        manifest = _read_json(out / "train_manifest.json") if (out / "train_manifest.json").exists() else {}
        if "simulator" not in manifest:
            raise DataError("--truth needs a simulated dataset (no simulator settings in train_manifest.json)")
        missing = [c for c in ("age", "radon") if c not in table.values]
        if missing:
            raise DataError(f"--truth needs raw simulator covariates; missing columns {missing}")
        x_raw = np.column_stack([table.column_array("age"), table.column_array("radon")])
        truth = Truth(_gompertz_from_dict(manifest["simulator"]), x_raw)
    ev = evaluate(model, test, cfg.seed, truth, cfg.eval)
    h = config_hash({"model": model.meta, "eval": cfg.eval.to_dict(), "seed": cfg.seed, "truth": bool(truth)})
    ev.report.meta = {"config_hash": h, **ev.report.meta}
    tag = f"config_hash={h} seed={cfg.seed}"
    ev.report.write(out / f"report_{model.kind}.txt")
    write_predictions(out / f"predictions_{model.kind}.csv", ev, tag)
    result = {"kind": model.kind, "rate": 0, "seed": cfg.seed, "report": ev.report.flat(),
              "loglik_hist": loglik_histogram(ev.loglik, test.event)}
    cov = [r for r in coverage_rows([result]) if r["model"] == model.kind]
    if cov:
        write_rows(out / f"coverage_{model.kind}.csv", [{k: v for k, v in r.items() if k != "rate"} for r in cov], tag)
    write_rows(out / f"loglik_hist_{model.kind}.csv",
               [{k: v for k, v in r.items() if k not in ("rate", "seed")} for r in histogram_rows([result])], tag)
    print(ev.report.to_text(), end="")


def cmd_reproduce(args):
    cfg = _config(args)
    sw = cfg.sweep
    N = args.N if args.N is not None else sw.N
    rates = (args.event_rate,) if args.event_rate is not None else sw.rates
    kinds = (args.model,) if args.model else sw.kinds
    seeds = (args.seed,) if args.seed is not None else sw.seeds
    _, checks = reproduce_tables(args.out, rates, kinds, seeds, N, sw.M, cfg.eval)
    for c in checks:
        print(c.line())


def build_parser():
    p = argparse.ArgumentParser(prog="varsurv", description="Discrete-time variational survival models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("simulate", help="draw a Cox-Gompertz dataset")
    common(sp)
    sp.add_argument("--event-rate", type=int, choices=sorted(RATE_TO_PRESET), default=None)
    sp.add_argument("--N", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="split a dataset and fit one model")
    common(sp)
    sp.add_argument("--model", choices=MODEL_KINDS)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="score a trained model on its test split")
    common(sp)
    sp.add_argument("--model-file", help="artifact path (default OUT/model.json)")
    sp.add_argument("--test", help="test CSV (default OUT/test.csv)")
    sp.add_argument("--truth", action="store_true", help="compute KS against the simulator's exact CDF")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("reproduce-tables", help="run the simulation sweep and write both comparison tables")
    common(sp)
    sp.add_argument("--model", choices=MODEL_KINDS, help="restrict to one model kind")
    sp.add_argument("--event-rate", type=int, choices=sorted(RATE_TO_PRESET), default=None)
    sp.add_argument("--N", type=int)
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, DataError, NumericalError) as exc:
        print(f"varsurv {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES[type(exc)]
    return 0


if __name__ == "__main__":
    sys.exit(main())
