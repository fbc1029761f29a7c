"""Model artifact container (JSON, versioned).

Floats are written with ``repr`` precision so save -> load -> save is
byte-identical.
"""
from __future__ import annotations

import json

import numpy as np

from varsurv.baselines import AftWeibullModel, MlpModel, NoQModel
from varsurv.data import CovariateSchema
from varsurv.errors import DataError
from varsurv.grid import NelsonAalenCurve, TimeGrid
from varsurv.model import TrainConfig, VsiModel

FORMAT = "varsurv-model/1"
KINDS = {cls.kind: cls for cls in (VsiModel, NoQModel, MlpModel, AftWeibullModel)}


def model_to_dict(model, meta=None):
    d = {
        "format": FORMAT,
        "kind": model.kind,
        "config": model.config.to_dict(),
        "n_features": int(model.n_features),
        "schema": model.schema.to_dict() if model.schema is not None else None,
        "grid": model.grid.to_dict(),
        "na_curve": model.na_curve.to_dict(),
        "params": {
            k: {"shape": list(np.shape(v)), "data": np.ravel(v).tolist()} for k, v in sorted(model.params.items())
        },
        "meta": meta or {},
    }
    if isinstance(model, AftWeibullModel):
        d["time_shift"] = model.time_shift
    if hasattr(model, "best_epoch"):
        d["best_epoch"] = int(model.best_epoch)
    return d


def model_from_dict(d):
    if d.get("format") != FORMAT:
        raise DataError(f"unsupported model artifact format {d.get('format')!r}")
    cls = KINDS.get(d["kind"])
    if cls is None:
        raise DataError(f"unknown model kind {d['kind']!r}")
    params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
    schema = CovariateSchema.from_dict(d["schema"]) if d["schema"] is not None else None
    args = (
        TimeGrid.from_dict(d["grid"]),
        schema,
        NelsonAalenCurve.from_dict(d["na_curve"]),
        params,
        TrainConfig.from_dict(d["config"]),
    )
    if cls is AftWeibullModel:
        model = cls(*args, n_features=d["n_features"], time_shift=d.get("time_shift", 0.0))
    else:
        model = cls(*args, n_features=d["n_features"])
    if "best_epoch" in d:
        model.best_epoch = d["best_epoch"]
    model.meta = d.get("meta", {})
    return model


def dumps(model, meta=None):
    return json.dumps(model_to_dict(model, meta), sort_keys=True, indent=1) + "\n"


def save_model(model, path, meta=None):
    with open(path, "w") as fh:
        fh.write(dumps(model, meta))


def load_model(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read model artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model artifact {path} is not valid JSON: {exc}") from exc
    return model_from_dict(d)
