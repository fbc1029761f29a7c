"""Discrete-time variational survival models in numpy.

Subpackages are imported lazily by name; the most common entry points are
re-exported here.
"""
from varsurv.data import SurvivalDataset, fit_schema, load_csv, split, table_from_arrays, transform
from varsurv.errors import ConfigError, DataError, NumericalError, VarsurvError
from varsurv.grid import TimeGrid, build_grid, nelson_aalen
from varsurv.model import TrainConfig, VsiModel, fit, train
from varsurv.simulate import GompertzConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "GompertzConfig",
    "NumericalError",
    "SurvivalDataset",
    "TimeGrid",
    "TrainConfig",
    "VarsurvError",
    "VsiModel",
    "build_grid",
    "fit",
    "fit_schema",
    "load_csv",
    "nelson_aalen",
    "simulate",
    "split",
    "table_from_arrays",
    "train",
    "transform",
]
