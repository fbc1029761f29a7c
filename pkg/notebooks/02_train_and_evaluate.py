"""
Training the variational model and its baselines
================================================

Fits the variational model, the prior-only variant, a direct softmax MLP
and a Weibull AFT model on a small simulated cohort, then compares them on
the held-out split.  Uses a reduced cohort so it runs in about ten minutes on one
core; the full-scale comparison is in ``03_simulation_tables.py``.
"""

# %%
import numpy as np

from varsurv.experiment import EvalSettings, evaluate, prepare_synthetic, train_kind
from varsurv.inference import point_estimate_median
from varsurv.model import TrainConfig

# %% [markdown]
# 6,000 subjects at the 50% event rate, split 60/20/20.  Covariates are
# standardized on the training part.

# %%
data = prepare_synthetic(50, seed=1, N=6_000)
print(len(data.train), len(data.valid), len(data.test), "subjects in train / valid / test")

# %% [markdown]
# Same optimizer and early-stopping rule for every model, with fewer bins
# than the full sweep.

# %%
cfg = TrainConfig(M=30, max_epochs=400, patience=10, seed=1)
settings = EvalSettings(L_mc=100, L_iw=200, L_noq=50, L_weighted=100, n_boot=200)
models, reports = {}, {}
for kind in ("vsi", "vsi_noq", "mlp", "aft_weibull"):
    history = []
    models[kind] = train_kind(kind, data.train, data.valid, cfg, history)
    reports[kind] = evaluate(models[kind], data.test, seed=1, truth=data.truth, settings=settings).report
    print(f"{kind:12s} best epoch {models[kind].best_epoch:3d} of {len(history) - 1}")

# %% [markdown]
# Concordance barely separates the models.  Log-likelihood and KS to the
# true CDF show the calibration differences.

# %%
print(f"{'model':12s} {'C-index':>8s} {'C^td':>8s} {'KS':>8s} {'loglik':>8s}")
for kind, r in reports.items():
    print(f"{kind:12s} {r.c_index:8.3f} {r.c_td:8.3f} {r.ks:8.3f} {r.mean_loglik:8.3f}")

# %% [markdown]
# Coverage: the share of observed event times inside each subject's
# central predicted interval.  A calibrated model tracks the nominal width.

# %%
r = reports["vsi"]
for (lo, hi), v in r.coverage_events.items():
    print(f"nominal {hi - lo:.1f}: observed {v:.3f}")

# %% [markdown]
# Individual predictions: median predicted time for a few test subjects
# next to what was observed.

# %%
pmf = models["vsi"].predict_pmf(data.test.x[:5], np.random.default_rng(0), 200)
for med, t, d in zip(point_estimate_median(pmf, models["vsi"].grid), data.test.time, data.test.event):
    print(f"predicted median {med:6.1f}   observed {t:6.1f} ({'event' if d else 'censored'})")
