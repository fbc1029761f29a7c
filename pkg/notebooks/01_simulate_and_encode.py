"""
Simulated survival data, the time grid and target encodings
============================================================

Draws a Cox-Gompertz cohort with about half of the subjects censored,
discretizes time on an event-percentile grid and looks at how censored
subjects are turned into soft training targets.
"""

# %%
import numpy as np

from varsurv import GompertzConfig, build_grid, nelson_aalen, simulate
from varsurv.grid import encode_targets
from varsurv.simulate import truth_cdf

# %% [markdown]
# A cohort of 20,000 subjects; the "er50" preset draws censoring times
# uniformly on [0, 100], which censors roughly half of them.

# %%
cfg = GompertzConfig.preset("er50", N=20_000, seed=1)
sim = simulate(cfg)
print(f"event rate {sim.event.mean():.3f}")
print(f"median observed time {np.median(sim.time):.1f}, max event time {sim.time[sim.event == 1].max():.1f}")

# %% [markdown]
# Bin edges sit at percentiles of the observed event times.  Bin ``b``
# covers ``(edge[b-1], edge[b]]`` and the last bin collects everything past
# the final edge.

# %%
grid = build_grid(sim.time[sim.event == 1], M=20)
print("edges:", np.round(grid.edges, 1))
counts = np.bincount(grid.bin_index(sim.time[sim.event == 1]), minlength=grid.n_bins)
print("events per bin:", counts)

# %% [markdown]
# The population Nelson-Aalen curve gives the tail mass used for censored
# subjects.  Its pmf over the M+1 bins sums to one.

# %%
na = nelson_aalen(sim.time, sim.event, grid)
print("NA survival at the edges:", np.round(na.survival, 3))
print("pmf total:", na.pmf.sum())

# %% [markdown]
# An event becomes a one-hot vector; a censored subject spreads its weight
# over the bins after the censoring bin, in proportion to the population
# pmf.

# %%
idx = [int(np.flatnonzero(sim.event == 1)[0]), int(np.flatnonzero(sim.event == 0)[0])]
enc = encode_targets(sim.time[idx], sim.event[idx], grid, na)
for i, row in zip(idx, enc):
    kind = "event" if sim.event[i] else "censored"
    print(f"{kind:9s} t={sim.time[i]:6.1f} bin={grid.bin_index(sim.time[i])}: {np.round(row, 3)}")

# %% [markdown]
# The exact conditional CDF is available for every subject, which is what
# the KS distance later compares predictions against.

# %%
print("true F(t | x) at the edges, first subject:")
print(np.round(truth_cdf(cfg, sim.x[:1], grid.edges[None, :])[0], 3))
