import numpy as np
import pytest

from varsurv.data import fit_schema, split, transform
from varsurv.model import TrainConfig
from varsurv.simulate import GompertzConfig, simulate


def small_config(**kw):
    base = dict(M=6, latent_dim=3, hidden=8, batch_size=50, max_epochs=30, patience=3, seed=0, learning_rate=5e-3)
    base.update(kw)
    return TrainConfig(**base)


def small_data(n=600, preset="er50", seed=0):
    sim = simulate(GompertzConfig.preset(preset, N=n, seed=seed))
    tr, va, te = split(sim.table(), seed=seed)
    schema = fit_schema(tr)
    return transform(tr, schema), transform(va, schema), transform(te, schema)


def encoder_as_prior(model):
    """Make the encoder ignore its target input and copy the prior net."""
    p = model.params
    w = model.n_features
    for k in list(p):
        if k.startswith("encoder."):
            src = p["prior." + k.split(".", 1)[1]]
            if k == "encoder.W0":
                block = np.zeros_like(p[k])
                block[:w] = src
                p[k] = block
            else:
                p[k] = src.copy()


def uniform_decoder(model):
    for k in model.params:
        if k.startswith("decoder.") or k.startswith("mlp."):
            model.params[k] = np.zeros_like(model.params[k])


@pytest.fixture(scope="session")
def tiny():
    return small_data()
