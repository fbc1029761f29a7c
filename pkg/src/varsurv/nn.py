"""Dense networks and the Adam optimizer.

Parameters live in flat ``{name: ndarray}`` dicts so that they serialize
directly into model artifacts and feed :func:`varsurv.autodiff.gradients`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from varsurv import autodiff as ad
from varsurv.errors import NumericalError

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class Mlp:
    """Layer layout of a multilayer perceptron stored under ``prefix``.

    Hidden layers use leaky-ReLU, the output layer is linear.
    """

    prefix: str
    widths: tuple
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if len(self.widths) < 2 or any(int(w) <= 0 for w in self.widths):
            raise ValueError(f"bad layer widths {self.widths}")

    @property
    def n_layers(self):
        return len(self.widths) - 1

    def names(self):
        out = []
        for i in range(self.n_layers):
            out += [f"{self.prefix}.W{i}", f"{self.prefix}.b{i}"]
        return out

    def n_params(self):
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def init(self, rng):
        """He-scaled normal weights, zero biases."""
        params = {}
        for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            params[f"{self.prefix}.W{i}"] = rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b))
            params[f"{self.prefix}.b{i}"] = np.zeros(b)
        return params

    def _check(self, x):
        if x.shape[-1] != self.widths[0]:
            raise ValueError(
                f"{self.prefix}: input width {x.shape[-1]} != expected {self.widths[0]}"
            )

    def forward(self, params, x):
        """Plain numpy evaluation (no gradient tape)."""
        h = np.asarray(x, dtype=np.float64)
        self._check(h)
        for i in range(self.n_layers):
            h = h @ params[f"{self.prefix}.W{i}"] + params[f"{self.prefix}.b{i}"]
            if i < self.n_layers - 1:
                h = np.where(h > 0, h, self.slope * h)
        return h

    def forward_tape(self, params, x, dropout=0.0, rng=None):
        """Graph-building evaluation; ``params`` values are tape tensors.

        ``dropout`` > 0 applies inverted dropout to hidden activations using
        ``rng``.
        """
        h = ad.lift(x)
        self._check(h.value)
        for i in range(self.n_layers):
            h = h @ params[f"{self.prefix}.W{i}"] + params[f"{self.prefix}.b{i}"]
            if i < self.n_layers - 1:
                h = ad.leaky_relu(h, self.slope)
                if dropout > 0:
                    keep = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                    h = h * keep
        return h


@dataclass
class Adam:
    """Adam with bias correction; minimizes."""

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params
