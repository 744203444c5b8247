"""Adam with independent per-group learning rates.

The model's trainable parameters are partitioned into named groups (the
attention side and the separator side train at different rates); each group
owns its own moment accumulators.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, TrainingError

GROUP_LABELS = ("attention_net", "voicefilter_net")


class ParamGroup:
    """Named parameters sharing one learning rate."""

    def __init__(self, label, params, learning_rate):
        if label not in GROUP_LABELS:
            raise ConfigError(f"unknown param group label {label!r}")
        if learning_rate < 0:
            raise ConfigError("learning rate must be >= 0")
        names = [n for n, _ in params]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in group {label!r}")
        self.label = label
        self.params = list(params)
        self.learning_rate = float(learning_rate)

    def names(self):
        return [n for n, _ in self.params]

    def zero_grads(self):
        for _, p in self.params:
            p.grad = None


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, group: ParamGroup, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in group.params}
        self.v = {name: np.zeros_like(p.data) for name, p in group.params}


def adam_step(group: ParamGroup, state: AdamState):
    """One bias-corrected Adam update using ``group.learning_rate``.

    Parameters with no accumulated gradient are treated as zero-gradient.
    A non-finite gradient aborts, naming the offending parameter.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    lr = group.learning_rate
    for name, p in group.params:
        g = p.grad
        if g is None:
            g = 0.0
        elif not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
