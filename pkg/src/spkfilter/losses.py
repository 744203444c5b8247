"""The three training losses and their weighted combination.

* asymmetric L2 on masked-vs-clean features (over-suppression of target
  energy costs ``alpha_asym`` times more than under-suppression),
* binary cross-entropy on per-frame overlap predictions,
* per-frame cross-entropy of attention weights against the one-hot target
  slot, plus an additive L-infinity term on the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError
from .nn_core import Tensor
from .nn_core import tape as T

BCE_CLAMP = 1e-7


@dataclass
class LossConfig:
    w_asym: float = 1.0
    w_noise: float = 1.0
    w_att: float = 0.1
    alpha_asym: float = 10.0
    lambda_inf: float = 0.1

    def __post_init__(self):
        if min(self.w_asym, self.w_noise, self.w_att) < 0:
            raise ConfigError("combination weights must be nonnegative")
        if self.w_asym == self.w_noise == self.w_att == 0:
            raise ConfigError("at least one combination weight must be positive")
        if self.alpha_asym <= 1:
            raise ConfigError("alpha_asym must exceed 1")
        if self.lambda_inf < 0:
            raise ConfigError("lambda_inf must be nonnegative")


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def asym_l2(predicted_clean, target_clean, alpha_asym=10.0):
    """Mean of g(d)^2 with d = target - predicted; g scales positive d
    (target energy that was suppressed) by ``alpha_asym``."""
    pred = _as_tensor(predicted_clean)
    target = np.asarray(target_clean, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise UsageError(
            f"shape mismatch {pred.data.shape} vs {target.shape}")
    d = T.sub(target, pred)
    scale = np.where(d.data > 0, alpha_asym, 1.0)  # constant w.r.t. the graph
    g = T.mul(d, scale)
    return T.scale(T.sum_all(T.mul(g, g)), 1.0 / max(target.size, 1))


def noise_loss(probs, labels):
    """Mean binary cross-entropy with probabilities clamped at 1e-7."""
    p = _as_tensor(probs)
    y = np.asarray(labels, dtype=np.float64)
    if p.data.shape != y.shape:
        raise UsageError(f"length mismatch {p.data.shape} vs {y.shape}")
    if y.size == 0:
        return Tensor(0.0)
    pc = T.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    pos = T.mul(T.log(pc), y)
    neg = T.mul(T.log(T.sub(1.0, pc)), 1.0 - y)
    return T.scale(T.sum_all(T.add(pos, neg)), -1.0 / y.size)


def _check_one_hot(w_gt):
    w = np.asarray(w_gt, dtype=np.float64)
    if w.ndim != 1 or not np.all((w == 0) | (w == 1)) or w.sum() != 1:
        raise UsageError("ground-truth attention weights must be one-hot")
    return int(np.argmax(w))


def attention_loss(alphas, w_gt, lambda_inf=0.0):
    """Sum over frames of -ln(alpha at the target slot) + lambda * max(alpha).

    The max runs over all slots, padding included.
    """
    target = _check_one_hot(w_gt)
    if isinstance(alphas, Tensor):
        a = alphas
        if a.data.ndim != 2:
            raise UsageError("attention_loss expects [n_frames, N] weights")
    else:
        arr = np.asarray(alphas, dtype=np.float64)
        a = Tensor(arr[None, :] if arr.ndim == 1 else arr)
    if a.data.shape[1] != len(np.asarray(w_gt)):
        raise UsageError("w_gt length differs from the number of slots")
    ce = T.scale(T.sum_all(T.log(T.col(a, target))), -1.0)
    if lambda_inf == 0.0:
        return ce
    reg = T.scale(T.sum_all(T.rowmax(a)), lambda_inf)
    return T.add(ce, reg)


def attention_loss_mean(alphas, w_gt, lambda_inf=0.0):
    """Per-frame mean of ``attention_loss`` (the scale used for logging and
    for the combined training objective)."""
    a = np.asarray(alphas.data if isinstance(alphas, Tensor) else alphas)
    n_frames = a.shape[0] if a.ndim == 2 else 1
    return T.scale(attention_loss(alphas, w_gt, lambda_inf),
                   1.0 / max(n_frames, 1))


def total_loss(config: LossConfig, parts):
    """Weighted linear combination of (asym, noise, attention) parts."""
    p_asym, p_noise, p_att = parts
    out = T.scale(_as_tensor(p_asym), config.w_asym)
    out = T.add(out, T.scale(_as_tensor(p_noise), config.w_noise))
    return T.add(out, T.scale(_as_tensor(p_att), config.w_att))
