"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .tape import Tape, backward

# coordinate budget above which a random subset is checked instead of all
FULL_CHECK_LIMIT = 600
SUBSET_SIZE = 240


def grad_check(loss_fn, params, eps=1e-5, sample=None, rng=None):
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` takes no arguments and returns a scalar tensor; it must be
    deterministic (two evaluations are compared bit-for-bit). ``params`` is a
    list of trainable tensors. Every coordinate is checked unless the total
    exceeds ``FULL_CHECK_LIMIT``, in which case a seeded random subset of at
    least ``SUBSET_SIZE`` coordinates is used. The relative error denominator
    is max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise UsageError("eps must be positive")

    first = float(loss_fn().data)
    second = float(loss_fn().data)
    if first != second:
        raise UsageError("loss_fn is not deterministic: two evaluations differ")

    for p in params:
        p.grad = None
    with Tape() as t:
        loss = loss_fn()
        backward(loss, t)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    coords = []
    for pi, p in enumerate(params):
        for idx in range(p.data.size):
            coords.append((pi, idx))
    total = len(coords)
    n_check = total if sample is None else min(sample, total)
    if sample is None and total > FULL_CHECK_LIMIT:
        n_check = SUBSET_SIZE
    if n_check < total:
        if rng is None:
            rng = np.random.default_rng(0)
        chosen = rng.choice(total, size=n_check, replace=False)
        coords = [coords[i] for i in chosen]

    max_rel = 0.0
    for pi, idx in coords:
        flat = params[pi].data.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + eps
        plus = float(loss_fn().data)
        flat[idx] = orig - eps
        minus = float(loss_fn().data)
        flat[idx] = orig
        numeric = (plus - minus) / (2.0 * eps)
        a = analytic[pi].reshape(-1)[idx]
        # central differences cannot resolve derivatives below their own
        # roundoff floor ~ ulp(loss)/eps; such coordinates carry no signal
        noise_floor = max(abs(plus), abs(minus), 1.0) * 5e-16 / eps
        if abs(a - numeric) <= noise_floor:
            continue
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if rel > max_rel:
            max_rel = rel
    return max_rel
