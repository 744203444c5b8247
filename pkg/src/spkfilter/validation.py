"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import UsageError


def check_frames(X, feat_dim, name="X"):
    """Validate one utterance's frames: 2-D float64, finite, right width."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise UsageError(f"{name} must be [n_frames, {feat_dim}], got shape "
                         f"{arr.shape}")
    if arr.shape[1] != feat_dim:
        raise UsageError(f"{name} has {arr.shape[1]} feature dims, the model "
                         f"expects {feat_dim}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def check_embedding(e, embed_dim, name="embedding"):
    """Validate and unit-normalize one speaker embedding."""
    arr = np.asarray(e, dtype=np.float64).reshape(-1)
    if arr.shape[0] != embed_dim:
        raise UsageError(f"{name} has {arr.shape[0]} dims, expected {embed_dim}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    norm = np.linalg.norm(arr)
    if norm == 0:
        raise UsageError(f"{name} is all-zero (reserved for padding slots)")
    return arr / norm


def as_frame_list(X, feat_dim, name="X"):
    """Accept one utterance or a list of utterances; return a list."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        return [check_frames(X, feat_dim, name)], True
    if isinstance(X, (list, tuple)):
        return [check_frames(x, feat_dim, f"{name}[{i}]")
                for i, x in enumerate(X)], False
    raise UsageError(f"{name} must be a [n_frames, {feat_dim}] array or a "
                     f"list of them")
