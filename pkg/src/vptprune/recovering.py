"""Restore full temporal length after pruning.

``tra_recover`` works on tokens before the regression head: learnable
per-frame queries attend over the surviving tokens of each joint through a
single multi-head cross-attention layer with a residual. ``tri_recover``
works on 3D poses after the head by piecewise-linear interpolation between
kept frames.
"""

from __future__ import annotations

import numpy as np

from .errors import RecoveryError, ShapeError
from .model import ModelWeights, multi_head_attention


def tra_recover(last, w: ModelWeights) -> np.ndarray:
    """(r_M, J, C) tokens -> (F, J, C) tokens."""
    if not w.has_tra:
        raise ShapeError("weights carry no TRA parameters")
    cfg = w.config
    p = w.tra()
    last = np.asarray(last, dtype=np.float64)
    if last.ndim != 3 or last.shape[1:] != (cfg.joints, cfg.dim):
        raise ShapeError(f"expected tokens (r, {cfg.joints}, {cfg.dim}), got {last.shape}")
    queries = p["queries"]
    kv = np.swapaxes(last, 0, 1)  # (J, r, C)
    q = np.broadcast_to(queries, (cfg.joints,) + queries.shape)
    out, _ = multi_head_attention(q, kv, p, cfg.heads)
    return np.ascontiguousarray(np.swapaxes(queries[None] + out, 0, 1))


def tri_recover(poses, kept, frames: int) -> np.ndarray:
    """Interpolate (r, J, 3) poses at ascending frame indices ``kept`` to F frames.

    Kept frames are copied verbatim; no extrapolation, so ``kept`` must start
    at 0 and end at ``frames - 1``.
    """
    poses = np.asarray(poses, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.int64)
    if kept.ndim != 1 or poses.shape[0] != kept.shape[0]:
        raise ShapeError(f"{poses.shape[0]} poses for {kept.shape[0]} kept indices")
    if kept.shape[0] < 2:
        raise RecoveryError("interpolation needs at least two kept frames")
    if np.any(np.diff(kept) <= 0):
        raise RecoveryError("kept indices must be strictly ascending")
    if kept[0] != 0 or kept[-1] != frames - 1:
        raise RecoveryError(
            f"kept frames must cover both endpoints 0 and {frames - 1}, got {kept[0]}..{kept[-1]}"
        )
    t = np.arange(frames)
    seg = np.clip(np.searchsorted(kept, t, side="right") - 1, 0, kept.shape[0] - 2)
    a, b = kept[seg], kept[seg + 1]
    frac = ((t - a) / (b - a))[:, None, None]
    out = poses[seg] + frac * (poses[seg + 1] - poses[seg])
    out[kept] = poses
    return out
