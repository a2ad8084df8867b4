"""Temporal token pruning: selection strategies and the hierarchical scheduler.

Every selector returns kept positions as a strictly ascending ``int64`` array.
Ties in any score go to the lower index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numkernel as nk
from .errors import ParameterError, ScheduleError, ShapeError
from .model import ModelConfig, ModelWeights, temporal_attention_probe, transformer_block

STRATEGIES = ("cluster", "attention", "motion", "sampler")


@dataclass(frozen=True)
class PruneSchedule:
    r: tuple
    b: tuple
    strategy: str = "sampler"

    def __post_init__(self):
        object.__setattr__(self, "r", tuple(int(v) for v in self.r))
        object.__setattr__(self, "b", tuple(int(v) for v in self.b))

    @property
    def stages(self) -> int:
        return len(self.r)

    def validate(self, cfg: ModelConfig):
        r, b = self.r, self.b
        if self.strategy not in STRATEGIES:
            raise ScheduleError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if len(r) == 0 or len(r) != len(b):
            raise ScheduleError(f"r and b must be non-empty and equally long, got r={list(r)} b={list(b)}")
        if any(v < 1 for v in r):
            raise ScheduleError(f"every r must be >= 1, got {list(r)}")
        if r[0] >= cfg.frames:
            raise ScheduleError(f"r[0]={r[0]} must be < frames={cfg.frames}")
        if any(x <= y for x, y in zip(r, r[1:])):
            raise ScheduleError(f"r must be strictly decreasing, got {list(r)}")
        if b[0] < 0 or b[-1] >= cfg.blocks:
            raise ScheduleError(f"b must lie in [0, {cfg.blocks - 1}], got {list(b)}")
        if any(x >= y for x, y in zip(b, b[1:])):
            raise ScheduleError(f"b must be strictly increasing, got {list(b)}")
        if self.strategy == "cluster":
            # smallest input any stage can see
            n_min = min((cfg.frames,) + r[:-1])
            if cfg.knn_k >= n_min:
                raise ScheduleError(
                    f"knn_k={cfg.knn_k} must be < the smallest stage input ({n_min} tokens)"
                )


@dataclass
class SelectionTrace:
    """What every pruning stage kept.

    ``stages[m]`` indexes into the token set entering stage m, ``kept[m]``
    holds the same selection as original frame indices. ``block_tokens[l]`` is
    the token count block l ran on.
    """

    frames: int
    stages: list = field(default_factory=list)
    kept: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    block_tokens: list = field(default_factory=list)
    attention: Optional[list] = None

    @property
    def final_kept(self) -> np.ndarray:
        return self.kept[-1] if self.kept else np.arange(self.frames)


def _top_r(scores, r: int) -> np.ndarray:
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return np.sort(order[:r]).astype(np.int64)


def _check_r(n: int, r: int):
    if not 1 <= r <= n:
        raise ScheduleError(f"cannot keep {r} of {n} tokens")


def tps_select(n: int, r: int) -> np.ndarray:
    """Uniform sampler: ``round_half_up(j * (n - 1) / (r - 1))`` for j < r."""
    _check_r(n, r)
    if r == 1:
        return np.zeros(1, dtype=np.int64)
    j = np.arange(r, dtype=np.int64)
    return (2 * j * (n - 1) + (r - 1)) // (2 * (r - 1))


def dpc_knn_scores(pooled, k: int):
    """Density-peaks scores with kNN local density.

    Returns ``(rho, delta, score)``. ``rho`` is the exponentiated negative mean
    squared distance to the k nearest other tokens. ``delta`` is the distance
    to the nearest token of higher density, where density is compared on
    ``(rho, -index)``; the densest token gets its largest distance instead.
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.ndim != 2:
        raise ShapeError(f"pooled tokens must be (n, C), got {pooled.shape}")
    n = pooled.shape[0]
    if n < 2 or not 1 <= k < n:
        raise ParameterError(f"need n >= 2 and 1 <= k < n, got n={n}, k={k}")
    d2 = nk.pairwise_sq_dist(pooled)
    others = d2 + np.diag(np.full(n, np.inf))
    knn = np.sort(others, axis=1)[:, :k]
    rho = np.exp(-knn.sum(axis=1) / k)
    dist = np.sqrt(d2)
    idx = np.arange(n)
    higher = (rho[None, :] > rho[:, None]) | ((rho[None, :] == rho[:, None]) & (idx[None, :] < idx[:, None]))
    masked = np.where(higher, dist, np.inf)
    delta = np.where(higher.any(axis=1), masked.min(axis=1), dist.max(axis=1))
    return rho, delta, rho * delta


def tpc_select(tokens, r: int, k: int, return_scores: bool = False):
    tokens = np.asarray(tokens, dtype=np.float64)
    n = tokens.shape[0]
    _check_r(n, r)
    _, _, score = dpc_knn_scores(nk.mean_pool_spatial(tokens), k)
    sel = _top_r(score, r)
    return (sel, score) if return_scores else sel


def tpa_select(alpha, r: int, return_scores: bool = False):
    """Keep the r tokens that receive the most attention (column sums)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise ShapeError(f"attention must be square, got {alpha.shape}")
    _check_r(alpha.shape[0], r)
    score = alpha.sum(axis=0)
    sel = _top_r(score, r)
    return (sel, score) if return_scores else sel


def compute_motion(s) -> np.ndarray:
    """Frame-to-frame differences of a flattened 2D sequence; row 0 is zero."""
    s = np.asarray(s, dtype=np.float64)
    s = s.reshape(s.shape[0], -1)
    if s.shape[0] < 1:
        raise ShapeError("motion needs at least one frame")
    m = np.zeros_like(s)
    m[1:] = s[1:] - s[:-1]
    return m


def tpmo_select(m, r: int, return_scores: bool = False):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"motion matrix must be 2-D, got {m.shape}")
    _check_r(m.shape[0], r)
    score = np.abs(m).sum(axis=1)
    sel = _top_r(score, r)
    return (sel, score) if return_scores else sel


def _select(strategy, x, r, l, w, poses2d, kept_prev):
    if strategy == "sampler":
        return tps_select(x.shape[0], r), None
    if strategy == "cluster":
        return tpc_select(x, r, w.config.knn_k, return_scores=True)
    if strategy == "attention":
        return tpa_select(temporal_attention_probe(x, w, l), r, return_scores=True)
    if strategy == "motion":
        if poses2d is None:
            raise ParameterError("motion pruning needs the 2D input poses")
        return tpmo_select(compute_motion(np.asarray(poses2d)[kept_prev]), r, return_scores=True)
    raise ScheduleError(f"unknown strategy {strategy!r}")


def run_schedule(
    x,
    sched: Optional[PruneSchedule],
    w: ModelWeights,
    poses2d=None,
    keep_center: Optional[int] = None,
    collect_attention: bool = False,
):
    """Run all blocks, pruning before block ``b[m]`` runs.

    ``keep_center`` is an original frame index that must survive every stage;
    when a strategy drops it, it is put back and that stage keeps r + 1.
    Returns the final tokens and a :class:`SelectionTrace`.
    """
    cfg = w.config
    if sched is not None:
        sched.validate(cfg)
    x = np.asarray(x, dtype=np.float64)
    trace = SelectionTrace(frames=x.shape[0], attention=[] if collect_attention else None)
    kept = np.arange(x.shape[0], dtype=np.int64)
    stage_at = {} if sched is None else dict(zip(sched.b, sched.r))
    for l in range(cfg.blocks):
        if l in stage_at:
            sel, score = _select(sched.strategy, x, stage_at[l], l, w, poses2d, kept)
            if keep_center is not None:
                pos = int(np.searchsorted(kept, keep_center))
                if pos not in set(sel.tolist()):
                    sel = np.sort(np.append(sel, pos))
            x = x[sel]
            kept = kept[sel]
            trace.stages.append(sel)
            trace.kept.append(kept)
            trace.scores.append(score)
        x, alpha = transformer_block(x, w, l)
        trace.block_tokens.append(x.shape[0])
        if collect_attention:
            trace.attention.append(alpha)
    return x, trace


def token_profile(cfg: ModelConfig, sched: Optional[PruneSchedule]) -> list:
    """Per-block token counts implied by a schedule, without running anything."""
    if sched is None:
        return [cfg.frames] * cfg.blocks
    sched.validate(cfg)
    counts, n = [], cfg.frames
    stage_at = dict(zip(sched.b, sched.r))
    for l in range(cfg.blocks):
        n = stage_at.get(l, n)
        counts.append(n)
    return counts
