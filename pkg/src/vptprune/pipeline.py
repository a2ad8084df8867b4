"""seq2seq and seq2frame inference built from the model, pruning and recovery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError, VptError
from .model import ModelConfig, ModelWeights, embed_poses, regression_head
from .pruning import PruneSchedule, run_schedule
from .recovering import tra_recover, tri_recover

MODES = ("seq2seq", "seq2frame")
RECOVERIES = ("tra", "tri", "none")


@dataclass(frozen=True)
class PipelineConfig:
    model: ModelConfig
    schedule: Optional[PruneSchedule] = None
    mode: str = "seq2seq"
    recovery: str = "tri"

    def __post_init__(self):
        self.validate()

    @property
    def center(self) -> int:
        return self.model.frames // 2

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.recovery not in RECOVERIES:
            raise ConfigError(f"unknown recovery {self.recovery!r}; expected one of {RECOVERIES}")
        if self.schedule is None:
            if self.recovery != "none":
                raise ConfigError("recovery must be 'none' when nothing is pruned")
            return
        try:
            self.schedule.validate(self.model)
        except VptError as exc:
            raise ConfigError(f"invalid schedule: {exc}") from exc
        if self.mode == "seq2seq" and self.recovery == "none":
            raise ConfigError("seq2seq with pruning needs a recovery ('tra' or 'tri')")
        if self.mode == "seq2frame" and self.recovery != "none":
            raise ConfigError("seq2frame takes no recovery; set recovery = none")
        if self.recovery == "tri":
            if self.schedule.strategy != "sampler":
                raise ConfigError("tri recovery requires the sampler strategy")
            if self.schedule.r[-1] < 2:
                raise ConfigError("tri recovery needs at least two kept frames (r[-1] >= 2)")

    def with_schedule(self, schedule, recovery=None) -> "PipelineConfig":
        return PipelineConfig(self.model, schedule, self.mode, self.recovery if recovery is None else recovery)


def _check_inputs(p, cfg: PipelineConfig, w: ModelWeights) -> np.ndarray:
    if w.config != cfg.model:
        raise ConfigError(f"weights were built for {w.config}, pipeline expects {cfg.model}")
    p = np.asarray(p, dtype=np.float64)
    m = cfg.model
    if p.shape != (m.frames, m.joints, 2):
        raise ConfigError(f"input has shape {p.shape}, config expects ({m.frames}, {m.joints}, 2)")
    if not np.all(np.isfinite(p)):
        raise ShapeError("input poses contain non-finite coordinates")
    if cfg.recovery == "tra" and not w.has_tra:
        raise ConfigError("tra recovery needs weights initialized with TRA parameters")
    return p


def seq2seq_forward(p, cfg: PipelineConfig, w: ModelWeights, collect_attention: bool = False):
    """(F, J, 2) poses -> ((F, J, 3) poses, trace)."""
    if cfg.mode != "seq2seq":
        raise ConfigError(f"seq2seq_forward called with mode {cfg.mode!r}")
    p = _check_inputs(p, cfg, w)
    x = embed_poses(p, w)
    x, trace = run_schedule(x, cfg.schedule, w, poses2d=p, collect_attention=collect_attention)
    if cfg.recovery == "tra":
        return regression_head(tra_recover(x, w), w), trace
    q = regression_head(x, w)
    if cfg.recovery == "tri":
        q = tri_recover(q, trace.final_kept, cfg.model.frames)
    return q, trace


def seq2frame_forward(p, cfg: PipelineConfig, w: ModelWeights, collect_attention: bool = False):
    """(F, J, 2) poses -> ((J, 3) center-frame pose, trace)."""
    if cfg.mode != "seq2frame":
        raise ConfigError(f"seq2frame_forward called with mode {cfg.mode!r}")
    p = _check_inputs(p, cfg, w)
    x = embed_poses(p, w)
    x, trace = run_schedule(
        x, cfg.schedule, w, poses2d=p, keep_center=cfg.center, collect_attention=collect_attention
    )
    pos = int(np.searchsorted(trace.final_kept, cfg.center))
    return regression_head(x[pos : pos + 1], w)[0], trace


def forward(p, cfg: PipelineConfig, w: ModelWeights, collect_attention: bool = False):
    fn = seq2seq_forward if cfg.mode == "seq2seq" else seq2frame_forward
    return fn(p, cfg, w, collect_attention=collect_attention)


def output_frames(cfg: PipelineConfig) -> int:
    return cfg.model.frames if cfg.mode == "seq2seq" else 1


def pipeline_parameter_count(cfg: PipelineConfig, w: ModelWeights) -> int:
    """Parameters the pipeline actually uses (TRA only counts under tra recovery)."""
    return w.parameter_count(include_tra=cfg.recovery == "tra")
