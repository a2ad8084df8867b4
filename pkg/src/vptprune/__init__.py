"""Video pose transformer inference with hierarchical temporal token pruning and recovery."""

from .analysis import FlopsReport, bench_throughput, block_flops, frame_noise, mpjpe, schedule_flops, selection_stats
from .errors import (
    ConfigError,
    NumericError,
    ParameterError,
    ParseError,
    RecoveryError,
    ScheduleError,
    ShapeError,
    VptError,
)
from .model import ModelConfig, ModelWeights, init_weights, parameter_count, tra_parameter_count
from .numkernel import Rng
from .pipeline import PipelineConfig, forward, seq2frame_forward, seq2seq_forward
from .pruning import PruneSchedule, SelectionTrace, run_schedule, tpa_select, tpc_select, tpmo_select, tps_select
from .recovering import tra_recover, tri_recover

__version__ = "0.1.0"
