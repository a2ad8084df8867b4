"""Cost accounting, accuracy metrics, throughput measurement, selection statistics.

Cost units follow the per-token complexity ``(4 + 2r) * N * D**2 + 2 * N**2 * D``
of one transformer layer (r is the FFN expansion ratio): the ``D**2`` terms are
the Q/K/V/O projections and the FFN, the ``N**2`` term is the attention logits
plus the attention-weighted sum. Softmax, norms and activations are not
counted. Each unit is one multiply-accumulate.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParameterError, ShapeError
from .model import ModelConfig, ModelWeights
from .numkernel import Rng
from .pipeline import PipelineConfig, forward, output_frames
from .pruning import PruneSchedule, token_profile


def block_flops(n: int, d: int, j: int, ffn_ratio: int = 2):
    """``(temporal, spatial)`` cost of one block on n frames of j joints."""
    lin = 4 + 2 * ffn_ratio
    temporal = j * (lin * n * d * d + 2 * n * n * d)
    spatial = n * (lin * j * d * d + 2 * j * j * d)
    return temporal, spatial


class BlockCost(NamedTuple):
    block: int
    tokens: int
    temporal: int
    spatial: int

    @property
    def cost(self) -> int:
        return self.temporal + self.spatial


CSV_COLUMNS = ("section", "block", "tokens", "temporal", "spatial", "cost")


@dataclass
class FlopsReport:
    """Block costs for a schedule and for the unpruned baseline.

    ``embed``, ``head`` and ``recovery`` are reported for completeness and are
    left out of ``total`` and ``reduction_ratio``.
    """

    per_block: list
    baseline_blocks: list
    embed: int = 0
    head: int = 0
    recovery: int = 0

    @property
    def total(self) -> int:
        return sum(b.cost for b in self.per_block)

    @property
    def baseline_total(self) -> int:
        return sum(b.cost for b in self.baseline_blocks)

    @property
    def reduction_ratio(self) -> float:
        return 1.0 - self.total / self.baseline_total

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for section, rows in (("pruned", self.per_block), ("baseline", self.baseline_blocks)):
            for b in rows:
                wr.writerow([section, b.block, b.tokens, b.temporal, b.spatial, b.cost])
        for section in ("embed", "head", "recovery"):
            wr.writerow([section, "", "", "", "", getattr(self, section)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FlopsReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        blocks = {"pruned": [], "baseline": []}
        extras = {}
        for row in rows:
            if row["section"] in blocks:
                blocks[row["section"]].append(
                    BlockCost(int(row["block"]), int(row["tokens"]), int(row["temporal"]), int(row["spatial"]))
                )
            else:
                extras[row["section"]] = int(row["cost"])
        return cls(blocks["pruned"], blocks["baseline"], **extras)

    def to_text(self) -> str:
        lines = [f"{'block':>5} {'tokens':>6} {'temporal':>16} {'spatial':>16} {'baseline':>16}"]
        for b, base in zip(self.per_block, self.baseline_blocks):
            lines.append(f"{b.block:>5} {b.tokens:>6} {b.temporal:>16,} {b.spatial:>16,} {base.cost:>16,}")
        lines.append(f"baseline total : {self.baseline_total:,} ({self.baseline_total / 1e9:.2f} G)")
        lines.append(f"pruned total   : {self.total:,} ({self.total / 1e9:.2f} G)")
        lines.append(f"reduction      : {self.reduction_ratio:.4f} ({100 * self.reduction_ratio:.1f}%)")
        lines.append(f"embed / head / recovery (excluded): {self.embed:,} / {self.head:,} / {self.recovery:,}")
        return "\n".join(lines)


def _block_costs(cfg: ModelConfig, counts) -> list:
    return [
        BlockCost(l, n, *block_flops(n, cfg.dim, cfg.joints, cfg.ffn_ratio)) for l, n in enumerate(counts)
    ]


def schedule_flops(
    cfg: ModelConfig, sched: Optional[PruneSchedule], recovery: str = "none", mode: str = "seq2seq"
) -> FlopsReport:
    counts = token_profile(cfg, sched)
    f, j, c = cfg.frames, cfg.joints, cfg.dim
    r_last = counts[-1]
    head_tokens = {"tra": f, "tri": r_last}.get(recovery, r_last)
    if mode == "seq2frame":
        head_tokens = 1
    rec = 0
    if recovery == "tra":
        rec = j * (2 * f * c * c + 2 * r_last * c * c + 2 * f * r_last * c)
    return FlopsReport(
        per_block=_block_costs(cfg, counts),
        baseline_blocks=_block_costs(cfg, [f] * cfg.blocks),
        embed=f * j * 2 * c,
        head=head_tokens * j * c * 3,
        recovery=rec,
    )


def mpjpe(pred, gt) -> float:
    """Mean per-joint Euclidean error, in the units of the inputs."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def frame_noise(det2d, gt2d, kept) -> float:
    """2D MPJPE of the detections restricted to the kept frames."""
    det2d, gt2d = np.asarray(det2d, dtype=np.float64), np.asarray(gt2d, dtype=np.float64)
    kept = np.asarray(kept, dtype=np.int64)
    if det2d.shape != gt2d.shape:
        raise ShapeError(f"detections {det2d.shape} and ground truth {gt2d.shape} differ")
    if kept.size == 0 or kept.min() < 0 or kept.max() >= det2d.shape[0]:
        raise ShapeError(f"kept indices out of range for {det2d.shape[0]} frames")
    return mpjpe(det2d[kept], gt2d[kept])


@dataclass
class BenchResult:
    label: str
    frames_per_sequence: int
    n_sequences: int
    seconds: list
    workers: int = 1
    outputs: list = field(default_factory=list, repr=False)

    @property
    def fps(self) -> np.ndarray:
        return self.n_sequences * self.frames_per_sequence / np.asarray(self.seconds)

    @property
    def fps_mean(self) -> float:
        return float(self.fps.mean())

    @property
    def fps_std(self) -> float:
        return float(self.fps.std(ddof=1)) if len(self.seconds) > 1 else 0.0

    def csv_row(self) -> list:
        return [self.label, self.workers, self.n_sequences, len(self.seconds), f"{self.fps_mean:.3f}", f"{self.fps_std:.3f}"]


BENCH_COLUMNS = ("label", "workers", "sequences", "repetitions", "fps_mean", "fps_std")


def synthetic_sequences(cfg: ModelConfig, n: int, seed: int) -> list:
    rng = Rng(seed)
    return [rng.uniform(-1.0, 1.0, (cfg.frames, cfg.joints, 2)) for _ in range(n)]


def bench_throughput(
    cfg: PipelineConfig,
    w: ModelWeights,
    n_sequences: int,
    warmup: int = 1,
    repetitions: int = 3,
    seed: int = 0,
    workers: int = 1,
    label: str = "",
) -> BenchResult:
    """Time forward passes only; inputs are generated before the clock starts."""
    if n_sequences < 1:
        raise ParameterError("n_sequences must be >= 1")
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    seqs = synthetic_sequences(cfg.model, n_sequences, seed)
    for p in seqs[:warmup] if warmup else []:
        forward(p, cfg, w)
    seconds, outputs = [], []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for _ in range(repetitions):
            t0 = time.perf_counter()
            if pool is None:
                outputs = [forward(p, cfg, w)[0] for p in seqs]
            else:
                outputs = [o[0] for o in pool.map(lambda p: forward(p, cfg, w), seqs)]
            seconds.append(time.perf_counter() - t0)
    finally:
        if pool is not None:
            pool.shutdown()
    return BenchResult(label, output_frames(cfg), n_sequences, seconds, workers, outputs)


@dataclass
class SelectionStats:
    counts: np.ndarray
    samples: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(("frame", "count", "samples"))
        for i, c in enumerate(self.counts):
            wr.writerow((i, int(c), self.samples))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SelectionStats":
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = np.zeros(len(rows), dtype=np.int64)
        for row in rows:
            counts[int(row["frame"])] = int(row["count"])
        return cls(counts, int(rows[0]["samples"]) if rows else 0)


def selection_stats(traces, frames: int) -> SelectionStats:
    """Histogram of final kept original-frame indices over many runs."""
    counts = np.zeros(frames, dtype=np.int64)
    for tr in traces:
        if tr.frames != frames:
            raise ShapeError(f"trace over {tr.frames} frames mixed into stats for {frames}")
        np.add.at(counts, tr.final_kept, 1)
    return SelectionStats(counts, len(traces))
