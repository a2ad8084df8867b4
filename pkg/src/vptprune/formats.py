"""On-disk formats: weight files, pose sequence files, run configs, traces.

All binary integers are little-endian ``uint32`` and all reals little-endian
IEEE-754 ``float64``.

Weight file (``.vptw``)::

    0   4 bytes   magic b"VPTW"
    4   u32       format version (1)
    8   u32 x 7   frames, joints, blocks, dim, heads, ffn_ratio, knn_k
    36  u32       tensor count T
    then T records, in the order written:
        u32           name length in bytes
        bytes         UTF-8 name (TRA tensors start with "tra.")
        u32           ndim
        u32 x ndim    dims
        f64 x prod    values, row-major

Binary pose sequence (``.pseq``)::

    0   4 bytes   magic b"PSEQ"
    4   u32       frames F
    8   u32       joints J
    12  u32       dims (2 or 3)
    16  f64 x F*J*dims   frame-major, then joint, then coordinate

Text pose sequence (any other extension): one frame per line, comma-separated
values ordered joint-major (x, y[, z] per joint). An optional first line
``# frames=F joints=J dims=D`` fixes the shape; without it ``dims`` defaults
to 2 and J is inferred from the first line.

Run config: ``key = value`` lines, ``#`` comments, lists as ``[1, 2]``.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, ParseError, VptError
from .model import ModelConfig, ModelWeights
from .pipeline import PipelineConfig
from .pruning import PruneSchedule

WEIGHT_MAGIC = b"VPTW"
WEIGHT_VERSION = 1
SEQ_MAGIC = b"PSEQ"
SEED_ENV = "VPTPRUNE_SEED"
PRESETS = ("mhformer", "mixste", "motionbert", "motionagformer")

_CONFIG_FIELDS = ("frames", "joints", "blocks", "dim", "heads", "ffn_ratio", "knn_k")


# --- weights -----------------------------------------------------------------


def save_weights(path, w: ModelWeights):
    cfg = w.config
    parts = [WEIGHT_MAGIC, struct.pack("<I", WEIGHT_VERSION)]
    parts.append(struct.pack("<7I", *(getattr(cfg, f) for f in _CONFIG_FIELDS)))
    parts.append(struct.pack("<I", len(w.tensors)))
    for name, arr in w.tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(
                f"{self.path}: truncated {what} at byte {self.pos}: "
                f"expected {n} bytes, {len(self.data) - self.pos} available"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32s(self, what: str, count: int) -> tuple:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))

    def u32(self, what: str) -> int:
        return self.u32s(what, 1)[0]


def load_weights(path) -> ModelWeights:
    rd = _Reader(Path(path).read_bytes(), path)
    if rd.take(4, "magic") != WEIGHT_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0, not a weight file")
    version = rd.u32("version")
    if version != WEIGHT_VERSION:
        raise ParseError(f"{path}: unsupported weight format version {version} at byte 4")
    try:
        cfg = ModelConfig(**dict(zip(_CONFIG_FIELDS, rd.u32s("config header", 7))))
    except ConfigError as exc:
        raise ParseError(f"{path}: invalid config header at byte 8: {exc}") from exc
    tensors = {}
    for _ in range(rd.u32("tensor count")):
        start = rd.pos
        name_len = rd.u32("name length")
        try:
            name = rd.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{path}: tensor name at byte {start} is not UTF-8") from exc
        ndim = rd.u32("ndim")
        dims = rd.u32s("dims", ndim)
        count = int(np.prod(dims))
        arr = np.frombuffer(rd.take(8 * count, f"tensor {name!r}"), dtype="<f8").astype(np.float64)
        tensors[name] = arr.reshape(dims)
    if rd.pos != len(rd.data):
        raise ParseError(f"{path}: {len(rd.data) - rd.pos} trailing bytes at byte {rd.pos}")
    w = ModelWeights(cfg, tensors)
    try:
        w.check_shapes()
    except VptError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return w


# --- pose sequences ----------------------------------------------------------


def save_sequence(path, seq):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[2] not in (2, 3):
        raise ValueError(f"sequence must be (F, J, 2|3), got {seq.shape}")
    f, j, d = seq.shape
    path = Path(path)
    if path.suffix == ".pseq":
        path.write_bytes(SEQ_MAGIC + struct.pack("<3I", f, j, d) + seq.astype("<f8").tobytes())
        return
    lines = [f"# frames={f} joints={j} dims={d}"]
    lines += [",".join(repr(float(v)) for v in frame.ravel()) for frame in seq]
    path.write_text("\n".join(lines) + "\n")


def _load_binary_sequence(path: Path) -> np.ndarray:
    rd = _Reader(path.read_bytes(), path)
    if rd.take(4, "magic") != SEQ_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0, not a .pseq file")
    f, j, d = rd.u32s("header", 3)
    if d not in (2, 3) or f < 1 or j < 1:
        raise ParseError(f"{path}: invalid header at byte 4: frames={f} joints={j} dims={d}")
    expected = 8 * f * j * d
    actual = len(rd.data) - rd.pos
    if actual != expected:
        raise ParseError(
            f"{path}: payload at byte 16 has {actual} bytes, expected {expected} ({f}x{j}x{d} float64)"
        )
    return np.frombuffer(rd.data[16:], dtype="<f8").astype(np.float64).reshape(f, j, d)


_HEADER_RE = re.compile(r"#\s*frames\s*=\s*(\d+)\s+joints\s*=\s*(\d+)\s+dims\s*=\s*(\d+)")


def _load_text_sequence(path: Path, dims: Optional[int]) -> np.ndarray:
    header = None
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER_RE.match(line)
            if m and header is None and not rows:
                header = tuple(int(v) for v in m.groups())
            continue
        try:
            rows.append((lineno, [float(v) for v in line.split(",")]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no frames")
    if header is not None:
        f, j, d = header
        if len(rows) != f:
            raise ParseError(f"{path}: header declares {f} frames, found {len(rows)}")
    else:
        d = dims or 2
        if len(rows[0][1]) % d:
            raise ParseError(f"{path}: line {rows[0][0]}: {len(rows[0][1])} values is not a multiple of dims={d}")
        j = len(rows[0][1]) // d
    if d not in (2, 3):
        raise ParseError(f"{path}: dims must be 2 or 3, got {d}")
    for lineno, vals in rows:
        if len(vals) != j * d:
            raise ParseError(f"{path}: line {lineno}: expected {j * d} values, got {len(vals)}")
    return np.array([vals for _, vals in rows], dtype=np.float64).reshape(len(rows), j, d)


def load_sequence(path, dims: Optional[int] = None) -> np.ndarray:
    """Read a (F, J, 2) or (F, J, 3) sequence; ``.pseq`` is binary, anything else text."""
    path = Path(path)
    seq = _load_binary_sequence(path) if path.suffix == ".pseq" else _load_text_sequence(path, dims)
    if not np.all(np.isfinite(seq)):
        raise ParseError(f"{path}: non-finite coordinates")
    return seq


# --- traces ------------------------------------------------------------------


def trace_to_csv(trace) -> str:
    lines = ["stage,position,frame"]
    for m, (sel, kept) in enumerate(zip(trace.stages, trace.kept)):
        lines += [f"{m},{int(s)},{int(k)}" for s, k in zip(sel, kept)]
    return "\n".join(lines) + "\n"


# --- run configs -------------------------------------------------------------


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc


@dataclass
class RunConfig:
    pipeline: PipelineConfig
    seed: int = 0
    input: Optional[str] = None
    output: Optional[str] = None
    weights: Optional[str] = None
    name: str = ""

    @property
    def model(self) -> ModelConfig:
        return self.pipeline.model

    @property
    def schedule(self) -> Optional[PruneSchedule]:
        return self.pipeline.schedule

    def to_text(self) -> str:
        m, p, s = self.model, self.pipeline, self.schedule
        lines = [f"{f.name} = {getattr(m, f.name)}" for f in fields(m)]
        lines += [f"mode = {p.mode}", f"recovery = {p.recovery}"]
        lines += [
            f"strategy = {s.strategy if s else 'sampler'}",
            f"r = [{', '.join(map(str, s.r)) if s else ''}]",
            f"b = [{', '.join(map(str, s.b)) if s else ''}]",
            f"seed = {self.seed}",
        ]
        for key in ("input", "output", "weights"):
            if getattr(self, key):
                lines.append(f"{key} = {getattr(self, key)}")
        return "\n".join(lines) + "\n"


_INT_KEYS = set(_CONFIG_FIELDS) | {"seed"}
_STR_KEYS = {"mode", "recovery", "strategy", "input", "output", "weights", "name"}
_LIST_KEYS = {"r", "b"}


def _parse_value(key: str, raw: str, where: str):
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: {key} must be an integer, got {raw!r}") from exc
    if key in _LIST_KEYS:
        body = raw.strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise ConfigError(f"{where}: {key} must be a list like [121, 81], got {raw!r}")
        inner = body[1:-1].strip()
        try:
            return [int(v) for v in inner.split(",")] if inner else []
        except ValueError as exc:
            raise ConfigError(f"{where}: {key} entries must be integers, got {raw!r}") from exc
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _INT_KEYS | _STR_KEYS | _LIST_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, where)
    return build_config(values, source)


def build_config(values: dict, source: str = "<config>") -> RunConfig:
    if "frames" not in values:
        raise ConfigError(f"{source}: missing required key 'frames'")
    try:
        model = ModelConfig(**{k: values[k] for k in _CONFIG_FIELDS if k in values})
        r, b = values.get("r", []), values.get("b", [])
        schedule = PruneSchedule(r, b, values.get("strategy", "sampler")) if (r or b) else None
        recovery = values.get("recovery", "none" if schedule is None else "tri")
        pipeline = PipelineConfig(model, schedule, values.get("mode", "seq2seq"), recovery)
    except VptError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return RunConfig(
        pipeline=pipeline,
        seed=values.get("seed", default_seed()),
        input=values.get("input"),
        output=values.get("output"),
        weights=values.get("weights"),
        name=values.get("name", Path(source).stem),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("vptprune").joinpath(f"presets/{name}.cfg").read_text()
    return parse_config(text, name)
