"""Generic video pose transformer: pose embedding, spatio-temporal blocks, head.

Tensor layout is ``(frames, joints, channels)`` everywhere. A block is two
pre-norm transformer layers applied in order:

* spatial layer: attention over the J joints of each frame, then an FFN;
* temporal layer: attention over the N frames of each joint, then an FFN.

Each layer is ``x + MSA(LN(x))`` followed by ``x + FFN(LN(x))``. FFNs expand
``C -> ffn_ratio * C -> C`` with a tanh-GELU in between.

Parameter count (TRA excluded), with ``r = ffn_ratio``::

    (3 + J + F) * C                                   embedding + position tables
    + L * 2 * ((4 + 2r) * C**2 + (9 + r) * C)         spatial + temporal layers
    + 3 * C + 3                                       regression head

Only the temporal position table (``F * C``) depends on the frame count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import ConfigError, NumericError, ShapeError

TRA_PREFIX = "tra."
POS_INIT_SCALE = 0.02


@dataclass(frozen=True)
class ModelConfig:
    frames: int
    joints: int = 17
    blocks: int = 8
    dim: int = 512
    heads: int = 8
    ffn_ratio: int = 2
    knn_k: int = 2

    def __post_init__(self):
        problems = []
        for name in ("frames", "joints", "blocks", "dim", "heads", "ffn_ratio", "knn_k"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        if self.heads >= 1 and self.dim % self.heads:
            problems.append(f"dim {self.dim} is not divisible by heads {self.heads}")
        if problems:
            raise ConfigError("invalid model config: " + "; ".join(problems))

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


def _layer_shapes(prefix: str, c: int, hidden: int):
    shapes = [
        (f"{prefix}.norm1.gain", (c,)),
        (f"{prefix}.norm1.bias", (c,)),
    ]
    for p in "qkvo":
        shapes += [(f"{prefix}.attn.{p}.weight", (c, c)), (f"{prefix}.attn.{p}.bias", (c,))]
    shapes += [
        (f"{prefix}.norm2.gain", (c,)),
        (f"{prefix}.norm2.bias", (c,)),
        (f"{prefix}.fc1.weight", (c, hidden)),
        (f"{prefix}.fc1.bias", (hidden,)),
        (f"{prefix}.fc2.weight", (hidden, c)),
        (f"{prefix}.fc2.bias", (c,)),
    ]
    return shapes


def tra_shapes(cfg: ModelConfig):
    c = cfg.dim
    shapes = [(TRA_PREFIX + "queries", (cfg.frames, c))]
    for p in "qkvo":
        shapes += [(f"{TRA_PREFIX}{p}.weight", (c, c)), (f"{TRA_PREFIX}{p}.bias", (c,))]
    return shapes


def parameter_shapes(cfg: ModelConfig, with_tra: bool = False):
    """Ordered ``(name, shape)`` list; this order is also the init draw order."""
    c, hidden = cfg.dim, cfg.ffn_ratio * cfg.dim
    shapes = [
        ("embed.weight", (2, c)),
        ("embed.bias", (c,)),
        ("embed.spatial_pos", (cfg.joints, c)),
        ("embed.temporal_pos", (cfg.frames, c)),
    ]
    for l in range(cfg.blocks):
        shapes += _layer_shapes(f"blocks.{l}.spatial", c, hidden)
        shapes += _layer_shapes(f"blocks.{l}.temporal", c, hidden)
    shapes += [("head.weight", (c, 3)), ("head.bias", (3,))]
    if with_tra:
        shapes += tra_shapes(cfg)
    return shapes


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count of the model without TRA."""
    c, r, L = cfg.dim, cfg.ffn_ratio, cfg.blocks
    per_layer = (4 + 2 * r) * c * c + (9 + r) * c
    return (3 + cfg.joints + cfg.frames) * c + L * 2 * per_layer + 3 * c + 3


def tra_parameter_count(cfg: ModelConfig) -> int:
    c = cfg.dim
    return cfg.frames * c + 4 * (c * c + c)


@dataclass
class ModelWeights:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def has_tra(self) -> bool:
        return (TRA_PREFIX + "queries") in self.tensors

    def block(self, l: int, stream: str) -> dict:
        prefix = f"blocks.{l}.{stream}."
        return {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}

    def tra(self) -> dict:
        return {k[len(TRA_PREFIX):]: v for k, v in self.tensors.items() if k.startswith(TRA_PREFIX)}

    def parameter_count(self, include_tra: bool = True) -> int:
        return sum(
            v.size
            for k, v in self.tensors.items()
            if include_tra or not k.startswith(TRA_PREFIX)
        )

    def check_shapes(self):
        expected = dict(parameter_shapes(self.config, with_tra=self.has_tra))
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise ShapeError(f"weight names differ from config: missing {missing[:5]}, extra {extra[:5]}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {self.tensors[name].shape}")


def init_weights(cfg: ModelConfig, rng: nk.Rng, with_tra: bool = False) -> ModelWeights:
    """Seeded init in ``parameter_shapes`` order.

    Matrices draw ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, position tables draw
    ``U(-0.02, 0.02)``. Biases and TRA queries are zero, norm gains are one.
    Zero and one tensors consume no draws, so adding TRA never perturbs the
    backbone weights.
    """
    tensors = {}
    for name, shape in parameter_shapes(cfg, with_tra=with_tra):
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            tensors[name] = np.ones(shape)
        elif leaf in ("bias", "queries"):
            tensors[name] = np.zeros(shape)
        elif leaf in ("spatial_pos", "temporal_pos"):
            tensors[name] = rng.uniform(-POS_INIT_SCALE, POS_INIT_SCALE, shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, shape)
    return ModelWeights(cfg, tensors)


def embed_poses(p, w: ModelWeights, frame_index=None) -> np.ndarray:
    """(F, J, 2) poses -> (F, J, C) tokens.

    ``frame_index`` selects temporal position rows when the input holds a
    subset of the original frames; by default frame n uses row n.
    """
    cfg = w.config
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3 or p.shape[1:] != (cfg.joints, 2):
        raise ShapeError(f"expected poses (F, {cfg.joints}, 2), got {p.shape}")
    if frame_index is None:
        if p.shape[0] != cfg.frames:
            raise ShapeError(f"expected {cfg.frames} frames, got {p.shape[0]}")
        frame_index = np.arange(cfg.frames)
    x = nk.matmul(p, w["embed.weight"]) + w["embed.bias"]
    x = x + w["embed.spatial_pos"][None, :, :]
    return x + w["embed.temporal_pos"][np.asarray(frame_index)][:, None, :]


def multi_head_attention(q_in, kv_in, p: dict, heads: int):
    """Batched multi-head attention.

    ``q_in`` is (B, nq, C) and ``kv_in`` is (B, nk, C). Returns the projected
    output (B, nq, C) and attention weights (B, heads, nq, nk).
    """
    b, nq, c = q_in.shape
    nkv = kv_in.shape[1]
    d = c // heads
    q = (nk.matmul(q_in, p["q.weight"]) + p["q.bias"]).reshape(b, nq, heads, d).transpose(0, 2, 1, 3)
    k = (nk.matmul(kv_in, p["k.weight"]) + p["k.bias"]).reshape(b, nkv, heads, d).transpose(0, 2, 1, 3)
    v = (nk.matmul(kv_in, p["v.weight"]) + p["v.bias"]).reshape(b, nkv, heads, d).transpose(0, 2, 1, 3)
    alpha = nk.softmax_rows(nk.matmul(q, k.transpose(0, 1, 3, 2)) / np.sqrt(d))
    out = nk.matmul(alpha, v).transpose(0, 2, 1, 3).reshape(b, nq, c)
    return nk.matmul(out, p["o.weight"]) + p["o.bias"], alpha


def _attn_params(layer: dict) -> dict:
    return {k[len("attn."):]: v for k, v in layer.items() if k.startswith("attn.")}


def _layer(x, layer: dict, heads: int):
    """Pre-norm transformer layer over axis 1 of a (B, n, C) batch."""
    h = nk.layer_norm(x, layer["norm1.gain"], layer["norm1.bias"])
    out, alpha = multi_head_attention(h, h, _attn_params(layer), heads)
    x = x + out
    h = nk.layer_norm(x, layer["norm2.gain"], layer["norm2.bias"])
    h = nk.gelu(nk.matmul(h, layer["fc1.weight"]) + layer["fc1.bias"])
    x = x + nk.matmul(h, layer["fc2.weight"]) + layer["fc2.bias"]
    return x, alpha


def temporal_attention_probe(x, w: ModelWeights, l: int) -> np.ndarray:
    """Head- and joint-averaged temporal attention of block ``l`` on ``x``.

    Runs only the first norm and the attention logits of the temporal layer,
    so pruning at a block can be scored before that block executes.
    """
    layer = w.block(l, "temporal")
    h = nk.layer_norm(np.swapaxes(x, 0, 1), layer["norm1.gain"], layer["norm1.bias"])
    _, alpha = multi_head_attention(h, h, _attn_params(layer), w.config.heads)
    return alpha.mean(axis=(0, 1))


def transformer_block(x, w: ModelWeights, l: int):
    """Run block ``l`` on (N, J, C) tokens.

    Returns the new tokens and the (N, N) temporal attention averaged over
    heads and joints.
    """
    cfg = w.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (cfg.joints, cfg.dim):
        raise ShapeError(f"block {l}: expected tokens (N, {cfg.joints}, {cfg.dim}), got {x.shape}")
    x, _ = _layer(x, w.block(l, "spatial"), cfg.heads)
    xt, alpha = _layer(np.swapaxes(x, 0, 1), w.block(l, "temporal"), cfg.heads)
    x = np.ascontiguousarray(np.swapaxes(xt, 0, 1))
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activations after block {l}", block=l)
    return x, alpha.mean(axis=(0, 1))


def regression_head(x, w: ModelWeights) -> np.ndarray:
    """(N, J, C) tokens -> (N, J, 3) poses."""
    cfg = w.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.dim:
        raise ShapeError(f"head expects (N, J, {cfg.dim}) tokens, got {x.shape}")
    return nk.matmul(x, w["head.weight"]) + w["head.bias"]
