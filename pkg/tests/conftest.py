import numpy as np
import pytest

from vptprune.model import ModelConfig, init_weights
from vptprune.numkernel import Rng


def tiny_config(**overrides):
    base = dict(frames=27, joints=3, blocks=4, dim=8, heads=2, ffn_ratio=2, knn_k=2)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def cfg():
    return tiny_config()


@pytest.fixture
def weights(cfg):
    return init_weights(cfg, Rng(7), with_tra=True)


@pytest.fixture
def poses(cfg):
    return Rng(11).uniform(-1.0, 1.0, (cfg.frames, cfg.joints, 2))


def zero_like(w, keep=()):
    """Copy of ``w`` with every tensor zeroed except names containing a ``keep`` substring."""
    out = type(w)(w.config, {k: (v.copy() if any(s in k for s in keep) else np.zeros_like(v)) for k, v in w.tensors.items()})
    return out
