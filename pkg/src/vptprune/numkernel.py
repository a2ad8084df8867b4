"""Dense float64 kernels used by the model, pruning and recovery code.

Every function accepts plain numpy arrays and returns new arrays; nothing is
modified in place. Matrices are row-major ``float64``. Where it is natural the
kernels also accept leading batch axes (``softmax_rows`` and ``matmul``
broadcast like ``np.matmul``).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

LN_EPS = 1e-5
_SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class Rng:
    """SplitMix64 generator.

    The i-th output (1-based) is ``mix(seed + i * 0x9E3779B97F4A7C15 mod 2**64)``
    so a block of draws is a pure function of ``(seed, counter)`` and can be
    produced in one vectorized step. Floats take the top 53 bits:
    ``(z >> 11) * 2**-53``, which lies in ``[0, 1)``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def random(self, n: int) -> np.ndarray:
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape))
        u = self.random(n)
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Box-Muller standard normals; used for synthetic test data only."""
        shape = tuple(shape)
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]
        u2 = self.random(m)
        rad = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([rad * np.cos(2 * np.pi * u2), rad * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(shape)


def _as_f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    a, b = _as_f64(a), _as_f64(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got ndim {a.ndim} and {b.ndim}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def softmax_rows(m) -> np.ndarray:
    """Softmax over the last axis, stabilized by subtracting the row max."""
    m = _as_f64(m)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def pairwise_sq_dist(m) -> np.ndarray:
    """Squared Euclidean distances between rows.

    Computed from explicit differences rather than the Gram expansion so the
    diagonal is exactly zero and the result is exactly symmetric.
    """
    m = _as_f64(m)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ShapeError(f"pairwise_sq_dist needs an (n, c) matrix with n >= 1, got {m.shape}")
    diff = m[:, None, :] - m[None, :, :]
    return np.einsum("ijc,ijc->ij", diff, diff)


def mean_pool_spatial(tokens) -> np.ndarray:
    """(N, J, C) tokens -> (N, C) mean over joints."""
    tokens = _as_f64(tokens)
    if tokens.ndim != 3 or tokens.size == 0:
        raise ShapeError(f"expected non-empty (N, J, C) tokens, got {tokens.shape}")
    return tokens.mean(axis=1)


def layer_norm(v, gain, bias, eps: float = LN_EPS) -> np.ndarray:
    """Layer norm over the last axis with population variance."""
    v, gain, bias = _as_f64(v), _as_f64(gain), _as_f64(bias)
    if gain.shape != (v.shape[-1],) or bias.shape != (v.shape[-1],):
        raise ShapeError(
            f"layer_norm length mismatch: input {v.shape[-1]}, gain {gain.shape}, bias {bias.shape}"
        )
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    return (v - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x) -> np.ndarray:
    """tanh approximation of GELU."""
    x = _as_f64(x)
    inner = x * x
    inner *= 0.044715 * _SQRT_2_OVER_PI
    inner += _SQRT_2_OVER_PI
    inner *= x
    np.tanh(inner, out=inner)
    inner += 1.0
    inner *= x
    inner *= 0.5
    return inner
