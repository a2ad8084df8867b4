"""Embedded oracle suites run by ``vptprune selftest``."""

from __future__ import annotations

import numpy as np

from . import numkernel as nk
from . import oracles
from .analysis import schedule_flops
from .model import ModelConfig, init_weights
from .pruning import PruneSchedule, token_profile, tpc_select, tps_select
from .recovering import tra_recover, tri_recover


def _kernels(rng):
    ok = np.array_equal(nk.matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])
    ok &= np.allclose(nk.softmax_rows([[0.0, np.log(3.0)]]), [[0.25, 0.75]], atol=1e-12)
    ok &= np.allclose(nk.softmax_rows([[1000.0, 1000.0]]), [[0.5, 0.5]])
    m = rng.normal((6, 4))
    d = nk.pairwise_sq_dist(m)
    ok &= bool(np.array_equal(d, d.T) and np.all(np.diag(d) == 0))
    return ok, "matmul / softmax / distance identities"


def _dpc(rng, trials=200):
    bad = 0
    for _ in range(trials):
        n = int(rng.uniform(3, 13, 1)[0])
        k = int(rng.uniform(1, min(3, n - 1) + 1, 1)[0])
        r = int(rng.uniform(1, n + 1, 1)[0])
        tokens = rng.normal((n, 2, 3))
        if rng.random(1)[0] < 0.5:
            tokens = np.round(tokens)
        if tpc_select(tokens, r, k).tolist() != oracles.tpc_bruteforce(tokens.tolist(), r, k):
            bad += 1
    return bad == 0, f"{trials - bad}/{trials} cluster selections match the brute-force oracle"


def _tps(rng):
    cases = [(n, r) for n in (2, 9, 81, 243, 351) for r in (1, 2, 3, 9, 27, 81, 121, 175) if r <= n]
    bad = [(n, r) for n, r in cases if tps_select(n, r).tolist() != oracles.tps_exact(n, r)]
    return not bad, f"{len(cases) - len(bad)}/{len(cases)} sampler patterns exact"


def _tri(rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        f = int(rng.uniform(9, 352, 1)[0])
        r = int(rng.uniform(2, f + 1, 1)[0])
        kept = tps_select(f, r)
        a, b = rng.normal((1, 4, 3)), rng.normal((1, 4, 3))
        full = a + b * np.arange(f)[:, None, None]
        out = tri_recover(full[kept], kept, f)
        worst = max(worst, float(np.abs(out - full).max()))
    return worst <= 1e-9, f"max affine reconstruction error {worst:.2e}"


def _tra(rng, trials=10):
    cfg = ModelConfig(frames=15, joints=3, blocks=1, dim=8, heads=2)
    spread = 0.0
    for t in range(trials):
        w = init_weights(cfg, nk.Rng(1000 + t), with_tra=True)
        for name in ("tra.q.bias", "tra.k.bias", "tra.v.bias", "tra.o.bias"):
            w.tensors[name] = rng.normal(w.tensors[name].shape)
        out = tra_recover(rng.normal((5, 3, 8)), w)
        spread = max(spread, float(np.abs(out - out[:1]).max()))
    return spread <= 1e-9, f"max frame-to-frame spread at zero queries {spread:.2e}"


def _schedule(rng):
    cfg = ModelConfig(frames=243, blocks=8, dim=512)
    counts = token_profile(cfg, PruneSchedule([121, 81], [0, 3]))
    return counts == [121, 121, 121, 81, 81, 81, 81, 81], f"MixSTE-sized token profile {counts}"


def _flops(rng):
    cfg = ModelConfig(frames=243, blocks=8, dim=512)
    sched = PruneSchedule([121, 81], [0, 3])
    rep = schedule_flops(cfg, sched)
    closed = oracles.schedule_cost_closed_form(243, 17, 512, token_profile(cfg, sched))
    base = oracles.schedule_cost_closed_form(243, 17, 512, [243] * 8)
    ok = rep.total == closed and rep.baseline_total == base and 0.52 <= rep.reduction_ratio <= 0.66
    return ok, f"reduction ratio {rep.reduction_ratio:.4f}"


SUITES = {
    "kernels": _kernels,
    "dpc-knn": _dpc,
    "sampler": _tps,
    "interpolation": _tri,
    "tra-zero-init": _tra,
    "schedule": _schedule,
    "flops": _flops,
}


def run_selftest(seed: int = 0):
    """Yield ``(name, passed, detail)`` per suite."""
    for name, fn in SUITES.items():
        try:
            ok, detail = fn(nk.Rng(seed))
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
