"""Command-line entry point.

Exit codes: 0 success, 1 runtime or config error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .analysis import BENCH_COLUMNS, bench_throughput, schedule_flops, selection_stats
from .errors import ConfigError, VptError
from .model import init_weights
from .numkernel import Rng
from .pipeline import PipelineConfig, forward
from .selftest import run_selftest


def _add_config_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--config", help="run config file")
    g.add_argument("--preset", choices=formats.PRESETS, help="built-in preset")


def _run_config(args) -> formats.RunConfig:
    rc = formats.load_preset(args.preset) if args.preset else formats.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    return rc


def _weights_for(rc: formats.RunConfig, path=None):
    path = path or rc.weights
    if path:
        w = formats.load_weights(path)
        if w.config != rc.model:
            raise ConfigError(f"weight file {path} was built for {w.config}, config says {rc.model}")
        if rc.pipeline.recovery == "tra" and not w.has_tra:
            raise ConfigError(f"weight file {path} has no TRA tensors but recovery = tra")
        return w
    return init_weights(rc.model, Rng(rc.seed), with_tra=rc.pipeline.recovery == "tra")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def cmd_forward(args) -> int:
    rc = _run_config(args)
    inp = args.input or rc.input
    out = args.output or rc.output
    if not inp or not out:
        raise ConfigError("forward needs an input and an output path (flags or config)")
    seq = formats.load_sequence(inp)
    m = rc.model
    if seq.shape != (m.frames, m.joints, 2):
        raise ConfigError(f"{inp} holds shape {seq.shape}, config expects ({m.frames}, {m.joints}, 2)")
    w = _weights_for(rc, args.weights)
    pose, trace = forward(seq, rc.pipeline, w)
    formats.save_sequence(out, pose if pose.ndim == 3 else pose[None])
    if args.trace:
        Path(args.trace).write_text(formats.trace_to_csv(trace))
    print(f"wrote {out}: {pose.shape[0] if pose.ndim == 3 else 1} frame(s); block tokens {trace.block_tokens}")
    return 0


def cmd_flops(args) -> int:
    rc = _run_config(args)
    rep = schedule_flops(rc.model, rc.schedule, rc.pipeline.recovery, rc.pipeline.mode)
    print(rep.to_csv() if args.csv else rep.to_text(), end="" if args.csv else "\n")
    return 0


def cmd_bench(args) -> int:
    rc = _run_config(args)
    pcfg = rc.pipeline
    if args.dim:
        pcfg = PipelineConfig(replace(rc.model, dim=args.dim), pcfg.schedule, pcfg.mode, pcfg.recovery)
    w = init_weights(pcfg.model, Rng(rc.seed), with_tra=pcfg.recovery == "tra")
    configs = [("baseline", pcfg.with_schedule(None, "none")), ("pruned", pcfg)]
    rows = []
    results = {}
    for label, cfg in configs:
        res = bench_throughput(
            cfg, w, args.sequences, warmup=args.warmup, repetitions=args.reps, seed=rc.seed,
            workers=args.workers, label=label,
        )
        results[label] = res
        rows.append(res.csv_row())
    speedup = results["pruned"].fps_mean / results["baseline"].fps_mean
    if args.csv:
        print(_csv_text(BENCH_COLUMNS, rows), end="")
    else:
        for label, res in results.items():
            print(f"{label:>8}: {res.fps_mean:10.2f} +- {res.fps_std:.2f} frames/s "
                  f"({res.n_sequences} seq x {len(res.seconds)} reps, {res.workers} worker(s))")
        print(f" speedup: {speedup:.2f}x")
    return 0


def cmd_prune_stats(args) -> int:
    rc = _run_config(args)
    w = _weights_for(rc, args.weights)
    files = sorted(p for p in Path(args.dir).iterdir() if p.is_file())
    if not files:
        raise ConfigError(f"no sequence files in {args.dir}")
    traces = []
    for path in files:
        seq = formats.load_sequence(path)
        if seq.shape != (rc.model.frames, rc.model.joints, 2):
            raise ConfigError(f"{path} holds shape {seq.shape}, config expects ({rc.model.frames}, {rc.model.joints}, 2)")
        traces.append(forward(seq, rc.pipeline, w)[1])
    stats = selection_stats(traces, rc.model.frames)
    if args.csv:
        print(stats.to_csv(), end="")
    else:
        top = np.argsort(-stats.counts, kind="stable")[:10]
        print(f"{stats.samples} sequences, {int(stats.counts.sum())} selections")
        print("most selected frames: " + ", ".join(f"{i}({stats.counts[i]})" for i in top))
    return 0


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in run_selftest(seed=args.seed or 0):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<14} {detail}")
    return 0 if ok else 1


def cmd_init_weights(args) -> int:
    rc = _run_config(args)
    w = init_weights(rc.model, Rng(rc.seed), with_tra=args.tra or rc.pipeline.recovery == "tra")
    formats.save_weights(args.output, w)
    print(f"wrote {args.output}: {w.parameter_count():,} parameters (seed {rc.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vptprune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="run a pipeline on a sequence file")
    _add_config_args(p)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--weights")
    p.add_argument("--trace", help="write the selection trace as CSV")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("flops", help="analytic cost report")
    _add_config_args(p)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("bench", help="throughput of baseline vs pruned")
    _add_config_args(p)
    p.add_argument("--sequences", type=int, default=1)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--workers", type=int, default=1, help="> 1 runs sequences on a thread pool")
    p.add_argument("--dim", type=int, help="override channel width")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("prune-stats", help="selection histogram over a directory of sequences")
    _add_config_args(p)
    p.add_argument("--dir", required=True)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_prune_stats)

    p = sub.add_parser("selftest", help="run the embedded oracle suites")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("init-weights", help="write a seeded weight file")
    _add_config_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--tra", action="store_true", help="include TRA parameters")
    p.set_defaults(func=cmd_init_weights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
