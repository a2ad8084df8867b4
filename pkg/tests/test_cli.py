import numpy as np
import pytest

from vptprune import formats
from vptprune.analysis import FlopsReport, SelectionStats
from vptprune.cli import main
from vptprune.numkernel import Rng

SMALL = """\
frames = 27
joints = 3
blocks = 4
dim = 8
heads = 2
mode = seq2seq
recovery = tri
strategy = sampler
r = [13, 5]
b = [0, 2]
seed = 3
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def test_flops_preset(capsys):
    assert main(["flops", "--preset", "mixste"]) == 0
    out = capsys.readouterr().out
    assert "baseline total" in out and "reduction      : 0.6179" in out


def test_flops_csv_parses(capsys):
    assert main(["flops", "--preset", "mixste", "--csv"]) == 0
    rep = FlopsReport.from_csv(capsys.readouterr().out)
    assert 0.52 <= rep.reduction_ratio <= 0.66


def test_forward_writes_output_and_trace(tmp_path, small_cfg):
    inp, out, trace = tmp_path / "in.txt", tmp_path / "out.pseq", tmp_path / "trace.csv"
    formats.save_sequence(inp, Rng(0).uniform(-1, 1, (27, 3, 2)))
    assert main(["forward", "--config", str(small_cfg), "--input", str(inp), "--output", str(out), "--trace", str(trace)]) == 0
    assert formats.load_sequence(out).shape == (27, 3, 3)
    assert trace.read_text().splitlines()[0] == "stage,position,frame"
    assert len(trace.read_text().splitlines()) == 1 + 13 + 5


def test_forward_frame_mismatch_is_config_error(tmp_path, small_cfg, capsys):
    inp = tmp_path / "in.txt"
    formats.save_sequence(inp, np.zeros((26, 3, 2)))
    assert main(["forward", "--config", str(small_cfg), "--input", str(inp), "--output", str(tmp_path / "o.txt")]) == 1
    assert "config expects (27, 3, 2)" in capsys.readouterr().err


def test_forward_with_weight_file(tmp_path, small_cfg):
    wpath, inp = tmp_path / "w.vptw", tmp_path / "in.pseq"
    assert main(["init-weights", "--config", str(small_cfg), "--output", str(wpath)]) == 0
    formats.save_sequence(inp, Rng(1).uniform(-1, 1, (27, 3, 2)))
    outs = []
    for i, extra in enumerate(([], ["--weights", str(wpath)])):
        out = tmp_path / f"o{i}.pseq"
        assert main(["forward", "--config", str(small_cfg), "--input", str(inp), "--output", str(out)] + extra) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["flops", "--preset", "mixste", "--frobnicate"])
    assert info.value.code == 2


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_prune_stats(tmp_path, small_cfg, capsys):
    d = tmp_path / "seqs"
    d.mkdir()
    for i in range(4):
        formats.save_sequence(d / f"{i}.pseq", Rng(i).uniform(-1, 1, (27, 3, 2)))
    assert main(["prune-stats", "--config", str(small_cfg), "--dir", str(d), "--csv"]) == 0
    stats = SelectionStats.from_csv(capsys.readouterr().out)
    assert stats.samples == 4 and stats.counts.sum() == 4 * 5


def test_bench_csv(small_cfg, capsys):
    assert main(["bench", "--config", str(small_cfg), "--reps", "2", "--warmup", "0", "--csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("label,") and len(lines) == 3


def test_missing_config_file_exits_1(tmp_path):
    assert main(["flops", "--config", str(tmp_path / "nope.cfg")]) == 1
