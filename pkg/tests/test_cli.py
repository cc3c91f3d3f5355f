"""Command line behavior: exit codes, outputs, sweeps, fuzz."""

import json

import pytest

from aresim.cli import main
from aresim.fuzz import generate_scenario
from aresim.scenario import render_scenario

BASIC = """\
seed: 3
d: 1 2
config: 0 abd s0..s2
op: w0 write 8x61 at 0
op: r0 read at 10
check: atomicity dap recon liveness
"""

OVERLOADED = """\
config: 0 treas s0..s5 k=4 delta=2
op: r0 read at 0
crash: s0 at 1
crash: s1 at 1
"""


@pytest.fixture
def basic(tmp_path):
    path = tmp_path / "basic.scn"
    path.write_text(BASIC)
    return path


def test_run_writes_trace_and_report(basic, tmp_path, capsys):
    trace = tmp_path / "out" / "trace.jsonl"
    report = tmp_path / "out" / "report.txt"
    code = main(["run", str(basic), "--trace-out", str(trace),
                 "--report-out", str(report)])
    assert code == 0
    out = capsys.readouterr().out
    assert "verdict: PASS" in out
    assert report.read_text() == out
    lines = trace.read_text().splitlines()
    assert lines and all(json.loads(line) for line in lines)
    assert json.loads(lines[0])["kind"] == "invoke"


def test_run_is_deterministic_per_seed(basic, tmp_path):
    t1, t2, t3 = (tmp_path / f"t{i}.jsonl" for i in range(3))
    main(["run", str(basic), "--trace-out", str(t1)])
    main(["run", str(basic), "--trace-out", str(t2)])
    main(["run", str(basic), "--trace-out", str(t3), "--seed", "9"])
    assert t1.read_bytes() == t2.read_bytes()
    assert t1.read_bytes() != t3.read_bytes()


def test_seed_sweep_aggregates(basic, tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    code = main(["run", str(basic), "--seed-sweep", "3",
                 "--trace-out", str(trace)])
    assert code == 0
    out = capsys.readouterr().out
    assert "sweep: 3 seeds from 3, verdict PASS" in out
    assert out.count("seed ") == 3
    for s in (3, 4, 5):
        assert (tmp_path / f"trace.seed{s}.jsonl").exists()


def test_check_subset_runs_only_requested(basic, capsys):
    assert main(["run", str(basic), "--check", "atomicity,storage"]) == 0
    out = capsys.readouterr().out
    assert "atomicity  pass" in out
    assert "storage (|v| = 8):" in out
    assert "recon" not in out


def test_mutation_flag_turns_run_red(tmp_path, capsys):
    path = tmp_path / "mut.scn"
    path.write_text(render_scenario(generate_scenario(1)))
    assert main(["run", str(path)]) == 0
    assert main(["run", str(path), "--mutate", "server-tag-comparison"]) == 1
    assert "verdict: FAIL" in capsys.readouterr().out


def test_parse_error_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.scn"
    path.write_text("config: 0 abd s0..s2\nop: w0 write at 0\n")
    assert main(["run", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_overload_needs_flag(tmp_path, capsys):
    path = tmp_path / "over.scn"
    path.write_text(OVERLOADED)
    assert main(["run", str(path)]) == 2
    assert "exceeds tolerance" in capsys.readouterr().err
    assert main(["run", str(path), "--allow-overload"]) == 0
    out = capsys.readouterr().out
    assert "PENDING" in out and "verdict: PASS" in out


def test_fuzz_subcommand(tmp_path, capsys):
    assert main(["fuzz", "--count", "10"]) == 0
    assert "fuzz: 10 runs, 0 failing" in capsys.readouterr().out
    save = tmp_path / "failures"
    assert main(["fuzz", "--count", "10", "--seed", "0",
                 "--mutate", "server-tag-comparison",
                 "--save-failures", str(save)]) == 1
    assert list(save.glob("*.min.scn"))
    assert "verdict: FAIL" in capsys.readouterr().out
