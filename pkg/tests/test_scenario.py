"""Scenario file parsing, validation, and the end-to-end runner.

Tick oracles reuse the quiet-configuration arithmetic at d = 1: a read or
write in a single settled configuration is traversal (2) + one query round
(2) + propagation (2) + closing traversal (2) = 8 ticks.
"""

import pytest

from aresim.core import ProcessId
from aresim.scenario import (RunResult, Scenario, ScenarioError,
                             fault_schedule_problems, format_value,
                             load_scenario, parse_scenario, parse_value,
                             render_scenario, run_scenario)

BASIC = """\
name: abd-basic
seed: 3
d: 1
v0: 8x00
config: 0 abd s0..s2
op: w0 write 8x61 at 0
op: r0 read at 10
check: atomicity dap recon liveness
"""

MIXED = """\
seed: 11
d: 1 2
adversary: fifo
consensus-delay: 2
budget: 40000
v0: 4x0a
mutate: f-preference
config: 0 treas s0..s5 k=4 delta=2
config: 1 treas s6 s7 s8 s9 k=3 delta=1
config: 2 ldr s0..s5 dirs=3
op: w0 write 4x61 at 0
op: c0 recon 1 transfer at 5
op: r0 read after w0#1
op: c0 recon 2 after-append-of c0#1
crash: s4 at 15
check: atomicity latency
"""


def test_parse_extracts_every_field():
    sc = parse_scenario(MIXED, name="mixed")
    assert sc.name == "mixed"
    assert (sc.seed, sc.d_min, sc.d_max) == (11, 1, 2)
    assert sc.adversary == "fifo"
    assert (sc.consensus_delay, sc.budget) == (2, 40000)
    assert sc.v0 == b"\x0a" * 4
    assert sc.mutations == ("f-preference",)
    assert sorted(sc.registry) == [0, 1, 2]
    assert sc.registry[0].flavor == "treas"
    assert (sc.registry[0].code.k, sc.registry[0].code.delta) == (4, 2)
    assert len(sc.registry[1].servers) == 4
    assert len(sc.registry[2].ldr.directories) == 3
    ids = [op.op_id for op in sc.ops]
    assert ids == ["w0#1", "c0#1", "r0#1", "c0#2"]
    assert sc.ops[2].after == "w0#1"
    assert sc.ops[3].after_append == "c0#1"
    assert sc.ops[1].transfer and not sc.ops[3].transfer
    assert sc.crashes == ((ProcessId("server", 4), 15),)
    assert sc.checks == ("atomicity", "latency")


def test_render_parse_round_trip():
    sc = parse_scenario(MIXED, name="mixed")
    again = parse_scenario(render_scenario(sc), name="mixed")
    assert again == sc


def test_value_literals():
    assert parse_value("8x00") == b"\x00" * 8
    assert parse_value("2x6162") == b"abab"
    assert format_value(b"aaaa") == "4x61"
    assert parse_value(format_value(b"\x01\x02")) == b"\x01\x02"
    with pytest.raises(ValueError):
        parse_value("8x0")
    with pytest.raises(ValueError):
        parse_value("abc")


@pytest.mark.parametrize("bad, fragment", [
    ("config: 0 abd s0..s2\nop: w0 write at 0", "line 2"),
    ("config: 0 abd s0..s2\nop: r0 read after w9#1", "does not name an earlier"),
    ("config: 0 abd s0..s2\nop: w0 write 4x61 at 0\n"
     "op: r0 read after-append-of w0#1", "must reference a recon op"),
    ("config: 0 abd s0..s2\nconfig: 0 abd s0..s2", "duplicate configuration"),
    ("config: 0 abd s0..s2\nop: c0 recon 9 at 0", "unknown configuration"),
    ("pace: 4", "unknown key"),
    ("d: 1\nop: r0 read at 0", "no configurations"),
    ("config: 0 treas s0..s5 delta=2", "needs k="),
    ("check: vibes", "unknown check"),
])
def test_parse_errors_carry_diagnostics(bad, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        parse_scenario(bad)


def test_fault_schedule_validation():
    text = ("config: 0 treas s0..s5 k=4 delta=2\n"
            "op: r0 read at 0\n"
            "crash: s0 at 1\ncrash: s1 at 1\n")
    sc = parse_scenario(text)
    # tolerance for (6, 4) is 6 - ceil(10/2) = 1
    assert fault_schedule_problems(sc) == \
        ["config 0: 2 crashes exceed coded tolerance 1"]
    with pytest.raises(ScenarioError, match="exceeds tolerance"):
        run_scenario(sc)
    res = run_scenario(sc, allow_overload=True)
    assert any(n.startswith("overload:") for n in res.notes)


def test_basic_run_matches_tick_oracle():
    res = run_scenario(parse_scenario(BASIC, name="abd-basic"))
    assert isinstance(res, RunResult)
    assert res.finished and res.ok
    spans = {e.detail["id"]: e.time for e in res.sim.events
             if e.kind == "respond" and e.detail.get("scope") == "op"}
    assert spans == {"w0#1": 8, "r0#1": 18}
    report = res.render()
    assert "w0#1     write      t0 -> t8" in report
    assert "value 8x61" in report
    assert "verdict: PASS" in report
    for check in ("atomicity", "dap", "recon", "liveness"):
        assert f"{check:<10} pass" in report


def test_after_trigger_starts_at_completion():
    text = ("config: 0 abd s0..s2\n"
            "op: w0 write 8x61 at 0\n"
            "op: r0 read after w0#1\n")
    res = run_scenario(parse_scenario(text))
    assert res.ok
    times = {(e.kind, e.detail["id"]): e.time for e in res.sim.events
             if e.detail.get("scope") == "op"}
    assert times[("invoke", "r0#1")] == times[("respond", "w0#1")] == 8
    read = next(e.detail for e in res.sim.events if e.kind == "respond"
                and e.detail.get("id") == "r0#1")
    assert read["value"] == b"a" * 8


def test_after_append_trigger_fires_mid_recon():
    text = ("config: 0 abd s0..s2\n"
            "config: 1 abd s3..s5\n"
            "op: c0 recon 1 at 0\n"
            "op: r0 read after-append-of c0#1\n")
    res = run_scenario(parse_scenario(text))
    assert res.ok
    events = res.sim.events
    append_t = next(e.time for e in events if e.kind == "respond"
                    and e.detail.get("scope") == "action"
                    and e.detail.get("name") == "add-config")
    read_inv = next(e.time for e in events if e.kind == "invoke"
                    and e.detail.get("id") == "r0#1")
    recon_resp = next(e.time for e in events if e.kind == "respond"
                      and e.detail.get("id") == "c0#1")
    assert read_inv == append_t < recon_resp
    read = next(e.detail for e in events if e.kind == "respond"
                and e.detail.get("id") == "r0#1")
    # the reader discovered the appended configuration on its own walk
    assert read["cfgs"][-1] == 1


def test_budget_exhaustion_is_reported_not_failed():
    text = ("config: 0 abd s0..s2\n"
            "op: w0 write 8x61 at 0\n"
            "op: r0 read at 2\n"
            "budget: 30\n")
    res = run_scenario(parse_scenario(text))
    assert not res.finished
    report = res.render()
    assert "EXHAUSTED" in report
    assert res.violations["liveness"] == []
    assert "PENDING" in report


def test_crashed_client_op_is_not_invoked():
    text = ("config: 0 abd s0..s2\n"
            "op: w0 write 8x61 at 0\n"
            "op: w1 write 8x62 at 20\n"
            "crash: w1 at 10\n")
    res = run_scenario(parse_scenario(text))
    assert res.ok
    assert not any(e.detail.get("id") == "w1#1" for e in res.sim.events
                   if e.kind == "invoke")
    assert "w1#1     write      NOT-INVOKED" in res.render()


def test_same_seed_same_trace_bytes():
    sc = parse_scenario(MIXED, name="mixed")
    a = run_scenario(sc, checks=())
    b = run_scenario(sc, checks=())
    assert a.trace_jsonl() == b.trace_jsonl()
    c = run_scenario(sc, seed=99, checks=())
    assert c.trace_jsonl() != a.trace_jsonl()


def test_metrics_sections_render(tmp_path):
    text = ("config: 0 treas s0..s5 k=4 delta=2\n"
            "v0: 8x00\n"
            "op: w0 write 8x61 at 0\n"
            "op: r0 read at 12\n"
            "check: atomicity storage comm latency\n")
    path = tmp_path / "coded.scn"
    path.write_text(text)
    sc = load_scenario(path)
    assert sc.name == "coded"
    res = run_scenario(sc)
    assert res.ok
    assert res.storage.normalized(0) <= 4.5
    assert res.comm.worst["write"] <= 1.5
    report = res.render()
    assert "storage (|v| = 8):" in report
    assert "cfg 0: peak" in report
    assert "comm (|v| = 8" in report
    assert "latency" in report and "audited" in report
