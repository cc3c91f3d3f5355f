"""Checker tests.

The hand-built histories below are the frozen oracles: each is annotated with
its expected verdict, worked out on paper against the monotone tagged register
semantics. The pairwise atomicity checker and the brute-force linearizability
search are then cross-validated on random histories.
"""

import random

import pytest

from aresim.checker import (
    OpRecord,
    brute_force_linearizable,
    check_atomicity,
    check_atomicity_ops,
    check_dap_consistency,
    check_liveness,
    check_reconfig,
    extract_ops,
    read_concurrency,
)
from aresim.core import (
    T0,
    CodeParams,
    ConfigEntry,
    LdrRoles,
    Configuration,
    ProcessId,
    Tag,
)
from aresim.netsim import TraceEvent


def w(i):
    return ProcessId("writer", i)


def op(op_id, kind, inv, resp, tag, value, client="p"):
    return OpRecord(op_id, client, kind, inv_idx=inv, inv_time=inv,
                    resp_idx=resp, resp_time=resp, tag=tag, value=value)


# --------------------------------------------- hand-built atomicity histories


def hist_clean_sequential():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("r1", "read", 2, 3, Tag(1, w(0)), b"a"),
            op("w2", "write", 4, 5, Tag(2, w(0)), b"b"),
            op("r2", "read", 6, 7, Tag(2, w(0)), b"b")], True


def hist_write_tag_inversion():
    # no reads at all: still illegal, tags must grow along real time
    return [op("w1", "write", 0, 1, Tag(2, w(0)), b"a"),
            op("w2", "write", 2, 3, Tag(1, w(1)), b"b")], False


def hist_stale_read():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("w2", "write", 2, 3, Tag(2, w(0)), b"b"),
            op("r1", "read", 4, 5, Tag(1, w(0)), b"a")], False


def hist_unread_incomplete_inverted_write():
    return [op("w1", "write", 0, 1, Tag(5, w(0)), b"a"),
            op("w2", "write", 2, None, Tag(1, w(1)), b"b")], True


def hist_read_witnesses_incomplete_write():
    return [op("w1", "write", 0, None, Tag(1, w(0)), b"a"),
            op("r1", "read", 1, 2, Tag(1, w(0)), b"a")], True


def hist_fabricated_pair():
    return [op("r1", "read", 0, 1, Tag(3, w(2)), b"zz")], False


def hist_value_mismatch():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("r1", "read", 2, 3, Tag(1, w(0)), b"b")], False


def hist_duplicate_tags():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("w2", "write", 2, 3, Tag(1, w(0)), b"b")], False


def hist_read_regression():
    return [op("w1", "write", 0, 10, Tag(1, w(0)), b"a"),
            op("w2", "write", 0, 10, Tag(2, w(1)), b"b"),
            op("r1", "read", 1, 2, Tag(2, w(1)), b"b"),
            op("r2", "read", 3, 4, Tag(1, w(0)), b"a")], False


def hist_initial_read_after_write():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("r1", "read", 2, 3, T0, b"")], False


def hist_concurrent_read_sees_ongoing_write():
    return [op("w1", "write", 0, 10, Tag(1, w(0)), b"a"),
            op("r1", "read", 1, 2, Tag(1, w(0)), b"a")], True


def hist_incomplete_read_dropped():
    return [op("w1", "write", 0, 1, Tag(1, w(0)), b"a"),
            op("r1", "read", 2, None, None, None)], True


ALL_HISTS = [hist_clean_sequential, hist_write_tag_inversion, hist_stale_read,
             hist_unread_incomplete_inverted_write, hist_read_witnesses_incomplete_write,
             hist_fabricated_pair, hist_value_mismatch, hist_duplicate_tags,
             hist_read_regression, hist_initial_read_after_write,
             hist_concurrent_read_sees_ongoing_write, hist_incomplete_read_dropped]


def test_hand_histories_against_expected_verdicts():
    for make in ALL_HISTS:
        ops, expect_ok = make()
        got_ok = check_atomicity_ops(ops) == []
        assert got_ok == expect_ok, f"{make.__name__}: checker said {got_ok}"
        assert brute_force_linearizable(ops) == expect_ok, \
            f"{make.__name__}: brute force disagrees"


# ------------------------------------------------- random cross-validation


WRITERS = [w(i) for i in range(3)]
VALUES = [b"", b"a", b"bb", b"ccc"]
TAG_POOL = [T0] + [Tag(z, wi) for z in (1, 2, 3) for wi in WRITERS]


def serial_history(rng, m):
    ops = []
    cur_tag, cur_val = T0, b""
    z = 0
    for i in range(m):
        inv = 2 * i
        resp = inv + 1 + rng.randint(0, 5)
        if rng.random() < 0.5:
            z += rng.randint(1, 2)
            cur_tag, cur_val = Tag(z, rng.choice(WRITERS)), rng.choice(VALUES)
            ops.append(op(f"o{i}", "write", inv, resp, cur_tag, cur_val))
        else:
            ops.append(op(f"o{i}", "read", inv, resp, cur_tag, cur_val))
    if rng.random() < 0.3:
        victim = rng.choice(ops)
        victim.resp_idx = victim.resp_time = None
    return ops


def corrupted_history(rng, m):
    ops = serial_history(rng, m)
    victim = rng.choice(ops)
    if rng.random() < 0.5:
        victim.tag = rng.choice(TAG_POOL)
    else:
        victim.value = rng.choice(VALUES)
    return ops


def chaotic_history(rng, m):
    ops = []
    for i in range(m):
        inv = rng.randint(0, 12)
        resp = None if rng.random() < 0.2 else inv + rng.randint(1, 6)
        kind = rng.choice(("read", "write"))
        ops.append(op(f"o{i}", kind, inv, resp, rng.choice(TAG_POOL), rng.choice(VALUES)))
    return ops


def test_brute_force_refuses_large_histories():
    ops = serial_history(random.Random(0), 11)
    with pytest.raises(ValueError, match="limit 10"):
        brute_force_linearizable(ops)
    assert brute_force_linearizable([]) is True


def test_checker_agrees_with_brute_force_on_random_histories():
    agree = 0
    for seed in range(10_000):
        rng = random.Random(seed)
        m = rng.randint(2, 9)
        make = (serial_history, corrupted_history, chaotic_history)[seed % 3]
        ops = make(rng, m)
        fast = check_atomicity_ops(ops) == []
        slow = brute_force_linearizable(ops)
        assert fast == slow, f"seed {seed}: checker={fast} brute={slow} ops={ops}"
        agree += 1
    assert agree == 10_000


# ------------------------------------------------------- DAP consistency


def ev(idx, kind, subject, **detail):
    return TraceEvent(idx, kind, subject, detail)


def dap_inv(t, client, did, op_id, name, cfg, **extra):
    return ev(t, "invoke", client, scope="dap", id=did, op=op_id, name=name, cfg=cfg, **extra)


def dap_resp(t, client, did, op_id, name, cfg, **extra):
    return ev(t, "respond", client, scope="dap", id=did, op=op_id, name=name, cfg=cfg, **extra)


def test_c1_completed_put_visible():
    events = [
        dap_inv(0, "w0", "a#1/1", "a#1", "put-data", 0, tag=Tag(1, w(0)), value=b"x"),
        dap_resp(1, "w0", "a#1/1", "a#1", "put-data", 0),
        dap_inv(2, "r0", "b#1/1", "b#1", "get-tag", 0),
        dap_resp(3, "r0", "b#1/1", "b#1", "get-tag", 0, tag=T0),
    ]
    bad = check_dap_consistency(events)
    assert [v.rule for v in bad] == ["C1"]
    # same trace but the get started before the put completed: no claim
    events[2] = dap_inv(1, "r0", "b#1/1", "b#1", "get-tag", 0)
    events[2], events[1] = events[1], events[2]
    assert check_dap_consistency(events) == []


def test_c1_scoped_per_configuration():
    events = [
        dap_inv(0, "w0", "a#1/1", "a#1", "put-data", 0, tag=Tag(1, w(0)), value=b"x"),
        dap_resp(1, "w0", "a#1/1", "a#1", "put-data", 0),
        dap_inv(2, "r0", "b#1/1", "b#1", "get-tag", 1),
        dap_resp(3, "r0", "b#1/1", "b#1", "get-tag", 1, tag=T0),
    ]
    assert check_dap_consistency(events) == []


def test_c2_pair_must_come_from_a_put():
    events = [
        dap_inv(0, "r0", "b#1/1", "b#1", "get-data", 0),
        dap_resp(1, "r0", "b#1/1", "b#1", "get-data", 0, tag=Tag(1, w(0)), value=b"x"),
    ]
    assert [v.rule for v in check_dap_consistency(events)] == ["C2"]
    # initial pair is always fine
    events2 = [
        dap_inv(0, "r0", "b#1/1", "b#1", "get-data", 0),
        dap_resp(1, "r0", "b#1/1", "b#1", "get-data", 0, tag=T0, value=b"init"),
    ]
    assert check_dap_consistency(events2, v0=b"init") == []
    # a put invoked before the get responded legitimizes the pair, even if
    # the put itself never completed or lives in another configuration
    events3 = [
        dap_inv(0, "w0", "a#1/1", "a#1", "put-data", 7, tag=Tag(1, w(0)), value=b"x"),
        dap_inv(1, "r0", "b#1/1", "b#1", "get-data", 0),
        dap_resp(2, "r0", "b#1/1", "b#1", "get-data", 0, tag=Tag(1, w(0)), value=b"x"),
    ]
    assert check_dap_consistency(events3) == []


def test_c3_only_for_claiming_flavors():
    def trace(cfg):
        return [
            dap_inv(0, "w0", "a#1/1", "a#1", "put-data", cfg, tag=Tag(1, w(0)), value=b"y"),
            dap_inv(1, "w1", "a#2/1", "a#2", "put-data", cfg, tag=Tag(2, w(0)), value=b"x"),
            dap_inv(2, "r0", "b#1/1", "b#1", "get-data", cfg),
            dap_resp(3, "r0", "b#1/1", "b#1", "get-data", cfg, tag=Tag(2, w(0)), value=b"x"),
            dap_inv(4, "r1", "c#1/1", "c#1", "get-data", cfg),
            dap_resp(5, "r1", "c#1/1", "c#1", "get-data", cfg, tag=Tag(1, w(0)), value=b"y"),
        ]
    bad = check_dap_consistency(trace(0), flavors={0: "ldr"})
    assert [v.rule for v in bad] == ["C3"]
    assert check_dap_consistency(trace(0), flavors={0: "abd"}) == []


# ------------------------------------------------------- reconfig lemmas


def rc_inv(t, client, rc_id, op_id):
    return ev(t, "invoke", client, scope="action", id=rc_id, op=op_id, name="read-config")


def rc_resp(t, client, rc_id, op_id, cfgs, statuses, mu):
    seq = tuple(ConfigEntry(c, s) for c, s in zip(cfgs, statuses))
    return ev(t, "respond", client, scope="action", id=rc_id, op=op_id,
              name="read-config", seq=seq, mu=mu)


def test_reconfig_clean_pass():
    events = [
        rc_inv(0, "c0", "c0#1/1", "c0#1"),
        rc_resp(1, "c0", "c0#1/1", "c0#1", [0], "F", 0),
        rc_inv(2, "c1", "c1#1/1", "c1#1"),
        rc_resp(3, "c1", "c1#1/1", "c1#1", [0, 4], "FP", 0),
        rc_inv(4, "c0", "c0#2/1", "c0#2"),
        rc_resp(5, "c0", "c0#2/1", "c0#2", [0, 4], "FF", 1),
    ]
    assert check_reconfig(events) == []


def test_reconfig_slot_disagreement():
    events = [
        rc_inv(0, "c0", "c0#1/1", "c0#1"),
        rc_resp(1, "c0", "c0#1/1", "c0#1", [0, 4], "FP", 0),
        rc_inv(0, "c1", "c1#1/1", "c1#1"),
        rc_resp(2, "c1", "c1#1/1", "c1#1", [0, 5], "FP", 0),
    ]
    assert "seq-agreement" in [v.rule for v in check_reconfig(events)]


def test_reconfig_temporal_prefix_and_f_stability():
    events = [
        rc_inv(0, "c0", "c0#1/1", "c0#1"),
        rc_resp(1, "c0", "c0#1/1", "c0#1", [0, 4], "FF", 1),
        rc_inv(2, "c1", "c1#1/1", "c1#1"),
        rc_resp(3, "c1", "c1#1/1", "c1#1", [0], "F", 0),
    ]
    rules = [v.rule for v in check_reconfig(events)]
    assert "seq-prefix" in rules
    assert "f-stability" in rules


def test_reconfig_decide_uniqueness():
    events = [
        ev(0, "consensus-decide", "x0", cfg=0, decided=4, proposer="c0"),
        ev(1, "consensus-decide", "x0", cfg=0, decided=5, proposer="c1"),
    ]
    assert [v.rule for v in check_reconfig(events)] == ["decide-unique"]


def test_reconfig_progress():
    events = [
        ev(0, "invoke", "c0", scope="op", id="c0#1", name="reconfig"),
        ev(1, "respond", "c0", scope="op", id="c0#1", name="reconfig", installed=4),
        rc_inv(2, "c1", "c1#1/1", "c1#1"),
        rc_resp(3, "c1", "c1#1/1", "c1#1", [0], "F", 0),
    ]
    assert [v.rule for v in check_reconfig(events)] == ["progress"]


# --------------------------------------------------------------- liveness


def make_treas_registry():
    servers = tuple(ProcessId("server", i) for i in range(6))
    return {0: Configuration(0, "treas", servers, code=CodeParams(6, 4, 2))}


def op_inv(t, client, op_id, name):
    return ev(t, "invoke", client, scope="op", id=op_id, name=name)


def op_resp(t, client, op_id, name, **extra):
    return ev(t, "respond", client, scope="op", id=op_id, name=name, **extra)


def liveness_trace(n_writes, read_completes):
    events = [op_inv(0, "r0", "r0#1", "read"),
              ev(1, "invoke", "r0", scope="dap", id="r0#1/1", op="r0#1",
                 name="get-data", cfg=0),
              ev(2, "state-change", "r0", comp="treas-eval", op="r0#1", cfg=0,
                 decodable=False)]
    for i in range(n_writes):
        events.append(op_inv(1, f"w{i}", f"w{i}#1", "write"))
        events.append(op_resp(9, f"w{i}", f"w{i}#1", "write", tag=Tag(1 + i, w(i)), value=b"x"))
    if read_completes:
        events.append(op_resp(10, "r0", "r0#1", "read", tag=T0, value=b""))
    return events


def test_concurrency_excludes_stale_stragglers():
    # a completed write fixes the floor tag; an unfinished write below it
    # cannot blank anything the read needs and is not counted
    events = [op_inv(0, "w0", "w0#1", "write"),
              op_resp(3, "w0", "w0#1", "write", tag=Tag(5, w(0)), value=b"n"),
              op_inv(1, "w1", "w1#1", "write"),
              ev(2, "invoke", "w1", scope="dap", id="w1#1/1", op="w1#1",
                 name="put-data", cfg=0, tag=Tag(2, w(1)), value=b"o"),
              op_inv(4, "r0", "r0#1", "read"),
              ev(6, "state-change", "r0", comp="treas-eval", op="r0#1",
                 decodable=False),
              op_inv(5, "w2", "w2#1", "write"),
              ev(5, "invoke", "w2", scope="dap", id="w2#1/1", op="w2#1",
                 name="put-data", cfg=0, tag=Tag(6, w(2)), value=b"p")]
    assert read_concurrency(events) == {"r0#1": 1}


def test_liveness_flags_stuck_read_within_delta():
    events = liveness_trace(n_writes=1, read_completes=False)
    assert read_concurrency(events) == {"r0#1": 1}
    bad = check_liveness(events, make_treas_registry())
    assert [v.rule for v in bad] == ["read-liveness"]


def test_liveness_silent_beyond_delta_or_when_done():
    assert check_liveness(liveness_trace(3, False), make_treas_registry()) == []
    assert check_liveness(liveness_trace(1, True), make_treas_registry()) == []
    assert check_liveness(liveness_trace(1, False), make_treas_registry(), exhausted=True) == []


def test_liveness_skips_crashed_clients_and_dead_configs():
    events = liveness_trace(1, False) + [ev(5, "crash", "r0")]
    assert check_liveness(events, make_treas_registry()) == []
    events2 = liveness_trace(1, False) + [ev(5, "crash", "s0"), ev(5, "crash", "s1")]
    assert check_liveness(events2, make_treas_registry()) == []


def test_liveness_excuses_reads_stuck_outside_the_coded_config():
    # the coded round finished; the read then hung in a directory fetch, a
    # gap the delta bound says nothing about
    events = liveness_trace(1, False)
    events += [ev(3, "respond", "r0", scope="dap", id="r0#1/1", op="r0#1",
                  name="get-data", cfg=0, tag=T0, value=b""),
               ev(4, "invoke", "r0", scope="dap", id="r0#1/2", op="r0#1",
                  name="get-data", cfg=1)]
    servers = tuple(ProcessId("server", i) for i in range(4))
    registry = dict(make_treas_registry())
    registry[1] = Configuration(1, "ldr", servers,
                                ldr=LdrRoles(servers[:1], servers[1:]))
    assert check_liveness(events, registry) == []


# ------------------------------------------------ extraction from real runs


def test_extract_ops_picks_up_incomplete_write_tags():
    events = [
        op_inv(0, "w0", "w0#1", "write"),
        dap_inv(1, "w0", "w0#1/1", "w0#1", "get-tag", 0),
        dap_resp(2, "w0", "w0#1/1", "w0#1", "get-tag", 0, tag=T0),
        dap_inv(3, "w0", "w0#1/2", "w0#1", "put-data", 0, tag=Tag(1, w(0)), value=b"v"),
    ]
    ops = extract_ops(events)
    assert len(ops) == 1
    assert not ops[0].complete
    assert ops[0].tag == Tag(1, w(0))
    assert ops[0].value == b"v"
    assert check_atomicity(events) == []
