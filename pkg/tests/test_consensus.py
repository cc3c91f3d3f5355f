"""Consensus oracle: agreement, validity, first-arrival wins, timing.

Timing oracle (by hand): propose invoked at t with fixed delay d and decision
delay D_c responds at t + d + D_c + d.
"""

from aresim.consensus import ConsensusProcess, propose
from aresim.core import Configuration, ProcessId, QuorumSystem
from aresim.netsim import ClientProcess, Simulator


def setup(consensus_delay=3, d=2):
    servers = tuple(ProcessId("server", i) for i in range(3))
    cfg = Configuration(0, "abd", servers, quorums=QuorumSystem.majorities(servers))
    sim = Simulator({0: cfg}, d_min=d, d_max=d, consensus_delay=consensus_delay)
    ConsensusProcess(sim, 0)
    return sim, cfg


def proposer(cfg, value):
    def factory(ctx):
        decided = yield from propose(cfg, value)
        return {"decided": decided}
    return factory


def test_first_arrival_wins_and_all_agree():
    sim, cfg = setup()
    c0 = ClientProcess(sim, ProcessId("reconfigurer", 0))
    c1 = ClientProcess(sim, ProcessId("reconfigurer", 1))
    sim.schedule(0, lambda: c0.submit("propose", proposer(cfg, 10)), owner=c0.pid)
    sim.schedule(1, lambda: c1.submit("propose", proposer(cfg, 20)), owner=c1.pid)
    assert sim.run()
    responds = [e for e in sim.events if e.kind == "respond"]
    assert [e.detail["decided"] for e in responds] == [10, 10]
    decides = [e for e in sim.events if e.kind == "consensus-decide"]
    assert len(decides) == 1
    assert decides[0].detail["decided"] == 10
    assert decides[0].detail["proposer"] == "c0"


def test_propose_round_trip_timing():
    sim, cfg = setup(consensus_delay=3, d=2)
    c0 = ClientProcess(sim, ProcessId("reconfigurer", 0))
    sim.schedule(0, lambda: c0.submit("propose", proposer(cfg, 5)), owner=c0.pid)
    assert sim.run()
    resp = [e for e in sim.events if e.kind == "respond"][0]
    assert resp.time == 2 + 3 + 2


def test_losing_proposer_adopts_winner():
    sim, cfg = setup(d=1)
    c0 = ClientProcess(sim, ProcessId("reconfigurer", 0))
    c1 = ClientProcess(sim, ProcessId("reconfigurer", 1))
    # same tick: lower message id arrives first, deterministically
    sim.schedule(0, lambda: c0.submit("propose", proposer(cfg, 7)), owner=c0.pid)
    sim.schedule(0, lambda: c1.submit("propose", proposer(cfg, 8)), owner=c1.pid)
    assert sim.run()
    decided = {e.subject: e.detail["decided"] for e in sim.events if e.kind == "respond"}
    assert decided == {"c0": 7, "c1": 7}


def test_crashed_proposer_gets_no_reply_but_decision_stands():
    sim, cfg = setup(consensus_delay=0, d=2)
    c0 = ClientProcess(sim, ProcessId("reconfigurer", 0))
    sim.schedule(0, lambda: c0.submit("propose", proposer(cfg, 9)), owner=c0.pid)
    sim.schedule_crash(c0.pid, 3)
    assert sim.run()
    assert [e for e in sim.events if e.kind == "respond"] == []
    assert [e.detail["decided"] for e in sim.events if e.kind == "consensus-decide"] == [9]
