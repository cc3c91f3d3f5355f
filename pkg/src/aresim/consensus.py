"""Per-configuration consensus, modeled as a first-proposal-wins oracle.

Each configuration owns one oracle process that never crashes. The first
PROPOSE to arrive fixes the decision; every proposal is answered with the
decided value after the configured decision delay, so a proposer observes
one message delay in, the delay, and one message delay back.
"""

from __future__ import annotations

from .core import Configuration, ProcessId
from .netsim import Gather, Msg, Process, ThresholdRule


class ConsensusProcess(Process):
    def __init__(self, sim, cfg_id: int):
        super().__init__(sim, ProcessId("consensus", cfg_id))
        self.cfg_id = cfg_id
        self.decided: int | None = None

    def on_message(self, src, msg):
        if msg.kind != "PROPOSE":
            return
        if self.decided is None:
            self.decided = msg.num
            self.sim.emit("consensus-decide", self.pid,
                          {"cfg": self.cfg_id, "decided": self.decided,
                           "proposer": str(src)})
        decided = self.decided
        rid = msg.rid
        self.sim.schedule(
            self.sim.now + self.sim.consensus_delay,
            lambda: self.sim.send(self.pid, src, Msg("DECIDE", rid=rid, num=decided)),
            owner=self.pid)


def propose(cfg: Configuration, proposed: int):
    """Client round: offer `proposed` as cfg's successor; returns the decision."""
    target = cfg.consensus_pid
    replies = yield Gather(sends=((target, Msg("PROPOSE", cfg=cfg.cfg_id, num=proposed)),),
                           expect=frozenset((target,)),
                           rule=ThresholdRule(1), label="propose")
    return replies[target].num
