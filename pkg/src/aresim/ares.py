"""Reconfigurable atomic reads and writes, plus the simulation builder.

Both operations first walk the configuration sequence, then query every
configuration from the last finalized index onward, and finally propagate the
chosen pair into the last configuration, re-walking until no newer
configuration appears. Clients keep their sequence view across operations.
"""

from __future__ import annotations

from .consensus import ConsensusProcess
from .core import ConfigEntry, Tag, TaggedValue, seq_mu, seq_nu
from .dap import (StorageServer, dap_for, traced_get_data, traced_get_tag,
                  traced_put_data)
from .netsim import ClientProcess, Simulator
from .recon import attach_recon, read_config, reconfig


def fresh_seq():
    return [ConfigEntry(0, "F")]


def ares_write(seq, value: bytes):
    def factory(ctx):
        mu0 = seq_mu(seq)  # finalized index known at invocation, for delay bounds
        yield from read_config(ctx, seq)
        mu, nu = seq_mu(seq), seq_nu(seq)
        t_max = None
        for i in range(mu, nu + 1):
            cfg = ctx.cfg(seq[i].cfg)
            t = yield from traced_get_tag(ctx, dap_for(cfg.flavor), cfg)
            if t_max is None or t > t_max:
                t_max = t
        tv = TaggedValue(Tag(t_max.z + 1, ctx.pid), value)
        while True:
            cfg = ctx.cfg(seq[nu].cfg)
            yield from traced_put_data(ctx, dap_for(cfg.flavor), cfg, tv)
            yield from read_config(ctx, seq)
            if seq_nu(seq) == nu:
                break
            nu = seq_nu(seq)
        return {"tag": tv.tag, "value": value, "mu": mu0, "nu": nu,
                "cfgs": tuple(seq[i].cfg for i in range(mu, nu + 1))}
    return factory


def ares_read(seq):
    def factory(ctx):
        mu0 = seq_mu(seq)
        yield from read_config(ctx, seq)
        mu, nu = seq_mu(seq), seq_nu(seq)
        best = None
        for i in range(mu, nu + 1):
            cfg = ctx.cfg(seq[i].cfg)
            tv = yield from traced_get_data(ctx, dap_for(cfg.flavor), cfg)
            if best is None or tv.tag > best.tag:
                best = tv
        while True:
            cfg = ctx.cfg(seq[nu].cfg)
            yield from traced_put_data(ctx, dap_for(cfg.flavor), cfg, best)
            yield from read_config(ctx, seq)
            if seq_nu(seq) == nu:
                break
            nu = seq_nu(seq)
        return {"tag": best.tag, "value": best.value, "mu": mu0, "nu": nu,
                "cfgs": tuple(seq[i].cfg for i in range(mu, nu + 1))}
    return factory


class AresClient:
    """A client process carrying its own configuration-sequence view."""

    def __init__(self, sim: Simulator, pid):
        self.proc = ClientProcess(sim, pid)
        self.pid = pid
        self.seq = fresh_seq()

    def write(self, value: bytes, detail=None):
        self.proc.submit("write", ares_write(self.seq, value), detail)

    def read(self, detail=None):
        self.proc.submit("read", ares_read(self.seq), detail)

    def recon(self, cfg_id: int, transfer=False, detail=None):
        self.proc.submit("recon", reconfig(self.seq, cfg_id, transfer), detail)


def build_simulation(registry, **sim_kw) -> Simulator:
    """Stand up servers, DAP states, recon pointers, and consensus oracles."""
    sim = Simulator(registry, **sim_kw)
    shells: dict = {}
    for cfg_id in sorted(registry):
        cfg = registry[cfg_id]
        for p in cfg.servers:
            if p not in shells:
                shells[p] = StorageServer(sim, p)
            dap_for(cfg.flavor).attach_server(shells[p], cfg)
            attach_recon(shells[p], cfg)
        ConsensusProcess(sim, cfg.cfg_id)
    return sim
