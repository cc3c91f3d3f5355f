"""Configuration-sequence service: discovery, installation, state transfer.

Every server stores one successor pointer (nextC) per configuration it belongs
to. Clients walk the sequence from their last finalized index: each probe asks
a quorum of the current configuration for its pointer, and each discovery is
propagated back to that quorum before moving on, so later walks cannot lose
it. After a walk that discovered anything, the last hop is re-propagated once
as a confirmation.

Reconfiguration appends a new configuration through the consensus object of
the current last one, moves data into it (either a classic read/write round or
direct coded-element forwarding between coded configurations), finalizes the
new entry, and announces the finalization to the predecessor's servers.
"""

from __future__ import annotations

from .consensus import propose
from .core import ConfigEntry, entry_max, seq_mu, seq_nu, treas_threshold
from .dap import dap_for, traced_get_data, traced_get_tag, traced_put_data
from .dap.base import StorageServer, cfg_gather
from .netsim import Gather, Msg, ThresholdRule


class ReconServerState:
    """Per-configuration successor pointer published to traversals."""

    def __init__(self, server: StorageServer, cfg):
        self.server = server
        self.cfg = cfg
        self.next_entry: ConfigEntry | None = None
        server.register(cfg.cfg_id, "READ-CONFIG", self.on_read_config)
        server.register(cfg.cfg_id, "WRITE-CONFIG", self.on_write_config)

    def on_read_config(self, src, msg):
        self.server.reply(src, msg, "CONFIG", entry=self.next_entry)

    def on_write_config(self, src, msg):
        cur = self.next_entry
        new = msg.entry if cur is None else entry_max(cur, msg.entry)
        if new != cur:
            self.next_entry = new
            self.server.emit_state(self.cfg.cfg_id, "nextc", entry=new)
        self.server.reply(src, msg, "ACK-CONFIG")


def attach_recon(server: StorageServer, cfg):
    ReconServerState(server, cfg)


def read_next_config(ctx, cfg):
    """Probe one configuration for its successor entry, F before P."""
    replies = yield cfg_gather(cfg, Msg("READ-CONFIG", cfg=cfg.cfg_id),
                               label="read-next-config")
    entries = [m.entry for m in replies.values() if m.entry is not None]
    if "f-preference" in ctx.sim.mutations:
        entries = [e for e in entries if e.status != "F"]
    for e in entries:
        if e.status == "F":
            return e
    return entries[0] if entries else None


def put_config(ctx, cfg, entry: ConfigEntry):
    def inner():
        yield cfg_gather(cfg, Msg("WRITE-CONFIG", cfg=cfg.cfg_id, entry=entry),
                         label="put-config")
    return ctx.action("put-config", {"cfg": cfg.cfg_id, "entry": entry}, inner())


def read_config(ctx, seq):
    """Walk the sequence from the local finalized index, claiming discoveries."""
    def inner():
        i = seq_mu(seq)
        lam = 0
        while True:
            cfg = ctx.cfg(seq[i].cfg)
            nxt = yield from read_next_config(ctx, cfg)
            if nxt is None:
                break
            if i + 1 < len(seq):
                seq[i + 1] = entry_max(seq[i + 1], nxt)
            else:
                seq.append(nxt)
            yield from put_config(ctx, cfg, seq[i + 1])
            i += 1
            lam += 1
        if lam:
            yield from put_config(ctx, ctx.cfg(seq[i - 1].cfg), seq[i])
        return lam

    def describe(lam):
        return {"seq": tuple(seq), "mu": seq_mu(seq), "lam": lam}
    return ctx.action("read-config", {}, inner(), describe)


def add_config(ctx, seq, cfg_id: int):
    """Agree on the successor of the current last entry and append it."""
    def inner():
        nu = seq_nu(seq)
        prev = ctx.cfg(seq[nu].cfg)
        decided = yield from propose(prev, cfg_id)
        ent = ConfigEntry(decided, "P")
        seq.append(ent)
        yield from put_config(ctx, prev, ent)
        return decided
    return ctx.action("add-config", {"proposed": cfg_id}, inner(),
                      lambda d: {"decided": d})


def update_config(ctx, seq, transfer=False):
    """Move the newest data into the last configuration of the sequence."""
    def classic():
        mu, nu = seq_mu(seq), seq_nu(seq)
        best = None
        for i in range(mu, nu + 1):
            cfg = ctx.cfg(seq[i].cfg)
            tv = yield from traced_get_data(ctx, dap_for(cfg.flavor), cfg)
            if best is None or tv.tag > best.tag:
                best = tv
        cfg_nu = ctx.cfg(seq[nu].cfg)
        yield from traced_put_data(ctx, dap_for(cfg_nu.flavor), cfg_nu, best)
        return best.tag

    def forwarded():
        mu, nu = seq_mu(seq), seq_nu(seq)
        cfgs = [ctx.cfg(seq[i].cfg) for i in range(mu, nu + 1)]
        if any(c.flavor != "treas" for c in cfgs):
            raise ValueError("direct state transfer needs coded configurations only")
        tags = []
        for i, cfg in zip(range(mu, nu + 1), cfgs):
            t = yield from traced_get_tag(ctx, dap_for(cfg.flavor), cfg)
            tags.append((t, i))
        tau, src_i = max(tags, key=lambda p: (p[0].sort_key(), p[1]))
        src, tgt = ctx.cfg(seq[src_i].cfg), cfgs[-1]

        def fwd():
            need = treas_threshold(len(tgt.servers), tgt.code.k)
            yield Gather(
                sends=tuple((s, Msg("REQ-FW-CODE-ELEM", cfg=src.cfg_id,
                                    cfg2=tgt.cfg_id, tag=tau))
                            for s in src.servers),
                expect=frozenset(tgt.servers),
                rule=ThresholdRule(need),
                label="forward-code-element")
            return tau
        yield from ctx.action("forward-code-element",
                              {"tag": tau, "src": src.cfg_id, "dst": tgt.cfg_id},
                              fwd())
        return tau

    inner = forwarded() if transfer else classic()
    return ctx.action("update-config", {"transfer": transfer}, inner,
                      lambda tag: {"tag": tag})


def finalize_config(ctx, seq):
    """Mark the last entry finalized and tell the predecessor's servers."""
    def inner():
        nu = seq_nu(seq)
        ent = ConfigEntry(seq[nu].cfg, "F")
        seq[nu] = ent
        yield from put_config(ctx, ctx.cfg(seq[nu - 1].cfg), ent)
        return ent
    return ctx.action("finalize-config", {}, inner(), lambda e: {"entry": e})


def reconfig(seq, cfg_id: int, transfer=False):
    """Op factory installing cfg_id (or whatever consensus decided) at the end."""
    def factory(ctx):
        yield from read_config(ctx, seq)
        decided = yield from add_config(ctx, seq, cfg_id)
        yield from update_config(ctx, seq, transfer=transfer)
        yield from finalize_config(ctx, seq)
        return {"installed": decided, "seq": tuple(seq),
                "mu": seq_mu(seq), "nu": seq_nu(seq)}
    return factory
