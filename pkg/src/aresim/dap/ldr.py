"""Layered data replication DAP: directories hold metadata, replicas hold data.

Directories keep the highest known (tag, locations) pair, replicas a single
(tag, value) slot. get-tag asks a directory majority; put-data stores the value
at f+1 of the 2f+1 replicas and then publishes (tag, acked-set) to a directory
majority; get-data claims the discovered metadata back to a directory majority
before fetching the value from one listed replica. Because the claim makes the
tag visible to every later directory majority, reads need no value write-back
(template A2).

A replica answers GET-DATA with whatever pair it currently holds; the client
keeps waiting until some listed replica still serves exactly the claimed tag.
If every listed replica has moved past that tag the fetch never finishes: a
liveness gap of the layered scheme, not a safety one.
"""

from __future__ import annotations

from ..core import T0, TaggedValue
from ..netsim import FirstRule, Msg, ThresholdRule
from .base import Dap, StorageServer, cfg_gather, max_tag


def dir_majority(cfg):
    dirs = cfg.ldr.directories
    return ThresholdRule(len(dirs) // 2 + 1)


class LdrDirectoryState:
    def __init__(self, server: StorageServer, cfg):
        self.server = server
        self.cfg = cfg
        self.tag = T0
        self.locations = cfg.ldr.replicas  # v0 is seeded everywhere
        server.register(cfg.cfg_id, "QUERY-TAG", self.on_query_tag)
        server.register(cfg.cfg_id, "QUERY-METADATA", self.on_query_metadata)
        server.register(cfg.cfg_id, "PUT-METADATA", self.on_put_metadata)

    def on_query_tag(self, src, msg):
        self.server.reply(src, msg, "TAG", tag=self.tag)

    def on_query_metadata(self, src, msg):
        self.server.reply(src, msg, "METADATA", tag=self.tag, locs=self.locations)

    def on_put_metadata(self, src, msg):
        skip_guard = "server-tag-comparison" in self.server.sim.mutations
        if skip_guard or msg.tag > self.tag:
            self.tag, self.locations = msg.tag, msg.locs
            self.server.emit_state(self.cfg.cfg_id, "ldr-dir",
                                   tag=self.tag, locs=self.locations)
        self.server.reply(src, msg, "ACK-MD")


class LdrReplicaState:
    def __init__(self, server: StorageServer, cfg):
        self.server = server
        self.cfg = cfg
        self.tag = T0
        self.value = server.sim.v0
        server.register(cfg.cfg_id, "PUT-DATA", self.on_put_data)
        server.register(cfg.cfg_id, "GET-DATA", self.on_get_data)

    def on_put_data(self, src, msg):
        skip_guard = "server-tag-comparison" in self.server.sim.mutations
        if skip_guard or msg.tag > self.tag:
            self.tag, self.value = msg.tag, msg.value
            self.server.emit_state(self.cfg.cfg_id, "ldr-replica",
                                   tag=self.tag, vlen=len(self.value))
        self.server.reply(src, msg, "ACK-DATA")

    def on_get_data(self, src, msg):
        self.server.reply(src, msg, "DATA", tag=self.tag, value=self.value)


class LdrDap(Dap):
    flavor = "ldr"
    template = "A2"

    def get_tag(self, ctx, cfg):
        replies = yield cfg_gather(cfg, Msg("QUERY-TAG", cfg=cfg.cfg_id),
                                   rule=dir_majority(cfg), label="ldr.get-tag",
                                   to=cfg.ldr.directories)
        return max_tag(replies)

    def get_data(self, ctx, cfg):
        replies = yield cfg_gather(cfg, Msg("QUERY-METADATA", cfg=cfg.cfg_id),
                                   rule=dir_majority(cfg), label="ldr.get-data",
                                   to=cfg.ldr.directories)
        best = max(replies.values(), key=lambda m: m.tag.sort_key())
        tg, locs = best.tag, best.locs
        yield cfg_gather(cfg, Msg("PUT-METADATA", cfg=cfg.cfg_id, tag=tg, locs=locs),
                         rule=dir_majority(cfg), label="ldr.claim",
                         to=cfg.ldr.directories)
        fetched = yield cfg_gather(cfg, Msg("GET-DATA", cfg=cfg.cfg_id, tag=tg),
                                   rule=FirstRule(lambda m: m.tag == tg),
                                   label="ldr.fetch", to=locs)
        reply = next(m for m in fetched.values() if m.tag == tg)
        return TaggedValue(tg, reply.value)

    def put_data(self, ctx, cfg, tv: TaggedValue):
        f = cfg.ldr.f
        acked = yield cfg_gather(cfg, Msg("PUT-DATA", cfg=cfg.cfg_id,
                                          tag=tv.tag, value=tv.value),
                                 rule=ThresholdRule(f + 1), label="ldr.put-data",
                                 to=cfg.ldr.replicas)
        locs = tuple(sorted(acked))
        yield cfg_gather(cfg, Msg("PUT-METADATA", cfg=cfg.cfg_id, tag=tv.tag, locs=locs),
                         rule=dir_majority(cfg), label="ldr.publish",
                         to=cfg.ldr.directories)

    def attach_server(self, server, cfg):
        if server.pid in cfg.ldr.directories:
            LdrDirectoryState(server, cfg)
        if server.pid in cfg.ldr.replicas:
            LdrReplicaState(server, cfg)
