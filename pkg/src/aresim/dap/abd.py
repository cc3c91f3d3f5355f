"""Majority/quorum replication DAP: full-value reads and writes.

Servers keep one (tag, value) pair and overwrite it only for strictly larger
tags. get-tag and get-data query a quorum and take the maximum; put-data
writes the pair to a quorum. Reads need the A1 write-back phase.
"""

from __future__ import annotations

from ..core import T0, TaggedValue
from ..netsim import Msg
from .base import Dap, StorageServer, cfg_gather, max_pair, max_tag


class AbdServerState:
    def __init__(self, server: StorageServer, cfg):
        self.server = server
        self.cfg = cfg
        self.tag = T0
        self.value = server.sim.v0
        server.register(cfg.cfg_id, "QUERY-TAG", self.on_query_tag)
        server.register(cfg.cfg_id, "QUERY", self.on_query)
        server.register(cfg.cfg_id, "WRITE", self.on_write)

    def on_query_tag(self, src, msg):
        self.server.reply(src, msg, "TAG", tag=self.tag)

    def on_query(self, src, msg):
        self.server.reply(src, msg, "DATA", tag=self.tag, value=self.value)

    def on_write(self, src, msg):
        skip_guard = "server-tag-comparison" in self.server.sim.mutations
        if skip_guard or msg.tag > self.tag:
            self.tag, self.value = msg.tag, msg.value
            self.server.emit_state(self.cfg.cfg_id, "abd",
                                   tag=self.tag, vlen=len(self.value))
        self.server.reply(src, msg, "ACK")


class AbdDap(Dap):
    flavor = "abd"
    template = "A1"

    def get_tag(self, ctx, cfg):
        replies = yield cfg_gather(cfg, Msg("QUERY-TAG", cfg=cfg.cfg_id), label="abd.get-tag")
        return max_tag(replies)

    def get_data(self, ctx, cfg):
        replies = yield cfg_gather(cfg, Msg("QUERY", cfg=cfg.cfg_id), label="abd.get-data")
        return max_pair(replies)

    def put_data(self, ctx, cfg, tv: TaggedValue):
        yield cfg_gather(cfg, Msg("WRITE", cfg=cfg.cfg_id, tag=tv.tag, value=tv.value),
                         label="abd.put-data")

    def attach_server(self, server, cfg):
        AbdServerState(server, cfg)
