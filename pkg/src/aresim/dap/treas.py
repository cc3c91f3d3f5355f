"""Erasure-coded DAP with bounded per-server element lists.

Servers remember every tag they have seen but keep coded elements only for
the delta+1 highest of those tags; older elements are blanked and never
resurrected. Clients talk to ceil((n+k)/2) servers. get-data returns the
highest tag that is both present in k lists and decodable from k lists; when
the maximum visible tag is not yet decodable the client re-queries, which the
event budget bounds.

The same server component implements both ends of direct state transfer
between coded configurations: REQ-FW-CODE-ELEM fans a tag's element out of a
source configuration, FWD-CODE-ELEM stages elements at a target server until
k distinct source elements arrive, then re-encodes under the target's own
parameters.
"""

from __future__ import annotations

from ..codec import decode, encode
from ..core import T0, Tag, TaggedValue, treas_threshold
from ..netsim import Gather, Msg, ThresholdRule
from .base import Dap, StorageServer, cfg_gather, max_tag


class TreasServerState:
    def __init__(self, server: StorageServer, cfg):
        self.server = server
        self.cfg = cfg
        self.code = cfg.code
        self.my_index = cfg.servers.index(server.pid) + 1
        seed_elem = encode(self.code.n, self.code.k, server.sim.v0)[self.my_index - 1]
        self.list: dict[Tag, object] = {T0: seed_elem}
        self.staging: dict[tuple, dict] = {}   # (tag, source cfg) -> {index: element}
        self.recons: set[str] = set()
        server.register(cfg.cfg_id, "QUERY-TAG", self.on_query_tag)
        server.register(cfg.cfg_id, "QUERY-LIST", self.on_query_list)
        server.register(cfg.cfg_id, "WRITE", self.on_write)
        server.register(cfg.cfg_id, "REQ-FW-CODE-ELEM", self.on_req_fw)
        server.register(cfg.cfg_id, "FWD-CODE-ELEM", self.on_fwd)

    # ------------------------------------------------------------- list core

    def _insert(self, tag: Tag, elem) -> bool:
        """Add a (tag, element) pair unless the tag is already known; a tag
        whose element was blanked stays blank. Then re-apply the bound."""
        if tag in self.list:
            return False
        self.list[tag] = elem
        keep = sorted(self.list, key=Tag.sort_key)[-(self.code.delta + 1):]
        for t in self.list:
            if t not in keep:
                self.list[t] = None
        return True

    def _sorted_items(self):
        return sorted(self.list.items(), key=lambda kv: kv[0].sort_key())

    def _emit(self):
        entries = tuple((t, e.orig_len if e is not None else None)
                        for t, e in self._sorted_items())
        self.server.emit_state(self.cfg.cfg_id, "treas-list", entries=entries)

    # -------------------------------------------------------------- handlers

    def on_query_tag(self, src, msg):
        self.server.reply(src, msg, "TAG", tag=max(self.list, key=Tag.sort_key))

    def on_query_list(self, src, msg):
        self.server.reply(src, msg, "LIST", listing=tuple(self._sorted_items()))

    def on_write(self, src, msg):
        if self._insert(msg.tag, msg.elem):
            self._emit()
        self.server.reply(src, msg, "ACK")

    def on_req_fw(self, src, msg):
        """Source side: fan my element for the tag out to the target servers.
        src is the reconfigurer; targets ack it directly."""
        elem = self.list.get(msg.tag)
        if elem is None:
            return
        target = self.server.sim.registry[msg.cfg2]
        for s in target.servers:
            self.server.sim.send(self.server.pid, s,
                                 Msg("FWD-CODE-ELEM", rid=msg.rid, cfg=msg.cfg2,
                                     cfg2=msg.cfg, tag=msg.tag, elem=elem,
                                     locs=(src,)))

    def on_fwd(self, src, msg):
        rc_op = msg.rid[0]
        tag = msg.tag
        if rc_op not in self.recons:
            if tag not in self.list:
                stage = self.staging.setdefault((tag, msg.cfg2), {})
                stage[msg.elem.index] = msg.elem
                source = self.server.sim.registry[msg.cfg2].code
                if len(stage) >= source.k:
                    value = decode(source.n, source.k, stage.values())
                    del self.staging[(tag, msg.cfg2)]
                    mine = encode(self.code.n, self.code.k, value)[self.my_index - 1]
                    if self._insert(tag, mine):
                        self._emit()
            if tag in self.list:
                self.recons.add(rc_op)
        if tag in self.list:
            self.server.sim.send(self.server.pid, msg.locs[0],
                                 Msg("FWD-ACK", rid=msg.rid, cfg=msg.cfg))


class TreasDap(Dap):
    flavor = "treas"
    template = "A1"

    def get_tag(self, ctx, cfg):
        replies = yield cfg_gather(cfg, Msg("QUERY-TAG", cfg=cfg.cfg_id),
                                   label="treas.get-tag")
        return max_tag(replies)

    def put_data(self, ctx, cfg, tv: TaggedValue):
        elems = encode(cfg.code.n, cfg.code.k, tv.value)
        sends = tuple((s, Msg("WRITE", cfg=cfg.cfg_id, tag=tv.tag, elem=elems[i]))
                      for i, s in enumerate(cfg.servers))
        yield Gather(sends=sends, expect=frozenset(cfg.servers),
                     rule=ThresholdRule(treas_threshold(cfg.code.n, cfg.code.k)),
                     label="treas.put-data")

    def get_data(self, ctx, cfg):
        code = cfg.code
        rounds = 0
        while True:
            rounds += 1
            replies = yield cfg_gather(cfg, Msg("QUERY-LIST", cfg=cfg.cfg_id),
                                       label="treas.get-data")
            lists = [dict(m.listing) for _, m in sorted(replies.items())]
            tag_seen: dict[Tag, int] = {}
            tag_elems: dict[Tag, dict] = {}
            for lst in lists:
                for t, e in lst.items():
                    tag_seen[t] = tag_seen.get(t, 0) + 1
                    if e is not None:
                        tag_elems.setdefault(t, {})[e.index] = e
            t_star = max((t for t, c in tag_seen.items() if c >= code.k),
                         key=Tag.sort_key)
            dec = [t for t, es in tag_elems.items() if len(es) >= code.k]
            t_dec = max(dec, key=Tag.sort_key) if dec else None
            done = t_dec == t_star
            ctx.sim.emit("state-change", ctx.pid,
                         {"comp": "treas-eval", "op": ctx.op_id, "cfg": cfg.cfg_id,
                          "round": rounds, "t_star": t_star, "t_dec": t_dec,
                          "decodable": done})
            if done:
                value = decode(code.n, code.k, tag_elems[t_star].values())
                return TaggedValue(t_star, value)
            ctx.diag = {"why": "undecodable-max-tag", "cfg": cfg.cfg_id,
                        "round": rounds, "t_star": str(t_star), "t_dec": str(t_dec)}

    def attach_server(self, server, cfg):
        TreasServerState(server, cfg)
