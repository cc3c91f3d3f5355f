"""Data access primitive interface, the storage server shell, and the two
generic client templates that turn any conforming DAP into an atomic register.

A DAP implementation provides three client-side generators (get_tag, get_data,
put_data) plus a server attachment hook. Template A1 reads with a propagation
phase (get-data then put-data); template A2 reads with get-data alone and is
sound only for DAPs whose sequential get-datas return non-decreasing tags.
"""

from __future__ import annotations

from ..core import Configuration, Tag, TaggedValue, treas_threshold
from ..netsim import Gather, Msg, Process, QuorumRule, ThresholdRule


class StorageServer(Process):
    """Message dispatch shell; protocol state lives in per-config components."""

    def __init__(self, sim, pid):
        super().__init__(sim, pid)
        self.handlers = {}

    def register(self, cfg_id: int, kind: str, fn):
        key = (kind, cfg_id)
        if key in self.handlers:
            raise ValueError(f"{self.pid}: duplicate handler {key}")
        self.handlers[key] = fn

    def on_message(self, src, msg):
        self.handlers[(msg.kind, msg.cfg)](src, msg)

    def reply(self, dst, req: Msg, kind: str, **fields):
        self.sim.send(self.pid, dst, Msg(kind, rid=req.rid, cfg=req.cfg, **fields))

    def emit_state(self, cfg_id: int, comp: str, **fields):
        self.sim.emit("state-change", self.pid, {"cfg": cfg_id, "comp": comp, **fields})


def access_rule(cfg: Configuration):
    """Completion rule for hearing from enough servers of cfg."""
    if cfg.flavor == "treas":
        return ThresholdRule(treas_threshold(cfg.code.n, cfg.code.k))
    if cfg.flavor == "abd":
        return QuorumRule(cfg.quorums.quorums)
    return ThresholdRule(len(cfg.servers) // 2 + 1)


def cfg_gather(cfg: Configuration, msg: Msg, rule=None, label="", to=None, expect=None):
    targets = tuple(to) if to is not None else cfg.servers
    return Gather(sends=tuple((s, msg) for s in targets),
                  expect=frozenset(expect) if expect is not None else frozenset(targets),
                  rule=rule or access_rule(cfg),
                  label=label or msg.kind)


def max_tag(replies) -> Tag:
    return max(m.tag for m in replies.values())


def max_pair(replies) -> TaggedValue:
    best = max(replies.values(), key=lambda m: m.tag.sort_key())
    return TaggedValue(best.tag, best.value)


class Dap:
    flavor = ""
    template = ""  # "A1" or "A2"

    def get_tag(self, ctx, cfg):
        raise NotImplementedError

    def get_data(self, ctx, cfg):
        raise NotImplementedError

    def put_data(self, ctx, cfg, tv: TaggedValue):
        raise NotImplementedError

    def attach_server(self, server: StorageServer, cfg: Configuration):
        raise NotImplementedError


def describe_tag(tag):
    return {"tag": tag}


def describe_pair(tv):
    return {"tag": tv.tag, "value": tv.value}


def traced_get_tag(ctx, dap, cfg):
    return ctx.dap("get-tag", cfg.cfg_id, dap.get_tag(ctx, cfg), describe_tag)


def traced_get_data(ctx, dap, cfg):
    return ctx.dap("get-data", cfg.cfg_id, dap.get_data(ctx, cfg), describe_pair)


def traced_put_data(ctx, dap, cfg, tv):
    return ctx.dap("put-data", cfg.cfg_id, dap.put_data(ctx, cfg, tv),
                   attrs={"tag": tv.tag, "value": tv.value})


def template_read(dap: Dap, cfg: Configuration):
    """Single-configuration atomic read per the DAP's template."""
    def factory(ctx):
        tv = yield from traced_get_data(ctx, dap, cfg)
        if dap.template == "A1":
            yield from traced_put_data(ctx, dap, cfg, tv)
        return {"tag": tv.tag, "value": tv.value, "cfg": cfg.cfg_id}
    return factory


def template_write(dap: Dap, cfg: Configuration, value: bytes):
    """Single-configuration atomic write: fetch max tag, bump, propagate."""
    def factory(ctx):
        t = yield from traced_get_tag(ctx, dap, cfg)
        tag = Tag(t.z + 1, ctx.pid)
        yield from traced_put_data(ctx, dap, cfg, TaggedValue(tag, value))
        return {"tag": tag, "value": value, "cfg": cfg.cfg_id}
    return factory
