"""Deterministic discrete-event simulator for message-passing protocols.

Clock is an integer tick counter. Local computation is free: a handler runs at
the tick its triggering event carries, and every message it sends departs at
that same tick. Message delays are drawn per message from a PRNG keyed on
(seed, message id), or fixed by an adversary policy. Pending events are
processed in (time, id) order, so a (scenario, seed) pair always produces the
same trace, byte for byte.

Crash semantics: a crash takes effect at its scheduled tick, before message
deliveries of that tick. Messages already in flight from a crashed process are
still delivered; deliveries to a crashed process are dropped without a trace
event.
"""

from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .codec import CodedElement
from .core import ConfigEntry, Configuration, ProcessId, Tag

EVENT_KINDS = ("invoke", "respond", "send", "deliver", "crash",
               "state-change", "consensus-decide")

ADVERSARIES = ("uniform", "fast-recon-slow-client", "fifo")

# Named protocol defects that can be switched on to exercise the checkers.
MUTATIONS = ("server-tag-comparison", "f-preference")


@dataclass
class TraceEvent:
    time: int
    kind: str
    subject: str
    detail: dict


@dataclass(frozen=True)
class Msg:
    """Protocol message. `rid` ties replies to the round that asked for them."""

    kind: str
    rid: tuple = ()
    cfg: int | None = None
    cfg2: int | None = None
    tag: Tag | None = None
    value: bytes | None = None
    elem: CodedElement | None = None
    listing: tuple | None = None   # ((Tag, CodedElement | None), ...)
    entry: ConfigEntry | None = None
    locs: tuple | None = None      # ProcessIds
    num: int | None = None


def payload_cost(msg: Msg, registry: dict[int, Configuration]):
    """(value bytes, header bytes) carried by one message, as exact fractions.

    A raw value counts as |v|. A coded element counts |v|/k of value plus the
    remainder of its physical payload as header. Everything else (tags, config
    entries, location sets) is metadata and costs nothing here.
    """
    val = Fraction(0)
    hdr = Fraction(0)
    if msg.value is not None:
        val += len(msg.value)

    def add_elem(e: CodedElement, cfg_id: int):
        nonlocal val, hdr
        k = registry[cfg_id].code.k
        share = Fraction(e.orig_len, k)
        val += share
        hdr += Fraction(len(e.payload)) - share

    if msg.elem is not None:
        # forwarded elements are coded under the sending configuration
        add_elem(msg.elem, msg.cfg2 if msg.kind == "FWD-CODE-ELEM" else msg.cfg)
    if msg.listing is not None:
        for _tag, e in msg.listing:
            if e is not None:
                add_elem(e, msg.cfg)
    return val, hdr


# ------------------------------------------------------------- gather rules


@dataclass(frozen=True)
class ThresholdRule:
    m: int

    def satisfied(self, replies):
        return len(replies) >= self.m


@dataclass(frozen=True)
class QuorumRule:
    quorums: tuple[frozenset[ProcessId], ...]

    def satisfied(self, replies):
        acked = set(replies)
        return any(q <= acked for q in self.quorums)


@dataclass(frozen=True)
class FirstRule:
    """Complete on the first reply, or the first reply the filter accepts."""

    match: object = None

    def satisfied(self, replies):
        if self.match is None:
            return bool(replies)
        return any(self.match(m) for m in replies.values())


@dataclass
class Gather:
    """One client round: transmit `sends`, then wait on `expect` until `rule` holds."""

    sends: tuple
    expect: frozenset
    rule: object
    label: str = ""


class Process:
    def __init__(self, sim: "Simulator", pid: ProcessId):
        self.sim = sim
        self.pid = pid
        sim.add_process(self)

    def on_message(self, src: ProcessId, msg: Msg):
        raise NotImplementedError


class Simulator:
    def __init__(self, registry, seed=0, d_min=1, d_max=1, adversary="uniform",
                 consensus_delay=0, mutations=(), v0=b""):
        if d_min < 1 or d_max < d_min:
            raise ValueError("need 1 <= d_min <= d_max")
        if adversary not in ADVERSARIES:
            raise ValueError(f"unknown adversary {adversary!r}")
        self.registry = dict(registry)
        self.seed = seed
        self.d_min = d_min
        self.d_max = d_max
        self.adversary = adversary
        self.consensus_delay = consensus_delay
        self.mutations = frozenset(mutations)
        if not self.mutations <= set(MUTATIONS):
            raise ValueError(f"unknown mutations {sorted(self.mutations - set(MUTATIONS))}")
        self.v0 = v0
        self.now = 0
        self.events: list[TraceEvent] = []
        self.crashed: set[ProcessId] = set()
        self.processes: dict[ProcessId, Process] = {}
        self.exhausted = False
        self.stats = {"pops": 0, "sends": 0}
        self._heap: list = []
        self._ids = itertools.count(1)
        self._chan_last: dict[tuple[ProcessId, ProcessId], int] = {}
        self._triggers: dict[tuple[str, str], list] = {}

    # -------------------------------------------------------------- plumbing

    def add_process(self, proc: Process):
        if proc.pid in self.processes:
            raise ValueError(f"duplicate process {proc.pid}")
        self.processes[proc.pid] = proc

    def emit(self, kind: str, subject, detail: dict):
        assert kind in EVENT_KINDS
        self.events.append(TraceEvent(self.now, kind, str(subject), detail))

    def schedule(self, time: int, fn, owner: ProcessId | None = None):
        if time < self.now:
            raise ValueError("cannot schedule in the past")
        heapq.heappush(self._heap, (time, next(self._ids), "action", (owner, fn)))

    def schedule_crash(self, pid: ProcessId, time: int):
        heapq.heappush(self._heap, (time, next(self._ids), "crash", pid))

    def add_trigger(self, op_id: str, action: str, fn):
        """Run fn when the named sub-action of op_id responds."""
        self._triggers.setdefault((op_id, action), []).append(fn)

    def _fire_triggers(self, op_id: str, action: str):
        for fn in self._triggers.pop((op_id, action), []):
            fn()

    # ------------------------------------------------------------- messaging

    def send(self, src: ProcessId, dst: ProcessId, msg: Msg):
        if src in self.crashed:
            return
        if dst not in self.processes:
            raise ValueError(f"send to unknown process {dst}")
        mid = next(self._ids)
        at = self.now + self._delay(src, dst, mid)
        if self.adversary == "fifo":
            at = max(at, self._chan_last.get((src, dst), 0))
            self._chan_last[(src, dst)] = at
        val, hdr = payload_cost(msg, self.registry)
        self.stats["sends"] += 1
        self.emit("send", src, {"msg": mid, "dst": str(dst), "kind": msg.kind,
                                "cfg": msg.cfg, "op": msg.rid[0] if msg.rid else None,
                                "val": val, "hdr": hdr})
        heapq.heappush(self._heap, (at, mid, "deliver", (src, dst, msg, mid)))

    def _delay(self, src: ProcessId, dst: ProcessId, mid: int) -> int:
        if self.adversary == "fast-recon-slow-client":
            recon = "reconfigurer" in (src.role, dst.role)
            return self.d_min if recon else self.d_max
        rng = random.Random(f"{self.seed}:{mid}")
        return rng.randint(self.d_min, self.d_max)

    # ------------------------------------------------------------- main loop

    def run(self, max_events: int = 500_000) -> bool:
        """Process events until quiescent. False means the budget ran out."""
        while self._heap:
            if self.stats["pops"] >= max_events:
                self.exhausted = True
                return False
            t, _order, kind, data = heapq.heappop(self._heap)
            self.stats["pops"] += 1
            self.now = t
            if kind == "crash":
                if data not in self.crashed:
                    self.crashed.add(data)
                    self.emit("crash", data, {})
            elif kind == "deliver":
                src, dst, msg, mid = data
                if dst in self.crashed:
                    continue
                self.emit("deliver", dst, {"msg": mid, "src": str(src), "kind": msg.kind})
                self.processes[dst].on_message(src, msg)
            else:
                owner, fn = data
                if owner is not None and owner in self.crashed:
                    continue
                fn()
        return True


# ------------------------------------------------------- client op machinery


@dataclass
class OpCtx:
    """Per-operation context handed to protocol generators."""

    sim: Simulator
    pid: ProcessId
    op_id: str
    diag: dict | None = None
    _sub: itertools.count = field(default_factory=lambda: itertools.count(1))

    @property
    def registry(self):
        return self.sim.registry

    def cfg(self, cfg_id: int) -> Configuration:
        return self.sim.registry[cfg_id]

    def scoped(self, scope: str, name: str, attrs: dict, inner, describe=None):
        """Wrap a sub-operation generator with invoke/respond trace events."""
        sid = f"{self.op_id}/{next(self._sub)}"
        self.sim.emit("invoke", self.pid,
                      {"scope": scope, "id": sid, "op": self.op_id, "name": name, **attrs})
        result = yield from inner
        out = describe(result) if describe else {}
        self.sim.emit("respond", self.pid,
                      {"scope": scope, "id": sid, "op": self.op_id, "name": name, **out})
        self.sim._fire_triggers(self.op_id, name)
        return result

    def action(self, name, attrs, inner, describe=None):
        return self.scoped("action", name, attrs, inner, describe)

    def dap(self, name, cfg_id, inner, describe=None, attrs=None):
        return self.scoped("dap", name, {"cfg": cfg_id, **(attrs or {})}, inner, describe)


@dataclass
class RunningOp:
    op_id: str
    name: str
    ctx: OpCtx
    gen: object
    invoked_at: int
    rounds: itertools.count = field(default_factory=lambda: itertools.count(1))
    rid: tuple = ()
    gather: Gather | None = None
    replies: dict = field(default_factory=dict)


class ClientProcess(Process):
    """Runs submitted operations one at a time, each a generator of Gathers."""

    def __init__(self, sim, pid):
        super().__init__(sim, pid)
        self.backlog: list = []
        self.current: RunningOp | None = None
        self.completed: list = []
        self._op_seq = itertools.count(1)

    def submit(self, name: str, factory, detail: dict | None = None):
        """Queue an operation; factory(ctx) returns its generator."""
        self.backlog.append((name, factory, detail or {}))
        if self.current is None:
            self._start_next()

    def _start_next(self):
        if not self.backlog:
            return
        name, factory, detail = self.backlog.pop(0)
        op_id = f"{self.pid}#{next(self._op_seq)}"
        ctx = OpCtx(self.sim, self.pid, op_id)
        self.sim.emit("invoke", self.pid, {"scope": "op", "id": op_id, "name": name, **detail})
        self.current = RunningOp(op_id, name, ctx, factory(ctx), self.sim.now)
        self._advance(None)

    def _advance(self, inbox):
        op = self.current
        try:
            gather = op.gen.send(inbox)
        except StopIteration as stop:
            detail = stop.value if isinstance(stop.value, dict) else {}
            self.sim.emit("respond", self.pid,
                          {"scope": "op", "id": op.op_id, "name": op.name, **detail})
            self.completed.append((op.op_id, op.name, op.invoked_at, self.sim.now, detail))
            self.current = None
            self.sim._fire_triggers(op.op_id, "op")
            self._start_next()
            return
        if not gather.sends:
            raise RuntimeError(f"{op.op_id}: gather with no sends")
        op.rid = (op.op_id, next(op.rounds))
        op.gather = gather
        op.replies = {}
        for dst, msg in gather.sends:
            self.sim.send(self.pid, dst, replace(msg, rid=op.rid))

    def on_message(self, src, msg):
        op = self.current
        if op is None or op.gather is None:
            return
        if msg.rid != op.rid or src not in op.gather.expect or src in op.replies:
            return
        op.replies[src] = msg
        if op.gather.rule.satisfied(op.replies):
            gather, op.gather = op.gather, None
            self._advance(dict(op.replies))

    def pending_report(self):
        """Operations not yet completed, for the non-termination report."""
        out = []
        if self.current is not None:
            op = self.current
            out.append({"op": op.op_id, "name": op.name, "invoked_at": op.invoked_at,
                        "waiting_on": op.gather.label if op.gather else None,
                        "have_replies": sorted(str(p) for p in op.replies),
                        "diag": op.ctx.diag})
        for name, _f, _d in self.backlog:
            out.append({"op": None, "name": name, "invoked_at": None,
                        "waiting_on": "not started", "have_replies": [], "diag": None})
        return out


# ------------------------------------------------------------ trace encoding


def jsonable(x):
    if isinstance(x, Tag):
        return [x.z, str(x.w)]
    if isinstance(x, ProcessId):
        return str(x)
    if isinstance(x, bytes):
        return x.hex()
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, CodedElement):
        return {"index": x.index, "nbytes": len(x.payload), "orig_len": x.orig_len}
    if isinstance(x, ConfigEntry):
        return [x.cfg, x.status]
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (set, frozenset)):
        return sorted(jsonable(v) for v in x)
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    return x


def to_jsonl(events: list[TraceEvent]) -> str:
    lines = []
    for e in events:
        lines.append(json.dumps({"time": e.time, "kind": e.kind, "subject": e.subject,
                                 "detail": jsonable(e.detail)}, separators=(",", ":")))
    return "\n".join(lines) + "\n"
