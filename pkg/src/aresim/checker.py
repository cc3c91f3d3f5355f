"""Trace checkers.

Four independent families, all driven by the trace event list (whose order is
the precedence order):

- register atomicity, judged against the monotone tagged register: write tags
  strictly increase along any serialization and a read returns exactly the
  current (tag, value). Tags are part of each operation's observable response
  here, which is what lets the pairwise checker and the brute-force
  linearizability search below agree exactly.
- data-access consistency: completed put-data visibility (C1), returned pairs
  trace back to real put-data invocations (C2), and, for flavors that claim
  it, non-decreasing tags across sequential get-data (C3).
- configuration sequence lemmas: agreement on ids per slot, temporal prefix
  growth, finalized-prefix monotonicity, installed configs staying visible.
- liveness for coded reads: a read overlapping at most delta writes must
  complete, unless crashes exceed tolerance or the event budget ran out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import T0, Configuration, ProcessId, Tag, treas_threshold


@dataclass
class Violation:
    rule: str
    msg: str
    subjects: tuple = ()

    def __str__(self):
        who = f" [{', '.join(map(str, self.subjects))}]" if self.subjects else ""
        return f"{self.rule}{who}: {self.msg}"


# ------------------------------------------------------------- trace parsing


@dataclass
class OpRecord:
    op_id: str
    client: str
    kind: str                 # "read" | "write"
    inv_idx: int
    inv_time: int
    resp_idx: int | None = None
    resp_time: int | None = None
    tag: Tag | None = None
    value: bytes | None = None

    @property
    def complete(self):
        return self.resp_idx is not None


def extract_ops(events) -> list[OpRecord]:
    """Top-level read/write operations, with tags/values from responses or,
    for writes that never responded, from their first put-data invocation."""
    ops: dict[str, OpRecord] = {}
    for idx, e in enumerate(events):
        d = e.detail
        if d.get("scope") == "op" and d.get("name") in ("read", "write"):
            if e.kind == "invoke":
                ops[d["id"]] = OpRecord(d["id"], e.subject, d["name"], idx, e.time)
            elif e.kind == "respond":
                rec = ops[d["id"]]
                rec.resp_idx, rec.resp_time = idx, e.time
                rec.tag, rec.value = d.get("tag"), d.get("value")
        elif (e.kind == "invoke" and d.get("scope") == "dap"
              and d.get("name") == "put-data" and d.get("op") in ops):
            rec = ops[d["op"]]
            if rec.kind == "write" and rec.tag is None:
                rec.tag, rec.value = d["tag"], d["value"]
    return list(ops.values())


@dataclass
class DapRecord:
    dap_id: str
    op_id: str
    client: str
    name: str                 # get-tag | get-data | put-data
    cfg: int
    inv_idx: int
    resp_idx: int | None = None
    tag: Tag | None = None
    value: bytes | None = None

    @property
    def complete(self):
        return self.resp_idx is not None


def extract_dap_ops(events) -> list[DapRecord]:
    recs: dict[str, DapRecord] = {}
    for idx, e in enumerate(events):
        d = e.detail
        if d.get("scope") != "dap":
            continue
        if e.kind == "invoke":
            rec = DapRecord(d["id"], d["op"], e.subject, d["name"], d["cfg"], idx)
            if d["name"] == "put-data":
                rec.tag, rec.value = d["tag"], d["value"]
            recs[d["id"]] = rec
        elif e.kind == "respond":
            rec = recs[d["id"]]
            rec.resp_idx = idx
            if rec.name in ("get-tag", "get-data"):
                rec.tag = d.get("tag")
            if rec.name == "get-data":
                rec.value = d.get("value")
    return list(recs.values())


def crashed_processes(events) -> set[str]:
    return {e.subject for e in events if e.kind == "crash"}


# ---------------------------------------------------------- atomicity (tags)


def atomic_closure(ops):
    """Ops the register checks range over: complete ops, plus incomplete
    writes a completed read witnessed and no other write explains. Any other
    incomplete op is droppable from any linearization, so both this checker
    and the brute-force search ignore it. An incomplete write tagged T0 is
    never included: the genesis state already explains that pair, and the
    write itself could never be serialized anyway."""
    need = {(o.tag, o.value) for o in ops if o.kind == "read" and o.complete}
    covered = {(o.tag, o.value) for o in ops if o.kind == "write" and o.complete}
    keep = []
    for o in ops:
        if o.complete:
            keep.append(o)
        elif o.kind == "write" and o.tag is not None and o.tag != T0:
            pair = (o.tag, o.value)
            if pair in need and pair not in covered:
                keep.append(o)
                covered.add(pair)
    return keep


def check_atomicity_ops(ops, v0=b"") -> list[Violation]:
    out = []
    closure = atomic_closure(ops)
    writes = [o for o in closure if o.kind == "write"]
    by_tag: dict = {}
    for w in writes:
        if not w.tag > T0:
            out.append(Violation("write-order",
                                 f"write {w.op_id} carries tag {w.tag}, not above the "
                                 "initial tag", (w.op_id,)))
        if w.tag in by_tag:
            out.append(Violation("write-tags-unique",
                                 f"writes {by_tag[w.tag].op_id} and {w.op_id} share tag {w.tag}",
                                 (by_tag[w.tag].op_id, w.op_id)))
        else:
            by_tag[w.tag] = w
    for r in closure:
        if r.kind != "read":
            continue
        if r.tag == T0:
            if r.value != v0:
                out.append(Violation("read-pair",
                                     f"read {r.op_id} returned initial tag with foreign value",
                                     (r.op_id,)))
        elif r.tag not in by_tag:
            out.append(Violation("read-pair",
                                 f"read {r.op_id} returned tag {r.tag} no write produced",
                                 (r.op_id,)))
        elif by_tag[r.tag].value != r.value:
            out.append(Violation("read-pair",
                                 f"read {r.op_id} returned a value differing from write {by_tag[r.tag].op_id}",
                                 (r.op_id, by_tag[r.tag].op_id)))
    for a in closure:
        if not a.complete:
            continue
        for b in closure:
            if b is a or not a.resp_idx < b.inv_idx:
                continue
            # a responded strictly before b was invoked
            if a.kind == "write" and b.kind == "write" and not b.tag > a.tag:
                out.append(Violation("write-order",
                                     f"{b.op_id} follows {a.op_id} but tag {b.tag} <= {a.tag}",
                                     (a.op_id, b.op_id)))
            elif a.kind == "write" and b.kind == "read" and b.tag < a.tag:
                out.append(Violation("read-skips-write",
                                     f"read {b.op_id} follows write {a.op_id} but returned older tag",
                                     (a.op_id, b.op_id)))
            elif a.kind == "read" and b.kind == "write" and not b.tag > a.tag:
                out.append(Violation("write-behind-read",
                                     f"write {b.op_id} follows read {a.op_id} but tag {b.tag} <= {a.tag}",
                                     (a.op_id, b.op_id)))
            elif a.kind == "read" and b.kind == "read" and b.tag < a.tag:
                out.append(Violation("read-regression",
                                     f"read {b.op_id} follows read {a.op_id} but returned older tag",
                                     (a.op_id, b.op_id)))
    return out


def check_atomicity(events, v0=b"") -> list[Violation]:
    return check_atomicity_ops(extract_ops(events), v0)


def brute_force_linearizable(ops, v0=b"") -> bool:
    """Exhaustive search for a legal serialization of the monotone tagged
    register. Incomplete writes may be included or dropped; incomplete reads
    are always dropped. Refuses histories beyond 10 operations."""
    if len(ops) > 10:
        raise ValueError(f"history of {len(ops)} ops is too large for "
                         "exhaustive search (limit 10)")
    ops = [o for o in ops if o.complete or (o.kind == "write" and o.tag is not None)]
    n = len(ops)
    mandatory = frozenset(i for i, o in enumerate(ops) if o.complete)
    preds = []
    for i, o in enumerate(ops):
        preds.append(frozenset(
            j for j, p in enumerate(ops)
            if j != i and p.complete and p.resp_idx < o.inv_idx))
    dead: set[frozenset] = set()

    def dfs(done: frozenset, cur_tag, cur_value) -> bool:
        if mandatory <= done:
            return True
        if done in dead:
            return False
        ready = [i for i in range(n)
                 if i not in done and preds[i] <= done]
        # reads of the current pair first (state unchanged), then writes by tag
        ready.sort(key=lambda i: (ops[i].kind == "write",
                                  ops[i].tag.sort_key() if ops[i].tag else (0, (0, 0))))
        for i in ready:
            o = ops[i]
            if o.kind == "write":
                if o.tag > cur_tag and dfs(done | {i}, o.tag, o.value):
                    return True
            else:
                if (o.tag, o.value) == (cur_tag, cur_value) and dfs(done | {i}, cur_tag, cur_value):
                    return True
        dead.add(done)
        return False

    return dfs(frozenset(), T0, v0)


# --------------------------------------------------------- DAP consistency


def check_dap_consistency(events, v0=b"", flavors: dict[int, str] | None = None,
                          c3_flavors=("ldr",)) -> list[Violation]:
    out = []
    daps = extract_dap_ops(events)
    puts = [d for d in daps if d.name == "put-data"]
    puts_done = [d for d in puts if d.complete]
    gets = [d for d in daps if d.name in ("get-tag", "get-data") and d.complete]

    # C1: a completed put-data is visible to gets invoked after it, same cfg
    for phi in puts_done:
        for pi in gets:
            if pi.cfg == phi.cfg and pi.inv_idx > phi.resp_idx and pi.tag < phi.tag:
                out.append(Violation("C1",
                                     f"{pi.name} {pi.dap_id} in cfg {pi.cfg} returned {pi.tag} "
                                     f"after put-data {phi.dap_id} of {phi.tag} completed",
                                     (phi.dap_id, pi.dap_id)))

    # C2: a returned pair is the initial one or comes from a put-data (any
    # configuration; state transfer moves pairs across them) invoked before
    # the get-data responded
    for pi in (d for d in gets if d.name == "get-data"):
        if pi.tag == T0:
            if pi.value != v0:
                out.append(Violation("C2", f"get-data {pi.dap_id} returned initial tag "
                                           "with a non-initial value", (pi.dap_id,)))
            continue
        if not any(phi.tag == pi.tag and phi.value == pi.value and phi.inv_idx < pi.resp_idx
                   for phi in puts):
            out.append(Violation("C2",
                                 f"get-data {pi.dap_id} returned {pi.tag} matching no "
                                 "put-data invoked before it responded", (pi.dap_id,)))

    # C3: sequential get-data tags never regress, for flavors that claim it
    if flavors:
        claimed = {cfg for cfg, fl in flavors.items() if fl in c3_flavors}
        gd = [d for d in gets if d.name == "get-data" and d.cfg in claimed]
        for a in gd:
            for b in gd:
                if a.cfg == b.cfg and a.resp_idx < b.inv_idx and b.tag < a.tag:
                    out.append(Violation("C3",
                                         f"get-data {b.dap_id} follows {a.dap_id} in cfg {a.cfg} "
                                         f"but returned {b.tag} < {a.tag}",
                                         (a.dap_id, b.dap_id)))
    return out


# ------------------------------------------------- configuration sequence


@dataclass
class SeqResult:
    rc_id: str
    op_id: str
    client: str
    inv_idx: int
    resp_idx: int | None = None
    seq: tuple = ()
    mu: int | None = None


def extract_seq_results(events) -> list[SeqResult]:
    recs: dict[str, SeqResult] = {}
    for idx, e in enumerate(events):
        d = e.detail
        if d.get("scope") != "action" or d.get("name") != "read-config":
            continue
        if e.kind == "invoke":
            recs[d["id"]] = SeqResult(d["id"], d["op"], e.subject, idx)
        elif e.kind == "respond":
            rec = recs[d["id"]]
            rec.resp_idx = idx
            rec.seq = tuple(d["seq"])
            rec.mu = d["mu"]
    return [r for r in recs.values() if r.resp_idx is not None]


def check_reconfig(events) -> list[Violation]:
    out = []
    results = extract_seq_results(events)

    # slot agreement: every observed sequence assigns the same cfg per index
    slots: dict[int, tuple[int, str]] = {}
    for r in results:
        ids = [e.cfg for e in r.seq]
        if len(set(ids)) != len(ids):
            out.append(Violation("seq-agreement",
                                 f"{r.rc_id} observed a duplicated configuration id", (r.rc_id,)))
        for i, c in enumerate(ids):
            if i in slots and slots[i][0] != c:
                out.append(Violation("seq-agreement",
                                     f"slot {i} holds cfg {slots[i][0]} per {slots[i][1]} "
                                     f"but cfg {c} per {r.rc_id}", (slots[i][1], r.rc_id)))
            slots.setdefault(i, (c, r.rc_id))

    # temporal prefix growth and finalized-prefix monotonicity
    for a in results:
        for b in results:
            if a.resp_idx < b.inv_idx:
                if len(a.seq) > len(b.seq):
                    out.append(Violation("seq-prefix",
                                         f"{b.rc_id} observed fewer configurations than the "
                                         f"earlier {a.rc_id}", (a.rc_id, b.rc_id)))
                if a.mu is not None and b.mu is not None and b.mu < a.mu:
                    out.append(Violation("f-stability",
                                         f"finalized prefix regressed from {a.mu} ({a.rc_id}) "
                                         f"to {b.mu} ({b.rc_id})", (a.rc_id, b.rc_id)))

    # per parent configuration at most one decided successor
    decided: dict[int, int] = {}
    for e in events:
        if e.kind == "consensus-decide":
            cfg, dec = e.detail["cfg"], e.detail["decided"]
            if cfg in decided and decided[cfg] != dec:
                out.append(Violation("decide-unique",
                                     f"cfg {cfg} decided both {decided[cfg]} and {dec}",
                                     (str(cfg),)))
            decided.setdefault(cfg, dec)

    # progress: a completed reconfiguration's cfg shows up in every sequence
    # read afterwards
    installs = []
    for idx, e in enumerate(events):
        d = e.detail
        if e.kind == "respond" and d.get("scope") == "op" and d.get("name") == "reconfig" \
                and d.get("installed") is not None:
            installs.append((idx, d["installed"], d["id"]))
    for idx, cfg_id, op_id in installs:
        for r in results:
            if r.inv_idx > idx and cfg_id not in [e.cfg for e in r.seq]:
                out.append(Violation("progress",
                                     f"cfg {cfg_id} installed by {op_id} missing from later "
                                     f"read-config {r.rc_id}", (op_id, r.rc_id)))
    return out


# ------------------------------------------------------------------ liveness


def _first_evals(events) -> dict[tuple, int]:
    out: dict[tuple, int] = {}
    for e in events:
        if e.kind == "state-change" and e.detail.get("comp") == "treas-eval":
            out.setdefault((e.detail["op"], e.detail.get("cfg")), e.time)
    return out


def _lambda_size(writes, r, t2: int) -> int:
    """Writes that can starve read r whose first evaluation window closed at
    t2: invoked before t2, not finished before the read began, and tagged
    above the newest write that did finish by then (stragglers from the past
    cannot blank anything the read needs, so they do not count)."""
    sigma = max((w.tag for w in writes if w.tag is not None
                 and w.complete and w.resp_time < r.inv_time), default=T0)
    return sum(1 for w in writes
               if w.inv_time < t2
               and not (w.complete and w.resp_time < r.inv_time)
               and (w.tag is None or w.tag > sigma))


def read_concurrency(events) -> dict[str, int]:
    """|Lambda| per read, anchored at the read's first list evaluation."""
    ops = extract_ops(events)
    first_eval: dict[str, int] = {}
    for (op_id, _cfg), t in _first_evals(events).items():
        first_eval.setdefault(op_id, t)
    writes = [o for o in ops if o.kind == "write"]
    return {r.op_id: _lambda_size(writes, r, first_eval[r.op_id])
            for r in ops if r.kind == "read" and r.op_id in first_eval}


def check_liveness(events, registry: dict[int, Configuration],
                   exhausted: bool = False) -> list[Violation]:
    """A read stuck inside a coded configuration while overlapping at most
    that configuration's delta writes must complete, provided the budget did
    not run out and crashes stayed within tolerance. Reads stuck elsewhere
    (a directory fetch gap, a lost quorum) are outside this bound."""
    if exhausted:
        return []
    out = []
    crashed = crashed_processes(events)
    ops = extract_ops(events)
    first_eval = _first_evals(events)
    writes = [o for o in ops if o.kind == "write"]
    stuck: dict[str, int] = {}
    for rec in extract_dap_ops(events):
        if not rec.complete:
            stuck[rec.op_id] = rec.cfg
    for r in ops:
        if r.kind != "read" or r.complete or r.client in crashed:
            continue
        cfg = registry.get(stuck.get(r.op_id))
        if cfg is None or cfg.flavor != "treas":
            continue
        if (r.op_id, cfg.cfg_id) not in first_eval:
            continue
        live = [s for s in cfg.servers if str(s) not in crashed]
        if len(live) < treas_threshold(cfg.code.n, cfg.code.k):
            continue
        lam = _lambda_size(writes, r, first_eval[(r.op_id, cfg.cfg_id)])
        if lam <= cfg.code.delta:
            out.append(Violation("read-liveness",
                                 f"read {r.op_id} overlaps only {lam} writes in "
                                 f"configuration {cfg.cfg_id} but never completed",
                                 (r.op_id,)))
    return out
