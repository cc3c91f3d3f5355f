"""Declarative scenario files and the runner behind the command line.

A scenario is a line-oriented text file; ``#`` at line start or after
whitespace begins a comment (``w0#1`` op references stay intact) and blank
lines are skipped. Every line is ``key: value``:

    name: treas-cost
    seed: 7
    d: 1 3                      delay window [d_min, d_max]; one number pins both
    adversary: uniform          uniform | fast-recon-slow-client | fifo
    consensus-delay: 2          extra ticks charged to each consensus decision
    budget: 200000              event budget before the run is cut off
    v0: 8x00                    initial value, COUNTxHEXBYTES
    mutate: f-preference        fault-injection switches, space separated
    config: 0 treas s0..s5 k=4 delta=2
    config: 1 abd s0..s2
    config: 2 ldr s0..s5 dirs=2
    op: w0 write 8x61 at 0
    op: r0 read at 10
    op: c0 recon 1 at 5
    op: c0 recon 2 transfer after c0#1
    op: c1 recon 2 after-append-of c0#1
    crash: s4 at 15
    check: atomicity dap recon liveness latency storage comm

``w0#2`` names the second ``op:`` line of client w0. The runner predicts these
ids from line order, so each client's lines must be arranged to also invoke in
that order (for timed ops: nondecreasing times); the prediction is audited
after the run and a mismatch is an error, not a silent misreport.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .ares import AresClient, build_simulation
from .checker import (Violation, check_atomicity, check_dap_consistency,
                      check_liveness, check_reconfig)
from .core import (CodeParams, Configuration, LdrRoles, ProcessId,
                   QuorumSystem, crash_tolerance)
from .metrics import (audit_failures, audit_latency, comm_metrics,
                      storage_metrics)
from .netsim import ADVERSARIES, MUTATIONS, Simulator, to_jsonl

CHECKS = ("atomicity", "dap", "recon", "liveness", "latency", "storage", "comm")
DEFAULT_CHECKS = ("atomicity", "dap", "recon", "liveness")

_VALUE_RE = re.compile(r"^(\d+)x([0-9a-fA-F]+)$")
_RANGE_RE = re.compile(r"^s(\d+)\.\.s(\d+)$")
_OPREF_RE = re.compile(r"^([a-z]\d+)#(\d+)$")


class ScenarioError(ValueError):
    """Parse or validation failure, message carries the offending line."""


def parse_value(text: str) -> bytes:
    m = _VALUE_RE.match(text)
    if not m or len(m.group(2)) % 2:
        raise ValueError(f"bad value literal {text!r}, want COUNTxHEXBYTES")
    return bytes.fromhex(m.group(2)) * int(m.group(1))


def format_value(b: bytes) -> str:
    if b and len(set(b)) == 1:
        return f"{len(b)}x{b[:1].hex()}"
    return f"1x{b.hex()}" if b else "0x00"


def _parse_servers(tokens: list[str]) -> tuple[ProcessId, ...]:
    out: list[ProcessId] = []
    for tok in tokens:
        m = _RANGE_RE.match(tok)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty server range {tok!r}")
            out.extend(ProcessId("server", i) for i in range(lo, hi + 1))
        else:
            out.append(ProcessId.parse(tok))
    return tuple(out)


@dataclass(frozen=True)
class OpLine:
    """One scripted client operation plus its predicted trace id."""

    op_id: str
    client: ProcessId
    kind: str                      # "write" | "read" | "recon"
    value: bytes | None = None
    target: int | None = None      # recon target configuration
    transfer: bool = False
    at: int | None = None
    after: str | None = None
    after_append: str | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    registry: dict[int, Configuration]
    ops: tuple[OpLine, ...]
    crashes: tuple[tuple[ProcessId, int], ...] = ()
    checks: tuple[str, ...] = DEFAULT_CHECKS
    seed: int = 0
    d_min: int = 1
    d_max: int = 1
    adversary: str = "uniform"
    consensus_delay: int = 0
    budget: int = 500_000
    v0: bytes = b"\x00" * 8
    mutations: tuple[str, ...] = ()


def _parse_config(args: str) -> Configuration:
    tokens = args.split()
    if len(tokens) < 3:
        raise ValueError("config needs: ID flavor servers...")
    cfg_id, flavor = int(tokens[0]), tokens[1]
    kw: dict[str, int] = {}
    plain: list[str] = []
    for tok in tokens[2:]:
        if "=" in tok:
            key, val = tok.split("=", 1)
            kw[key] = int(val)
        else:
            plain.append(tok)
    servers = _parse_servers(plain)
    if flavor == "abd":
        return Configuration(cfg_id, "abd", servers,
                             quorums=QuorumSystem.majorities(servers))
    if flavor == "treas":
        if not {"k", "delta"} <= kw.keys():
            raise ValueError("treas config needs k= and delta=")
        return Configuration(cfg_id, "treas", servers,
                             code=CodeParams(len(servers), kw["k"], kw["delta"]))
    if flavor == "ldr":
        if "dirs" not in kw:
            raise ValueError("ldr config needs dirs=")
        roles = LdrRoles(servers[:kw["dirs"]], servers[kw["dirs"]:])
        return Configuration(cfg_id, "ldr", servers, ldr=roles)
    raise ValueError(f"unknown flavor {flavor!r}")


def _parse_op(args: str, counts: dict[ProcessId, int],
              known_ops: dict[str, OpLine]) -> OpLine:
    tokens = args.split()
    if len(tokens) < 2:
        raise ValueError("op needs: PID kind ...")
    client = ProcessId.parse(tokens[0])
    kind = tokens[1]
    rest = tokens[2:]
    value = target = None
    transfer = False
    if kind == "write":
        if not rest:
            raise ValueError("write needs a value literal")
        value, rest = parse_value(rest[0]), rest[1:]
    elif kind == "recon":
        if not rest:
            raise ValueError("recon needs a target configuration id")
        target, rest = int(rest[0]), rest[1:]
        if rest and rest[0] == "transfer":
            transfer, rest = True, rest[1:]
    elif kind != "read":
        raise ValueError(f"unknown op kind {kind!r}")
    at = after = after_append = None
    if rest[:1] == ["at"] and len(rest) == 2:
        at = int(rest[1])
    elif rest[:1] == ["after"] and len(rest) == 2:
        after = rest[1]
    elif rest[:1] == ["after-append-of"] and len(rest) == 2:
        after_append = rest[1]
    else:
        raise ValueError("op needs one of: at T | after OPREF | after-append-of OPREF")
    for ref in (after, after_append):
        if ref is None:
            continue
        if not _OPREF_RE.match(ref):
            raise ValueError(f"bad op reference {ref!r}, want PID#N")
        if ref not in known_ops:
            raise ValueError(f"op reference {ref!r} does not name an earlier op line")
    if after_append is not None and known_ops[after_append].kind != "recon":
        raise ValueError("after-append-of must reference a recon op")
    counts[client] = counts.get(client, 0) + 1
    return OpLine(f"{client}#{counts[client]}", client, kind, value=value,
                  target=target, transfer=transfer, at=at, after=after,
                  after_append=after_append)


def parse_scenario(text: str, name: str = "unnamed") -> Scenario:
    fields: dict = {"name": name, "registry": {}, "mutations": [],
                    "checks": list(DEFAULT_CHECKS)}
    ops: list[OpLine] = []
    crashes: list[tuple[ProcessId, int]] = []
    counts: dict[ProcessId, int] = {}
    known: dict[str, OpLine] = {}
    saw_checks = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = "" if raw.lstrip().startswith("#") else re.split(r"\s#", raw, 1)[0]
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise ScenarioError(f"line {line_no}: expected 'key: value', got {raw!r}")
        key, args = (part.strip() for part in line.split(":", 1))
        try:
            if key == "name":
                fields["name"] = args
            elif key == "seed":
                fields["seed"] = int(args)
            elif key == "d":
                parts = [int(x) for x in args.split()]
                if len(parts) not in (1, 2):
                    raise ValueError("d takes one or two integers")
                fields["d_min"] = parts[0]
                fields["d_max"] = parts[-1]
            elif key == "adversary":
                if args not in ADVERSARIES:
                    raise ValueError(f"unknown adversary {args!r}")
                fields["adversary"] = args
            elif key == "consensus-delay":
                fields["consensus_delay"] = int(args)
            elif key == "budget":
                fields["budget"] = int(args)
            elif key == "v0":
                fields["v0"] = parse_value(args)
            elif key == "mutate":
                for m in args.split():
                    if m not in MUTATIONS:
                        raise ValueError(f"unknown mutation {m!r}")
                    fields["mutations"].append(m)
            elif key == "config":
                cfg = _parse_config(args)
                if cfg.cfg_id in fields["registry"]:
                    raise ValueError(f"duplicate configuration id {cfg.cfg_id}")
                fields["registry"][cfg.cfg_id] = cfg
            elif key == "op":
                op = _parse_op(args, counts, known)
                ops.append(op)
                known[op.op_id] = op
            elif key == "crash":
                tokens = args.split()
                if len(tokens) != 3 or tokens[1] != "at":
                    raise ValueError("crash needs: PID at T")
                crashes.append((ProcessId.parse(tokens[0]), int(tokens[2])))
            elif key == "check":
                names = args.split()
                for c in names:
                    if c not in CHECKS:
                        raise ValueError(f"unknown check {c!r}")
                fields["checks"] = [] if not saw_checks else fields["checks"]
                fields["checks"].extend(names)
                saw_checks = True
            else:
                raise ValueError(f"unknown key {key!r}")
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"line {line_no}: {exc}") from exc
    if not fields["registry"]:
        raise ScenarioError("scenario declares no configurations")
    for op in ops:
        if op.kind == "recon" and op.target not in fields["registry"]:
            raise ScenarioError(f"op {op.op_id} targets unknown configuration "
                                f"{op.target}")
    fields["mutations"] = tuple(dict.fromkeys(fields["mutations"]))
    fields["checks"] = tuple(dict.fromkeys(fields["checks"]))
    return Scenario(ops=tuple(ops), crashes=tuple(crashes), **fields)


def load_scenario(path) -> Scenario:
    from pathlib import Path
    p = Path(path)
    return parse_scenario(p.read_text(), name=p.stem)


def render_scenario(sc: Scenario) -> str:
    """Canonical text form; parse(render(sc)) reproduces sc."""
    out = [f"name: {sc.name}", f"seed: {sc.seed}", f"d: {sc.d_min} {sc.d_max}",
           f"adversary: {sc.adversary}", f"consensus-delay: {sc.consensus_delay}",
           f"budget: {sc.budget}", f"v0: {format_value(sc.v0)}"]
    if sc.mutations:
        out.append(f"mutate: {' '.join(sc.mutations)}")
    for cfg_id in sorted(sc.registry):
        cfg = sc.registry[cfg_id]
        servers = " ".join(str(s) for s in cfg.servers)
        if cfg.flavor == "treas":
            extra = f" k={cfg.code.k} delta={cfg.code.delta}"
        elif cfg.flavor == "ldr":
            extra = f" dirs={len(cfg.ldr.directories)}"
        else:
            extra = ""
        out.append(f"config: {cfg_id} {cfg.flavor} {servers}{extra}")
    for op in sc.ops:
        parts = [str(op.client), op.kind]
        if op.kind == "write":
            parts.append(format_value(op.value))
        elif op.kind == "recon":
            parts.append(str(op.target))
            if op.transfer:
                parts.append("transfer")
        if op.at is not None:
            parts += ["at", str(op.at)]
        elif op.after is not None:
            parts += ["after", op.after]
        else:
            parts += ["after-append-of", op.after_append]
        out.append(f"op: {' '.join(parts)}")
    for pid, t in sc.crashes:
        out.append(f"crash: {pid} at {t}")
    out.append(f"check: {' '.join(sc.checks)}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------- fault budget


def fault_schedule_problems(sc: Scenario) -> list[str]:
    """Configurations whose scheduled server crashes exceed their tolerance."""
    crashed = {pid for pid, _ in sc.crashes}
    problems = []
    for cfg_id in sorted(sc.registry):
        cfg = sc.registry[cfg_id]
        down = crashed & set(cfg.servers)
        if cfg.flavor == "abd":
            alive = set(cfg.servers) - down
            if not any(q <= alive for q in cfg.quorums.quorums):
                problems.append(f"config {cfg_id}: no quorum survives "
                                f"{len(down)} crashes")
        elif cfg.flavor == "treas":
            tol = crash_tolerance(cfg.code.n, cfg.code.k)
            if len(down) > tol:
                problems.append(f"config {cfg_id}: {len(down)} crashes exceed "
                                f"coded tolerance {tol}")
        else:
            bad_dirs = len(down & set(cfg.ldr.directories))
            bad_reps = len(down & set(cfg.ldr.replicas))
            if bad_dirs > (len(cfg.ldr.directories) - 1) // 2:
                problems.append(f"config {cfg_id}: directory majority lost")
            if bad_reps > cfg.ldr.f:
                problems.append(f"config {cfg_id}: {bad_reps} replica crashes "
                                f"exceed f={cfg.ldr.f}")
    return problems


# -------------------------------------------------------------------- runner


def build_sim(sc: Scenario, seed: int | None = None,
              extra_mutations: tuple[str, ...] = ()) -> Simulator:
    """Simulator with every scripted op, trigger, and crash scheduled."""
    mutations = tuple(dict.fromkeys(sc.mutations + tuple(extra_mutations)))
    sim = build_simulation(sc.registry, seed=sc.seed if seed is None else seed,
                           d_min=sc.d_min, d_max=sc.d_max, adversary=sc.adversary,
                           consensus_delay=sc.consensus_delay,
                           mutations=mutations, v0=sc.v0)
    clients = {op.client: None for op in sc.ops}
    for pid in clients:
        clients[pid] = AresClient(sim, pid)
    for op in sc.ops:
        client = clients[op.client]
        if op.kind == "write":
            submit = lambda c=client, v=op.value: c.write(v)
        elif op.kind == "read":
            submit = lambda c=client: c.read()
        else:
            submit = lambda c=client, t=op.target, x=op.transfer: c.recon(t, x)
        if op.at is not None:
            sim.schedule(op.at, submit, owner=op.client)
        else:
            guarded = (lambda s=submit, p=op.client:
                       None if p in sim.crashed else s())
            sim.add_trigger(op.after or op.after_append,
                            "op" if op.after else "add-config", guarded)
    for pid, t in sc.crashes:
        sim.schedule_crash(pid, t)
    return sim


def _audit_op_ids(sc: Scenario, sim: Simulator):
    """Predicted op ids must match what actually ran, else the report lies."""
    invoked = {e.detail["id"]: e.detail["name"] for e in sim.events
               if e.kind == "invoke" and e.detail.get("scope") == "op"}
    for op in sc.ops:
        if op.op_id in invoked and invoked[op.op_id] != op.kind:
            raise ScenarioError(
                f"op {op.op_id} invoked as {invoked[op.op_id]!r} but scripted "
                f"as {op.kind!r}; client op lines are out of invocation order")


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    sim: Simulator
    finished: bool
    violations: dict[str, list] = field(default_factory=dict)
    latency_entries: list[dict] | None = None
    storage: object = None
    comm: object = None
    notes: list[str] = field(default_factory=list)
    pending: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(not v for v in self.violations.values())

    def trace_jsonl(self) -> str:
        return to_jsonl(self.sim.events)

    def render(self) -> str:
        return render_report(self)


def run_scenario(sc: Scenario, seed: int | None = None,
                 checks: tuple[str, ...] | None = None,
                 allow_overload: bool = False,
                 extra_mutations: tuple[str, ...] = ()) -> RunResult:
    problems = fault_schedule_problems(sc)
    if problems and not allow_overload:
        raise ScenarioError("fault schedule exceeds tolerance "
                            "(pass allow_overload for negative tests): "
                            + "; ".join(problems))
    sim = build_sim(sc, seed=seed, extra_mutations=extra_mutations)
    finished = sim.run(max_events=sc.budget)
    _audit_op_ids(sc, sim)
    res = RunResult(sc, sim.seed, sim, finished)
    if problems:
        res.notes.extend(f"overload: {p}" for p in problems)
    flavors = {i: c.flavor for i, c in sc.registry.items()}
    for proc in sim.processes.values():
        if hasattr(proc, "pending_report"):
            res.pending.extend(proc.pending_report())
    for check in (sc.checks if checks is None else checks):
        if check == "atomicity":
            res.violations[check] = check_atomicity(sim.events, v0=sc.v0)
        elif check == "dap":
            res.violations[check] = check_dap_consistency(
                sim.events, v0=sc.v0, flavors=flavors)
        elif check == "recon":
            res.violations[check] = check_reconfig(sim.events)
        elif check == "liveness":
            res.violations[check] = check_liveness(
                sim.events, sc.registry, exhausted=sim.exhausted)
        elif check == "latency":
            res.latency_entries = audit_latency(sim.events, sc.registry,
                                                sc.d_min, sc.d_max)
            res.violations[check] = [
                Violation("latency", f"{e['check']} {e['id']} took {e['dur']} "
                          f"ticks, outside [{e['lo']}, {e['hi']}]", (e["id"],))
                for e in audit_failures(res.latency_entries)]
        elif check == "storage":
            try:
                res.storage = storage_metrics(sim.events, sc.registry, sc.v0)
            except ValueError as exc:
                res.notes.append(f"storage: {exc}")
            res.violations.setdefault(check, [])
        elif check == "comm":
            try:
                res.comm = comm_metrics(sim.events, sc.v0)
            except ValueError as exc:
                res.notes.append(f"comm: {exc}")
            res.violations.setdefault(check, [])
    return res


# -------------------------------------------------------------------- report


def _op_outcomes(sc: Scenario, sim: Simulator) -> list[str]:
    spans: dict[str, dict] = {}
    for e in sim.events:
        if e.detail.get("scope") != "op":
            continue
        rec = spans.setdefault(e.detail["id"], {})
        rec["inv" if e.kind == "invoke" else "resp"] = (e.time, e.detail)
    waiting = {}
    for p in sim.processes.values():
        if hasattr(p, "pending_report"):
            for item in p.pending_report():
                if item["op"]:
                    waiting[item["op"]] = item
    lines = []
    for op in sc.ops:
        label = op.kind if op.kind != "recon" else f"recon->{op.target}"
        rec = spans.get(op.op_id)
        if rec is None:
            lines.append(f"  {op.op_id:<8} {label:<10} NOT-INVOKED")
            continue
        t_inv = rec["inv"][0]
        if "resp" not in rec:
            item = waiting.get(op.op_id, {})
            why = item.get("waiting_on") or "?"
            diag = f"  diag {item['diag']}" if item.get("diag") else ""
            lines.append(f"  {op.op_id:<8} {label:<10} t{t_inv} -> PENDING "
                         f"(waiting on {why}){diag}")
            continue
        t_resp, detail = rec["resp"]
        bits = []
        if detail.get("tag") is not None:
            bits.append(f"tag {detail['tag']}")
        if op.kind == "read" and detail.get("value") is not None:
            bits.append(f"value {format_value(detail['value'])}")
        if op.kind == "recon":
            bits.append(f"installed {detail.get('installed')}")
        if detail.get("cfgs"):
            bits.append("cfgs " + ",".join(map(str, detail["cfgs"])))
        lines.append(f"  {op.op_id:<8} {label:<10} t{t_inv} -> t{t_resp}  "
                     + "  ".join(bits))
    return lines


def _fmt_frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def render_report(res: RunResult) -> str:
    sc, sim = res.scenario, res.sim
    out = [f"scenario {sc.name}  seed {res.seed}  d [{sc.d_min},{sc.d_max}]  "
           f"adversary {sc.adversary}  consensus-delay {sc.consensus_delay}",
           f"run: {sim.stats['pops']} events, t={sim.now}, budget {sc.budget}"
           + ("  EXHAUSTED" if sim.exhausted else "")]
    muts = tuple(sim.mutations)
    if muts:
        out.append(f"mutations: {' '.join(sorted(muts))}")
    out.append("")
    out.append("ops:")
    out.extend(_op_outcomes(sc, sim))
    backlog = [p for p in res.pending if not p["op"]]
    if backlog:
        out.append(f"  ({len(backlog)} queued op(s) never started)")
    out.append("")
    out.append("checks:")
    for name, violations in res.violations.items():
        if name == "latency" and not violations:
            entries = res.latency_entries or []
            noted = sum(1 for e in entries if e.get("note"))
            out.append(f"  {name:<10} pass  ({len(entries)} audited, {noted} noted)")
        elif name in ("storage", "comm") and not violations:
            out.append(f"  {name:<10} reported below")
        elif not violations:
            out.append(f"  {name:<10} pass")
        else:
            out.append(f"  {name:<10} FAIL ({len(violations)})")
            out.extend(f"    - {v}" for v in violations)
    if res.storage is not None:
        out.append("")
        out.append(f"storage (|v| = {res.storage.vlen}):")
        for cfg_id in sorted(res.storage.peak):
            out.append(f"  cfg {cfg_id}: peak {_fmt_frac(res.storage.normalized(cfg_id))} x |v|"
                       f"  (header peak {_fmt_frac(res.storage.header_peak[cfg_id])} bytes)")
    if res.comm is not None:
        out.append("")
        out.append(f"comm (|v| = {res.comm.vlen}, worst normalized payload per kind):")
        for name in sorted(res.comm.worst):
            out.append(f"  {name}: {_fmt_frac(res.comm.worst[name])} x |v|")
    for note in res.notes:
        out.append(f"note: {note}")
    out.append("")
    out.append(f"verdict: {'PASS' if res.ok else 'FAIL'}")
    return "\n".join(out) + "\n"
