"""Randomized scenario generation and the aggregate fuzz harness.

Each case is derived deterministically from its seed: the generator draws a
registry (one to three configurations over a ten-server pool, mixed flavors),
a handful of timed client operations, and a crash schedule kept within every
configuration's tolerance. Safety checkers run on every case; histories of at
most ten operations are additionally cross-checked against the brute-force
linearizability search. A failing case is persisted as a standalone scenario
file, together with a greedily shrunk variant that still fails.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .checker import brute_force_linearizable, extract_ops
from .core import (CodeParams, Configuration, LdrRoles, ProcessId,
                   QuorumSystem)
from .scenario import (DEFAULT_CHECKS, OpLine, Scenario,
                       fault_schedule_problems, render_scenario, run_scenario)


@dataclass(frozen=True)
class FuzzTemplate:
    """Ranges the generator draws from."""

    flavors: tuple[str, ...] = ("abd", "treas", "ldr")
    max_configs: int = 3
    min_ops: int = 2
    max_ops: int = 14
    max_server_crashes: int = 2
    client_crash_rate: float = 0.2
    max_time: int = 40
    budget: int = 150_000


def _draw_config(rng: random.Random, cfg_id: int, flavor: str) -> Configuration:
    n = rng.randint(4, 7) if flavor == "ldr" else rng.randint(3, 7)
    base = rng.randint(0, 10 - n)
    servers = tuple(ProcessId("server", i) for i in range(base, base + n))
    if flavor == "abd":
        return Configuration(cfg_id, "abd", servers,
                             quorums=QuorumSystem.majorities(servers))
    if flavor == "treas":
        k = rng.randint(math.ceil(2 * n / 3), n - 1)
        return Configuration(cfg_id, "treas", servers,
                             code=CodeParams(n, k, rng.randint(1, 2)))
    replicas = rng.choice([c for c in (3, 5) if c <= n - 1])
    roles = LdrRoles(servers[:n - replicas], servers[n - replicas:])
    return Configuration(cfg_id, "ldr", servers, ldr=roles)


def generate_scenario(seed: int, template: FuzzTemplate | None = None) -> Scenario:
    t = template or FuzzTemplate()
    rng = random.Random(seed)
    n_cfgs = rng.randint(1, t.max_configs)
    registry = {i: _draw_config(rng, i, rng.choice(t.flavors))
                for i in range(n_cfgs)}

    writers = [ProcessId("writer", i) for i in range(rng.randint(1, 2))]
    readers = [ProcessId("reader", i) for i in range(rng.randint(1, 2))]
    raw: list[dict] = []
    if n_cfgs > 1:
        targets = rng.sample(range(1, n_cfgs), rng.randint(1, n_cfgs - 1))
        transferable = all(c.flavor == "treas" for c in registry.values())
        for tgt in targets:
            raw.append({"client": ProcessId("reconfigurer", 0), "kind": "recon",
                        "target": tgt,
                        "transfer": transferable and rng.random() < 0.5,
                        "at": rng.randint(0, t.max_time)})
    # bias the total toward small histories so the brute-force cross-check
    # covers most cases
    total = min(rng.randint(t.min_ops, t.max_ops),
                rng.randint(t.min_ops, t.max_ops))
    n_writes = 0
    for _ in range(total):
        if rng.random() < 0.5:
            raw.append({"client": rng.choice(writers), "kind": "write",
                        "value": bytes([0x41 + n_writes % 26]) * 8,
                        "at": rng.randint(0, t.max_time)})
            n_writes += 1
        else:
            raw.append({"client": rng.choice(readers), "kind": "read",
                        "at": rng.randint(0, t.max_time)})
    raw.sort(key=lambda o: (o["at"], str(o["client"])))
    counters: dict[ProcessId, int] = {}
    ops = []
    for o in raw:
        counters[o["client"]] = counters.get(o["client"], 0) + 1
        ops.append(OpLine(f"{o['client']}#{counters[o['client']]}", o["client"],
                          o["kind"], value=o.get("value"),
                          target=o.get("target"),
                          transfer=o.get("transfer", False), at=o["at"]))

    probe = Scenario("probe", registry, ())
    crashes: list[tuple[ProcessId, int]] = []
    pool = sorted({s for c in registry.values() for s in c.servers})
    rng.shuffle(pool)
    crash_budget = rng.randint(0, t.max_server_crashes)
    for pid in pool:
        if len(crashes) >= crash_budget:
            break
        trial = crashes + [(pid, rng.randint(5, t.max_time + 5))]
        if not fault_schedule_problems(replace(probe, crashes=tuple(trial))):
            crashes = trial
    if rng.random() < t.client_crash_rate:
        crashes.append((rng.choice(writers), rng.randint(5, t.max_time)))

    return Scenario(name=f"fuzz-{seed}", registry=registry, ops=tuple(ops),
                    crashes=tuple(crashes), checks=DEFAULT_CHECKS, seed=seed,
                    d_min=1, d_max=rng.randint(1, 3),
                    consensus_delay=rng.randint(0, 2), budget=t.budget)


# ------------------------------------------------------------------ shrinking


def _without_op(sc: Scenario, drop: int) -> Scenario:
    """Remove one op line, renumber ids, and drop dependents of removed ops."""
    idmap: dict[str, str] = {}
    counters: dict[ProcessId, int] = {}
    keep = []
    for i, op in enumerate(sc.ops):
        if i == drop:
            continue
        ref = op.after or op.after_append
        if ref is not None and ref not in idmap:
            continue
        counters[op.client] = counters.get(op.client, 0) + 1
        new_id = f"{op.client}#{counters[op.client]}"
        idmap[op.op_id] = new_id
        keep.append(replace(
            op, op_id=new_id,
            after=idmap[op.after] if op.after else None,
            after_append=idmap[op.after_append] if op.after_append else None))
    return replace(sc, ops=tuple(keep))


def shrink_scenario(sc: Scenario, still_fails) -> Scenario:
    """Greedy one-line removals while still_fails(candidate) holds."""
    changed = True
    while changed:
        changed = False
        for i in range(len(sc.ops)):
            cand = _without_op(sc, i)
            if len(cand.ops) < len(sc.ops) and still_fails(cand):
                sc, changed = cand, True
                break
        if changed:
            continue
        for i in range(len(sc.crashes)):
            cand = replace(sc, crashes=sc.crashes[:i] + sc.crashes[i + 1:])
            if still_fails(cand):
                sc, changed = cand, True
                break
    return sc


# -------------------------------------------------------------------- harness


@dataclass
class FuzzCase:
    seed: int
    scenario: Scenario
    violations: dict[str, list]
    finished: bool
    cross_checked: bool
    agree: bool = True

    @property
    def ok(self) -> bool:
        return self.agree and all(not v for v in self.violations.values())


@dataclass
class FuzzReport:
    count: int
    cases: list[FuzzCase] = field(default_factory=list)
    saved: dict[int, str] = field(default_factory=dict)

    @property
    def failures(self) -> list[FuzzCase]:
        return [c for c in self.cases if not c.ok]

    @property
    def cross_checked(self) -> int:
        return sum(1 for c in self.cases if c.cross_checked)

    @property
    def ok(self) -> bool:
        return not self.failures

    def render(self) -> str:
        out = [f"fuzz: {self.count} runs, {len(self.failures)} failing, "
               f"{self.cross_checked} cross-checked against brute force"]
        for c in self.failures:
            broken = [name for name, v in c.violations.items() if v]
            if not c.agree:
                broken.append("brute-force-disagreement")
            where = f"  (saved {self.saved[c.seed]})" if c.seed in self.saved else ""
            out.append(f"  seed {c.seed}: {', '.join(broken)}{where}")
        out.append(f"verdict: {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(out) + "\n"


def _evaluate(sc: Scenario, extra_mutations: tuple[str, ...]) -> FuzzCase:
    res = run_scenario(sc, extra_mutations=extra_mutations)
    ops = extract_ops(res.sim.events)
    cross = len(ops) <= 10
    agree = True
    if cross:
        agree = brute_force_linearizable(ops, sc.v0) == \
            (not res.violations.get("atomicity"))
    return FuzzCase(sc.seed, sc, res.violations, res.finished, cross, agree)


def run_fuzz(count: int, seed: int = 0, template: FuzzTemplate | None = None,
             extra_mutations: tuple[str, ...] = (),
             save_dir=None, shrink: bool = True) -> FuzzReport:
    report = FuzzReport(count)
    for i in range(count):
        case = _evaluate(generate_scenario(seed + i, template), extra_mutations)
        report.cases.append(case)
        if case.ok or save_dir is None:
            continue
        out = Path(save_dir)
        out.mkdir(parents=True, exist_ok=True)
        full = out / f"{case.scenario.name}.scn"
        full.write_text(render_scenario(case.scenario))
        report.saved[case.seed] = str(full)
        if shrink:
            small = shrink_scenario(
                case.scenario,
                lambda sc: not _evaluate(sc, extra_mutations).ok)
            (out / f"{case.scenario.name}.min.scn").write_text(
                render_scenario(small))
    return report
