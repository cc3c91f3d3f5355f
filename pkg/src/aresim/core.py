"""Shared value types: process ids, tags, quorum systems, configurations.

Everything here is immutable. Protocol and simulator state holds these values
by reference and replaces rather than mutates them.
"""

from __future__ import annotations

import itertools
import math
import re
import warnings
from dataclasses import dataclass, field
from functools import total_ordering

ROLES = ("writer", "reader", "reconfigurer", "server", "consensus")
_ROLE_RANK = {role: i for i, role in enumerate(ROLES)}
_ROLE_PREFIX = {"writer": "w", "reader": "r", "reconfigurer": "c",
                "server": "s", "consensus": "x"}
_PREFIX_ROLE = {v: k for k, v in _ROLE_PREFIX.items()}
_PID_RE = re.compile(r"^([a-z])(-?\d+)$")


@total_ordering
@dataclass(frozen=True)
class ProcessId:
    """Process identity. Totally ordered role-major, index-minor."""

    role: str
    index: int

    def __post_init__(self):
        if self.role not in _ROLE_RANK:
            raise ValueError(f"unknown role {self.role!r}")

    def sort_key(self):
        return (_ROLE_RANK[self.role], self.index)

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        return f"{_ROLE_PREFIX[self.role]}{self.index}"

    def __repr__(self):
        return f"ProcessId({str(self)})"

    @classmethod
    def parse(cls, text: str) -> "ProcessId":
        m = _PID_RE.match(text)
        if not m or m.group(1) not in _PREFIX_ROLE:
            raise ValueError(f"bad process id {text!r}")
        return cls(_PREFIX_ROLE[m.group(1)], int(m.group(2)))


# Reserved writer id below every real writer; owner of the initial tag.
BOT_WRITER = ProcessId("writer", -1)


@total_ordering
@dataclass(frozen=True)
class Tag:
    """Logical timestamp: integer part plus writer id, ordered lexicographically."""

    z: int
    w: ProcessId

    def sort_key(self):
        return (self.z, self.w.sort_key())

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __str__(self):
        return f"({self.z},{self.w})"

    def __repr__(self):
        return f"Tag{str(self)}"


T0 = Tag(0, BOT_WRITER)


@dataclass(frozen=True)
class TaggedValue:
    tag: Tag
    value: bytes


@dataclass(frozen=True)
class QuorumSystem:
    """Explicit quorum collection; every pair of quorums must intersect."""

    servers: tuple[ProcessId, ...]
    quorums: tuple[frozenset[ProcessId], ...]

    def __post_init__(self):
        members = set(self.servers)
        if not self.quorums:
            raise ValueError("at least one quorum required")
        for q in self.quorums:
            if not q or not q <= members:
                raise ValueError("quorum members must be declared servers")
        for q1, q2 in itertools.combinations(self.quorums, 2):
            if not q1 & q2:
                raise ValueError(f"disjoint quorums {sorted(map(str, q1))} and {sorted(map(str, q2))}")

    @classmethod
    def majorities(cls, servers: tuple[ProcessId, ...]) -> "QuorumSystem":
        servers = tuple(sorted(servers))
        size = len(servers) // 2 + 1
        quorums = tuple(frozenset(c) for c in itertools.combinations(servers, size))
        return cls(servers, quorums)

    def is_quorum_acked(self, acked) -> bool:
        acked = set(acked)
        return any(q <= acked for q in self.quorums)


def treas_threshold(n: int, k: int) -> int:
    """Server count a coded read/write must hear from: ceil((n + k) / 2)."""
    return math.ceil((n + k) / 2)


def crash_tolerance(n: int, k: int) -> int:
    """Crashes a coded configuration can absorb while staying available."""
    return n - treas_threshold(n, k)


@dataclass(frozen=True)
class CodeParams:
    """[n, k] erasure code dimensions plus the read concurrency allowance delta."""

    n: int
    k: int
    delta: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got n={self.n} k={self.k}")
        if self.delta < 1:
            raise ValueError("delta must be at least 1")
        if 3 * self.k <= self.n:
            raise ValueError(f"k={self.k} too small for n={self.n}: need k > n/3")
        if 3 * self.k < 2 * self.n:
            warnings.warn(f"k={self.k} below 2n/3 for n={self.n}; "
                          "liveness margin is reduced", stacklevel=2)


@dataclass(frozen=True)
class LdrRoles:
    """Directory and replica assignments for a location/data split."""

    directories: tuple[ProcessId, ...]
    replicas: tuple[ProcessId, ...]

    def __post_init__(self):
        if not self.directories:
            raise ValueError("at least one directory required")
        if len(self.replicas) % 2 == 0 or len(self.replicas) < 3:
            raise ValueError("replicas must number 2f+1 for some f >= 1")

    @property
    def f(self) -> int:
        return (len(self.replicas) - 1) // 2


FLAVORS = ("abd", "ldr", "treas")


@dataclass(frozen=True)
class Configuration:
    """One storage configuration: a server set plus its access discipline."""

    cfg_id: int
    flavor: str
    servers: tuple[ProcessId, ...]
    quorums: QuorumSystem | None = None
    code: CodeParams | None = None
    ldr: LdrRoles | None = None

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(sorted(self.servers)))
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if len(set(self.servers)) != len(self.servers):
            raise ValueError("duplicate servers")
        if self.flavor == "abd":
            if self.quorums is None:
                raise ValueError("abd configuration needs a quorum system")
            if set(self.quorums.servers) != set(self.servers):
                raise ValueError("quorum system covers a different server set")
        elif self.flavor == "treas":
            if self.code is None:
                raise ValueError("treas configuration needs code params")
            if self.code.n != len(self.servers):
                raise ValueError(f"code n={self.code.n} but {len(self.servers)} servers")
        elif self.flavor == "ldr":
            if self.ldr is None:
                raise ValueError("ldr configuration needs directory/replica roles")
            if set(self.ldr.directories) | set(self.ldr.replicas) != set(self.servers):
                raise ValueError("ldr roles must cover exactly the server set")

    @property
    def consensus_pid(self) -> ProcessId:
        return ProcessId("consensus", self.cfg_id)


@dataclass(frozen=True)
class ConfigEntry:
    """Configuration sequence slot: a configuration id and its install status."""

    cfg: int
    status: str  # "P" (pending) or "F" (finalized)

    def __post_init__(self):
        if self.status not in ("P", "F"):
            raise ValueError(f"bad status {self.status!r}")


def seq_nu(seq: tuple[ConfigEntry, ...]) -> int:
    """Index of the last entry."""
    return len(seq) - 1


def seq_mu(seq: tuple[ConfigEntry, ...]) -> int:
    """Index of the last finalized entry."""
    for i in range(len(seq) - 1, -1, -1):
        if seq[i].status == "F":
            return i
    raise ValueError("sequence has no finalized entry")


def entry_max(a: ConfigEntry, b: ConfigEntry) -> ConfigEntry:
    """Prefer F over P for the same configuration; distinct cfgs do not compare."""
    if a.cfg != b.cfg:
        raise ValueError(f"entries for different configurations: {a.cfg} vs {b.cfg}")
    return a if a.status == "F" else b


def seq_prefix_of(a: tuple[ConfigEntry, ...], b: tuple[ConfigEntry, ...]) -> bool:
    """True when a's configuration ids are a prefix of b's (statuses may lag)."""
    if len(a) > len(b):
        return False
    return all(ea.cfg == eb.cfg for ea, eb in zip(a, b))
