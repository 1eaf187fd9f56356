"""Device coupling graphs, bundled heavy-hex presets and calibration data.

Edge-list text format::

    # comment
    n=5
    0-1
    1-2
    @grid horizontal 0-1-2-3
    @grid vertical 2-4

The ``@grid`` records are optional and declare the chain families used by
the grid prescreening strategy.
"""
from __future__ import annotations

import datetime as _dt
import re
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Iterable, Mapping

Edge = tuple[int, int]

PRESETS = {127: "hh127.txt", 133: "hh133.txt", 156: "hh156.txt"}
PRESET_NAMES = {"hh127": 127, "hh133": 133, "hh156": 156}

_EDGE_RE = re.compile(r"^(\d+)\s*-\s*(\d+)$")
_HEADER_RE = re.compile(r"^n\s*=\s*(\d+)$")


class TopologyError(ValueError):
    """Raised for malformed topology documents or invalid graph queries."""


def canonical_edge(a: int, b: int) -> Edge:
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


def edge_key(edge: Edge) -> str:
    a, b = canonical_edge(*edge)
    return f"{a}-{b}"


def parse_edge_key(key: str) -> Edge:
    m = _EDGE_RE.match(key.strip())
    if not m:
        raise TopologyError(f"bad edge key {key!r}")
    a, b = int(m.group(1)), int(m.group(2))
    if a == b:
        raise TopologyError(f"self-loop in edge key {key!r}")
    return canonical_edge(a, b)


@dataclass(frozen=True)
class DeviceTopology:
    """Undirected coupling graph in canonical form.

    Equality compares only the graph (qubit count and edge set); ``name`` and
    the optional grid families are metadata.
    """

    qubit_count: int
    edges: tuple[Edge, ...]
    name: str = field(default="", compare=False)
    grids: Mapping[str, tuple[tuple[int, ...], ...]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self):
        if self.qubit_count < 1:
            raise TopologyError("qubit_count must be positive")
        canon = set()
        for a, b in self.edges:
            if a == b:
                raise TopologyError(f"self-loop on qubit {a}")
            e = canonical_edge(a, b)
            if not (0 <= e[0] and e[1] < self.qubit_count):
                raise TopologyError(f"edge {e} out of range for {self.qubit_count} qubits")
            if e in canon:
                raise TopologyError(f"duplicate edge {e}")
            canon.add(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        object.__setattr__(self, "grids", MappingProxyType(
            {k: tuple(tuple(c) for c in v) for k, v in dict(self.grids).items()}))
        adj: list[list[int]] = [[] for _ in range(self.qubit_count)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(x)) for x in adj))
        object.__setattr__(self, "_edge_set", frozenset(self.edges))

    def __hash__(self):
        return hash((self.qubit_count, self.edges))

    @property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        return self._adj

    def has_edge(self, a: int, b: int) -> bool:
        return canonical_edge(a, b) in self._edge_set

    def max_degree(self) -> int:
        return max((len(x) for x in self._adj), default=0)


def neighbors(topology: DeviceTopology, q: int) -> list[int]:
    """Sorted neighbours of qubit ``q``."""
    if not 0 <= q < topology.qubit_count:
        raise TopologyError(f"qubit {q} out of range [0, {topology.qubit_count})")
    return list(topology.adjacency[q])


def load_topology(document: str, name: str = "") -> DeviceTopology:
    """Parse the edge-list text format.

    Records may be separated by newlines or semicolons. Errors carry the
    1-based record number.
    """
    records = []
    for lineno, line in enumerate(document.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for part in line.split(";"):
            part = part.strip()
            if part:
                records.append((lineno, part))
    if not records:
        raise TopologyError("empty topology document")

    lineno, first = records[0]
    m = _HEADER_RE.match(first)
    if not m:
        raise TopologyError(f"line {lineno}: expected 'n=<count>', got {first!r}")
    n = int(m.group(1))
    if n < 1:
        raise TopologyError(f"line {lineno}: qubit count must be positive")

    edges: dict[Edge, int] = {}
    grids: dict[str, list[tuple[int, ...]]] = {}
    for lineno, rec in records[1:]:
        if rec.startswith("@grid"):
            parts = rec.split()
            if len(parts) != 3:
                raise TopologyError(f"line {lineno}: malformed grid record {rec!r}")
            try:
                chain = tuple(int(t) for t in parts[2].split("-"))
            except ValueError:
                raise TopologyError(f"line {lineno}: malformed grid record {rec!r}") from None
            grids.setdefault(parts[1], []).append(chain)
            continue
        m = _EDGE_RE.match(rec)
        if not m:
            raise TopologyError(f"line {lineno}: malformed record {rec!r}")
        a, b = int(m.group(1)), int(m.group(2))
        if a >= n or b >= n:
            raise TopologyError(f"line {lineno}: qubit index out of range in {rec!r} (n={n})")
        if a == b:
            raise TopologyError(f"line {lineno}: self-loop {rec!r}")
        e = canonical_edge(a, b)
        if e in edges:
            raise TopologyError(f"line {lineno}: duplicate edge {rec!r} (first seen on line {edges[e]})")
        edges[e] = lineno

    topo = DeviceTopology(n, tuple(edges), name=name, grids={k: tuple(v) for k, v in grids.items()})
    for family, chains in topo.grids.items():
        for chain in chains:
            for a, b in zip(chain, chain[1:]):
                if not topo.has_edge(a, b):
                    raise TopologyError(f"grid {family} chain uses missing edge {a}-{b}")
    return topo


def dump_topology(topology: DeviceTopology) -> str:
    lines = []
    if topology.name:
        lines.append(f"# {topology.name}")
    lines.append(f"n={topology.qubit_count}")
    lines += [f"{a}-{b}" for a, b in topology.edges]
    for family, chains in topology.grids.items():
        lines += [f"@grid {family} " + "-".join(map(str, c)) for c in chains]
    return "\n".join(lines) + "\n"


def heavy_hex_preset(size: int) -> DeviceTopology:
    """Bundled heavy-hex coupling map for a 127, 133 or 156 qubit device."""
    if size not in PRESETS:
        raise TopologyError(f"unsupported preset size {size}; choose from {sorted(PRESETS)}")
    text = resources.files("layerfid.data").joinpath(PRESETS[size]).read_text()
    return load_topology(text, name=f"hh{size}")


def resolve_topology(source: str) -> DeviceTopology:
    """Preset name (``hh127``) or path to an edge-list file."""
    if source in PRESET_NAMES:
        return heavy_hex_preset(PRESET_NAMES[source])
    try:
        with open(source) as fh:
            return load_topology(fh.read(), name=source)
    except FileNotFoundError:
        raise TopologyError(f"unknown topology {source!r}: not a preset ({', '.join(PRESET_NAMES)}) or a file")


def path_graph(n: int) -> DeviceTopology:
    return DeviceTopology(n, tuple((i, i + 1) for i in range(n - 1)), name=f"path{n}")


def cycle_graph(n: int) -> DeviceTopology:
    return DeviceTopology(n, tuple((i, (i + 1) % n) for i in range(n)), name=f"cycle{n}")


@dataclass(frozen=True)
class Calibration:
    oneq_error: Mapping[int, float]
    twoq_error: Mapping[Edge, float]
    twoq_duration_ns: Mapping[Edge, float]
    timestamp: _dt.date | None = None

    def __post_init__(self):
        object.__setattr__(self, "oneq_error", MappingProxyType({int(q): float(v) for q, v in self.oneq_error.items()}))
        object.__setattr__(self, "twoq_error", MappingProxyType(
            {canonical_edge(*e): float(v) for e, v in self.twoq_error.items()}))
        object.__setattr__(self, "twoq_duration_ns", MappingProxyType(
            {canonical_edge(*e): float(v) for e, v in self.twoq_duration_ns.items()}))
        for q, v in self.oneq_error.items():
            if not 0.0 <= v <= 1.0:
                raise TopologyError(f"1Q error {v} on qubit {q} outside [0, 1]")
        for e, v in self.twoq_error.items():
            if not 0.0 <= v <= 1.0:
                raise TopologyError(f"2Q error {v} on edge {edge_key(e)} outside [0, 1]")
        for e, v in self.twoq_duration_ns.items():
            if not v > 0:
                raise TopologyError(f"duration {v} on edge {edge_key(e)} must be positive")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Calibration":
        ts = doc.get("timestamp")
        if isinstance(ts, str):
            ts = _dt.date.fromisoformat(ts)
        return cls(
            oneq_error={int(k): v for k, v in doc.get("oneq_error", {}).items()},
            twoq_error={parse_edge_key(k): v for k, v in doc.get("twoq_error", {}).items()},
            twoq_duration_ns={parse_edge_key(k): v for k, v in doc.get("twoq_duration_ns", {}).items()},
            timestamp=ts,
        )

    def to_dict(self) -> dict:
        return {
            "oneq_error": {str(q): v for q, v in sorted(self.oneq_error.items())},
            "twoq_error": {edge_key(e): v for e, v in sorted(self.twoq_error.items())},
            "twoq_duration_ns": {edge_key(e): v for e, v in sorted(self.twoq_duration_ns.items())},
            "timestamp": self.timestamp.isoformat() if self.timestamp else None,
        }


@dataclass(frozen=True)
class CalibratedTopology:
    topology: DeviceTopology
    calibration: Calibration


def attach_calibration(topology: DeviceTopology, calibration: Calibration) -> CalibratedTopology:
    """Check that ``calibration`` covers every qubit and edge of ``topology``."""
    qubits = set(range(topology.qubit_count))
    edges = set(topology.edges)
    for q in calibration.oneq_error:
        if q not in qubits:
            raise TopologyError(f"calibration names unknown qubit {q}")
    for name, table in (("2Q error", calibration.twoq_error), ("duration", calibration.twoq_duration_ns)):
        for e in table:
            if e not in edges:
                raise TopologyError(f"{name} calibration names unknown edge {edge_key(e)}")
    missing_q = sorted(qubits - set(calibration.oneq_error))
    if missing_q:
        raise TopologyError(f"calibration missing 1Q error for qubit(s) {missing_q[:10]}")
    for name, table in (("2Q error", calibration.twoq_error), ("duration", calibration.twoq_duration_ns)):
        missing = sorted(edges - set(table))
        if missing:
            raise TopologyError(
                f"calibration missing {name} for edge(s) " + ", ".join(str(e) for e in missing[:10]))
    return CalibratedTopology(topology, calibration)


def uniform_calibration(topology: DeviceTopology, oneq: float = 0.0, twoq: float = 0.0,
                        duration_ns: float = 100.0, timestamp: _dt.date | None = None) -> Calibration:
    return Calibration(
        oneq_error={q: oneq for q in range(topology.qubit_count)},
        twoq_error={e: twoq for e in topology.edges},
        twoq_duration_ns={e: duration_ns for e in topology.edges},
        timestamp=timestamp,
    )


def graph_distances(topology: DeviceTopology, sources: Iterable[int]) -> list[int]:
    """Multi-source BFS distance to every qubit (-1 when unreachable)."""
    dist = [-1] * topology.qubit_count
    frontier = []
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            frontier.append(s)
    d = 0
    while frontier:
        d += 1
        nxt = []
        for u in frontier:
            for w in topology.adjacency[u]:
                if dist[w] < 0:
                    dist[w] = d
                    nxt.append(w)
        frontier = nxt
    return dist
