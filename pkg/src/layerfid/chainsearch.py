"""Self-avoiding chain counting, scoring and ranking.

Chains are 1-D self-avoiding paths on the coupling graph, stored once per
undirected path with the smaller end first. Scores are layer-fidelity
products of every 2Q link fidelity (d=4) and every 1Q fidelity (d=2) along
the chain.
"""
from __future__ import annotations

import math
import statistics
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from layerfid.metrics import MetricsError, fidelity_from_error
from layerfid.topology import CalibratedTopology, DeviceTopology, Edge, canonical_edge, edge_key

DEFAULT_X = 15
DEFAULT_KAPPA = 0.01
PROVENANCES = ("isolated", "grid", "averaged", "calibration")


class ChainSearchError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Chain:
    qubits: tuple[int, ...]

    def __post_init__(self):
        q = tuple(int(x) for x in self.qubits)
        if not q:
            raise ChainSearchError("empty chain")
        if len(set(q)) != len(q):
            raise ChainSearchError(f"chain revisits a qubit: {q}")
        if q[0] > q[-1]:
            q = q[::-1]
        object.__setattr__(self, "qubits", q)

    def __len__(self):
        return len(self.qubits)

    def __iter__(self):
        return iter(self.qubits)

    @property
    def N(self) -> int:
        return len(self.qubits)

    @property
    def links(self) -> list[Edge]:
        return [canonical_edge(a, b) for a, b in zip(self.qubits, self.qubits[1:])]

    def validate(self, topology: DeviceTopology) -> "Chain":
        for q in self.qubits:
            if not 0 <= q < topology.qubit_count:
                raise ChainSearchError(f"qubit {q} not on device")
        for a, b in zip(self.qubits, self.qubits[1:]):
            if not topology.has_edge(a, b):
                raise ChainSearchError(f"chain link {a}-{b} is not a coupler")
        return self

    def layers(self) -> tuple[list[Edge], list[Edge]]:
        """The even-offset and odd-offset disjoint 2Q layers."""
        links = self.links
        return links[0::2], links[1::2]


@dataclass(frozen=True)
class ScoredChain:
    chain: Chain
    score: float
    log_score: float

    def to_dict(self) -> dict:
        return {"qubits": list(self.chain.qubits), "score": self.score, "log_score": self.log_score}


@dataclass(frozen=True)
class GateErrorTable:
    """Per-element gate errors and 2Q durations over a topology."""

    topology: DeviceTopology
    oneq: Mapping[int, float]
    twoq: Mapping[Edge, float]
    durations: Mapping[Edge, float] = field(default_factory=dict)
    provenance: str = "calibration"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ChainSearchError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "oneq", MappingProxyType({int(q): float(v) for q, v in self.oneq.items()}))
        object.__setattr__(self, "twoq", MappingProxyType(
            {canonical_edge(*e): float(v) for e, v in self.twoq.items()}))
        object.__setattr__(self, "durations", MappingProxyType(
            {canonical_edge(*e): float(v) for e, v in self.durations.items()}))

    @classmethod
    def from_calibrated(cls, ct: CalibratedTopology) -> "GateErrorTable":
        c = ct.calibration
        return cls(ct.topology, c.oneq_error, c.twoq_error, c.twoq_duration_ns, "calibration")

    def median_duration(self) -> float | None:
        if not self.durations:
            return None
        return float(statistics.median(self.durations.values()))

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "oneq_error": {str(q): v for q, v in sorted(self.oneq.items())},
            "twoq_error": {edge_key(e): v for e, v in sorted(self.twoq.items())},
            "twoq_duration_ns": {edge_key(e): v for e, v in sorted(self.durations.items())},
        }


@dataclass(frozen=True)
class DurationPenalty:
    kappa: float = DEFAULT_KAPPA
    median_ns: float | None = None


@dataclass(frozen=True)
class CandidateSet:
    chains: Mapping[str, ScoredChain]
    flags: frozenset[str] = frozenset()

    def labels(self) -> list[str]:
        return [k for k in "ABCDEF" if k in self.chains]


@dataclass(frozen=True)
class GridChains:
    horizontal: tuple[Chain, ...]
    vertical: tuple[Chain, ...]

    def families(self) -> dict[str, tuple[Chain, ...]]:
        return {"horizontal": self.horizontal, "vertical": self.vertical}


def duration_penalty(duration_ns: float, median_duration_ns: float, kappa: float) -> float:
    """``exp(-kappa * max(0, duration - median) / median)``."""
    if duration_ns <= 0 or median_duration_ns <= 0:
        raise ChainSearchError("durations must be positive")
    if kappa < 0:
        raise ChainSearchError("penalty strength must be non-negative")
    excess = max(0.0, duration_ns - median_duration_ns)
    return math.exp(-kappa * excess / median_duration_ns)


def _resolve_penalty(table: GateErrorTable, penalty: DurationPenalty | None) -> DurationPenalty | None:
    if penalty is None or penalty.kappa == 0:
        return None
    if penalty.median_ns is not None:
        return penalty
    median = table.median_duration()
    if median is None:
        raise ChainSearchError("duration penalty needs edge durations")
    return DurationPenalty(penalty.kappa, median)


def _qubit_log(err: float) -> float:
    return math.log(fidelity_from_error(err, 2).value)


def _edge_log(err: float, duration: float | None, penalty: DurationPenalty | None) -> float:
    v = math.log(fidelity_from_error(err, 4).value)
    if penalty is not None:
        if duration is None:
            raise ChainSearchError("duration penalty needs edge durations")
        v = v + math.log(duration_penalty(duration, penalty.median_ns, penalty.kappa))
    return v


def _element_logs(table: GateErrorTable, penalty: DurationPenalty | None):
    """Log fidelities per qubit and per edge; ``-inf`` marks unusable ones."""
    qlog = {}
    for q in range(table.topology.qubit_count):
        try:
            qlog[q] = _qubit_log(table.oneq[q]) if q in table.oneq else -math.inf
        except MetricsError:
            qlog[q] = -math.inf
    elog = {}
    for e in table.topology.edges:
        try:
            elog[e] = _edge_log(table.twoq[e], table.durations.get(e), penalty) if e in table.twoq else -math.inf
        except MetricsError:
            elog[e] = -math.inf
    return qlog, elog


def _log_score(qubits: Sequence[int], qlog, elog) -> float:
    # same accumulation order as the compiled search, so scores match bit for bit
    s = qlog[qubits[0]]
    for a, b in zip(qubits, qubits[1:]):
        s = s + (elog[canonical_edge(a, b)] + qlog[b])
    return s


def score_chain(chain: Chain | Sequence[int], table: GateErrorTable,
                penalty: DurationPenalty | None = None) -> ScoredChain:
    """Layer-fidelity score of ``chain`` from the table's gate errors.

    Raises :class:`ChainSearchError` naming the element when an error is
    missing or too large for a positive fidelity.
    """
    if not isinstance(chain, Chain):
        chain = Chain(tuple(chain))
    chain.validate(table.topology)
    penalty = _resolve_penalty(table, penalty)
    qlog, elog = {}, {}
    for q in chain.qubits:
        if q not in table.oneq:
            raise ChainSearchError(f"no 1Q error for qubit {q}")
        try:
            qlog[q] = _qubit_log(table.oneq[q])
        except MetricsError as exc:
            raise ChainSearchError(f"qubit {q}: {exc}") from None
    for e in chain.links:
        if e not in table.twoq:
            raise ChainSearchError(f"no 2Q error for edge {edge_key(e)}")
        try:
            elog[e] = _edge_log(table.twoq[e], table.durations.get(e), penalty)
        except MetricsError as exc:
            raise ChainSearchError(f"edge {edge_key(e)}: {exc}") from None
    ls = _log_score(chain.qubits, qlog, elog)
    return ScoredChain(chain, math.exp(ls), ls)


# ---------------------------------------------------------------- counting

def _adjacency_arrays(topology: DeviceTopology):
    n = topology.qubit_count
    md = max(1, topology.max_degree())
    adj = np.zeros((n, md), dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    for u, nb in enumerate(topology.adjacency):
        deg[u] = len(nb)
        adj[u, : len(nb)] = nb
    return adj, deg


def _check_n(topology: DeviceTopology, N: int) -> None:
    if not 1 <= N <= topology.qubit_count:
        raise ChainSearchError(f"N={N} outside [1, {topology.qubit_count}]")


def count_paths(topology: DeviceTopology, N: int, method: str = "frontier",
                directed: bool = False, threads: int = 1) -> int:
    """Number of self-avoiding paths with ``N`` vertices.

    Each undirected path is counted once unless ``directed`` is set, in which
    case both orientations of every path with ``N >= 2`` are counted.
    ``method`` selects the frontier dynamic program (default), the compiled
    depth-first search, or pure-Python brute force.
    """
    _check_n(topology, N)
    if method == "frontier":
        c = _count_frontier(topology, N)
    elif method == "dfs":
        c = _count_dfs(topology, N, threads)
    elif method == "brute":
        c = sum(1 for _ in enumerate_paths(topology, N))
    else:
        raise ChainSearchError(f"unknown counting method {method!r}")
    return 2 * c if directed and N > 1 else c


def _count_dfs(topology: DeviceTopology, N: int, threads: int) -> int:
    from layerfid._kernels import count_from

    adj, deg = _adjacency_arrays(topology)
    usable = np.ones(topology.qubit_count, dtype=np.bool_)

    def run(s):
        return count_from(adj, deg, usable, N, s)[1]

    starts = range(topology.qubit_count)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return int(sum(parts))


def enumerate_paths(topology: DeviceTopology, N: int) -> Iterator[tuple[int, ...]]:
    """Every canonical ``N``-vertex path by plain recursion (oracle)."""
    _check_n(topology, N)
    adj = topology.adjacency
    path: list[int] = []
    seen = [False] * topology.qubit_count

    def rec():
        if len(path) == N:
            if N == 1 or path[0] < path[-1]:
                yield tuple(path)
            return
        for w in adj[path[-1]]:
            if not seen[w]:
                seen[w] = True
                path.append(w)
                yield from rec()
                path.pop()
                seen[w] = False

    for s in range(topology.qubit_count):
        seen[s] = True
        path.append(s)
        yield from rec()
        path.pop()
        seen[s] = False


_UNUSED, _INNER, _EXITED = -1, -2, -3
_U64_MAX = np.iinfo(np.uint64).max


def _frontier_order(topology: DeviceTopology) -> list[int]:
    """BFS vertex order with the smallest maximum frontier over all roots."""
    n = topology.qubit_count
    adj = topology.adjacency
    best = None
    for root in range(n):
        seen = [False] * n
        order = []
        for s in [root] + list(range(n)):
            if seen[s]:
                continue
            seen[s] = True
            dq = deque([s])
            while dq:
                u = dq.popleft()
                order.append(u)
                for w in adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        dq.append(w)
        pos = [0] * n
        for i, v in enumerate(order):
            pos[v] = i
        last = [max([pos[v]] + [pos[w] for w in adj[v]]) for v in range(n)]
        width = live = 0
        ends = [0] * n
        for i, v in enumerate(order):
            live += 1
            width = max(width, live)
            ends[last[v]] += 1
            live -= ends[i]
        if best is None or width < best[0]:
            best = (width, order)
    return best[1]


def _add_checked(store: dict, key, arr: np.ndarray) -> None:
    cur = store.get(key)
    if cur is None:
        store[key] = arr.copy()
        return
    total = cur + arr
    if np.any(total < cur):
        raise OverflowError("path count exceeds 64-bit range")
    store[key] = total


def _count_frontier(topology: DeviceTopology, N: int) -> int:
    """Frontier-based dynamic program over edges.

    State per frontier vertex: unused, interior (degree 2), or a fragment
    end holding its partner end (or a marker when the partner has left the
    frontier). Each state carries counts indexed by number of chosen edges.
    """
    n = topology.qubit_count
    if N == 1:
        return n
    adj = topology.adjacency
    order = _frontier_order(topology)
    pos = [0] * n
    for i, v in enumerate(order):
        pos[v] = i
    last = [max([pos[v]] + [pos[w] for w in adj[v]]) for v in range(n)]
    total = 0
    E = N - 1
    start = np.zeros(E + 1, dtype=np.uint64)
    start[0] = 1
    states: dict = {((), 0): start}
    frontier: list[int] = []

    def finish(counts, extra_edges=0):
        nonlocal total
        idx = E - extra_edges
        if 0 <= idx <= E:
            total += int(counts[idx])
            if total > _U64_MAX:
                raise OverflowError("path count exceeds 64-bit range")

    for i, v in enumerate(order):
        frontier.append(v)
        states = {(m + (_UNUSED,), e): c for (m, e), c in states.items()}
        iv = len(frontier) - 1
        for u in sorted((w for w in adj[v] if pos[w] < i), key=pos.__getitem__):
            iu = frontier.index(u)
            new: dict = {}
            for (m, ends), c in states.items():
                _add_checked(new, (m, ends), c)
                mu, mv = m[iu], m[iv]
                if mu == _INNER or mv == _INNER or mu == v:
                    continue
                shifted = np.zeros_like(c)
                shifted[1:] = c[:-1]
                if not shifted.any():
                    continue
                pu = u if mu == _UNUSED else mu
                pv = v if mv == _UNUSED else mv
                mm = list(m)
                if mu != _UNUSED:
                    mm[iu] = _INNER
                if mv != _UNUSED:
                    mm[iv] = _INNER
                if pu == _EXITED and pv == _EXITED:
                    others = (x for j, x in enumerate(mm) if j != iu and j != iv)
                    if ends == 2 and not any(x >= 0 or x == _EXITED for x in others):
                        finish(shifted)
                    continue
                if pu != _EXITED:
                    mm[frontier.index(pu)] = pv if pv != _EXITED else _EXITED
                if pv != _EXITED:
                    mm[frontier.index(pv)] = pu if pu != _EXITED else _EXITED
                _add_checked(new, (tuple(mm), ends), shifted)
            states = new
        leaving = [j for j, w in enumerate(frontier) if last[w] <= i]
        for j in sorted(leaving, reverse=True):
            new = {}
            for (m, ends), c in states.items():
                x = m[j]
                mm = list(m)
                if x >= 0 or x == _EXITED:
                    ends2 = ends + 1
                    if ends2 > 2:
                        continue
                    if x == _EXITED:
                        del mm[j]
                        if ends2 == 2 and not any(y >= 0 or y == _EXITED for y in mm):
                            finish(c)
                        continue
                    mm[frontier.index(x)] = _EXITED
                    del mm[j]
                    key = (tuple(mm), ends2)
                else:
                    del mm[j]
                    key = (tuple(mm), ends)
                _add_checked(new, key, c)
            states = new
            del frontier[j]
    return total


# ---------------------------------------------------------------- ranking

def _as_table(source: CalibratedTopology | GateErrorTable) -> GateErrorTable:
    if isinstance(source, CalibratedTopology):
        return GateErrorTable.from_calibrated(source)
    return source


def best_chains(source: CalibratedTopology | GateErrorTable, N: int, x: int = DEFAULT_X,
                penalty: DurationPenalty | None = None, threads: int = 1) -> list[ScoredChain]:
    """The top ``x + 1`` chains of ``N`` qubits by score, best first.

    Ties are broken by ascending qubit sequence. The search is exact: pruning
    only discards partial chains that provably cannot enter the top list.
    """
    from layerfid._kernels import best_from

    table = _as_table(source)
    topo = table.topology
    _check_n(topo, N)
    if x < 0:
        raise ChainSearchError("x must be non-negative")
    qlog_map, elog_map = _element_logs(table, _resolve_penalty(table, penalty))
    adj, deg = _adjacency_arrays(topo)
    n = topo.qubit_count
    qlog = np.array([qlog_map[q] for q in range(n)], dtype=np.float64)
    usable = np.isfinite(qlog)
    inc = np.full(adj.shape, -np.inf)
    for u in range(n):
        for i in range(deg[u]):
            w = int(adj[u, i])
            inc[u, i] = elog_map[canonical_edge(u, w)] + qlog_map[w]
    K = x + 1
    slack = 1e-9

    def run(starts):
        scores = np.full(K, -np.inf)
        paths = np.zeros((K, N), dtype=np.int64)
        filled = best_from(adj, deg, usable, inc, qlog, N, np.asarray(starts, dtype=np.int64),
                           K, slack, scores, paths, 0)
        return [(float(scores[j]), tuple(int(q) for q in paths[j])) for j in range(filled)]

    starts = list(range(n))
    if threads > 1:
        chunks = [starts[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(starts)]
    found = sorted((item for part in parts for item in part), key=lambda t: (-t[0], t[1]))[:K]
    if not found:
        raise ChainSearchError(f"no chain of {N} qubits exists on {topo.name or 'device'}")
    return [ScoredChain(Chain(q), math.exp(s), s) for s, q in found]


def best_chains_bruteforce(source: CalibratedTopology | GateErrorTable, N: int, x: int = DEFAULT_X,
                           penalty: DurationPenalty | None = None) -> list[ScoredChain]:
    """Exhaustive reference ranking for small instances."""
    table = _as_table(source)
    qlog, elog = _element_logs(table, _resolve_penalty(table, penalty))
    scored = []
    for p in enumerate_paths(table.topology, N):
        s = _log_score(p, qlog, elog)
        if s != -math.inf:
            scored.append((s, p))
    scored.sort(key=lambda t: (-t[0], t[1]))
    if not scored:
        raise ChainSearchError(f"no chain of {N} qubits exists")
    return [ScoredChain(Chain(p), math.exp(s), s) for s, p in scored[: x + 1]]


@dataclass(frozen=True)
class Picks:
    b: ScoredChain | None
    c: ScoredChain | None
    nonoverlap: tuple[int, ...]
    flags: frozenset[str]


def select_b_c(topx: Sequence[ScoredChain], a: Chain | ScoredChain) -> Picks:
    """Pick the two candidates sharing the fewest qubits with ``a``."""
    if isinstance(a, ScoredChain):
        a = a.chain
    base = set(a.qubits)
    ranked = sorted(topx, key=lambda sc: (-len(set(sc.chain.qubits) - base), -sc.score, sc.chain.qubits))
    picked = ranked[:2]
    counts = tuple(len(set(sc.chain.qubits) - base) for sc in picked)
    flags = set()
    if len(picked) < 2:
        flags.add("partial")
    if picked and counts[0] == 0:
        flags.add("degenerate")
    return Picks(picked[0] if picked else None, picked[1] if len(picked) > 1 else None,
                 counts, frozenset(flags))


def assemble_candidate_set(grid_ranked: Sequence[ScoredChain], isolated_ranked: Sequence[ScoredChain],
                           x: int = DEFAULT_X) -> CandidateSet:
    """Labelled set A, B, C (grid) and D, E, F (isolated)."""
    if not grid_ranked or not isolated_ranked:
        raise ChainSearchError("both strategy rankings must be non-empty")
    chains: dict[str, ScoredChain] = {}
    flags: set[str] = set()
    for labels, ranked in (("ABC", grid_ranked), ("DEF", isolated_ranked)):
        top = ranked[0]
        chains[labels[0]] = top
        picks = select_b_c([sc for sc in ranked[1 : x + 1] if sc.chain != top.chain], top.chain)
        if picks.b is not None:
            chains[labels[1]] = picks.b
        if picks.c is not None:
            chains[labels[2]] = picks.c
        if "degenerate" in picks.flags:
            flags.add("degenerate")
        if len({chains[k].chain for k in labels if k in chains}) < 3:
            flags.add("partial")
    grid_set = {chains[k].chain for k in "ABC" if k in chains}
    iso_set = {chains[k].chain for k in "DEF" if k in chains}
    if grid_set & iso_set:
        flags.add("overlap")
    return CandidateSet(MappingProxyType(chains), frozenset(flags))


def best_subchain(oneq: Sequence[float], links: Sequence[float], M: int,
                  chain: Chain | Sequence[int] | None = None) -> tuple[int, ScoredChain]:
    """Contiguous window of ``M`` qubits with the highest fidelity product.

    ``oneq`` are the per-qubit 1Q fidelities and ``links`` the ``N - 1`` 2Q
    fidelities along the chain. Ties go to the lowest start index.
    """
    N = len(oneq)
    if len(links) != N - 1:
        raise ChainSearchError(f"expected {N - 1} link fidelities, got {len(links)}")
    if not 2 <= M <= N:
        raise ChainSearchError(f"M={M} outside [2, {N}]")
    lq = [math.log(float(f)) for f in oneq]
    ll = [math.log(float(f)) for f in links]
    qubits = tuple(chain.qubits if isinstance(chain, Chain) else chain) if chain is not None else tuple(range(N))
    if len(qubits) != N:
        raise ChainSearchError("chain length does not match fidelities")
    best_start, best = 0, -math.inf
    for start in range(N - M + 1):
        s = lq[start]
        for k in range(start, start + M - 1):
            s = s + (ll[k] + lq[k + 1])
        if s > best:
            best_start, best = start, s
    sub = Chain(qubits[best_start : best_start + M])
    return best_start, ScoredChain(sub, math.exp(best), best)


def build_grid_chains(topology: DeviceTopology) -> GridChains:
    """Horizontal and vertical chain families covering every coupler."""
    grids = topology.grids
    if "horizontal" in grids or "vertical" in grids:
        h = tuple(Chain(c).validate(topology) for c in grids.get("horizontal", ()))
        v = tuple(Chain(c).validate(topology) for c in grids.get("vertical", ()))
        return GridChains(h, v)
    path = _as_single_path(topology)
    if path is None:
        raise ChainSearchError(
            "no grid embedding declared for this topology; supply '@grid' chains in the topology file")
    return GridChains((Chain(path),), ())


def _as_single_path(topology: DeviceTopology) -> tuple[int, ...] | None:
    n = topology.qubit_count
    if len(topology.edges) != n - 1 or topology.max_degree() > 2:
        return None
    if n == 1:
        return (0,)
    ends = [q for q in range(n) if len(topology.adjacency[q]) == 1]
    if len(ends) != 2:
        return None
    path = [ends[0]]
    prev = -1
    while len(path) < n:
        nxt = [w for w in topology.adjacency[path[-1]] if w != prev]
        if not nxt:
            return None
        prev = path[-1]
        path.append(nxt[0])
    return tuple(path)


def merge_gate_errors(horizontal: GateErrorTable, vertical: GateErrorTable) -> GateErrorTable:
    """Combine two tables, averaging elements measured in both."""
    if horizontal.topology != vertical.topology:
        raise ChainSearchError("tables are over different topologies")
    topo = horizontal.topology

    def merge(a: Mapping, b: Mapping, keys: Iterable, what: str) -> dict:
        out = {}
        for k in keys:
            if k in a and k in b:
                out[k] = (a[k] + b[k]) / 2.0
            elif k in a:
                out[k] = a[k]
            elif k in b:
                out[k] = b[k]
            else:
                label = edge_key(k) if isinstance(k, tuple) else k
                raise ChainSearchError(f"{what} {label} absent from both tables")
        return out

    twoq = merge(horizontal.twoq, vertical.twoq, topo.edges, "edge")
    oneq = merge(horizontal.oneq, vertical.oneq, range(topo.qubit_count), "qubit")
    dur_keys = set(horizontal.durations) | set(vertical.durations)
    durations = merge(horizontal.durations, vertical.durations, sorted(dur_keys), "edge")
    return GateErrorTable(topo, oneq, twoq, durations, "averaged")


def random_chain(topology: DeviceTopology, N: int, rng: np.random.Generator,
                 max_tries: int = 10_000) -> Chain:
    """A randomly grown self-avoiding chain (random start, random extensions)."""
    _check_n(topology, N)
    adj = topology.adjacency
    for _ in range(max_tries):
        s = int(rng.integers(topology.qubit_count))
        path = [s]
        seen = {s}
        # randomized DFS with backtracking, bounded per attempt
        stack = [list(rng.permutation(adj[s]))]
        steps = 0
        while path and len(path) < N and steps < 50 * N:
            steps += 1
            options = stack[-1]
            while options and options[-1] in seen:
                options.pop()
            if not options:
                seen.discard(path.pop())
                stack.pop()
                continue
            w = int(options.pop())
            path.append(w)
            seen.add(w)
            stack.append([q for q in rng.permutation(adj[w]) if q not in seen])
        if len(path) == N:
            return Chain(tuple(path))
    raise ChainSearchError(f"could not grow a random chain of {N} qubits")
