"""Synthetic direct-RB data for chains under a configurable noise model.

Survival curves are analytic, ``P(x) = a * alpha_eff**x + b`` with the
uniform-outcome asymptote ``b = 1/2**w`` for a gate on ``w`` qubits, and
each sample is a binomial draw. Every draw has its own Philox stream keyed
by ``(seed, gate, randomization, length)``, so results do not depend on how
work is scheduled or on which other lengths/randomizations are requested.
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from layerfid.chainsearch import Chain, GateErrorTable, build_grid_chains, merge_gate_errors
from layerfid.fit import CLIFFORD_LENGTHS, FitError, FitResult, fit_decay
from layerfid.metrics import EplgEstimate, error_from_decay, propagate_bounds
from layerfid.topology import DeviceTopology, Edge, canonical_edge, edge_key, graph_distances, parse_edge_key

MODES = ("isolated", "isolated_delay", "layered")
Gate = tuple[int, ...]


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Ground-truth decays and timing for every qubit and coupler.

    ``idle_rate`` is the per-qubit depolarising rate (per ns) during idle
    padding; ``chi`` multiplies a gate's decay once per simultaneously
    active gate that sits on a neighbouring coupler.
    """

    topology: DeviceTopology
    alpha1: Mapping[int, float]
    alpha2: Mapping[Edge, float]
    idle_rate: Mapping[int, float]
    durations: Mapping[Edge, float]
    chi: float = 1.0

    def __post_init__(self):
        topo = self.topology
        a1 = {int(q): float(v) for q, v in self.alpha1.items()}
        a2 = {canonical_edge(*e): float(v) for e, v in self.alpha2.items()}
        lam = {int(q): float(v) for q, v in self.idle_rate.items()}
        dur = {canonical_edge(*e): float(v) for e, v in self.durations.items()}
        qubits, edges = set(range(topo.qubit_count)), set(topo.edges)
        for name, table, keys in (("alpha1", a1, qubits), ("idle_rate", lam, qubits),
                                  ("alpha2", a2, edges), ("durations", dur, edges)):
            if set(table) != keys:
                missing = sorted(keys - set(table))[:5]
                extra = sorted(set(table) - keys)[:5]
                raise SimulationError(f"{name} incomplete or off-device (missing {missing}, unknown {extra})")
        for q, v in a1.items():
            if not 0.0 < v <= 1.0:
                raise SimulationError(f"alpha1[{q}]={v} outside (0, 1]")
        for e, v in a2.items():
            if not 0.0 < v <= 1.0:
                raise SimulationError(f"alpha2[{edge_key(e)}]={v} outside (0, 1]")
        for q, v in lam.items():
            if v < 0:
                raise SimulationError(f"idle_rate[{q}]={v} is negative")
        for e, v in dur.items():
            if v <= 0:
                raise SimulationError(f"duration[{edge_key(e)}]={v} must be positive")
        if not 0.0 < self.chi <= 1.0:
            raise SimulationError(f"chi={self.chi} outside (0, 1]")
        object.__setattr__(self, "alpha1", MappingProxyType(a1))
        object.__setattr__(self, "alpha2", MappingProxyType(a2))
        object.__setattr__(self, "idle_rate", MappingProxyType(lam))
        object.__setattr__(self, "durations", MappingProxyType(dur))

    def median_duration(self) -> float:
        return float(statistics.median(self.durations.values()))

    def long_gates(self) -> set[Edge]:
        """Couplers slower than the device median."""
        med = self.median_duration()
        return {e for e, d in self.durations.items() if d > med}

    def to_dict(self) -> dict:
        return {
            "alpha1": {str(q): v for q, v in sorted(self.alpha1.items())},
            "alpha2": {edge_key(e): v for e, v in sorted(self.alpha2.items())},
            "lambda": {str(q): v for q, v in sorted(self.idle_rate.items())},
            "chi": self.chi,
            "durations": {edge_key(e): v for e, v in sorted(self.durations.items())},
        }

    @classmethod
    def from_dict(cls, topology: DeviceTopology, doc: Mapping) -> "NoiseModel":
        """Build from a document; each field may be a scalar or a full map."""

        def qubit_map(value, name):
            if isinstance(value, Mapping):
                return {int(k): v for k, v in value.items()}
            if value is None:
                raise SimulationError(f"model field {name!r} is required")
            return {q: float(value) for q in range(topology.qubit_count)}

        def edge_map(value, name):
            if isinstance(value, Mapping):
                out = {e: value["default"] for e in topology.edges} if "default" in value else {}
                out.update({parse_edge_key(k): v for k, v in value.items() if k != "default"})
                return out
            if value is None:
                raise SimulationError(f"model field {name!r} is required")
            return {e: float(value) for e in topology.edges}

        return cls(
            topology,
            qubit_map(doc.get("alpha1"), "alpha1"),
            edge_map(doc.get("alpha2"), "alpha2"),
            qubit_map(doc.get("lambda", 0.0), "lambda"),
            edge_map(doc.get("durations"), "durations"),
            float(doc.get("chi", 1.0)),
        )


@dataclass(frozen=True)
class LayerContext:
    active: frozenset[Edge]
    max_duration: float


@dataclass(frozen=True)
class DegradationEvent:
    start_day: _dt.date
    end_day: _dt.date
    factor: float
    qubits: tuple[int, ...] = ()
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.factor <= 1.0:
            raise SimulationError(f"event factor {self.factor} outside (0, 1]")
        if self.end_day < self.start_day:
            raise SimulationError("event interval is empty")
        object.__setattr__(self, "edges", tuple(canonical_edge(*e) for e in self.edges))

    def active_on(self, day: _dt.date) -> bool:
        return self.start_day <= day <= self.end_day

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DegradationEvent":
        return cls(
            _dt.date.fromisoformat(doc["start"]),
            _dt.date.fromisoformat(doc.get("end", doc["start"])),
            float(doc["factor"]),
            tuple(int(q) for q in doc.get("qubits", ())),
            tuple(parse_edge_key(k) for k in doc.get("edges", ())),
        )


@dataclass(frozen=True)
class SimParams:
    lengths: tuple[int, ...] = CLIFFORD_LENGTHS
    randomizations: int = 10
    shots: int = 200
    seed: int = 0

    def __post_init__(self):
        lengths = tuple(int(x) for x in self.lengths)
        if not lengths or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise SimulationError("lengths must be non-empty and strictly increasing")
        if lengths[0] < 0:
            raise SimulationError("lengths must be non-negative")
        if self.randomizations < 1 or self.shots < 1:
            raise SimulationError("randomizations and shots must be positive")
        object.__setattr__(self, "lengths", lengths)

    def with_seed(self, seed: int) -> "SimParams":
        return dataclasses.replace(self, seed=int(seed))


@dataclass(frozen=True)
class RBDecayData:
    gate: Gate
    mode: str
    lengths: tuple[int, ...]
    counts: np.ndarray = field(compare=False, repr=False)
    shots: int
    seed: int

    @property
    def samples(self) -> np.ndarray:
        return np.asarray(self.counts) / self.shots

    @property
    def d(self) -> int:
        return 2 if len(self.gate) == 1 else 4

    def to_dict(self) -> dict:
        return {
            "gate": list(self.gate),
            "mode": self.mode,
            "lengths": list(self.lengths),
            "counts": np.asarray(self.counts).tolist(),
            "shots": self.shots,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RBDecayData":
        return cls(tuple(doc["gate"]), doc["mode"], tuple(doc["lengths"]),
                   np.asarray(doc["counts"], dtype=np.int64), int(doc["shots"]), int(doc["seed"]))


def _gates_adjacent(g: Edge, h: Edge, topology: DeviceTopology) -> bool:
    if set(g) & set(h):
        return False
    return any(topology.has_edge(a, b) for a in g for b in h)


def effective_alpha(gate: int | Gate, mode: str, context: LayerContext | None, model: NoiseModel) -> float:
    """Decay seen by ``gate`` in the given RB mode.

    Single-qubit gates keep their intrinsic decay in every mode. For a 2Q
    gate, ``isolated_delay`` adds idle decay over the padding up to the
    layer's longest gate, and ``layered`` further applies ``chi`` once per
    active gate on a neighbouring coupler.
    """
    if mode not in MODES:
        raise SimulationError(f"unknown mode {mode!r}")
    if isinstance(gate, int) or len(gate) == 1:
        q = gate if isinstance(gate, int) else gate[0]
        return model.alpha1[q]
    e = canonical_edge(*gate)
    if e not in model.alpha2:
        raise SimulationError(f"gate {edge_key(e)} not in model")
    alpha = model.alpha2[e]
    if mode == "isolated":
        return alpha
    if context is None:
        raise SimulationError(f"mode {mode} needs a layer context")
    dt = context.max_duration - model.durations[e]
    if dt < -1e-9:
        raise SimulationError(
            f"layer max duration {context.max_duration} shorter than gate {edge_key(e)} ({model.durations[e]})")
    dt = max(dt, 0.0)
    alpha = alpha * math.exp(-(model.idle_rate[e[0]] + model.idle_rate[e[1]]) * dt)
    if mode == "layered":
        k = sum(1 for h in context.active if h != e and _gates_adjacent(e, h, model.topology))
        alpha = alpha * model.chi ** k
    return alpha


def _gate_key(seed: int, gate: Gate) -> np.ndarray:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, len(gate), *gate]).generate_state(2, dtype=np.uint64)


def sample_counts(gate: Gate, alpha: float, lengths: Sequence[int], randomizations: int, shots: int,
                  seed: int) -> np.ndarray:
    """Binomial survival counts, one Philox stream per (randomization, length)."""
    b = 1.0 / 2 ** len(gate)
    a = 1.0 - b
    key = _gate_key(seed, gate)
    out = np.empty((randomizations, len(lengths)), dtype=np.int64)
    for j, x in enumerate(lengths):
        p = a * alpha ** x + b
        if not 0.0 <= p <= 1.0:
            raise SimulationError(f"survival probability {p} outside [0, 1] for gate {gate}")
        for r in range(randomizations):
            gen = np.random.Generator(np.random.Philox(key=key, counter=[0, 0, r, int(x)]))
            out[r, j] = gen.binomial(shots, p)
    return out


def chain_gates(chain: Chain) -> list[Gate]:
    return [(q,) for q in chain.qubits] + list(chain.links)


def _layer_contexts(chains: Sequence[Chain], model: NoiseModel,
                    exclude: Iterable[Edge] = ()) -> dict[Edge, LayerContext]:
    """Context of every 2Q gate when ``chains`` run their even and odd layers together."""
    skip = set(canonical_edge(*e) for e in exclude)
    ctx = {}
    for parity in (0, 1):
        layer = [e for ch in chains for e in ch.layers()[parity] if e not in skip]
        if not layer:
            continue
        active = frozenset(layer)
        dmax = max(model.durations[e] for e in layer)
        for e in layer:
            ctx[e] = LayerContext(active, dmax)
    return ctx


def simulate_direct_rb(chain: Chain, mode: str, model: NoiseModel, sim: SimParams,
                       concurrent: Sequence[Chain] = (), exclude: Iterable[Edge] = (),
                       threads: int = 1) -> list[RBDecayData]:
    """Direct-RB data for every 1Q and 2Q element of ``chain``.

    ``concurrent`` chains share the chain's disjoint layers (grid families);
    ``exclude`` drops couplers from the experiment entirely.
    """
    if mode not in MODES:
        raise SimulationError(f"unknown mode {mode!r}")
    chain.validate(model.topology)
    chains = [chain] + [c for c in concurrent if c != chain]
    skip = set(canonical_edge(*e) for e in exclude)
    ctx = _layer_contexts(chains, model, skip)
    gates = [g for g in chain_gates(chain) if len(g) == 1 or g not in skip]

    def run(g):
        alpha = effective_alpha(g, mode, ctx.get(g) if len(g) == 2 else None, model)
        counts = sample_counts(g, alpha, sim.lengths, sim.randomizations, sim.shots, sim.seed)
        return RBDecayData(g, mode, sim.lengths, counts, sim.shots, sim.seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, gates))
    return [run(g) for g in gates]


def apply_event(model: NoiseModel, event: DegradationEvent, day: _dt.date) -> NoiseModel:
    """Model with the event's decay suppression applied when ``day`` is inside it."""
    for q in event.qubits:
        if q not in model.alpha1:
            raise SimulationError(f"event names unknown qubit {q}")
    for e in event.edges:
        if e not in model.alpha2:
            raise SimulationError(f"event names unknown edge {edge_key(e)}")
    if not event.active_on(day) or event.factor == 1.0:
        return model
    a1 = dict(model.alpha1)
    a2 = dict(model.alpha2)
    for q in event.qubits:
        a1[q] *= event.factor
    for e in event.edges:
        a2[e] *= event.factor
    return dataclasses.replace(model, alpha1=a1, alpha2=a2)


def fit_all(data: Sequence[RBDecayData], threads: int = 1) -> list[FitResult]:
    """Fit every decay; failures are collected and raised together."""

    def one(d):
        try:
            return fit_decay(d)
        except FitError as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, data))
    else:
        results = [one(d) for d in data]
    failed = [(d.gate, r) for d, r in zip(data, results) if isinstance(r, Exception)]
    if failed:
        detail = "; ".join(f"{'-'.join(map(str, g))}: {e}" for g, e in failed[:10])
        raise FitError(f"{len(failed)} fit(s) failed: {detail}")
    return results


def _table_from_fits(topology, fits: Sequence[FitResult], model: NoiseModel, provenance: str) -> GateErrorTable:
    oneq, twoq = {}, {}
    for f in fits:
        err = max(0.0, error_from_decay(f.alpha, f.d))
        if len(f.gate) == 1:
            oneq[f.gate[0]] = err
        else:
            twoq[canonical_edge(*f.gate)] = err
    durations = {e: model.durations[e] for e in twoq}
    return GateErrorTable(topology, oneq, twoq, durations, provenance)


def _family_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x6772, tag]).generate_state(1, np.uint64)[0])


def grid_measurement(topology: DeviceTopology, model: NoiseModel, sim: SimParams,
                     threads: int = 1) -> GateErrorTable:
    """Layered RB on the horizontal and vertical grid families, merged by mean."""
    grid = build_grid_chains(topology)
    tables = []
    for tag, family in enumerate((grid.horizontal, grid.vertical)):
        if not family:
            continue
        fam_sim = sim.with_seed(_family_seed(sim.seed, tag))
        data = []
        for chain in family:
            data += simulate_direct_rb(chain, "layered", model, fam_sim, concurrent=family, threads=threads)
        tables.append(_table_from_fits(topology, fit_all(data, threads), model, "grid"))
    if len(tables) == 1:
        merged = tables[0]
    else:
        merged = merge_gate_errors(tables[0], tables[1])
    return dataclasses.replace(merged, provenance="grid")


def isolated_batches(topology: DeviceTopology, min_idle: int = 2) -> list[list[Edge]]:
    """Greedy batches of couplers with at least ``min_idle`` idle qubits between any two.

    Two couplers conflict when some qubit of one lies within ``min_idle``
    hops of a qubit of the other.
    """
    edges = list(topology.edges)
    dist = {q: graph_distances(topology, [q]) for q in range(topology.qubit_count)}
    batches: list[list[Edge]] = []
    for e in edges:
        for batch in batches:
            if all(min(dist[a][b] for a in e for b in h) > min_idle for h in batch):
                batch.append(e)
                break
        else:
            batches.append([e])
    return batches


def isolated_measurement(topology: DeviceTopology, model: NoiseModel, sim: SimParams,
                         threads: int = 1) -> GateErrorTable:
    """Isolated RB: 2Q gates in well-separated batches, no barriers, plus 1Q RB."""
    data = []
    for batch in isolated_batches(topology):
        for e in batch:
            counts = sample_counts(e, effective_alpha(e, "isolated", None, model), sim.lengths,
                                   sim.randomizations, sim.shots, sim.seed)
            data.append(RBDecayData(e, "isolated", sim.lengths, counts, sim.shots, sim.seed))
    for q in range(topology.qubit_count):
        counts = sample_counts((q,), model.alpha1[q], sim.lengths, sim.randomizations, sim.shots, sim.seed)
        data.append(RBDecayData((q,), "isolated", sim.lengths, counts, sim.shots, sim.seed))
    return _table_from_fits(topology, fit_all(data, threads), model, "isolated")


@dataclass(frozen=True)
class ChainMeasurement:
    chain: Chain
    mode: str
    estimate: EplgEstimate
    fits: tuple[FitResult, ...]

    def errors(self, weight: int = 2) -> dict[Gate, float]:
        return {f.gate: error_from_decay(f.alpha, f.d) for f in self.fits if len(f.gate) == weight}

    def to_dict(self) -> dict:
        return {
            "qubits": list(self.chain.qubits),
            "mode": self.mode,
            "eplg": self.estimate.to_dict(),
            "fits": [f.to_dict() for f in self.fits],
        }


def measure_chain(chain: Chain, model: NoiseModel, sim: SimParams, mode: str = "layered",
                  threads: int = 1) -> ChainMeasurement:
    """Simulate, fit and reduce one chain to an EPLG estimate."""
    data = simulate_direct_rb(chain, mode, model, sim, threads=threads)
    fits = fit_all(data, threads)
    est = propagate_bounds([(f, f.d) for f in fits], chain.N)
    return ChainMeasurement(chain, mode, est, tuple(fits))


def synthetic_model(topology: DeviceTopology, seed: int, twoq_error: float = 5e-3, spread: float = 0.5,
                    correlation_hops: float = 3.0, oneq_error: float = 3e-4, idle_rate: float = 0.0,
                    chi: float = 1.0, duration_ns: float = 100.0, long_edges: Mapping[Edge, float] | None = None,
                    hot_spots: int = 0, hot_factor: float = 4.0) -> NoiseModel:
    """Noise model with spatially correlated gate errors.

    A Gaussian field on qubits is smoothed with weights ``exp(-hops /
    correlation_hops)``; each coupler's log-error is the median error plus
    ``spread`` times the mean field of its two qubits. ``hot_spots`` picks
    random qubits whose surrounding couplers are ``hot_factor`` times worse.
    """
    rng = np.random.default_rng(seed)
    n = topology.qubit_count
    raw = rng.standard_normal(n)
    field_ = np.empty(n)
    dists = [graph_distances(topology, [q]) for q in range(n)]
    for q in range(n):
        d = np.array(dists[q], dtype=float)
        w = np.where(d >= 0, np.exp(-d / correlation_hops), 0.0)
        field_[q] = (w @ raw) / math.sqrt(w @ w)
    field_ = (field_ - field_.mean()) / (field_.std() or 1.0)
    hot = set(rng.choice(n, size=hot_spots, replace=False).tolist()) if hot_spots else set()
    alpha2 = {}
    for e in topology.edges:
        err = twoq_error * math.exp(spread * 0.5 * (field_[e[0]] + field_[e[1]]) + 0.1 * rng.standard_normal())
        if hot and (set(e) & hot or any(dists[h][e[0]] <= 1 or dists[h][e[1]] <= 1 for h in hot)):
            err *= hot_factor
        alpha2[e] = 1.0 - min(err, 0.5) / 0.75
    alpha1 = {}
    for q in range(n):
        err = oneq_error * math.exp(spread * field_[q] + 0.1 * rng.standard_normal())
        alpha1[q] = 1.0 - min(err, 0.3) / 0.5
    durations = {e: float(duration_ns) for e in topology.edges}
    for e, d in (long_edges or {}).items():
        durations[canonical_edge(*e)] = float(d)
    return NoiseModel(topology, alpha1, alpha2, {q: float(idle_rate) for q in range(n)}, durations, chi)


@dataclass(frozen=True)
class Scenario:
    """Topology, ground-truth model, events and sampling settings in one document."""

    topology: DeviceTopology
    model: NoiseModel
    sim: SimParams
    events: tuple[DegradationEvent, ...] = ()
    search: Mapping = field(default_factory=dict)
    name: str = ""


_SYNTH_KEYS = {"seed", "twoq_error", "spread", "correlation_hops", "oneq_error", "duration_ns",
               "hot_spots", "hot_factor"}


def model_from_document(topology: DeviceTopology, doc: Mapping) -> NoiseModel:
    """Explicit fields override a generated base when ``synthetic`` is present."""
    synth = doc.get("synthetic")
    if synth is None:
        return NoiseModel.from_dict(topology, doc)
    unknown = set(synth) - _SYNTH_KEYS
    if unknown:
        raise SimulationError(f"unknown synthetic parameters {sorted(unknown)}")
    base = synthetic_model(topology, **synth)
    merged = {"alpha1": dict(base.alpha1), "alpha2": {edge_key(e): v for e, v in base.alpha2.items()},
              "lambda": dict(base.idle_rate), "chi": base.chi,
              "durations": {edge_key(e): v for e, v in base.durations.items()}}
    for key in ("alpha1", "alpha2", "lambda", "durations"):
        if key not in doc:
            continue
        value = doc[key]
        if isinstance(value, Mapping):
            merged[key] = {**merged[key], **{str(k): v for k, v in value.items()}}
            if "default" in value:
                default = value["default"]
                merged[key] = {k: default for k in merged[key]}
                merged[key].update({str(k): v for k, v in value.items() if k != "default"})
        else:
            merged[key] = value
    if "chi" in doc:
        merged["chi"] = doc["chi"]
    return NoiseModel.from_dict(topology, merged)


def load_scenario(doc: Mapping, topology: DeviceTopology | None = None) -> Scenario:
    from layerfid.topology import resolve_topology

    if topology is None:
        if "topology" not in doc:
            raise SimulationError("scenario has no topology")
        topology = resolve_topology(str(doc["topology"]))
    if "model" not in doc:
        raise SimulationError("scenario has no model")
    model = model_from_document(topology, doc["model"])
    sim_doc = dict(doc.get("sim", {}))
    sim = SimParams(**{k: (tuple(v) if k == "lengths" else v) for k, v in sim_doc.items()})
    events = tuple(DegradationEvent.from_dict(e) for e in doc.get("events", ()))
    return Scenario(topology, model, sim, events, MappingProxyType(dict(doc.get("search", {}))),
                    str(doc.get("name", "")))
