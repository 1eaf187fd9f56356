"""End-to-end workflows built from the search, simulation and fit layers.

``find_best_chain`` runs the prescreen measurement(s), ranks chains, builds
the candidate set and measures every candidate's layered EPLG.
``duration_study`` compares RB modes and the effect of long gates on one
chain. ``daily_tables`` turns a model plus events into dated error tables.
"""
from __future__ import annotations

import datetime as _dt
import statistics
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from layerfid.chainsearch import (DEFAULT_KAPPA, DEFAULT_X, CandidateSet, Chain, DurationPenalty, ScoredChain,
                                  GateErrorTable, assemble_candidate_set, best_chains, random_chain, select_b_c)
from layerfid.metrics import EplgEstimate, error_from_decay, eplg, propagate_bounds
from layerfid.monitor import normal_quantile_points
from layerfid.rbsim import (ChainMeasurement, NoiseModel, SimParams, apply_event, fit_all, grid_measurement,
                            isolated_measurement, measure_chain, simulate_direct_rb, DegradationEvent)
from layerfid.topology import DeviceTopology, edge_key

STRATEGIES = ("isolated", "grid", "both")


class ProtocolError(ValueError):
    pass


def derive_seed(seed: int, *tags: int) -> int:
    # the tag count keeps (t,) and (t, 0) apart: SeedSequence ignores trailing zero words
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x70726f74, len(tags), *tags])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ProtocolReport:
    strategy: str
    N: int
    x: int
    candidates: CandidateSet
    measurements: Mapping[str, ChainMeasurement]
    winner: str
    random_measurements: tuple[ChainMeasurement, ...] = ()
    tables: Mapping[str, GateErrorTable] = field(default_factory=dict)

    @property
    def winner_eplg(self) -> float:
        return self.measurements[self.winner].estimate.nominal

    def best_random_eplg(self) -> float | None:
        if not self.random_measurements:
            return None
        return min(m.estimate.nominal for m in self.random_measurements)

    def to_dict(self, include_fits: bool = False) -> dict:
        def chain_doc(label, meas):
            sc = self.candidates.chains.get(label)
            doc = {"qubits": list(meas.chain.qubits), "eplg": meas.estimate.to_dict()}
            if sc is not None:
                doc["predicted_score"] = sc.score
                doc["predicted_eplg"] = eplg(sc.score, self.N)
            if include_fits:
                doc["fits"] = [f.to_dict() for f in meas.fits]
            return doc

        out = {
            "strategy": self.strategy,
            "N": self.N,
            "x": self.x,
            "flags": sorted(self.candidates.flags),
            "chains": {label: chain_doc(label, m) for label, m in sorted(self.measurements.items())},
            "winner": {"label": self.winner, "qubits": list(self.measurements[self.winner].chain.qubits),
                       "eplg": self.winner_eplg},
        }
        if self.random_measurements:
            best = self.best_random_eplg()
            out["random_chains"] = [chain_doc("", m) for m in self.random_measurements]
            out["improvement_over_best_random"] = (best - self.winner_eplg) / best
        return out


def _strategy_set(ranked: Sequence[ScoredChain], labels: str, x: int) -> tuple[dict, set]:
    top = ranked[0]
    chains = {labels[0]: top}
    picks = select_b_c([sc for sc in ranked[1 : x + 1] if sc.chain != top.chain], top.chain)
    if picks.b is not None:
        chains[labels[1]] = picks.b
    if picks.c is not None:
        chains[labels[2]] = picks.c
    flags = set(picks.flags)
    if len({sc.chain for sc in chains.values()}) < 3:
        flags.add("partial")
    return chains, flags


def build_candidates(tables: Mapping[str, GateErrorTable], N: int, x: int = DEFAULT_X,
                     kappa: float = DEFAULT_KAPPA, threads: int = 1) -> CandidateSet:
    """Rank chains per available strategy table and label A-C (grid), D-F (isolated).

    Only the isolated ranking carries the duration penalty; grid data
    already include the cost of long gates.
    """
    ranked = {}
    if "grid" in tables:
        ranked["grid"] = best_chains(tables["grid"], N, x, threads=threads)
    if "isolated" in tables:
        ranked["isolated"] = best_chains(tables["isolated"], N, x, penalty=DurationPenalty(kappa), threads=threads)
    if len(ranked) == 2:
        return assemble_candidate_set(ranked["grid"], ranked["isolated"], x)
    (kind, ranks), = ranked.items()
    chains, flags = _strategy_set(ranks, "ABC" if kind == "grid" else "DEF", x)
    return CandidateSet(MappingProxyType(chains), frozenset(flags))


def prescreen(topology: DeviceTopology, model: NoiseModel, sim: SimParams, strategy: str,
              threads: int = 1) -> dict[str, GateErrorTable]:
    if strategy not in STRATEGIES:
        raise ProtocolError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    tables = {}
    if strategy in ("grid", "both"):
        tables["grid"] = grid_measurement(topology, model, sim.with_seed(derive_seed(sim.seed, 1)), threads)
    if strategy in ("isolated", "both"):
        tables["isolated"] = isolated_measurement(topology, model, sim.with_seed(derive_seed(sim.seed, 2)), threads)
    return tables


def find_best_chain(topology: DeviceTopology, model: NoiseModel, sim: SimParams, N: int,
                    x: int = DEFAULT_X, strategy: str = "both", kappa: float = DEFAULT_KAPPA,
                    random_chains: int = 0, threads: int = 1) -> ProtocolReport:
    """Prescreen, rank, assemble the candidate set and measure each candidate."""
    if not 2 <= N <= topology.qubit_count:
        raise ProtocolError(f"N={N} outside [2, {topology.qubit_count}]")
    tables = prescreen(topology, model, sim, strategy, threads)
    candidates = build_candidates(tables, N, x, kappa, threads)
    measured = {}
    # identical chains share one measurement so duplicates cannot win by noise alone
    by_chain: dict[Chain, ChainMeasurement] = {}
    for idx, label in enumerate(candidates.labels()):
        chain = candidates.chains[label].chain
        if chain not in by_chain:
            by_chain[chain] = measure_chain(chain, model, sim.with_seed(derive_seed(sim.seed, 3, idx)),
                                            threads=threads)
        measured[label] = by_chain[chain]
    winner = min(measured, key=lambda k: (measured[k].estimate.nominal, k))
    rand = []
    if random_chains:
        rng = np.random.default_rng(derive_seed(sim.seed, 4))
        for i in range(random_chains):
            chain = random_chain(topology, N, rng)
            rand.append(measure_chain(chain, model, sim.with_seed(derive_seed(sim.seed, 5, i)), threads=threads))
    return ProtocolReport(strategy, N, x, candidates, MappingProxyType(measured), winner, tuple(rand),
                          MappingProxyType(tables))


@dataclass(frozen=True)
class DurationStudy:
    chain: Chain
    long_gates: tuple[tuple[int, int], ...]
    mode_errors: Mapping[str, Mapping[tuple[int, int], float]]
    with_long: EplgEstimate
    without_long: EplgEstimate

    def median_error(self, mode: str) -> float:
        return statistics.median(self.mode_errors[mode].values())

    @property
    def relative_change(self) -> float:
        """(EPLG with long gates - without) / without."""
        return (self.with_long.nominal - self.without_long.nominal) / self.without_long.nominal

    def to_dict(self) -> dict:
        iso = self.median_error("isolated")
        modes = {}
        for mode, errs in self.mode_errors.items():
            pts = normal_quantile_points(list(errs.values())) if len(errs) > 1 else []
            modes[mode] = {
                "median_error": self.median_error(mode),
                "ratio_to_isolated": self.median_error(mode) / iso if iso > 0 else None,
                "errors": {edge_key(e): v for e, v in sorted(errs.items())},
                "normal_quantiles": [{"z": z, "error": v} for z, v in pts],
            }
        return {
            "qubits": list(self.chain.qubits),
            "long_gates": [edge_key(e) for e in self.long_gates],
            "modes": modes,
            "eplg_with_long_gates": self.with_long.to_dict(),
            "eplg_without_long_gates": self.without_long.to_dict(),
            "relative_change": self.relative_change,
        }


def duration_study(chain: Chain, model: NoiseModel, sim: SimParams, threads: int = 1) -> DurationStudy:
    """Per-gate errors in the three RB modes and EPLG with and without long gates.

    The "without" run drops the chain's long couplers from the layers so the
    remaining gates run at their native duration; the dropped couplers'
    fidelities are then taken from the "with" run and folded back in.
    """
    chain.validate(model.topology)
    long = tuple(sorted(set(chain.links) & model.long_gates()))
    errors = {}
    runs = {}
    # one seed for all modes: common random numbers, so mode differences are not shot noise
    mode_sim = sim.with_seed(derive_seed(sim.seed, 10))
    for mode in ("isolated", "isolated_delay", "layered"):
        data = simulate_direct_rb(chain, mode, model, mode_sim, threads=threads)
        fits = fit_all(data, threads)
        runs[mode] = fits
        errors[mode] = {f.gate: error_from_decay(f.alpha, f.d) for f in fits if len(f.gate) == 2}
    with_fits = runs["layered"]
    with_est = propagate_bounds([(f, f.d) for f in with_fits], chain.N)
    if long:
        data = simulate_direct_rb(chain, "layered", model, sim.with_seed(derive_seed(sim.seed, 11)),
                                  exclude=long, threads=threads)
        kept = fit_all(data, threads)
        restored = [f for f in with_fits if f.gate in set(long)]
        without_est = propagate_bounds([(f, f.d) for f in kept + restored], chain.N)
    else:
        data = simulate_direct_rb(chain, "layered", model, sim.with_seed(derive_seed(sim.seed, 11)), threads=threads)
        without_est = propagate_bounds([(f, f.d) for f in fit_all(data, threads)], chain.N)
    return DurationStudy(chain, long, MappingProxyType(errors), with_est, without_est)


def daily_tables(model: NoiseModel, events: Sequence[DegradationEvent], start: _dt.date, days: int,
                 drift: float = 0.0, seed: int = 0) -> list[tuple[_dt.date, GateErrorTable]]:
    """Ground-truth error tables per day with events applied.

    ``drift`` is the relative day-to-day jitter of every gate error
    (log-normal, seeded per day).
    """
    out = []
    for i in range(days):
        day = start + _dt.timedelta(days=i)
        m = model
        for ev in events:
            m = apply_event(m, ev, day)
        rng = np.random.default_rng(derive_seed(seed, 20, i))
        oneq = {q: error_from_decay(a, 2) for q, a in m.alpha1.items()}
        twoq = {e: error_from_decay(a, 4) for e, a in m.alpha2.items()}
        if drift:
            oneq = {q: v * float(np.exp(drift * rng.standard_normal())) for q, v in oneq.items()}
            twoq = {e: v * float(np.exp(drift * rng.standard_normal())) for e, v in sorted(twoq.items())}
        out.append((day, GateErrorTable(model.topology, oneq, twoq, dict(m.durations), "calibration")))
    return out
