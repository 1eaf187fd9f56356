"""Regenerate the bundled scenario, chain and series fixtures.

Run from the repository root: ``python3 tools/make_fixtures.py``. The
tuning rules are printed next to each derived parameter.
"""
import datetime as dt
import json
import math
import statistics
from pathlib import Path

import numpy as np

from layerfid.chainsearch import Chain, random_chain
from layerfid.metrics import eplg
from layerfid.monitor import reconstruct_fixed_chain_series, rolling_outlier_threshold
from layerfid.protocol import daily_tables
from layerfid.rbsim import DegradationEvent, load_scenario, synthetic_model
from layerfid.topology import edge_key, heavy_hex_preset

DATA = Path(__file__).resolve().parents[1] / "src" / "layerfid" / "data"


def dump(path, doc):
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def spread_long_gates(chain, count):
    """``count`` links spaced along the chain, alternating layer parity."""
    links = chain.links
    step = len(links) / count
    picked = []
    for i in range(count):
        j = int(i * step + step / 2)
        if (j % 2) != (i % 2):
            j = j + 1 if j + 1 < len(links) else j - 1
        picked.append(links[j])
    return picked


AMP = 0.08
PERIOD = 27.0


def modulate(table, day_index):
    """Slow per-coupler sinusoidal drift with seeded random phases."""
    import dataclasses
    rng = np.random.default_rng(62)
    phases = {e: rng.uniform(0, 2 * math.pi) for e in sorted(table.twoq)}
    twoq = {e: v * (1 + AMP * math.sin(2 * math.pi * day_index / PERIOD + phases[e])) for e, v in table.twoq.items()}
    return dataclasses.replace(table, twoq=twoq)


def main():
    eagle = heavy_hex_preset(127)
    heron = heavy_hex_preset(156)
    chain_e = random_chain(eagle, 100, np.random.default_rng(127))
    chain_h = random_chain(heron, 100, np.random.default_rng(156))
    dump(DATA / "chains" / "hh127_n100.json", {"topology": "hh127", "qubits": list(chain_e.qubits)})
    dump(DATA / "chains" / "hh156_n100.json", {"topology": "hh156", "qubits": list(chain_h.qubits)})

    # Eagle-like: 533 ns median, 7 couplers at 881 ns on the study chain
    synth_e = {"seed": 7, "twoq_error": 7e-3, "spread": 0.5, "oneq_error": 3e-4, "duration_ns": 533.0}
    base = synthetic_model(eagle, **synth_e)
    long_e = spread_long_gates(chain_e, 7)
    eps = statistics.median(0.75 * (1 - base.alpha2[e]) for e in chain_e.links)
    dt_idle = 881.0 - 533.0
    # isolated+delay median error twice the isolated one: 0.75 * 2 * lam * dt = eps
    lam = eps / (0.75 * 2 * dt_idle)
    # crosstalk on interior gates (two active neighbours) adds half the isolated error
    chi = math.sqrt(1 - 0.5 * eps / 0.75)
    print(f"eagle: median chain eps={eps:.3e} lambda={lam:.3e}/ns chi={chi:.6f}")
    eagle_doc = {
        "name": "eagle_like",
        "topology": "hh127",
        "notes": [
            "synthetic spatially correlated errors, median 2Q error about 7e-3",
            "durations: 533 ns everywhere except 7 study-chain couplers at 881 ns",
            f"lambda = eps_med / (0.75 * 2 * 348 ns) with eps_med = {eps:.4e} on the study chain,"
            " so the isolated+delay median error is about twice the isolated one",
            "chi = sqrt(1 - 0.5 * eps_med / 0.75): crosstalk on an interior gate adds half of eps_med",
        ],
        "model": {"synthetic": synth_e, "lambda": round(lam, 10), "chi": round(chi, 6),
                  "durations": {"default": 533.0, **{edge_key(e): 881.0 for e in long_e}}},
        "sim": {"lengths": [1, 30, 40, 60, 80, 100, 150, 200, 300, 400, 500, 600],
                "randomizations": 10, "shots": 200, "seed": 2024},
        "search": {"N": 100, "x": 15, "kappa": 0.01, "chain_file": "hh127_n100.json"},
    }
    dump(DATA / "scenarios" / "eagle_like.json", eagle_doc)

    # Heron-like: 68 ns median, 22 couplers at 80 ns, 7 of them on the chain
    synth_h = {"seed": 11, "twoq_error": 3e-3, "spread": 0.5, "oneq_error": 2e-4, "duration_ns": 68.0}
    on_chain = spread_long_gates(chain_h, 7)
    off_chain = [e for e in heron.edges if e not in set(chain_h.links)]
    rng = np.random.default_rng(156)
    extra = [off_chain[i] for i in sorted(rng.choice(len(off_chain), 15, replace=False))]
    heron_doc = {
        "name": "heron_like",
        "topology": "hh156",
        "notes": [
            "synthetic spatially correlated errors, median 2Q error about 3e-3",
            "durations: 68 ns median, 22 couplers at 80 ns (17% longer), 7 of them on the study chain",
            "small idle rate 5e-6 / ns and no crosstalk (tunable couplers)",
        ],
        "model": {"synthetic": synth_h, "lambda": 5e-6, "chi": 1.0,
                  "durations": {"default": 68.0, **{edge_key(e): 80.0 for e in on_chain + extra}}},
        "sim": {"lengths": [1, 30, 40, 60, 80, 100, 150, 200, 300, 400, 500, 600],
                "randomizations": 10, "shots": 200, "seed": 2025},
        "search": {"N": 100, "x": 15, "kappa": 0.01, "chain_file": "hh156_n100.json"},
    }
    dump(DATA / "scenarios" / "heron_like.json", heron_doc)

    regression = {
        "name": "regression",
        "topology": "hh127",
        "notes": ["crosstalk-free, uniform 400 ns durations, strongly varying correlated errors",
                  "used by the end-to-end chain-protocol regression test"],
        "model": {"synthetic": {"seed": 3, "twoq_error": 6e-3, "spread": 0.7, "oneq_error": 3e-4,
                                "duration_ns": 400.0}, "chi": 1.0, "lambda": 0.0},
        "sim": {"randomizations": 10, "shots": 200, "seed": 99},
        "search": {"N": 30, "x": 15, "kappa": 0.01, "random_chains": 3},
    }
    dump(DATA / "scenarios" / "regression.json", regression)

    # 100-day fixed-chain series: small daily drift, slow drift, one TLS-like event on day 62
    scen = load_scenario(regression)
    chain = Chain(tuple(chain_e.qubits[:50]))
    start = dt.date(2024, 1, 1)
    calm = daily_tables(scen.model, [], start, 1)[0][1]
    from layerfid.chainsearch import score_chain
    base_eplg = eplg(score_chain(chain, calm).score, chain.N)
    hit = [chain.links[10], chain.links[30]]
    # solve for the decay suppression that gives a 2.3x EPLG on the event day
    lo, hi = 0.5, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        ev = DegradationEvent(start + dt.timedelta(61), start + dt.timedelta(61), mid, (), tuple(hit))
        tab = daily_tables(scen.model, [ev], start + dt.timedelta(61), 1)[0][1]
        ratio = eplg(score_chain(chain, tab).score, chain.N) / base_eplg
        lo, hi = (mid, hi) if ratio > 2.3 else (lo, mid)
    factor = round(0.5 * (lo + hi), 6)
    ev = DegradationEvent(start + dt.timedelta(61), start + dt.timedelta(61), factor, (), tuple(hit))
    tables = [(day, modulate(tab, i)) for i, (day, tab) in enumerate(daily_tables(scen.model, [ev], start, 100))]
    series = reconstruct_fixed_chain_series(chain, tables).series
    report = rolling_outlier_threshold(series)
    print(f"series: event factor {factor}, flagged {sorted(d.isoformat() for d in report.flags)}")
    (DATA / "series" / "spike_100d.jsonl").write_text(series.to_jsonl())
    dump(DATA / "series" / "spike_100d.meta.json", {
        "chain_qubits": list(chain.qubits), "event": {"start": ev.start_day.isoformat(), "factor": factor,
                                                       "edges": [edge_key(e) for e in hit]},
        "modulation": {"amplitude": AMP, "period_days": PERIOD, "phase_seed": 62}, "scenario": "regression"})
    const = "".join(json.dumps({"day": (start + dt.timedelta(i)).isoformat(), "kind": "fixed", "chain": [],
                                "eplg": 0.01}, sort_keys=True) + "\n" for i in range(30))
    (DATA / "series" / "constant_30d.jsonl").write_text(const)


if __name__ == "__main__":
    main()
