"""Command-line interface: ``layerfid <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
JSON goes to stdout (or ``--out``) with sorted keys; timings and progress go
to stderr so stdout is reproducible.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time
from importlib.resources import files
from pathlib import Path

import numpy as np

from layerfid import chainsearch, fit, metrics, monitor, protocol, rbsim, topology

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEEDED = {"find", "grid", "simulate", "scan", "duration-study", "report"}
RANDOMIZATION_AXIS = (1, 5, 6, 10, 20, 50, 100)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_file(*parts: str):
    return files("layerfid.data").joinpath(*parts)


def _read_document(source: str, folder: str, suffix: str = ".json") -> str:
    """Read a file path, or a bundled fixture by bare name."""
    path = Path(source)
    if path.exists():
        return path.read_text()
    bundled = _data_file(folder, source if source.endswith(suffix) else source + suffix)
    if bundled.is_file():
        return bundled.read_text()
    raise FileNotFoundError(f"no such file or bundled {folder[:-1]}: {source}")


def _load_scenario(args) -> rbsim.Scenario:
    if not args.scenario:
        raise UsageError("--scenario is required")
    doc = json.loads(_read_document(args.scenario, "scenarios"))
    topo = topology.resolve_topology(args.topo) if getattr(args, "topo", None) else None
    scen = rbsim.load_scenario(doc, topo)
    sim = scen.sim
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "shots", None):
        overrides["shots"] = args.shots
    if getattr(args, "randomizations", None):
        overrides["randomizations"] = args.randomizations
    if getattr(args, "lengths", None):
        overrides["lengths"] = tuple(args.lengths)
    if overrides:
        sim = dataclasses.replace(sim, **overrides)
    return dataclasses.replace(scen, sim=sim)


def _load_chain(args, scen: rbsim.Scenario | None = None) -> chainsearch.Chain:
    if getattr(args, "chain", None):
        qubits = tuple(int(q) for q in args.chain.split(","))
    else:
        source = getattr(args, "chain_file", None)
        if not source and scen is not None:
            source = scen.search.get("chain_file")
        if not source:
            raise UsageError("a chain is required (--chain or --chain-file)")
        doc = json.loads(_read_document(source, "chains"))
        qubits = tuple(doc["qubits"] if isinstance(doc, dict) else doc)
    chain = chainsearch.Chain(qubits)
    if scen is not None:
        chain.validate(scen.topology)
    return chain


def _emit(args, payload, fmt="json"):
    if fmt == "json":
        text = json.dumps(payload, indent=1, sort_keys=True, allow_nan=False) + "\n"
    else:
        text = payload
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_count(args):
    topo = topology.resolve_topology(args.topo)
    method = "brute" if args.oracle else args.method
    t0 = time.perf_counter()
    n = chainsearch.count_paths(topo, args.n, method=method, directed=args.directed, threads=args.threads)
    _note(f"counted in {time.perf_counter() - t0:.2f} s ({method}, {'directed' if args.directed else 'undirected'})")
    _emit(args, f"{n}\n", fmt="text")


def cmd_find(args):
    scen = _load_scenario(args)
    search = scen.search
    N = args.n or search.get("N")
    if not N:
        raise UsageError("--n is required when the scenario has no search.N")
    x = args.x if args.x is not None else search.get("x", chainsearch.DEFAULT_X)
    kappa = args.kappa if args.kappa is not None else search.get("kappa", chainsearch.DEFAULT_KAPPA)
    n_random = args.random_chains if args.random_chains is not None else search.get("random_chains", 0)
    if args.oracle:
        tables = protocol.prescreen(scen.topology, scen.model, scen.sim, args.strategy, args.threads)
        ranked = {}
        for kind, table in tables.items():
            penalty = chainsearch.DurationPenalty(kappa) if kind == "isolated" else None
            ranked[kind] = [sc.to_dict() for sc in chainsearch.best_chains_bruteforce(table, N, x, penalty)]
        _emit(args, {"N": N, "x": x, "ranked": ranked})
        return
    report = protocol.find_best_chain(scen.topology, scen.model, scen.sim, N, x, args.strategy, kappa,
                                      n_random, args.threads)
    _emit(args, report.to_dict(include_fits=args.fits))


def cmd_grid(args):
    if args.scenario:
        scen = _load_scenario(args)
        table = rbsim.grid_measurement(scen.topology, scen.model, scen.sim, args.threads)
        _emit(args, table.to_dict())
        return
    if not args.topo:
        raise UsageError("grid needs --topo or --scenario")
    topo = topology.resolve_topology(args.topo)
    grid = chainsearch.build_grid_chains(topo)
    _emit(args, {name: [list(c.qubits) for c in fam] for name, fam in grid.families().items()})


def cmd_simulate(args):
    scen = _load_scenario(args)
    chain = _load_chain(args, scen)
    data = rbsim.simulate_direct_rb(chain, args.mode, scen.model, scen.sim, threads=args.threads)
    _emit(args, {"qubits": list(chain.qubits), "mode": args.mode, "data": [d.to_dict() for d in data]})


def _read_sim_output(path: str):
    doc = json.loads(Path(path).read_text())
    return doc, [rbsim.RBDecayData.from_dict(d) for d in doc["data"]]


def cmd_fit(args):
    doc, data = _read_sim_output(args.data)
    fits = rbsim.fit_all(data, args.threads)
    N = len(doc.get("qubits", ())) or len({q for d in data for q in d.gate})
    out = {"fits": [f.to_dict() for f in fits]}
    if N >= 2:
        out["eplg"] = metrics.propagate_bounds([(f, f.d) for f in fits], N).to_dict()
    _emit(args, out)


def cmd_scan(args):
    scen = _load_scenario(args)
    chain = _load_chain(args, scen)
    total = args.randomizations or 100
    sim = dataclasses.replace(scen.sim, randomizations=total)
    data = rbsim.simulate_direct_rb(chain, "layered", scen.model, sim, threads=args.threads)
    if args.mode == "randomizations":
        axis = args.axis or [r for r in RANDOMIZATION_AXIS if r <= total]
        rows = fit.randomization_scan(data, axis, args.trials, sim.seed, chain.N, args.threads)
    else:
        axis = args.axis or list(sim.lengths)
        rows = fit.clifford_scan(data, axis, chain.N, threads=args.threads)
    _emit(args, _csv([r.row() for r in rows], ["axis", "nominal", "lower", "upper", "half_width", "flags"]),
          fmt="text")


def cmd_duration_study(args):
    scen = _load_scenario(args)
    chain = _load_chain(args, scen)
    study = protocol.duration_study(chain, scen.model, scen.sim, args.threads)
    _emit(args, study.to_dict())


def cmd_monitor(args):
    series = monitor.parse_jsonl(_read_document(args.series_file, "series", ".jsonl"))
    kinds = series.kinds()
    kind = args.kind or (kinds[0] if len(kinds) == 1 else None)
    if kind is None:
        raise UsageError(f"series has several kinds {kinds}; pick one with --kind")
    sub = series.of_kind(kind)
    report = monitor.rolling_outlier_threshold(sub, args.window, static=args.static)
    if args.format == "csv":
        _emit(args, _csv(report.rows(), ["day", "eplg", "threshold", "flagged"]), fmt="text")
        return
    out = {"kind": kind, "outliers": report.to_dict(), "stats": monitor.summary_stats(sub)}
    if len(sub) >= 2:
        out["normal_quantiles"] = [{"z": z, "eplg": v} for z, v in monitor.normal_quantile_points(sub)]
    _emit(args, out)


def cmd_report(args):
    scen = _load_scenario(args)
    chain = _load_chain(args, scen)
    meas = rbsim.measure_chain(chain, scen.model, scen.sim, mode="layered", threads=args.threads)
    by_gate = {f.gate: f for f in meas.fits}
    oneq = [metrics.fidelity_from_decay(by_gate[(q,)].alpha, 2).value for q in chain.qubits]
    links = [metrics.fidelity_from_decay(by_gate[e].alpha, 4).value for e in chain.links]
    lengths = args.curve_lengths or list(range(2, chain.N + 1))
    curve = []
    for L in lengths:
        start, scored = chainsearch.best_subchain(oneq, links, L)
        curve.append({"length": L, "start": start, "eplg": metrics.eplg(scored.score, L),
                      "qubits": list(chain.qubits[start:start + L])})
    out = {"qubits": list(chain.qubits), "eplg": meas.estimate.to_dict(), "curve": curve}
    if args.format == "csv":
        _emit(args, _csv(curve, ["length", "start", "eplg"]), fmt="text")
        return
    _emit(args, out)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--ci", action="store_true", help="require --seed for simulation commands")

    sim_opts = argparse.ArgumentParser(add_help=False)
    sim_opts.add_argument("--scenario", help="scenario file or bundled name (eagle_like, heron_like, regression)")
    sim_opts.add_argument("--topo", help="override the scenario topology")
    sim_opts.add_argument("--shots", type=int)
    sim_opts.add_argument("--randomizations", type=int)
    sim_opts.add_argument("--lengths", type=_int_list)

    chain_opts = argparse.ArgumentParser(add_help=False)
    chain_opts.add_argument("--chain-file", help="JSON chain file or bundled name")
    chain_opts.add_argument("--chain", help="comma-separated qubits")

    p = _Parser(prog="layerfid", description="Chain layer-fidelity benchmarking toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("count", parents=[common], help="count N-qubit chains")
    c.add_argument("--topo", required=True, help="hh127, hh133, hh156 or a topology file")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--method", choices=("frontier", "dfs", "brute"), default="frontier")
    c.add_argument("--oracle", action="store_true", help="brute-force enumeration (small instances)")
    c.add_argument("--directed", action="store_true", help="count both orientations of each chain")
    c.set_defaults(func=cmd_count)

    f = sub.add_parser("find", parents=[common, sim_opts], help="run the chain-selection protocol")
    f.add_argument("--n", type=int)
    f.add_argument("--x", type=int)
    f.add_argument("--kappa", type=float)
    f.add_argument("--strategy", choices=protocol.STRATEGIES, default="both")
    f.add_argument("--random-chains", type=int)
    f.add_argument("--fits", action="store_true", help="include per-gate fits")
    f.add_argument("--oracle", action="store_true", help="rank by exhaustive enumeration (small instances)")
    f.set_defaults(func=cmd_find)

    g = sub.add_parser("grid", parents=[common, sim_opts], help="grid chains, or a grid measurement")
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("simulate", parents=[common, sim_opts, chain_opts], help="simulate direct RB on a chain")
    s.add_argument("--mode", choices=rbsim.MODES, default="layered")
    s.set_defaults(func=cmd_simulate)

    ft = sub.add_parser("fit", parents=[common], help="fit simulate output")
    ft.add_argument("--data", required=True)
    ft.set_defaults(func=cmd_fit)

    sc = sub.add_parser("scan", parents=[common, sim_opts, chain_opts], help="convergence scans (CSV)")
    sc.add_argument("--mode", choices=("randomizations", "cliffords"), required=True)
    sc.add_argument("--trials", type=int, default=fit.DEFAULT_TRIALS)
    sc.add_argument("--axis", type=_int_list)
    sc.set_defaults(func=cmd_scan)

    d = sub.add_parser("duration-study", parents=[common, sim_opts, chain_opts], help="RB modes and long gates")
    d.set_defaults(func=cmd_duration_study)

    m = sub.add_parser("monitor", parents=[common], help="outlier report for a daily EPLG series")
    m.add_argument("--series-file", required=True)
    m.add_argument("--window", type=int, default=monitor.DEFAULT_WINDOW)
    m.add_argument("--static", action="store_true", help="one threshold from the most recent window")
    m.add_argument("--kind", choices=monitor.KINDS)
    m.add_argument("--format", choices=("json", "csv"), default="json")
    m.set_defaults(func=cmd_monitor)

    r = sub.add_parser("report", parents=[common, sim_opts, chain_opts], help="chain EPLG and EPLG-vs-length")
    r.add_argument("--curve-lengths", type=_int_list)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.set_defaults(func=cmd_report)
    return p


DATA_ERRORS = (topology.TopologyError, chainsearch.ChainSearchError, rbsim.SimulationError, monitor.MonitorError,
               metrics.MetricsError, protocol.ProtocolError, FileNotFoundError, KeyError, json.JSONDecodeError)
NUMERIC_ERRORS = (fit.FitError, OverflowError, FloatingPointError, np.linalg.LinAlgError)


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    """Install ``--config`` values as defaults of the chosen subcommand.

    Options supplied by the config stop being required on the command line.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = json.loads(Path(known.config).read_text())
    sub = parser._subparsers._group_actions[0].choices.get(known.command)
    if sub is None:
        return
    bad = sorted(set(cfg) - {a.dest for a in sub._actions})
    if bad:
        raise UsageError(f"unknown config keys {bad}")
    for action in sub._actions:
        if action.dest in cfg:
            action.required = False
    sub.set_defaults(**cfg)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        _apply_config(parser, argv)
    except UsageError as exc:
        print(f"layerfid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"layerfid: data error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_DATA
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be positive")
        if args.ci and args.command in SEEDED and args.seed is None:
            raise UsageError(f"--seed is required for {args.command} in CI mode")
        args.func(args)
    except UsageError as exc:
        print(f"layerfid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"layerfid: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"layerfid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"layerfid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
