import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerfid import chainsearch as cs
from layerfid.topology import DeviceTopology, cycle_graph, load_topology, path_graph


def nx_count(t: DeviceTopology, N: int) -> int:
    """Undirected N-vertex simple paths via networkx (independent oracle)."""
    if N == 1:
        return t.qubit_count
    g = nx.Graph()
    g.add_nodes_from(range(t.qubit_count))
    g.add_edges_from(t.edges)
    total = 0
    for s, e in itertools.combinations(range(t.qubit_count), 2):
        total += sum(1 for p in nx.all_simple_paths(g, s, e, cutoff=N - 1) if len(p) == N)
    return total


def table_for(t, twoq=None, oneq=None, default2=0.001, default1=0.0, durations=None, provenance="calibration"):
    twoq = {**{e: default2 for e in t.edges}, **(twoq or {})}
    oneq = {**{q: default1 for q in range(t.qubit_count)}, **(oneq or {})}
    return cs.GateErrorTable(t, oneq, twoq, durations or {e: 100.0 for e in t.edges}, provenance)


def brute_rank(table, N, penalty=None):
    """Score every path by direct multiplication of fidelities."""
    t = table.topology
    g = nx.Graph(list(t.edges))
    g.add_nodes_from(range(t.qubit_count))
    med = table.median_duration()
    out = []
    for s, e in itertools.combinations(range(t.qubit_count), 2):
        for p in nx.all_simple_paths(g, s, e, cutoff=N - 1):
            if len(p) != N:
                continue
            f = 1.0
            for q in p:
                f *= ((1 - table.oneq[q]) * 3 - 1) / 2
            for a, b in zip(p, p[1:]):
                ed = (min(a, b), max(a, b))
                f *= ((1 - table.twoq[ed]) * 5 - 1) / 4
                if penalty:
                    f *= math.exp(-penalty * max(0, table.durations[ed] - med) / med)
            out.append((f, tuple(p)))
    return sorted(out, key=lambda x: -x[0])


def test_chain_canonical_orientation_and_layers():
    c = cs.Chain((4, 3, 2, 1, 0))
    assert c.qubits == (0, 1, 2, 3, 4)
    assert c.layers() == ([(0, 1), (2, 3)], [(1, 2), (3, 4)])
    with pytest.raises(cs.ChainSearchError):
        cs.Chain((0, 1, 0))


def test_chain_validation_against_topology():
    t = path_graph(4)
    cs.Chain((0, 1, 2)).validate(t)
    with pytest.raises(cs.ChainSearchError, match="not a coupler"):
        cs.Chain((0, 2)).validate(t)


@pytest.mark.parametrize("method", ["frontier", "dfs", "brute"])
def test_count_small_examples(method):
    assert cs.count_paths(cycle_graph(6), 3, method=method) == 6
    assert cs.count_paths(cycle_graph(6), 6, method=method) == 6
    assert cs.count_paths(path_graph(5), 5, method=method) == 1
    assert cs.count_paths(path_graph(5), 1, method=method) == 5


def test_count_n1_is_qubit_count(hh127):
    assert cs.count_paths(hh127, 1) == 127


def test_count_rejects_out_of_range():
    with pytest.raises(cs.ChainSearchError):
        cs.count_paths(path_graph(3), 4)
    with pytest.raises(cs.ChainSearchError):
        cs.count_paths(path_graph(3), 0)


def test_directed_count_doubles():
    t = cycle_graph(7)
    for n in range(2, 8):
        assert cs.count_paths(t, n, directed=True) == 2 * cs.count_paths(t, n)
    assert cs.count_paths(t, 1, directed=True) == 7


@st.composite
def connected_graphs(draw, max_n=9):
    n = draw(st.integers(2, max_n))
    edges = set()
    for v in range(1, n):
        edges.add((draw(st.integers(0, v - 1)), v))
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    edges |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    return DeviceTopology(n, tuple(sorted(edges)))


@given(connected_graphs())
@settings(max_examples=60, deadline=None)
def test_frontier_and_dfs_match_networkx(t):
    for N in range(1, t.qubit_count + 1):
        expect = nx_count(t, N)
        assert cs.count_paths(t, N) == expect
        assert cs.count_paths(t, N, method="dfs") == expect


def test_counts_agree_across_methods_on_presets(hh127):
    for N in (2, 5, 12):
        assert cs.count_paths(hh127, N) == cs.count_paths(hh127, N, method="dfs")


def test_count_threads_do_not_change_result(hh127):
    assert cs.count_paths(hh127, 20, method="dfs", threads=3) == cs.count_paths(hh127, 20, method="dfs")


def test_overflow_is_detected():
    # a 4 x 30 grid keeps the frontier narrow while 60-qubit path counts exceed 64 bits
    w, h = 4, 30
    edges = [(r * w + c, r * w + c + 1) for r in range(h) for c in range(w - 1)]
    edges += [(r * w + c, (r + 1) * w + c) for r in range(h - 1) for c in range(w)]
    t = DeviceTopology(w * h, tuple(edges))
    with pytest.raises(OverflowError):
        cs.count_paths(t, 60)


def test_score_chain_examples():
    t = path_graph(2)
    table = table_for(t, {(0, 1): 0.01})
    assert cs.score_chain(cs.Chain((0, 1)), table).score == pytest.approx(0.9875, rel=1e-12)
    zero = table_for(path_graph(4), default2=0.0)
    assert cs.score_chain(cs.Chain((0, 1, 2, 3)), zero).score == 1.0
    bad = table_for(t, {(0, 1): 0.9})
    with pytest.raises(cs.ChainSearchError, match="0-1"):
        cs.score_chain(cs.Chain((0, 1)), bad)


def test_score_chain_is_orientation_invariant():
    t = path_graph(6)
    rng = np.random.default_rng(1)
    table = table_for(t, {e: float(rng.uniform(0, 0.05)) for e in t.edges},
                      {q: float(rng.uniform(0, 0.01)) for q in range(6)})
    fwd = cs.score_chain((0, 1, 2, 3, 4, 5), table)
    rev = cs.score_chain((5, 4, 3, 2, 1, 0), table)
    assert fwd.log_score == rev.log_score
    assert fwd.score == pytest.approx(math.exp(fwd.log_score), rel=1e-12)


def test_score_chain_missing_element_is_named():
    t = path_graph(3)
    table = cs.GateErrorTable(t, {0: 0.0, 1: 0.0, 2: 0.0}, {(0, 1): 0.01}, {}, "grid")
    with pytest.raises(cs.ChainSearchError, match="1-2"):
        cs.score_chain((0, 1, 2), table)


def test_duration_penalty_examples():
    assert cs.duration_penalty(533, 533, 0.5) == 1.0
    assert cs.duration_penalty(881, 533, 0.0) == 1.0
    assert cs.duration_penalty(881, 533, 0.01) == pytest.approx(math.exp(-0.01 * 348 / 533), rel=1e-12)
    assert cs.duration_penalty(881, 533, 0.01) == pytest.approx(0.993489, abs=5e-6)
    assert cs.duration_penalty(100, 533, 0.3) == 1.0


def test_duration_penalty_monotone_and_continuous():
    ds = np.linspace(400, 1000, 200)
    v = [cs.duration_penalty(d, 533, 0.05) for d in ds]
    assert all(a >= b for a, b in zip(v, v[1:]))
    assert cs.duration_penalty(533 + 1e-9, 533, 0.05) == pytest.approx(1.0, abs=1e-12)


def test_best_chains_unique_path():
    t = path_graph(5)
    top = cs.best_chains(table_for(t), 5, x=3)
    assert [sc.chain.qubits for sc in top] == [(0, 1, 2, 3, 4)]


def test_best_chains_avoids_bad_edge_on_cycle():
    t = cycle_graph(6)
    table = table_for(t, {(2, 3): 0.5})
    best = cs.best_chains(table, 6, x=5)[0]
    assert (2, 3) not in best.chain.links
    assert best.chain.qubits in ((2, 1, 0, 5, 4, 3), (3, 4, 5, 0, 1, 2))


def test_best_chains_raises_when_no_chain_exists():
    t = load_topology("n=4; 0-1; 2-3")
    with pytest.raises(cs.ChainSearchError):
        cs.best_chains(table_for(t), 3)


@given(connected_graphs(max_n=10), st.integers(0, 2 ** 31), st.integers(2, 6), st.integers(0, 6))
@settings(max_examples=40, deadline=None)
def test_best_chains_matches_exhaustive_ranking(t, seed, N, x):
    N = min(N, t.qubit_count)
    rng = np.random.default_rng(seed)
    table = table_for(t, {e: float(rng.choice([0.001, 0.002, 0.01, 0.05])) for e in t.edges},
                      {q: float(rng.choice([0.0, 0.001])) for q in range(t.qubit_count)},
                      durations={e: float(rng.choice([100.0, 150.0])) for e in t.edges})
    try:
        got = cs.best_chains(table, N, x, penalty=cs.DurationPenalty(0.2))
    except cs.ChainSearchError:
        assert not brute_rank(table, N)
        return
    want = brute_rank(table, N, penalty=0.2)
    assert len(got) == min(x + 1, len(want))
    assert [sc.score for sc in got] == pytest.approx([w[0] for w in want[: len(got)]], rel=1e-12)
    # lexicographic tie-break and agreement with the in-package brute force
    ref = cs.best_chains_bruteforce(table, N, x, penalty=cs.DurationPenalty(0.2))
    assert [sc.chain for sc in got] == [sc.chain for sc in ref]
    assert [sc.log_score for sc in got] == [sc.log_score for sc in ref]


def test_best_chains_uniform_errors_tie_break(hh127):
    table = table_for(hh127, default2=0.01)
    top = cs.best_chains(table, 12, x=15)
    assert len(top) == 16
    assert len({sc.log_score for sc in top}) == 1
    seqs = [sc.chain.qubits for sc in top]
    assert seqs == sorted(seqs)


def test_best_chains_thread_count_invariant(hh127):
    rng = np.random.default_rng(5)
    table = table_for(hh127, {e: float(rng.uniform(0.002, 0.02)) for e in hh127.edges})
    one = cs.best_chains(table, 25, x=15)
    many = cs.best_chains(table, 25, x=15, threads=4)
    assert one == many


def test_best_chains_scores_are_bit_identical_to_score_chain(hh127):
    rng = np.random.default_rng(9)
    table = table_for(hh127, {e: float(rng.uniform(0.002, 0.02)) for e in hh127.edges},
                      {q: float(rng.uniform(0, 0.002)) for q in range(127)})
    for sc in cs.best_chains(table, 30, x=5):
        assert cs.score_chain(sc.chain, table).log_score == sc.log_score


def _scored(qubits, score=0.9):
    return cs.ScoredChain(cs.Chain(tuple(qubits)), score, math.log(score))


def test_select_b_c_prefers_largest_nonoverlap():
    a = cs.Chain((0, 1, 2, 3, 4, 5, 6, 7))
    three = _scored((3, 4, 5, 6, 7, 8, 9, 10))
    seven = _scored((7, 11, 12, 13, 14, 15, 16, 17))
    picks = cs.select_b_c([three, seven], a)
    assert picks.b == seven and picks.c == three
    assert picks.nonoverlap == (7, 3)


def test_select_b_c_tie_breaks_by_score_then_sequence():
    a = cs.Chain((0, 1, 2))
    lo = _scored((3, 4, 5), 0.8)
    hi = _scored((6, 7, 8), 0.9)
    picks = cs.select_b_c([lo, hi], a)
    assert picks.b == hi
    same = cs.select_b_c([_scored((6, 7, 8), 0.8), _scored((3, 4, 5), 0.8)], a)
    assert same.b.chain.qubits == (3, 4, 5)


def test_select_b_c_degenerate_and_partial():
    a = cs.Chain((0, 1, 2))
    picks = cs.select_b_c([_scored((2, 1, 0)), _scored((0, 1, 2))], a)
    assert "degenerate" in picks.flags
    assert picks.nonoverlap == (0, 0)
    one = cs.select_b_c([_scored((3, 4, 5))], a)
    assert one.c is None and "partial" in one.flags


def test_assemble_identical_rankings_flags_overlap():
    ranked = [_scored((0, 1, 2), 0.9), _scored((3, 4, 5), 0.8), _scored((6, 7, 8), 0.7)]
    s = cs.assemble_candidate_set(ranked, ranked)
    assert s.labels() == list("ABCDEF")
    assert s.chains["A"] == s.chains["D"]
    assert s.chains["B"] == s.chains["E"] and s.chains["C"] == s.chains["F"]
    assert "overlap" in s.flags


def test_assemble_x_zero_is_partial():
    ranked = [_scored((0, 1, 2), 0.9), _scored((3, 4, 5), 0.8)]
    s = cs.assemble_candidate_set(ranked, ranked[::-1], x=0)
    assert s.labels() == ["A", "D"]
    assert "partial" in s.flags


def test_assemble_six_distinct_on_twelve_qubit_device():
    t = load_topology("n=12; 0-1; 1-2; 2-3; 3-4; 4-5; 5-0; 6-7; 7-8; 8-9; 9-10; 10-11; 11-6; 0-6; 3-9")
    rng = np.random.default_rng(3)
    g = table_for(t, {e: float(rng.uniform(0.001, 0.03)) for e in t.edges})
    i = table_for(t, {e: float(rng.uniform(0.001, 0.03)) for e in t.edges})
    s = cs.assemble_candidate_set(cs.best_chains_bruteforce(g, 6, 15), cs.best_chains_bruteforce(i, 6, 15))
    assert len({c.chain for c in s.chains.values()}) == 6
    assert s.flags == frozenset()
    assert s.chains["A"].chain == cs.best_chains(g, 6, 0)[0].chain


def test_best_subchain_examples():
    start, sc = cs.best_subchain([1.0] * 5, [0.99, 0.95, 0.99, 0.99], 3)
    assert start == 2
    assert sc.score == pytest.approx(0.9801, rel=1e-12)
    assert cs.best_subchain([1.0] * 6, [0.99] * 5, 3)[0] == 0
    start, sc = cs.best_subchain([0.999] * 4, [0.99] * 3, 4, chain=(7, 8, 9, 10))
    assert start == 0 and sc.chain.qubits == (7, 8, 9, 10)
    with pytest.raises(cs.ChainSearchError):
        cs.best_subchain([1.0] * 4, [0.99] * 3, 1)


@given(st.lists(st.floats(0.9, 1.0), min_size=2, max_size=15), st.data())
@settings(max_examples=100, deadline=None)
def test_best_subchain_matches_exhaustive(oneq, data):
    links = data.draw(st.lists(st.floats(0.8, 1.0), min_size=len(oneq) - 1, max_size=len(oneq) - 1))
    M = data.draw(st.integers(2, len(oneq)))
    products = [np.prod(oneq[s:s + M]) * np.prod(links[s:s + M - 1]) for s in range(len(oneq) - M + 1)]
    start, sc = cs.best_subchain(oneq, links, M)
    assert sc.score == pytest.approx(max(products), rel=1e-9)


@pytest.mark.parametrize("size, n_edges", [(127, 144), (133, 150), (156, 176)])
def test_grid_families_cover_edges_and_are_disjoint(size, n_edges):
    from tests.conftest import preset
    t = preset(size)
    grid = cs.build_grid_chains(t)
    covered = set()
    for fam in grid.families().values():
        seen = set()
        for c in fam:
            assert not seen & set(c.qubits)
            seen |= set(c.qubits)
            covered |= set(c.links)
    assert covered == set(t.edges)
    assert len(covered) == n_edges


def test_grid_for_path_graph_and_error_without_embedding():
    g = cs.build_grid_chains(path_graph(5))
    assert [c.qubits for c in g.horizontal] == [(0, 1, 2, 3, 4)]
    assert g.vertical == ()
    with pytest.raises(cs.ChainSearchError, match="grid"):
        cs.build_grid_chains(cycle_graph(6))


def test_merge_gate_errors_examples():
    t = path_graph(3)
    h = cs.GateErrorTable(t, {0: 0.001, 1: 0.001, 2: 0.001}, {(0, 1): 0.002, (1, 2): 0.005}, {}, "grid")
    v = cs.GateErrorTable(t, {0: 0.003, 1: 0.001, 2: 0.001}, {(0, 1): 0.004}, {}, "grid")
    m = cs.merge_gate_errors(h, v)
    assert m.twoq[(0, 1)] == pytest.approx(0.003)
    assert m.twoq[(1, 2)] == 0.005
    assert m.oneq[0] == pytest.approx(0.002)
    assert m.provenance == "averaged"
    assert cs.merge_gate_errors(v, h) == m
    lone = cs.GateErrorTable(t, h.oneq, {(0, 1): 0.002}, {}, "grid")
    with pytest.raises(cs.ChainSearchError, match="1-2"):
        cs.merge_gate_errors(lone, v)


def test_random_chain_is_valid_and_seeded(hh127):
    a = cs.random_chain(hh127, 60, np.random.default_rng(4))
    b = cs.random_chain(hh127, 60, np.random.default_rng(4))
    assert a == b and a.N == 60
    a.validate(hh127)
