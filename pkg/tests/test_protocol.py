import datetime as dt

import pytest

from layerfid import protocol
from layerfid.chainsearch import Chain
from layerfid.rbsim import DegradationEvent, SimParams, synthetic_model


@pytest.fixture
def model(hh127):
    return synthetic_model(hh127, seed=21, twoq_error=6e-3, spread=0.6, chi=0.995, idle_rate=1e-5,
                           duration_ns=400, long_edges={(0, 1): 700.0})


def test_derive_seed():
    assert protocol.derive_seed(5, 1) == protocol.derive_seed(5, 1)
    assert len({protocol.derive_seed(5, 1), protocol.derive_seed(5, 2), protocol.derive_seed(6, 1),
                protocol.derive_seed(5, 1, 0)}) == 4


def test_unknown_strategy(hh127, model):
    with pytest.raises(protocol.ProtocolError):
        protocol.prescreen(hh127, model, SimParams(), "random")


def truth_tables(model):
    ((_, table),) = protocol.daily_tables(model, [], dt.date(2024, 1, 1), 1)
    return table


@pytest.mark.parametrize("kinds,labels", [(("grid",), "ABC"), (("isolated",), "DEF"),
                                          (("grid", "isolated"), "ABCDEF")])
def test_candidate_labels(model, kinds, labels):
    table = truth_tables(model)
    cands = protocol.build_candidates({k: table for k in kinds}, N=12, x=15)
    assert set(cands.labels()) <= set(labels)
    assert labels[0] in cands.labels()
    for sc in cands.chains.values():
        assert sc.chain.N == 12


def test_find_best_chain_small(hh127, model):
    rep = protocol.find_best_chain(hh127, model, SimParams(seed=4), N=10, x=10, strategy="both", random_chains=2)
    labels = sorted(rep.measurements)
    assert rep.winner in labels
    noms = {k: m.estimate.nominal for k, m in rep.measurements.items()}
    assert noms[rep.winner] == min(noms.values())
    assert len(rep.random_measurements) == 2
    for k1 in labels:
        for k2 in labels:
            if rep.measurements[k1].chain == rep.measurements[k2].chain:
                assert rep.measurements[k1] is rep.measurements[k2]
    doc = rep.to_dict()
    assert doc["winner"]["label"] == rep.winner
    assert "improvement_over_best_random" in doc
    again = protocol.find_best_chain(hh127, model, SimParams(seed=4), N=10, x=10, strategy="both",
                                     random_chains=2, threads=3)
    assert again.to_dict() == doc


def test_duration_study_uniform_durations_agree(hh127):
    model = synthetic_model(hh127, seed=22, idle_rate=2e-5, chi=1.0, duration_ns=400)
    study = protocol.duration_study(Chain(tuple(range(0, 14))), model, SimParams(seed=8))
    assert study.long_gates == ()
    w, wo = study.with_long, study.without_long
    assert abs(w.nominal - wo.nominal) <= w.half_width + wo.half_width
    doc = study.to_dict()
    assert set(doc["modes"]) == {"isolated", "isolated_delay", "layered"}


def test_duration_study_long_gate_hurts(hh127, model):
    chain = Chain(tuple(range(0, 14)))
    study = protocol.duration_study(chain, model, SimParams(seed=9))
    assert study.long_gates == ((0, 1),)
    assert study.relative_change > 0
    assert study.median_error("isolated") <= study.median_error("isolated_delay") <= study.median_error("layered")


def test_daily_tables_apply_events(hh127, model):
    day = dt.date(2024, 1, 3)
    ev = DegradationEvent(day, day, 0.9, edges=((0, 1),))
    tables = dict(protocol.daily_tables(model, [ev], dt.date(2024, 1, 1), 5))
    assert len(tables) == 5
    base = tables[dt.date(2024, 1, 2)].twoq[(0, 1)]
    assert tables[day].twoq[(0, 1)] > base
    assert tables[dt.date(2024, 1, 4)].twoq == tables[dt.date(2024, 1, 2)].twoq
    drifted = protocol.daily_tables(model, [], dt.date(2024, 1, 1), 2, drift=0.1, seed=3)
    assert drifted[0][1].twoq != drifted[1][1].twoq
    assert protocol.daily_tables(model, [], dt.date(2024, 1, 1), 2, drift=0.1, seed=3)[1][1].twoq == drifted[1][1].twoq
