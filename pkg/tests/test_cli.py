import csv
import io
import json
from importlib import resources

import jsonschema
import pytest

from layerfid import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def schema(name):
    return json.loads(resources.files("layerfid.data").joinpath(f"schemas/{name}.json").read_text())


def validate(doc, name):
    jsonschema.validate(doc, schema(name), cls=jsonschema.Draft202012Validator)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("name", ["find", "grid_chains", "error_table", "simulate", "fit", "duration_study",
                                  "monitor", "report"])
def test_schemas_are_valid(name):
    jsonschema.Draft202012Validator.check_schema(schema(name))


def test_count(capsys):
    assert run(capsys, "count", "--topo", "hh127", "--n", "1")[1] == "127\n"
    code, out, err = run(capsys, "count", "--topo", "hh127", "--n", "5", "--oracle")
    assert code == 0 and int(out) > 0 and "brute" in err
    _, directed, _ = run(capsys, "count", "--topo", "hh127", "--n", "5", "--directed")
    assert int(directed) == 2 * int(out)


def test_count_errors(capsys):
    assert run(capsys, "count", "--topo", "hh999", "--n", "3")[0] == cli.EXIT_DATA
    assert run(capsys, "count", "--topo", "hh127", "--n", "0")[0] == cli.EXIT_DATA
    with pytest.raises(SystemExit) as exc:
        cli.main(["count", "--topo", "hh127"])
    assert exc.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE


def test_find_shape_and_regression(capsys):
    code, out, _ = run(capsys, "find", "--scenario", "regression")
    assert code == 0
    doc = json.loads(out)
    validate(doc, "find")
    assert sorted(doc["chains"]) == list("ABCDEF")
    assert doc["winner"]["label"] in doc["chains"]
    # crosstalk-free regression scenario: the protocol beats every random chain
    assert all(doc["winner"]["eplg"] <= r["eplg"]["nominal"] for r in doc["random_chains"])
    assert len(doc["random_chains"]) == 3


def test_find_too_long_chain(capsys):
    code, _, err = run(capsys, "find", "--scenario", "regression", "--n", "500")
    assert code != 0 and "error" in err


def test_find_oracle_agrees_with_search(capsys):
    _, a, _ = run(capsys, "find", "--scenario", "regression", "--topo", "hh127", "--n", "4", "--x", "3",
                  "--oracle", "--strategy", "grid")
    ranked = json.loads(a)["ranked"]["grid"]
    # the top chain plus x runners-up, best first
    assert len(ranked) == 4
    assert [r["score"] for r in ranked] == sorted((r["score"] for r in ranked), reverse=True)


def test_grid(capsys, tmp_path):
    code, out, _ = run(capsys, "grid", "--topo", "hh127")
    assert code == 0
    validate(json.loads(out), "grid_chains")
    out_file = tmp_path / "table.json"
    assert run(capsys, "grid", "--scenario", "regression", "--out", str(out_file))[0] == 0
    table = json.loads(out_file.read_text())
    validate(table, "error_table")
    assert table["provenance"] == "grid" and len(table["twoq_error"]) == 144


def test_simulate_then_fit(capsys, tmp_path):
    sim_file = tmp_path / "sim.json"
    code, _, _ = run(capsys, "simulate", "--scenario", "regression", "--chain", "0,1,2,3", "--mode", "isolated",
                     "--out", str(sim_file))
    assert code == 0
    sim = json.loads(sim_file.read_text())
    validate(sim, "simulate")
    assert len(sim["data"]) == 7
    code, out, _ = run(capsys, "fit", "--data", str(sim_file))
    assert code == 0
    doc = json.loads(out)
    validate(doc, "fit")
    e = doc["eplg"]
    assert e["lower"] <= e["nominal"] <= e["upper"]


def test_fit_numeric_failure(capsys, tmp_path):
    sim = {"qubits": [0, 1], "data": [{"gate": [0, 1], "mode": "isolated", "lengths": [1, 2, 3],
                                       "counts": [[50, 50, 50]], "shots": 200, "seed": 0}]}
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(sim))
    assert run(capsys, "fit", "--data", str(path))[0] == cli.EXIT_NUMERIC
    path.write_text("{not json")
    assert run(capsys, "fit", "--data", str(path))[0] == cli.EXIT_DATA


def test_bad_chain_is_data_error(capsys):
    assert run(capsys, "simulate", "--scenario", "regression", "--chain", "0,2")[0] == cli.EXIT_DATA


def test_scan_randomizations(capsys):
    code, out, _ = run(capsys, "scan", "--mode", "randomizations", "--scenario", "regression",
                       "--chain", "0,1,2,3,4", "--trials", "8", "--axis", "5,20")
    assert code == 0
    table = rows(out)
    assert list(table[0]) == ["axis", "nominal", "lower", "upper", "half_width", "flags"]
    assert [int(r["axis"]) for r in table] == [5, 20]
    for r in table:
        assert float(r["lower"]) <= float(r["nominal"]) <= float(r["upper"])
    assert float(table[1]["half_width"]) < float(table[0]["half_width"])


def test_scan_cliffords(capsys):
    code, out, _ = run(capsys, "scan", "--mode", "cliffords", "--scenario", "regression", "--chain", "0,1,2,3,4")
    assert code == 0
    table = {int(r["axis"]): r for r in rows(out)}
    assert len(table) == 12
    assert "unfittable" in table[1]["flags"] and "unfittable" in table[30]["flags"]
    assert table[1]["nominal"] == ""
    for axis, r in table.items():
        if axis > 30:
            assert float(r["lower"]) <= float(r["nominal"]) <= float(r["upper"])


def test_duration_study(capsys):
    code, out, _ = run(capsys, "duration-study", "--scenario", "heron_like")
    assert code == 0
    doc = json.loads(out)
    validate(doc, "duration_study")
    assert abs(doc["relative_change"]) < 0.10


def test_monitor_spike_and_constant(capsys):
    code, out, _ = run(capsys, "monitor", "--series-file", "spike_100d")
    assert code == 0
    doc = json.loads(out)
    validate(doc, "monitor")
    assert doc["outliers"]["flags"] == ["2024-03-02"]
    assert {"median", "std_dev", "abs_range"} <= set(doc["stats"])
    code, out, _ = run(capsys, "monitor", "--series-file", "constant_30d")
    assert code == 0 and json.loads(out)["outliers"]["flags"] == []
    code, out, _ = run(capsys, "monitor", "--series-file", "spike_100d", "--format", "csv")
    table = rows(out)
    assert len(table) == 100 and sum(int(r["flagged"]) for r in table) == 1


def test_monitor_bad_input(capsys, tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"day": "2024-01-01", "eplg": 3.0}\n')
    assert run(capsys, "monitor", "--series-file", str(path))[0] == cli.EXIT_DATA
    assert run(capsys, "monitor", "--series-file", "spike_100d", "--window", "2")[0] == cli.EXIT_DATA


def test_report(capsys):
    code, out, _ = run(capsys, "report", "--scenario", "regression", "--chain-file", "hh127_n100",
                       "--curve-lengths", "2,10,50,100")
    assert code == 0
    doc = json.loads(out)
    validate(doc, "report")
    assert [c["length"] for c in doc["curve"]] == [2, 10, 50, 100]
    assert doc["curve"][-1]["eplg"] == pytest.approx(doc["eplg"]["nominal"], rel=1e-12)


def test_ci_mode_requires_seed(capsys):
    assert run(capsys, "simulate", "--ci", "--scenario", "regression", "--chain", "0,1")[0] == cli.EXIT_USAGE
    assert run(capsys, "simulate", "--ci", "--seed", "1", "--scenario", "regression", "--chain", "0,1")[0] == 0


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"topo": "hh127", "n": 2}))
    code, out, _ = run(capsys, "count", "--config", str(cfg))
    assert code == 0 and out == "144\n"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "count", "--config", str(cfg), "--topo", "hh127", "--n", "2")[0] == cli.EXIT_USAGE


def test_seed_changes_output(capsys):
    _, a, _ = run(capsys, "simulate", "--scenario", "regression", "--chain", "0,1", "--seed", "1")
    _, b, _ = run(capsys, "simulate", "--scenario", "regression", "--chain", "0,1", "--seed", "2")
    assert a != b


@pytest.mark.parametrize("argv", [
    ["simulate", "--scenario", "regression", "--chain", "0,1,2,3"],
    ["scan", "--mode", "randomizations", "--scenario", "regression", "--chain", "0,1,2", "--trials", "3",
     "--axis", "5,10"],
    ["find", "--scenario", "regression", "--n", "6", "--x", "4", "--random-chains", "1"],
])
def test_threads_do_not_change_output(capsys, argv):
    outs = {run(capsys, *argv, "--seed", "5", "--threads", t)[1] for t in ("1", "4", "8")}
    assert len(outs) == 1
