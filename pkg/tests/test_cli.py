import csv
import json

import pytest

from contract.bayesian import BayesianInstance
from contract.core import AgentSpec, Instance, OutcomeSpace
from contract.loader.writer import dump_instance
from contract.rewards import RewardSpec
from main import EXIT_OK, EXIT_REFUSAL, EXIT_USAGE, EXIT_VALIDATION, main

TAGS = ("increasing", "dr_submodular", "ir_supermodular")


def build_t1():
    agent = AgentSpec([0.0, 0.5], [[1.0, 0.0], [0.0, 1.0]])
    return Instance([agent], OutcomeSpace([0.0, 1.0], null_index=0), RewardSpec("linear", {"weights": 1.0}, TAGS))


def build_reversed():
    # The costlier action 2 shifts mass back towards the middle outcome
    agent = AgentSpec([0.0, 0.1, 0.4], [[1.0, 0.0, 0.0], [0.0, 0.2, 0.8], [0.0, 0.9, 0.1]])
    return Instance([agent], OutcomeSpace([0.0, 0.5, 1.0], null_index=0), RewardSpec("linear", {"weights": 1.0}, TAGS))


def write_instance(tmp_path, inst, name="instance.json"):
    path = tmp_path / name
    path.write_text(dump_instance(inst), encoding="utf-8")
    return str(path)


def run_json(capsys, argv):
    code = main(argv + ["--json"])
    return code, json.loads(capsys.readouterr().out)


def test_validate(tmp_path, capsys):
    code, report = run_json(capsys, ["validate", write_instance(tmp_path, build_t1())])
    assert code == EXIT_OK
    assert report["result"]["format"] == "pma-1"
    assert len(report["digest"]) == 64


def test_solve_brute(tmp_path, capsys):
    code, report = run_json(capsys, ["solve", write_instance(tmp_path, build_t1()), "--method", "brute"])
    assert code == EXIT_OK
    assert report["value"] == pytest.approx(0.5)
    assert report["result"]["profile"] == [1]
    assert report["wall_time"] is None


def test_solve_writes_contract(tmp_path, capsys):
    out = tmp_path / "contract.json"
    code = main(["solve", write_instance(tmp_path, build_t1()), "--method", "ir-fosd", "--out", str(out)])
    assert code == EXIT_OK
    artifact = json.loads(out.read_text(encoding="utf-8"))
    assert artifact["value"] == pytest.approx(0.5)
    assert "artifact" in capsys.readouterr().out


def test_json_output_is_deterministic(tmp_path, capsys):
    path = write_instance(tmp_path, build_t1())
    main(["solve", path, "--method", "dr-approx", "--json", "--seed", "3"])
    first = capsys.readouterr().out
    main(["solve", path, "--method", "dr-approx", "--json", "--seed", "3"])
    assert capsys.readouterr().out == first


def test_refusal_exit_code(tmp_path, capsys):
    code = main(["solve", write_instance(tmp_path, build_reversed()), "--method", "ir-fosd"])
    assert code == EXIT_REFUSAL
    err = capsys.readouterr().err
    assert "solver refused" in err
    assert "witness" in err


def test_invalid_document_exit_code(tmp_path, capsys):
    data = json.loads(dump_instance(build_t1()))
    data["agents"][0]["dists"][1] = ["0.5", "0.2"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    assert main(["validate", str(path)]) == EXIT_VALIDATION
    assert "invalid input" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["solve", "missing.json"],
    ["solve", "missing.json", "--method", "greedy"],
    ["gen", "label-cover"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_missing_file_is_usage_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.json")]) == EXIT_USAGE


def test_gen_then_validate(tmp_path, capsys):
    out = str(tmp_path / "random.json")
    assert main(["gen", "random", "--n", "2", "--ell", "2", "--m", "3", "--fosd", "--seed", "4", "-o", out]) == EXIT_OK
    capsys.readouterr()
    code, report = run_json(capsys, ["validate", out])
    assert code == EXIT_OK
    assert report["result"]["n"] == 2


def test_gen_indep_set(tmp_path, capsys):
    graph = tmp_path / "path.txt"
    graph.write_text("0 1\n1 2\n", encoding="utf-8")
    out = str(tmp_path / "indep.json")
    assert main(["gen", "indep-set", "--graph", str(graph), "-o", out]) == EXIT_OK
    capsys.readouterr()
    code, report = run_json(capsys, ["solve", out, "--method", "brute"])
    assert code == EXIT_OK
    assert report["value"] == pytest.approx(2 / 9, abs=1e-6)


def test_check_fosd(tmp_path, capsys):
    code, report = run_json(capsys, ["check", write_instance(tmp_path, build_reversed()), "--property", "fosd"])
    assert code == EXIT_OK
    assert "FAIL" in report["checks"]["fosd"]


def test_lp3_and_bayes_solve(tmp_path, capsys):
    agent = AgentSpec([0.0, 0.5], [[1.0, 0.0], [0.0, 1.0]])
    bi = BayesianInstance([[agent]], OutcomeSpace([0.0, 1.0], null_index=0), [(0,)], [1.0],
                          RewardSpec("linear", {"weights": 1.0}, TAGS))
    path = write_instance(tmp_path, bi, "bayes.json")
    code, report = run_json(capsys, ["solve", path, "--method", "lp3"])
    assert code == EXIT_OK
    assert report["value"] == pytest.approx(0.5)

    code, report = run_json(capsys, ["bayes-solve", path, "--rho", "0.1"])
    assert code == EXIT_OK
    assert report["value"] >= 0.4
    assert "PASS" in report["checks"]["dsic"]


def test_oracle_lp(tmp_path, capsys):
    path = tmp_path / "lp.json"
    path.write_text(json.dumps({"c": [3, 2], "A": [[1, 1], [1, 3], [1, 0]], "relations": ["<=", "<=", "<="],
                                "b": [4, 8, 3], "sense": "max"}), encoding="utf-8")
    code, report = run_json(capsys, ["oracle", "lp", str(path)])
    assert code == EXIT_OK
    assert report["value"] == pytest.approx(11.0)
    assert report["result"]["x"] == pytest.approx([3.0, 1.0])


def test_oracle_lp_missing_field(tmp_path, capsys):
    path = tmp_path / "lp.json"
    path.write_text(json.dumps({"c": [1]}), encoding="utf-8")
    assert main(["oracle", "lp", str(path)]) == EXIT_VALIDATION


def test_bench_fosd_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench", "fosd", "--count", "3", "--seed", "1", "-o", str(out)]) == EXIT_OK
    with open(out, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 3
    assert all(float(r["margin"]) == 0.0 for r in rows)


def test_payment_table_cache(tmp_path, monkeypatch, capsys):
    cache = tmp_path / "cache"
    monkeypatch.setenv("PMA_CACHE_DIR", str(cache))
    path = write_instance(tmp_path, build_t1())
    _, first = run_json(capsys, ["solve", path, "--method", "brute", "--min-payments"])
    assert len(list(cache.glob("*.json"))) == 1
    _, second = run_json(capsys, ["solve", path, "--method", "brute", "--min-payments"])
    assert second == first
