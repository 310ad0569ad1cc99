import io
import json

import pytest

from contract.bayesian import BayesianInstance
from contract.core import Instance
from contract.errors import ValidationError
from contract.loader.loader import JSONSource, LoadOptions, TextSource
from contract.loader.loader_factory import load_any, load_bayesian, load_instance, read_document
from contract.loader.writer import dump_bayesian, dump_instance, instance_digest


@pytest.fixture
def sample_instance_data():
    return {
        "version": "pma-1",
        "q": 1,
        "outcomes": [[0], [1]],
        "null_outcome": 0,
        "agents": [
            {"costs": [0, 0.5], "dists": [[1, 0], [0, 1]], "null_action": 0},
            {"costs": ["0", "0.25"], "dists": [["1", "0"], ["0.5", "0.5"]], "null_action": 0},
        ],
        "reward": {"family": "linear", "params": {"weights": 0.5}, "tags": ["increasing"]},
    }


@pytest.fixture
def sample_bayesian_data():
    agent = {"costs": [0, 0.5], "dists": [[1, 0], [0, 1]], "null_action": 0}
    cheap = {"costs": [0, 0.2], "dists": [[1, 0], [0, 1]], "null_action": 0}
    return {
        "version": "pma-bayes-1",
        "q": 1,
        "outcomes": [[0], [1]],
        "types": 2,
        "per_type": [[agent, cheap]],
        "support": [{"types": [1], "prob": 0.25}, {"types": [0], "prob": 0.75}],
        "reward": {"family": "linear", "params": {"weights": 1.0}},
    }


# Return a fake file object
@pytest.fixture
def mock_open(monkeypatch, sample_instance_data):
    file_obj = io.StringIO(json.dumps(sample_instance_data))

    def _mock_open(*args, **kwargs):
        file_obj.seek(0)
        return file_obj

    monkeypatch.setattr("builtins.open", _mock_open)


def test_load_instance_from_json(mock_open):
    inst = load_instance(JSONSource("fake.json"))

    assert isinstance(inst, Instance)
    assert (inst.n, inst.m, inst.q) == (2, 2, 1)
    assert inst.outcome_space.null_index == 0
    assert inst.agents[1].costs.tolist() == [0.0, 0.25]
    assert inst.reward.family == "linear"
    assert inst.reward.declared_tags == {"increasing"}


def test_load_instance_from_text(sample_instance_data):
    inst = load_any(TextSource(json.dumps(sample_instance_data)))
    assert isinstance(inst, Instance)
    assert inst.agents[0].dists.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_every_problem_is_reported(sample_instance_data):
    sample_instance_data["agents"][0]["dists"][1] = [0.2, 0.5]
    sample_instance_data["agents"][1]["costs"][1] = 1.5
    with pytest.raises(ValidationError) as info:
        load_instance(TextSource(json.dumps(sample_instance_data)))
    messages = " | ".join(info.value.problems)
    assert "distribution sum" in messages
    assert "cost out of range" in messages
    assert "agent 0" in messages and "agent 1" in messages


def test_probability_tolerance_option(sample_instance_data):
    sample_instance_data["agents"][0]["dists"][1] = [0.0, 1.001]
    text = TextSource(json.dumps(sample_instance_data))
    with pytest.raises(ValidationError, match="distribution sum"):
        load_instance(text)
    inst = load_instance(text, LoadOptions(prob_tol=0.01))
    assert inst.agents[0].dists[1].sum() == pytest.approx(1.0)


def test_missing_null_action(sample_instance_data):
    sample_instance_data["agents"][0]["null_action"] = 5
    with pytest.raises(ValidationError, match="missing null action"):
        load_instance(TextSource(json.dumps(sample_instance_data)))


def test_outcome_dimension_mismatch(sample_instance_data):
    sample_instance_data["outcomes"] = [[0], [1, 2]]
    with pytest.raises(ValidationError, match="dimension mismatch"):
        load_instance(TextSource(json.dumps(sample_instance_data)))


def test_reward_out_of_range_is_rejected(sample_instance_data):
    sample_instance_data["reward"] = {"family": "exp_sum", "params": {"kappa": 1.0, "cap": 0.5}}
    text = TextSource(json.dumps(sample_instance_data))
    with pytest.raises(ValidationError, match="reward out of range"):
        load_instance(text)
    # Unbounded rewards skip the range check
    sample_instance_data["reward"]["bounded"] = False
    assert load_instance(TextSource(json.dumps(sample_instance_data))).reward.bounded is False


def test_unknown_reward_family(sample_instance_data):
    sample_instance_data["reward"]["family"] = "quadratic"
    with pytest.raises(ValidationError, match="Unknown reward family"):
        load_instance(TextSource(json.dumps(sample_instance_data)))


def test_malformed_json():
    with pytest.raises(ValidationError, match="malformed JSON"):
        read_document(TextSource("{not json"))
    with pytest.raises(ValidationError, match="top level"):
        read_document(TextSource("[1, 2]"))


def test_unsupported_version(sample_instance_data):
    sample_instance_data["version"] = "pma-9"
    with pytest.raises(ValidationError, match="unsupported format version"):
        load_any(TextSource(json.dumps(sample_instance_data)))


def test_unsupported_source_type():
    with pytest.raises(ValueError, match="Not supported type of source"):
        read_document(42)


def test_load_bayesian(sample_bayesian_data):
    bi = load_bayesian(TextSource(json.dumps(sample_bayesian_data)))

    assert isinstance(bi, BayesianInstance)
    assert bi.support == ((0,), (1,))
    assert bi.lam == {(0,): 0.75, (1,): 0.25}
    assert bi.agent(0, 1).costs[1] == 0.2
    assert bi.report_tuples(0) == [(0,), (1,)]


def test_bayesian_support_must_sum_to_one(sample_bayesian_data):
    sample_bayesian_data["support"][0]["prob"] = 0.5
    with pytest.raises(ValidationError, match="sum to"):
        load_bayesian(TextSource(json.dumps(sample_bayesian_data)))


def test_bayesian_type_count(sample_bayesian_data):
    sample_bayesian_data["per_type"][0].pop()
    with pytest.raises(ValidationError, match="expected 2"):
        load_bayesian(TextSource(json.dumps(sample_bayesian_data)))


def test_loaders_reject_the_other_format(sample_instance_data, sample_bayesian_data):
    with pytest.raises(ValidationError, match="Bayesian document"):
        load_instance(TextSource(json.dumps(sample_bayesian_data)))
    with pytest.raises(ValidationError, match="pma-bayes-1"):
        load_bayesian(TextSource(json.dumps(sample_instance_data)))


def test_dump_and_reload(sample_instance_data, sample_bayesian_data):
    inst = load_instance(TextSource(json.dumps(sample_instance_data)))
    text = dump_instance(inst)
    again = load_instance(TextSource(text))
    assert dump_instance(again) == text
    assert instance_digest(again) == instance_digest(inst)

    bi = load_bayesian(TextSource(json.dumps(sample_bayesian_data)))
    assert dump_instance(load_bayesian(TextSource(dump_bayesian(bi)))) == dump_bayesian(bi)
    with pytest.raises(ValueError, match="BayesianInstance"):
        dump_bayesian(inst)


def test_digest_depends_on_content(sample_instance_data):
    first = load_instance(TextSource(json.dumps(sample_instance_data)))
    sample_instance_data["agents"][0]["costs"][1] = 0.4
    second = load_instance(TextSource(json.dumps(sample_instance_data)))
    assert instance_digest(first) != instance_digest(second)
