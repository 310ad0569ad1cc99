import hashlib
import json

from contract.bayesian import BayesianInstance
from contract.core import AgentSpec, Instance


def _num(x) -> str:
    return repr(float(x))


def _agent(agent: AgentSpec) -> dict:
    return {
        "costs": [_num(c) for c in agent.costs],
        "dists": [[_num(x) for x in row] for row in agent.dists],
        "null_action": agent.null_action,
    }


def _outcome_fields(space) -> dict:
    data = {"q": space.q, "outcomes": [[_num(x) for x in v] for v in space.outcomes]}
    if space.null_index is not None:
        data["null_outcome"] = space.null_index
    return data


def instance_to_dict(inst: Instance) -> dict:
    data = {"version": "pma-1", **_outcome_fields(inst.outcome_space)}
    data["agents"] = [_agent(agent) for agent in inst.agents]
    data["reward"] = inst.reward.to_dict()
    return data


def bayesian_to_dict(bi: BayesianInstance) -> dict:
    data = {"version": "pma-bayes-1", **_outcome_fields(bi.outcome_space), "types": bi.num_types}
    data["per_type"] = [[_agent(agent) for agent in types] for types in bi.per_type]
    data["support"] = [{"types": list(theta), "prob": _num(p)} for theta, p in zip(bi.support, bi.probs)]
    data["reward"] = bi.reward.to_dict()
    return data


def dump_instance(inst) -> str:
    """
    Serialize an Instance or BayesianInstance to canonical JSON text (decimal strings for numbers).
    """
    data = bayesian_to_dict(inst) if isinstance(inst, BayesianInstance) else instance_to_dict(inst)
    return json.dumps(data, sort_keys=True, indent=1)


def instance_digest(inst) -> str:
    """
    SHA-256 hex digest of the canonical JSON of an instance.
    """
    return hashlib.sha256(dump_instance(inst).encode("utf-8")).hexdigest()


def dump_bayesian(bi: BayesianInstance) -> str:
    if not isinstance(bi, BayesianInstance):
        raise ValueError(f"expected a BayesianInstance, got {type(bi).__name__}")
    return dump_instance(bi)
