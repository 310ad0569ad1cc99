import numpy as np
import pytest

from algorithms.fosd import check_fosd, comprehensive_sets, flow_residual, fosd_bruteforce, transport_flow
from algorithms.generators import GenParams, gen_random
from contract.core import AgentSpec, Instance, OutcomeSpace
from contract.errors import CapExceededError
from contract.rewards import RewardSpec


def build_reversed():
    # The costly action moves mass down, so it does not dominate the cheaper one
    agent = AgentSpec([0.0, 0.1, 0.4], [[1.0, 0.0, 0.0], [0.0, 0.2, 0.8], [0.0, 0.9, 0.1]])
    return Instance([agent], OutcomeSpace([0.0, 0.5, 1.0], null_index=0), RewardSpec("linear"))


def build_incomparable():
    # Two outcomes that are incomparable in the component-wise order
    agent = AgentSpec([0.0, 0.2], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return Instance([agent], OutcomeSpace([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], null_index=0),
                    RewardSpec("linear"))


def test_point_masses_dominate(t1):
    verdict = check_fosd(t1)
    assert verdict.ok
    assert "PASS" in verdict.message
    pair = verdict.pairs[0]
    assert flow_residual(t1.outcomes, pair.flow, t1.agents[0].dists[0], t1.agents[0].dists[1]) <= 1e-9


def test_failure_has_witness():
    inst = build_reversed()
    verdict = check_fosd(inst)
    assert not verdict.ok
    failure = verdict.failures[0]
    assert (failure.lower, failure.higher) == (1, 2)
    # The witness is a downward-closed set that the costly action loads more
    dists = inst.agents[0].dists
    assert dists[2][failure.witness].sum() > dists[1][failure.witness].sum()
    assert failure.certificate is not None
    assert "does not dominate" in verdict.message


def test_incomparable_outcomes_fail():
    verdict = check_fosd(build_incomparable())
    assert not verdict.ok


def test_transport_flow_moves_mass_upwards():
    outcomes = np.array([[0.0], [0.5], [1.0]])
    lower = np.array([0.5, 0.5, 0.0])
    higher = np.array([0.1, 0.4, 0.5])
    flow, certificate = transport_flow(outcomes, lower, higher)
    assert certificate is None
    assert flow_residual(outcomes, flow, lower, higher) <= 1e-9
    assert np.all(np.tril(flow, -1) <= 1e-12)


def test_comprehensive_sets_of_a_chain():
    sets = comprehensive_sets(np.array([[0.0], [0.5], [1.0]]))
    members = {tuple(np.flatnonzero(row)) for row in sets}
    assert members == {(), (0,), (0, 1), (0, 1, 2)}


def test_comprehensive_sets_cap():
    with pytest.raises(CapExceededError, match="m <="):
        comprehensive_sets(np.arange(20, dtype=float).reshape(-1, 1), max_outcomes=12)


def test_generated_fosd_instances_pass():
    for seed in range(40):
        inst = gen_random(GenParams(n=2, ell=4, m=6, q=2, fosd=True, seed=seed))
        assert check_fosd(inst).ok, seed


def test_lp_check_agrees_with_definition():
    for seed in range(60):
        params = GenParams(n=1, ell=3, m=2 + seed % 6, q=2, fosd=seed % 2 == 0, seed=seed)
        inst = gen_random(params)
        fast, slow = check_fosd(inst), fosd_bruteforce(inst)
        assert fast.ok == slow.ok, seed
        assert [p.ok for p in fast.pairs] == [p.ok for p in slow.pairs]


@pytest.mark.slow
def test_lp_check_agrees_with_definition_on_many_instances():
    for seed in range(500):
        params = GenParams(n=1 + seed % 2, ell=2 + seed % 3, m=2 + seed % 7, q=1 + (seed // 7) % 2,
                           fosd=seed % 3 == 0, seed=1000 + seed)
        inst = gen_random(params)
        fast, slow = check_fosd(inst), fosd_bruteforce(inst)
        assert fast.ok == slow.ok, seed
        assert [p.ok for p in fast.pairs] == [p.ok for p in slow.pairs], seed
