import numpy as np
import pytest

from contract.core import AgentSpec, Contract, Instance, OutcomeSpace
from contract.errors import CapExceededError, ValidationError
from contract.rewards import RewardSpec
from contract.utils import (RewardEvaluator, canonical_order, check_reward_range, child_seed,
                            expected_over_product, expected_reward_exact, expected_reward_mc,
                            has_null_outcome_structure, principal_utility, spawn_seeds)


def build_coin_pair():
    # Two agents whose single costly action is a fair coin over {0, 1}; g = min(1, ω1 + ω2)
    coin = AgentSpec([0.0, 0.1], [[1.0, 0.0], [0.5, 0.5]])
    return Instance([coin, coin], OutcomeSpace([0.0, 1.0], null_index=0),
                    RewardSpec("budget_additive", {"budget": 1.0}))


def test_principal_utility_of_minimum_contracts(t1, t2):
    assert principal_utility(t1, Contract([[0.0, 0.5]], [1])) == pytest.approx(0.5)
    assert principal_utility(t2, Contract([[0.0, 0.4]], [1])) == pytest.approx(0.3)


def test_zero_contract_has_zero_utility(t1):
    assert principal_utility(t1, Contract.zero(t1)) == 0.0


def test_expected_reward_of_coin_pair():
    inst = build_coin_pair()
    assert expected_reward_exact(inst, (1, 1)) == pytest.approx(0.75)
    assert expected_reward_exact(inst, (0, 1)) == pytest.approx(0.5)
    assert expected_reward_exact(inst, (0, 0)) == 0.0


def test_monte_carlo_is_seeded_and_close():
    inst = build_coin_pair()
    first = expected_reward_mc(inst, (1, 1), samples=20000, seed=7)
    second = expected_reward_mc(inst, (1, 1), samples=20000, seed=7)
    assert first == second
    assert abs(first.value - 0.75) <= 4 * first.std_error + 1e-3


def test_monte_carlo_rejects_zero_samples(t1):
    with pytest.raises(ValueError, match="samples"):
        expected_reward_mc(t1, (1,), samples=0, seed=0)


def test_enumeration_cap_is_enforced():
    inst = build_coin_pair()
    with pytest.raises(CapExceededError, match="Monte-Carlo"):
        expected_reward_exact(inst, (1, 1), cap=3)


def test_evaluator_falls_back_to_monte_carlo():
    inst = build_coin_pair()
    evaluator = RewardEvaluator(inst, cap=1, samples=4000, seed=3)
    value = evaluator((1, 1))
    assert evaluator.warned
    assert value == evaluator((1, 1))
    assert abs(value - 0.75) < 0.05


def test_expected_over_product_with_vector_outcomes():
    reward = RewardSpec("linear", {"weights": 0.25})
    marginals = [(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.5, 0.5])),
                 (np.array([[1.0, 1.0]]), np.array([1.0]))]
    assert expected_over_product(marginals, reward) == pytest.approx(0.75)


def test_distribution_sum_is_validated():
    with pytest.raises(ValidationError, match="distribution sum"):
        AgentSpec([0.0, 0.3], [[1.0, 0.0], [0.4, 0.5]])


def test_cost_range_is_validated():
    with pytest.raises(ValidationError, match="cost out of range") as info:
        AgentSpec([0.0, 1.5], [[1.0, 0.0], [0.4, 0.7]])
    # Every problem is reported, not only the first one
    assert len(info.value.problems) == 2


def test_null_action_must_be_free():
    with pytest.raises(ValidationError, match="null action"):
        AgentSpec([0.1, 0.3], [[1.0, 0.0], [0.0, 1.0]])


def test_nearly_normalized_distributions_are_renormalized():
    agent = AgentSpec([0.0], [[0.5, 0.5 + 1e-12]])
    assert agent.dists.sum() == pytest.approx(1.0, abs=1e-15)


def test_outcome_space_invariants():
    with pytest.raises(ValidationError, match="distinct"):
        OutcomeSpace([0.0, 1.0, 1.0])
    with pytest.raises(ValidationError, match="zero vector"):
        OutcomeSpace([0.5, 1.0], null_index=0)
    assert OutcomeSpace([[1.0, 0.0], [0.0, 0.0]]).find_zero() == 1
    assert OutcomeSpace([1.0, 2.0]).find_zero() is None


def test_instance_dimension_mismatch():
    agent = AgentSpec([0.0], [[0.2, 0.3, 0.5]])
    with pytest.raises(ValidationError, match="dimension mismatch"):
        Instance([agent], OutcomeSpace([0.0, 1.0]), RewardSpec("linear"))


def test_contract_rejects_negative_payments():
    with pytest.raises(ValueError, match="non-negative"):
        Contract([[0.0, -0.1]], [1])


def test_contract_dimensions_are_checked(t1):
    with pytest.raises(ValueError, match="dimension mismatch"):
        principal_utility(t1, Contract([[0.0, 0.5, 0.0]], [1]))
    with pytest.raises(ValueError, match="invalid action index"):
        principal_utility(t1, Contract([[0.0, 0.5]], [2]))


def test_canonical_order_puts_null_first():
    agent = AgentSpec([0.4, 0.0, 0.1, 0.1], np.eye(4), null_action=1)
    assert canonical_order(agent) == [1, 2, 3, 0]


def test_null_outcome_structure(t1, t2):
    assert has_null_outcome_structure(t1)
    assert not has_null_outcome_structure(t2)


def test_reward_range_check(t1):
    assert check_reward_range(t1) == []
    # exp_sum with cap 0.5 reaches e - 1 over e^0.5 - 1 > 1 at ω = 1
    loud = Instance(list(t1.agents), t1.outcome_space, RewardSpec("exp_sum", {"kappa": 1.0, "cap": 0.5}))
    problems = check_reward_range(loud)
    assert problems and "out of range" in problems[0]


def test_spawned_seeds_are_stable():
    seeds = spawn_seeds(11, 4)
    assert seeds == spawn_seeds(11, 4)
    assert len(set(seeds)) == 4
    assert [child_seed(11, k) for k in range(4)] == seeds
