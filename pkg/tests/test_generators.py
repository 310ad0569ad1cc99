import math

import numpy as np
import pytest

from algorithms.fosd import check_fosd
from algorithms.generators import (GenParams, gen_bayesian, gen_independent_set, gen_label_cover, gen_random,
                                   grid_steps, independent_set_contract, independent_set_delta, labeling_contract,
                                   parse_edge_list, parse_label_cover, random_outcomes)
from algorithms.matroid import brute_force_optimal, build_partition_problem
from algorithms.payments import payment_table
from contract.loader.writer import dump_instance
from contract.utils import check_reward_range, has_null_outcome_structure, make_rng, principal_utility


def build_path(length):
    return [(k, k + 1) for k in range(length - 1)]


def test_random_instances_are_deterministic():
    params = GenParams(n=3, ell=3, m=4, q=2, family="exp_sum", fosd=True, seed=42)
    assert dump_instance(gen_random(params)) == dump_instance(gen_random(params))
    other = GenParams(n=3, ell=3, m=4, q=2, family="exp_sum", fosd=True, seed=43)
    assert dump_instance(gen_random(params)) != dump_instance(gen_random(other))


@pytest.mark.parametrize("family", ["linear", "budget_additive", "coverage_max", "exp_sum"])
def test_default_rewards_stay_in_range(family):
    for seed in range(5):
        inst = gen_random(GenParams(n=2, ell=2, m=4, q=2, family=family, seed=seed))
        assert check_reward_range(inst) == []


def test_omega_null_structure():
    for seed in range(10):
        inst = gen_random(GenParams(n=2, ell=3, m=3, omega_null=True, fosd=seed % 2 == 0, seed=seed))
        assert has_null_outcome_structure(inst)


def test_fosd_generation():
    for seed in range(30):
        inst = gen_random(GenParams(n=2, ell=4, m=5, q=2, fosd=True, seed=seed))
        assert check_fosd(inst).ok
        for agent in inst.agents:
            assert np.all(np.diff(agent.costs) >= 0)


def test_random_outcomes():
    outcomes = random_outcomes(5, 2, make_rng(0))
    assert outcomes[0].tolist() == [0.0, 0.0]
    assert len({tuple(v) for v in outcomes}) == 5
    assert set(np.round(outcomes.ravel() * 3, 9)) <= {0.0, 1.0, 2.0, 3.0}
    with pytest.raises(ValueError, match="cannot draw"):
        random_outcomes(5, 1, make_rng(0), steps=3)


def test_random_outcomes_refine_the_grid():
    assert grid_steps(4, 1) == 3
    assert grid_steps(8, 1) == 7
    assert grid_steps(16, 2) == 3
    outcomes = random_outcomes(8, 1, make_rng(2))
    assert sorted(outcomes.ravel().tolist()) == pytest.approx([k / 7 for k in range(8)])
    inst = gen_random(GenParams(n=1, ell=3, m=8, q=1, fosd=True, seed=2))
    assert check_fosd(inst).ok


def test_coverage_outcomes_are_binary():
    for seed in range(5):
        inst = gen_random(GenParams(n=3, ell=2, m=4, q=2, family="coverage_max", seed=seed))
        assert set(inst.outcomes.ravel().tolist()) <= {0.0, 1.0}
    with pytest.raises(ValueError, match="cannot draw"):
        gen_random(GenParams(n=2, ell=2, m=3, q=1, family="coverage_max"))


def test_single_action_agents_only_play_null():
    inst = gen_random(GenParams(n=2, ell=1, m=3, seed=1))
    assert brute_force_optimal(build_partition_problem(inst)).profile == (0, 0)


def test_invalid_params():
    with pytest.raises(ValueError, match="sizes must be positive"):
        GenParams(n=0)
    with pytest.raises(ValueError, match="Unknown generator reward family"):
        GenParams(family="label_cover_smooth")


def test_bayesian_generation():
    bi = gen_bayesian(GenParams(n=2, ell=2, m=3, fosd=True, seed=5), num_types=3, support_size=4)
    assert bi.num_types == 3
    assert len(bi.support) == 4
    assert sum(bi.lam.values()) == pytest.approx(1.0)
    assert dump_instance(bi) == dump_instance(
        gen_bayesian(GenParams(n=2, ell=2, m=3, fosd=True, seed=5), num_types=3, support_size=4))
    with pytest.raises(ValueError, match="support size"):
        gen_bayesian(GenParams(n=1, seed=5), num_types=2, support_size=3)


def test_parse_edge_list():
    assert parse_edge_list("0 1\n# comment\n\n1 2  # trailing\n") == [(0, 1), (1, 2)]
    with pytest.raises(ValueError, match="duplicate edge"):
        parse_edge_list("0 1\n1 0\n")
    with pytest.raises(ValueError, match="invalid edge"):
        parse_edge_list("2 2\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_edge_list("0 1 2\n")


def test_independent_set_on_path():
    inst = gen_independent_set(build_path(3))
    delta = independent_set_delta(3)
    assert delta == pytest.approx(1 / 9)
    assert principal_utility(inst, independent_set_contract(inst, [0, 2])) == pytest.approx(2 * delta)
    assert principal_utility(inst, independent_set_contract(inst, [0, 1])) < 0
    assert principal_utility(inst, independent_set_contract(inst, [])) == 0.0


@pytest.mark.parametrize("edges, alpha", [
    (build_path(3), 2),
    ([(0, 1), (1, 2), (0, 2)], 1),
    ([(0, 1), (0, 2), (0, 3)], 3),
    ([(0, 1), (1, 2), (2, 3), (3, 0)], 2),
])
def test_independent_set_optimum(edges, alpha):
    inst = gen_independent_set(edges)
    size = inst.n
    best = brute_force_optimal(build_partition_problem(inst))
    assert best.value == pytest.approx(alpha * independent_set_delta(size), abs=1e-7)


def test_independent_set_rejects_isolated_vertices():
    with pytest.raises(ValueError, match="isolated"):
        gen_independent_set([(0, 1)], num_vertices=3)


def test_label_cover_single_edge():
    M = 20.0
    inst = gen_label_cover(parse_label_cover("0 0 1 2 0\n"), M)
    # Agent 0 is the left node u, agent 1 the right node v; the edge maps v's label σ to u's pi_σ
    assert (inst.n, inst.m) == (2, 3)
    satisfied = principal_utility(inst, labeling_contract(inst, [1, 0]))
    assert satisfied >= 1 - 2 * math.exp(-M)
    for u_label in range(3):
        for v_label in range(3):
            if u_label != [1, 2, 0][v_label]:
                value = principal_utility(inst, labeling_contract(inst, [u_label, v_label]))
                assert value <= 3 * math.exp(-M)


def test_label_cover_needs_no_payments():
    inst = gen_label_cover([(0, 0, [0, 1]), (0, 1, [1, 0])])
    table = payment_table(inst)
    assert all(sol.min_expected_payment == pytest.approx(0.0) for sol in table.values())
    best = brute_force_optimal(build_partition_problem(inst, table))
    assert best.value >= 1 - 4 * math.exp(-20.0)


def test_label_cover_rejects_unequal_left_degrees():
    with pytest.raises(ValueError, match="equal degree"):
        gen_label_cover([(0, 0, [0]), (0, 1, [0]), (1, 0, [0])])
    with pytest.raises(ValueError, match="expected integers"):
        parse_label_cover("a b c\n")


@pytest.mark.parametrize("label", [0, 1])
def test_label_cover_two_edges(label):
    # u = 0 maps v = 0 identically and v = 1 crosswise; agents are u, v0, v1
    inst = gen_label_cover(parse_label_cover("0 0 0 1\n0 1 1 0\n"), M=20.0)
    assert inst.n == 3
    assert principal_utility(inst, labeling_contract(inst, [label, label, 1 - label])) >= 0.99
    assert principal_utility(inst, labeling_contract(inst, [label, label, label])) <= 0.51
