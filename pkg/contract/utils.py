import logging
from dataclasses import dataclass

import numpy as np

from contract.core import AgentSpec, Contract, Instance
from contract.errors import CapExceededError, ValidationError

logger = logging.getLogger(__name__)

ENUM_CAP = 10**6


@dataclass(frozen=True)
class EvalOptions:
    """
    How solvers evaluate R_a: exact enumeration below enum_cap tuples, seeded Monte-Carlo above.
    """

    enum_cap: int = ENUM_CAP
    mc_samples: int = 20000
    seed: int = 0


def make_rng(seed) -> np.random.Generator:
    """
    Seeded generator over numpy's 64-bit counter-based Philox bit generator.

    :param seed: Integer seed or a numpy SeedSequence.
    """
    return np.random.Generator(np.random.Philox(seed))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """
    Derive independent sub-seeds from one seed.

    The splitting rule is numpy's SeedSequence(seed).spawn(count), each child
    reduced to its first 64-bit state word.

    :return: A list of count integers.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def child_seed(seed: int, k: int) -> int:
    """
    The k-th sub-seed of spawn_seeds(seed, ·), computed without spawning the first k - 1.
    """
    child = np.random.SeedSequence(seed, spawn_key=(k,))
    return int(child.generate_state(1, dtype=np.uint64)[0])


def canonical_order(agent: AgentSpec, actions=None) -> list[int]:
    """
    Canonical ordering of an agent's actions: the null action first, then by
    ascending cost, ties broken by original index.

    :param agent: The agent.
    :param actions: Optional subset of action indices to order (default: all).
    :return: Ordered list of action indices.
    """
    actions = range(agent.num_actions) if actions is None else actions
    return sorted(actions, key=lambda a: (a != agent.null_action, agent.costs[a], a))


def expected_over_product(marginals, reward, cap: int = ENUM_CAP) -> float:
    """
    E[g(ω)] when agent i's outcome vector is drawn independently from a finite marginal.

    :param marginals: Per agent a pair (values of shape (s_i, q), probabilities of shape (s_i,)).
    :param reward: Object with evaluate(omega) over arrays of shape (..., n, q).
    :param cap: Maximal number of enumerated tuples.
    :return: The expectation.
    :raises CapExceededError: If the product of support sizes exceeds cap.
    """
    terms = 1
    for values, _ in marginals:
        terms *= len(values)
    if terms > cap:
        raise CapExceededError(f"exact reward needs {terms} terms, cap is {cap}; use Monte-Carlo")
    grids = np.meshgrid(*[np.arange(len(values)) for values, _ in marginals], indexing="ij")
    index = np.stack([g.reshape(-1) for g in grids], axis=1)
    omega = np.stack([marginals[i][0][index[:, i]] for i in range(len(marginals))], axis=1)
    weight = np.ones(len(index))
    for i, (_, probs) in enumerate(marginals):
        weight = weight * probs[index[:, i]]
    return float(np.dot(reward.evaluate(omega), weight))


def _marginals(inst, profile):
    marginals = []
    for agent, a in zip(inst.agents, profile):
        support = np.flatnonzero(agent.dists[a] > 0)
        marginals.append((inst.outcomes[support], agent.dists[a][support]))
    return marginals


def expected_reward_exact(inst: Instance, profile, cap: int = ENUM_CAP, reward=None) -> float:
    """
    R_a = Σ_{ω ∈ Ωⁿ} g(ω) Π_i F_{i,a_i,ω_i} by enumeration of the product of supports.

    :param inst: The instance.
    :param profile: One action index per agent.
    :param cap: Enumeration cap (number of tuples with positive probability).
    :param reward: Optional reward overriding inst.reward (e.g. a scaled view).
    :return: R_a.
    :raises CapExceededError: Above the cap (use expected_reward_mc).
    """
    profile = inst.check_profile(profile)
    return expected_over_product(_marginals(inst, profile), reward or inst.reward, cap)


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    std_error: float
    samples: int


def expected_reward_mc(inst: Instance, profile, samples: int, seed, reward=None) -> MonteCarloEstimate:
    """
    Unbiased Monte-Carlo estimate of R_a, deterministic given the seed.

    :param inst: The instance.
    :param profile: One action index per agent.
    :param samples: Number of sampled outcome tuples (>= 1).
    :param seed: Seed of the Philox generator.
    :param reward: Optional reward overriding inst.reward.
    :return: MonteCarloEstimate with the sample standard error.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    profile = inst.check_profile(profile)
    rng = make_rng(seed)
    picks = np.stack(
        [rng.choice(inst.m, size=samples, p=agent.dists[a]) for agent, a in zip(inst.agents, profile)],
        axis=1)
    values = (reward or inst.reward).evaluate(inst.outcomes[picks])
    error = float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return MonteCarloEstimate(float(values.mean()), error, samples)


class RewardEvaluator:
    """
    Memoized R_a oracle: exact below the enumeration cap, Monte-Carlo with a fixed seed above it,
    so that it is a deterministic function within one solve.
    """

    def __init__(self, inst: Instance, cap: int = ENUM_CAP, samples: int = 20000, seed: int = 0,
                 reward=None):
        self.inst = inst
        self.cap = cap
        self.samples = samples
        self.seed = seed
        self.reward = reward or inst.reward
        self.cache: dict[tuple[int, ...], float] = {}
        self.warned = False

    def __call__(self, profile) -> float:
        profile = tuple(int(a) for a in profile)
        value = self.cache.get(profile)
        if value is None:
            try:
                value = expected_over_product(_marginals(self.inst, profile), self.reward, self.cap)
            except CapExceededError:
                if not self.warned:
                    logger.warning(f"[reward] enumeration cap {self.cap} exceeded, using Monte-Carlo "
                                   f"with {self.samples} samples")
                    self.warned = True
                value = expected_reward_mc(self.inst, profile, self.samples, self.seed, self.reward).value
            self.cache[profile] = value
        return value


def principal_utility(inst: Instance, contract: Contract, mode: str = "exact",
                      samples: int = 20000, seed: int = 0, cap: int = ENUM_CAP) -> float:
    """
    Principal's expected utility R_{a*} - Σ_i Σ_ω F_{i,a*_i,ω} p_{i,ω}.

    :param inst: The instance.
    :param contract: The contract (p, a*).
    :param mode: exact or mc.
    :param samples: Monte-Carlo samples (mode mc).
    :param seed: Monte-Carlo seed (mode mc).
    :param cap: Enumeration cap (mode exact).
    :return: The utility.
    :raises ValueError: On a dimension mismatch or unknown mode.
    """
    contract.check_dimensions(inst)
    profile = contract.recommendations
    if mode == "exact":
        reward = expected_reward_exact(inst, profile, cap)
    elif mode == "mc":
        reward = expected_reward_mc(inst, profile, samples, seed).value
    else:
        raise ValueError(f"Unknown evaluation mode: {mode}")
    payment = sum(inst.agents[i].expected_payment(a, contract.payments[i]) for i, a in enumerate(profile))
    return reward - payment


def check_reward_range(inst, cap: int = ENUM_CAP, samples: int = 4096, seed: int = 0) -> list[str]:
    """
    Spot-check that the reward maps Ωⁿ into [0, 1].

    Enumerates Ωⁿ when m^n <= cap, otherwise checks sampled tuples.

    :return: Problem messages (empty when the check passes).
    """
    if not getattr(inst.reward, "bounded", True):
        return []
    if inst.m ** inst.n <= cap:
        index = np.indices((inst.m,) * inst.n).reshape(inst.n, -1).T
    else:
        index = make_rng(seed).integers(inst.m, size=(samples, inst.n))
    try:
        values = inst.reward.evaluate(inst.outcomes[index])
    except ValueError as e:
        return [f"reward evaluation failed: {e}"]
    bad = np.flatnonzero((values < -1e-12) | (values > 1 + 1e-12))
    if len(bad):
        k = bad[0]
        return [f"reward out of range: g = {values[k]:.6g} at outcome indices {index[k].tolist()}"]
    return []


def validate_reward_range(inst, cap: int = ENUM_CAP) -> None:
    """
    :raises ValidationError: If check_reward_range reports a problem.
    """
    problems = check_reward_range(inst, cap)
    if problems:
        raise ValidationError(problems)


def has_null_outcome_structure(inst: Instance) -> bool:
    """
    Whether Ω has the zero outcome ω∅, every null action yields it surely and no other action ever does.
    """
    zero = inst.outcome_space.null_index
    if zero is None:
        zero = inst.outcome_space.find_zero()
    if zero is None:
        return False
    for agent in inst.agents:
        for a in range(agent.num_actions):
            mass = agent.dists[a][zero]
            if a == agent.null_action and abs(mass - 1.0) > 1e-9:
                return False
            if a != agent.null_action and mass > 1e-12:
                return False
    return True
