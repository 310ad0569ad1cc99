from dataclasses import dataclass

import numpy as np

from contract.errors import ValidationError

PROB_TOL = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.flags.writeable = False
    return array


class OutcomeSpace:
    """
    The finite outcome set Ω, a list of m distinct vectors of the nonnegative orthant of R^q.
    """

    def __init__(self, outcomes, null_index: int | None = None):
        """
        Initialize an outcome space.

        :param outcomes: Array-like of shape (m, q) (a flat list is read as scalar outcomes).
        :param null_index: Index of the all-zeros outcome, if the instance has one.
        :raises ValidationError: If an invariant is violated.
        """
        vectors = np.array(outcomes, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors.reshape(-1, 1)
        problems = []
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise ValidationError([f"outcomes must be a non-empty (m, q) table, got shape {vectors.shape}"])
        if np.any(vectors < 0):
            problems.append("outcome vectors must be component-wise >= 0")
        if len({tuple(v) for v in vectors}) != len(vectors):
            problems.append("outcome vectors must be pairwise distinct")
        if null_index is not None:
            if not 0 <= null_index < len(vectors):
                problems.append(f"null outcome index {null_index} out of range")
            elif np.any(vectors[null_index] != 0):
                problems.append(f"null outcome {null_index} is not the zero vector")
        if problems:
            raise ValidationError(problems)
        self.outcomes: np.ndarray = _frozen(vectors)
        self.null_index: int | None = null_index

    @property
    def m(self) -> int:
        return self.outcomes.shape[0]

    @property
    def q(self) -> int:
        return self.outcomes.shape[1]

    def find_zero(self) -> int | None:
        """
        Locate the all-zeros outcome.

        :return: Its index, or None when Ω has no zero vector.
        """
        hits = np.flatnonzero(np.all(self.outcomes == 0, axis=1))
        return int(hits[0]) if len(hits) else None


@dataclass(frozen=True)
class Action:
    cost: float
    dist: tuple[float, ...]


class AgentSpec:
    """
    One agent: ℓ actions with costs c_{i,a} in [0,1] and outcome distributions F_{i,a}.
    """

    def __init__(self, costs, dists, null_action: int = 0, prob_tol: float = PROB_TOL):
        """
        Initialize an agent.

        Distributions whose sums are within prob_tol of 1 are renormalized,
        anything further away is rejected.

        :param costs: Sequence of ℓ costs.
        :param dists: Array-like of shape (ℓ, m).
        :param null_action: Index of the null action a∅ (cost exactly 0).
        :param prob_tol: Tolerance on distribution sums.
        :raises ValidationError: Listing every violated invariant.
        """
        costs = np.array(costs, dtype=float).reshape(-1)
        dists = np.array(dists, dtype=float)
        problems = []
        if dists.ndim != 2 or dists.shape[0] != len(costs):
            raise ValidationError([f"dimension mismatch: {len(costs)} costs but dists of shape {dists.shape}"])
        if len(costs) == 0:
            raise ValidationError(["an agent needs at least one action"])
        for a, cost in enumerate(costs):
            if not 0.0 <= cost <= 1.0:
                problems.append(f"cost out of range: action {a} has cost {cost}")
        for a, row in enumerate(dists):
            if np.any(row < 0):
                problems.append(f"negative probability in distribution of action {a}")
            total = row.sum()
            if abs(total - 1.0) > prob_tol:
                problems.append(f"distribution sum of action {a} is {total:.12g}, expected 1")
        if not 0 <= null_action < len(costs):
            problems.append(f"missing null action: index {null_action} out of range")
        elif costs[null_action] != 0.0:
            problems.append(f"null action {null_action} must have cost 0, got {costs[null_action]}")
        if problems:
            raise ValidationError(problems)
        dists = dists / dists.sum(axis=1, keepdims=True)
        self.costs: np.ndarray = _frozen(costs)
        self.dists: np.ndarray = _frozen(dists)
        self.null_action: int = int(null_action)

    @property
    def num_actions(self) -> int:
        return len(self.costs)

    @property
    def actions(self) -> list[Action]:
        return [Action(float(c), tuple(float(x) for x in d)) for c, d in zip(self.costs, self.dists)]

    def expected_payment(self, a: int, row: np.ndarray) -> float:
        """
        Expected payment P_{i,a} of action a under a payment row.
        """
        return float(self.dists[a] @ row)

    def utilities(self, row: np.ndarray) -> np.ndarray:
        """
        Expected utility P_{i,a} - c_{i,a} of every action under a payment row.
        """
        return self.dists @ np.asarray(row, dtype=float) - self.costs


class Instance:
    """
    A non-Bayesian principal–multi-agent instance: agents, a shared outcome space and a reward.
    """

    def __init__(self, agents: list[AgentSpec], outcome_space: OutcomeSpace, reward):
        """
        Initialize an instance.

        :param agents: The n >= 1 agents, all over the same outcome space.
        :param outcome_space: The outcome space Ω.
        :param reward: A RewardSpec (see contract.rewards).
        :raises ValidationError: If sizes are inconsistent.
        """
        problems = []
        if len(agents) == 0:
            problems.append("an instance needs at least one agent")
        for i, agent in enumerate(agents):
            if agent.dists.shape[1] != outcome_space.m:
                problems.append(
                    f"dimension mismatch: agent {i} has distributions over {agent.dists.shape[1]} "
                    f"outcomes, the outcome space has {outcome_space.m}")
        if problems:
            raise ValidationError(problems)
        self.agents: tuple[AgentSpec, ...] = tuple(agents)
        self.outcome_space: OutcomeSpace = outcome_space
        self.reward = reward

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return self.outcome_space.m

    @property
    def q(self) -> int:
        return self.outcome_space.q

    @property
    def outcomes(self) -> np.ndarray:
        return self.outcome_space.outcomes

    def num_actions(self, i: int) -> int:
        return self.agents[i].num_actions

    def null_profile(self) -> tuple[int, ...]:
        return tuple(agent.null_action for agent in self.agents)

    def check_profile(self, profile) -> tuple[int, ...]:
        """
        Validate a profile of action indices.

        :return: The profile as a tuple of ints.
        :raises ValueError: On a length mismatch or an invalid index.
        """
        profile = tuple(int(a) for a in profile)
        if len(profile) != self.n:
            raise ValueError(f"profile {profile} has length {len(profile)}, expected {self.n}")
        for i, a in enumerate(profile):
            if not 0 <= a < self.agents[i].num_actions:
                raise ValueError(f"invalid action index {a} for agent {i}")
        return profile

    def with_agents(self, agents: list[AgentSpec]) -> "Instance":
        """
        A copy of this instance with other agents over the same outcomes and reward.
        """
        return Instance(agents, self.outcome_space, self.reward)


class Contract:
    """
    A contract (p, a*): an n x m matrix of nonnegative payments and one recommended action per agent.
    """

    def __init__(self, payments, recommendations):
        """
        Initialize a contract.

        :param payments: Array-like of shape (n, m), all entries >= 0 (limited liability).
        :param recommendations: The n recommended action indices.
        :raises ValueError: On negative payments or mismatched sizes.
        """
        payments = np.array(payments, dtype=float)
        if payments.ndim != 2:
            raise ValueError(f"payments must be an (n, m) matrix, got shape {payments.shape}")
        if np.any(payments < 0):
            raise ValueError("payments must be non-negative")
        recommendations = tuple(int(a) for a in recommendations)
        if len(recommendations) != payments.shape[0]:
            raise ValueError(
                f"{len(recommendations)} recommendations for {payments.shape[0]} payment rows")
        self.payments: np.ndarray = _frozen(payments)
        self.recommendations: tuple[int, ...] = recommendations

    @classmethod
    def zero(cls, inst: Instance) -> "Contract":
        """
        The zero contract recommending the null action to everybody.
        """
        return cls(np.zeros((inst.n, inst.m)), inst.null_profile())

    def check_dimensions(self, inst: Instance) -> None:
        """
        :raises ValueError: If the contract does not fit the instance.
        """
        if self.payments.shape != (inst.n, inst.m):
            raise ValueError(
                f"dimension mismatch: contract is {self.payments.shape}, instance is ({inst.n}, {inst.m})")
        inst.check_profile(self.recommendations)

    def to_dict(self) -> dict:
        return {
            "payments": [[float(x) for x in row] for row in self.payments],
            "recommendations": list(self.recommendations),
        }
