from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from contract.core import AgentSpec, Instance, OutcomeSpace
from contract.errors import ValidationError

LAMBDA_TOL = 1e-9


class BayesianInstance:
    """
    A Bayesian principal–multi-agent instance.

    Agent i of type θ has costs c_{i,θ,a} and distributions F_{i,θ,a}; type tuples are
    drawn from λ, a distribution with finite support Θ̃ⁿ over Θⁿ.
    """

    def __init__(self, per_type: list[list[AgentSpec]], outcome_space: OutcomeSpace,
                 support: list[tuple[int, ...]], probs, reward):
        """
        Initialize a Bayesian instance.

        :param per_type: per_type[i][θ] is the AgentSpec of agent i under type θ.
        :param outcome_space: The shared outcome space Ω.
        :param support: The type tuples with positive probability.
        :param probs: λ_θ for each support tuple (positive, summing to 1).
        :param reward: The RewardSpec.
        :raises ValidationError: Listing every violated invariant.
        """
        problems = []
        if not per_type:
            raise ValidationError(["a Bayesian instance needs at least one agent"])
        num_types = len(per_type[0])
        if num_types == 0 or any(len(types) != num_types for types in per_type):
            problems.append("every agent needs the same positive number of types")
        for i, types in enumerate(per_type):
            for theta, agent in enumerate(types):
                if agent.dists.shape[1] != outcome_space.m:
                    problems.append(f"dimension mismatch: agent {i} type {theta} has distributions "
                                    f"over {agent.dists.shape[1]} outcomes, expected {outcome_space.m}")
        support = [tuple(int(t) for t in theta) for theta in support]
        probs = np.array(probs, dtype=float).reshape(-1)
        if len(support) == 0 or len(support) != len(probs):
            problems.append(f"{len(support)} support tuples but {len(probs)} probabilities")
        if len(set(support)) != len(support):
            problems.append("support tuples must be distinct")
        for theta in support:
            if len(theta) != len(per_type) or any(not 0 <= t < num_types for t in theta):
                problems.append(f"invalid type tuple {list(theta)}")
        if np.any(probs <= 0):
            problems.append("support probabilities must be positive")
        if len(probs) and abs(probs.sum() - 1.0) > LAMBDA_TOL:
            problems.append(f"support probabilities sum to {probs.sum():.12g}, expected 1")
        if problems:
            raise ValidationError(problems)
        order = sorted(range(len(support)), key=lambda k: support[k])
        self.per_type: tuple[tuple[AgentSpec, ...], ...] = tuple(tuple(types) for types in per_type)
        self.outcome_space: OutcomeSpace = outcome_space
        self.support: tuple[tuple[int, ...], ...] = tuple(support[k] for k in order)
        probs = probs[order] / probs.sum()
        self.probs: np.ndarray = probs
        self.probs.flags.writeable = False
        self.reward = reward
        self.num_types: int = num_types

    @property
    def n(self) -> int:
        return len(self.per_type)

    @property
    def m(self) -> int:
        return self.outcome_space.m

    @property
    def q(self) -> int:
        return self.outcome_space.q

    @property
    def outcomes(self) -> np.ndarray:
        return self.outcome_space.outcomes

    @property
    def agents(self) -> tuple[AgentSpec, ...]:
        # The type-0 agents; used where only Ω and n matter (e.g. property checks).
        return tuple(types[0] for types in self.per_type)

    def agent(self, i: int, theta: int) -> AgentSpec:
        return self.per_type[i][theta]

    @cached_property
    def lam(self) -> dict[tuple[int, ...], float]:
        return {theta: float(p) for theta, p in zip(self.support, self.probs)}

    def type_instance(self, theta) -> Instance:
        """
        The non-Bayesian instance seen under type tuple θ.
        """
        theta = tuple(theta)
        return Instance([self.per_type[i][t] for i, t in enumerate(theta)], self.outcome_space, self.reward)

    @staticmethod
    def compose(i: int, theta_i: int, rest: tuple[int, ...]) -> tuple[int, ...]:
        """
        The full tuple (θ_i, θ_{-i}) from agent i's type and the others' types.
        """
        return rest[:i] + (theta_i,) + rest[i:]

    @staticmethod
    def drop(i: int, theta: tuple[int, ...]) -> tuple[int, ...]:
        return theta[:i] + theta[i + 1:]

    def others(self, i: int) -> list[tuple[int, ...]]:
        """
        Θ̃_{-i}: the tuples of the other agents' types appearing in the support.
        """
        return sorted({self.drop(i, theta) for theta in self.support})

    def report_tuples(self, i: int) -> list[tuple[int, ...]]:
        """
        All tuples (θ′, θ_{-i}) with θ′ in Θ and θ_{-i} in Θ̃_{-i}, sorted.
        """
        return sorted(self.compose(i, t, rest) for rest in self.others(i) for t in range(self.num_types))


@dataclass(frozen=True)
class MenuEntry:
    prob: float
    profile: tuple[int, ...]
    payments: np.ndarray


@dataclass(frozen=True)
class Offer:
    prob: float
    action: int
    row: np.ndarray


@dataclass
class RandomizedMenu:
    """
    A menu of randomized contracts.

    contracts[θ] lists (t_{θ,a}, a, p(θ,a)) for every support tuple; offers[(i, θ)] lists
    agent i's marginal (ξ_{i,θ,a}, a, p_{i,θ,a}) for every tuple agent i could face,
    including off-support reports.
    """

    contracts: dict[tuple[int, ...], list[MenuEntry]]
    offers: dict[tuple[int, tuple[int, ...]], list[Offer]]
    value: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "contracts": [
                {
                    "types": list(theta),
                    "entries": [
                        {"prob": e.prob, "profile": list(e.profile),
                         "payments": [[float(x) for x in row] for row in e.payments]}
                        for e in entries
                    ],
                }
                for theta, entries in sorted(self.contracts.items())
            ],
            "offers": [
                {
                    "agent": i,
                    "types": list(theta),
                    "entries": [{"prob": o.prob, "action": o.action, "row": [float(x) for x in o.row]}
                                for o in offers],
                }
                for (i, theta), offers in sorted(self.offers.items())
            ],
        }
