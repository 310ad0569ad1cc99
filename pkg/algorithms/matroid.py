import itertools
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from algorithms.payments import PaymentSolution, payment_table
from contract.core import Contract, Instance
from contract.errors import CapExceededError
from contract.utils import ENUM_CAP, EvalOptions, RewardEvaluator, canonical_order

logger = logging.getLogger(__name__)

Element = tuple[int, int]


@dataclass
class PartitionProblem:
    """
    The 1-partition matroid of an instance together with f(S) = R_{a_S} - Σ_{(i,a)∈S} w_{i,a}.

    parts[i] lists agent i's ground elements by action index, in canonical order
    (null action first). For problems built from an instance the weights are the
    minimum payments P̂ and payments holds the attaining rows; weighted problems
    (used by the Bayesian oracle) carry external weights and no payments.
    """

    parts: list[list[int]]
    weights: dict[Element, float]
    reward: Callable[[tuple[int, ...]], float]
    null_actions: tuple[int, ...]
    payments: dict[Element, PaymentSolution] | None = None
    m: int | None = None

    @property
    def n(self) -> int:
        return len(self.parts)

    @property
    def ground(self) -> list[Element]:
        return [(i, a) for i, part in enumerate(self.parts) for a in part]

    def profile_of(self, S) -> tuple[int, ...]:
        """
        The action profile a_S of an independent set, unselected agents padded with the null action.

        :raises ValueError: If S is not an independent set of the ground set.
        """
        profile = list(self.null_actions)
        seen = set()
        for i, a in S:
            if i in seen:
                raise ValueError(f"not independent: two elements of part {i}")
            if not 0 <= i < self.n or a not in self.parts[i]:
                raise ValueError(f"element {(i, a)} is not in the ground set")
            seen.add(i)
            profile[i] = a
        return tuple(profile)

    def set_of(self, profile) -> frozenset[Element]:
        """
        The base holding one element per part for a profile.
        """
        return frozenset((i, int(a)) for i, a in enumerate(profile))

    def value(self, profile) -> float:
        profile = tuple(int(a) for a in profile)
        return self.reward(profile) - sum(self.weights[(i, a)] for i, a in enumerate(profile))

    def num_bases(self) -> int:
        count = 1
        for part in self.parts:
            count *= len(part)
        return count


def build_partition_problem(inst: Instance, table: dict | None = None,
                            options: EvalOptions = EvalOptions()) -> PartitionProblem:
    """
    Build the partition problem of an instance, dropping non-inducible actions.

    :param inst: The instance.
    :param table: Optional precomputed payment_table(inst).
    :param options: How R_a is evaluated (exact below the cap, seeded Monte-Carlo above).
    :return: PartitionProblem with weights P̂_{i,a}.
    """
    table = payment_table(inst) if table is None else table
    parts, weights, payments = [], {}, {}
    for i, agent in enumerate(inst.agents):
        part = []
        for a in canonical_order(agent):
            sol = table[(i, a)]
            if isinstance(sol, PaymentSolution):
                part.append(a)
                weights[(i, a)] = sol.min_expected_payment
                payments[(i, a)] = sol
        parts.append(part)
    evaluator = RewardEvaluator(inst, options.enum_cap, options.mc_samples, options.seed)
    logger.debug(f"[matroid] ground set sizes {[len(part) for part in parts]}")
    return PartitionProblem(parts, weights, evaluator, inst.null_profile(), payments, inst.m)


def build_weighted_problem(inst: Instance, parts: list[list[int]], weights: dict[Element, float],
                           reward_scale: float = 1.0, options: EvalOptions = EvalOptions()) -> PartitionProblem:
    """
    A partition problem with externally supplied parts and weights and a scaled reward.

    :param inst: The instance supplying distributions and the reward.
    :param parts: Per agent, the allowed actions (must contain the null action).
    :param weights: Weight of every element of the parts.
    :param reward_scale: Factor applied to g.
    :param options: Reward evaluation options.
    """
    ordered = []
    for i, part in enumerate(parts):
        if inst.agents[i].null_action not in part:
            raise ValueError(f"part {i} must contain the null action")
        ordered.append(canonical_order(inst.agents[i], part))
    evaluator = RewardEvaluator(inst, options.enum_cap, options.mc_samples, options.seed,
                                reward=inst.reward.scaled(reward_scale))
    return PartitionProblem(ordered, dict(weights), evaluator, inst.null_profile(), None, inst.m)


def f_value(pp: PartitionProblem, S) -> float:
    """
    f(S) = R_{a_S} - Σ_{(i,a)∈S} w_{i,a} for an independent set S.

    Unselected agents play the null action; its weight is 0 for minimum payments and is
    charged like any other element in weighted problems.
    """
    return pp.value(pp.profile_of(S))


def contract_from_set(pp: PartitionProblem, S) -> Contract:
    """
    The contract recommending a_S with the attaining payment rows of each selected element.

    :raises ValueError: For weighted problems, which have no payment rows.
    """
    if pp.payments is None:
        raise ValueError("weighted partition problems carry no payment rows")
    profile = pp.profile_of(S)
    rows = np.zeros((pp.n, pp.m))
    for i, a in enumerate(profile):
        rows[i] = pp.payments[(i, a)].payment_row
    return Contract(rows, profile)


@dataclass(frozen=True)
class ContractSolution:
    """
    A solver answer: the chosen base (one element per part), its profile and f value,
    and the contract when the problem has payment rows.
    """

    elements: frozenset
    profile: tuple[int, ...]
    value: float
    contract: Contract | None = None
    diagnostics: dict | None = None


def solution_for(pp: PartitionProblem, profile, diagnostics: dict | None = None) -> ContractSolution:
    profile = tuple(int(a) for a in profile)
    S = pp.set_of(profile)
    contract = contract_from_set(pp, S) if pp.payments is not None else None
    return ContractSolution(S, profile, pp.value(profile), contract, diagnostics)


def brute_force_optimal(pp: PartitionProblem, cap: int = ENUM_CAP) -> ContractSolution:
    """
    Maximize f over all bases by enumeration.

    Profiles are visited in lexicographic order of action indices and only strict
    improvements replace the incumbent, so ties go to the smallest profile.

    :raises CapExceededError: When the number of bases exceeds cap.
    """
    count = pp.num_bases()
    if count > cap:
        raise CapExceededError(f"brute force needs {count} bases, cap is {cap}")
    best_profile, best_value = None, -np.inf
    for profile in itertools.product(*[sorted(part) for part in pp.parts]):
        value = pp.value(profile)
        if value > best_value + 1e-12:
            best_profile, best_value = profile, value
    logger.info(f"[brute] best profile {best_profile} with value {best_value:.6g} over {count} bases")
    return solution_for(pp, best_profile, {"bases": count})
