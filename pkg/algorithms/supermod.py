import itertools
import logging
from dataclasses import dataclass

import numpy as np

from algorithms.fosd import check_fosd
from algorithms.matroid import ContractSolution, PartitionProblem, build_partition_problem, solution_for
from algorithms.sfm import SfmOptions, check_submodular, sfm_min_norm
from contract.core import Instance
from contract.errors import CapExceededError, SolverRefusal
from contract.rewards import PropertyVerdict, check_property
from contract.utils import ENUM_CAP, EvalOptions, make_rng

logger = logging.getLogger(__name__)

ORDER_TOL = 1e-9


@dataclass
class LatticeProblem:
    """
    Levels 0..k_i-1 per agent (level 0 is the null action) and h(levels) = f of the matching base.
    """

    pp: PartitionProblem

    @property
    def sizes(self) -> list[int]:
        return [len(part) for part in self.pp.parts]

    def profile(self, levels) -> tuple[int, ...]:
        return tuple(part[j] for part, j in zip(self.pp.parts, levels))

    def h(self, levels) -> float:
        return self.pp.value(self.profile(levels))


class ThresholdEncoding:
    """
    Ground element (i, t) for t in 0..k_i-2 reads "agent i's level is at least t + 1".

    A subset S decodes to levels by the partition-wise maximum. Subsets that are not
    prefix-closed pay M per missing element below a present one:
    g̃(S) = -h(levels(S)) + M·|closure(S) minus S|.
    """

    def __init__(self, lattice: LatticeProblem, penalty: float):
        self.lattice = lattice
        self.penalty = penalty
        self.elements: list[tuple[int, int]] = [
            (i, t) for i, k in enumerate(lattice.sizes) for t in range(k - 1)]

    @property
    def size(self) -> int:
        return len(self.elements)

    def levels(self, S) -> list[int]:
        levels = [0] * len(self.lattice.sizes)
        for e in S:
            i, t = self.elements[e]
            levels[i] = max(levels[i], t + 1)
        return levels

    def violations(self, S) -> int:
        return sum(self.levels(S)) - len(S)

    def encode(self, levels) -> frozenset:
        return frozenset(e for e, (i, t) in enumerate(self.elements) if t < levels[i])

    def __call__(self, S) -> float:
        return -self.lattice.h(self.levels(S)) + self.penalty * self.violations(S)


def _reward_cap(pp: PartitionProblem) -> float:
    # Largest reward: every agent at its highest level bounds increasing rewards.
    best = max(pp.reward(tuple(part[-1] for part in pp.parts)), pp.reward(pp.null_actions), 1.0)
    return float(best) if np.isfinite(best) else 1.0


def ring_penalty(pp: PartitionProblem) -> float:
    """
    M = 4·(1 + n + reward cap + Σ_i max_a |w_{i,a}|), above the range of f.
    """
    heaviest = sum(max((abs(pp.weights[(i, a)]) for a in part), default=0.0) for i, part in enumerate(pp.parts))
    return 4.0 * (1.0 + pp.n + _reward_cap(pp) + heaviest)


def verify_ir_fosd(inst: Instance, seed: int = 0, trials: int = 1000) -> None:
    """
    Check the preconditions of the exact solver.

    :raises SolverRefusal: With the FOSD verdict or the property verdict as witness.
    """
    verdict = check_fosd(inst)
    if not verdict.ok:
        raise SolverRefusal(verdict.message, witness=verdict)
    prop = check_property(inst.reward, inst, "ir_supermodular", mode="sampled", trials=trials, seed=seed)
    if not prop.ok:
        raise SolverRefusal(prop.message, witness=prop)


def solve_ir_fosd(problem, trust_tags: bool = False, sfm_options: SfmOptions = SfmOptions(),
                  eval_options: EvalOptions = EvalOptions(), seed: int = 0) -> ContractSolution:
    """
    Exact optimal contract for IR-supermodular rewards under FOSD.

    The lattice of action levels is encoded as threshold elements; the ring constraint
    is enforced by a penalty so that g̃ is submodular on all subsets, and g̃ is minimized
    with the min-norm-point algorithm. The minimizer decodes to the optimal base.

    :param problem: An Instance (preconditions are checked unless trust_tags) or a
                    prepared PartitionProblem (no checks, e.g. the Bayesian oracle).
    :param trust_tags: Skip the FOSD and sampled IR-supermodularity checks.
    :param sfm_options: Options of the min-norm-point solver.
    :param eval_options: Reward evaluation options when building from an Instance.
    :param seed: Seed of the sampled property check.
    :return: ContractSolution with value -min g̃ (the contract is set for instance problems).
    :raises SolverRefusal: When FOSD or IR-supermodularity fails.
    :raises IndeterminateError: Propagated from the SFM solver.
    """
    if isinstance(problem, Instance):
        if not trust_tags:
            verify_ir_fosd(problem, seed)
        pp = build_partition_problem(problem, options=eval_options)
    else:
        pp = problem
    encoding = ThresholdEncoding(LatticeProblem(pp), ring_penalty(pp))
    result = sfm_min_norm(encoding, encoding.size, sfm_options)
    violations = encoding.violations(result.minimizer)
    if violations:
        logger.warning(f"[ir-fosd] minimizer violates {violations} ring constraints, using its closure")
    levels = encoding.levels(result.minimizer)
    profile = encoding.lattice.profile(levels)
    value = pp.value(profile)
    if violations == 0 and abs(value + result.value) > 1e-6:
        logger.warning(f"[ir-fosd] SFM value {-result.value:.9g} differs from f = {value:.9g}")
    logger.info(f"[ir-fosd] profile {profile} with value {value:.6g} "
                f"({encoding.size} threshold elements, {result.major_cycles} major cycles)")
    return solution_for(pp, profile, {"sfm_value": -result.value, "major_cycles": result.major_cycles,
                                      "penalty": encoding.penalty, "violations": violations})


def check_ordered_supermodular(pp: PartitionProblem, mode: str = "exhaustive", trials: int = 1000,
                               seed: int = 0, cap: int = ENUM_CAP, tol: float = ORDER_TOL) -> PropertyVerdict:
    """
    Check h(j ∧ j′) + h(j ∨ j′) >= h(j) + h(j′) over pairs of level vectors.

    :param pp: The partition problem (levels follow its canonical part orders).
    :param mode: exhaustive (all pairs of bases) or sampled.
    :return: PropertyVerdict with a witness (j, j′) on failure.
    :raises CapExceededError: When exhaustive mode needs more than cap pairs.
    """
    lattice = LatticeProblem(pp)
    sizes = lattice.sizes
    if mode == "exhaustive":
        total = int(np.prod(sizes))
        if total * total > cap:
            raise CapExceededError(f"exhaustive ordered-supermodularity check needs {total * total} pairs, "
                                   f"cap is {cap}; use sampled mode")
        H = np.empty(sizes)
        for levels in itertools.product(*[range(k) for k in sizes]):
            H[levels] = lattice.h(levels)
        L = np.array(list(itertools.product(*[range(k) for k in sizes]))).reshape(total, len(sizes))
        first, second = np.triu_indices(total, k=1)
        low = np.minimum(L[first], L[second])
        high = np.maximum(L[first], L[second])
        gap = H[tuple(low.T)] + H[tuple(high.T)] - H[tuple(L[first].T)] - H[tuple(L[second].T)]
        bad = np.flatnonzero(gap < -tol)
        if len(bad):
            k = bad[0]
            return PropertyVerdict("ordered_supermodular", False, len(gap), mode,
                                   (L[first[k]].tolist(), L[second[k]].tolist()))
        return PropertyVerdict("ordered_supermodular", True, len(gap), mode)
    if mode != "sampled":
        raise ValueError(f"Unknown check mode: {mode}")
    rng = make_rng(seed)
    for _ in range(trials):
        j = [int(rng.integers(k)) for k in sizes]
        jj = [int(rng.integers(k)) for k in sizes]
        low = [min(x, y) for x, y in zip(j, jj)]
        high = [max(x, y) for x, y in zip(j, jj)]
        if lattice.h(low) + lattice.h(high) < lattice.h(j) + lattice.h(jj) - tol:
            return PropertyVerdict("ordered_supermodular", False, trials, mode, (j, jj))
    return PropertyVerdict("ordered_supermodular", True, trials, mode)


def check_encoding_submodular(pp: PartitionProblem, trials: int = 1000, seed: int = 0):
    """
    Sampled submodularity check of the penalized threshold objective g̃.

    :return: None, or a witness (S, T, e).
    """
    encoding = ThresholdEncoding(LatticeProblem(pp), ring_penalty(pp))
    return check_submodular(encoding, encoding.size, trials, seed)
