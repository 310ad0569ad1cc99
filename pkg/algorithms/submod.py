import logging
import math
from dataclasses import dataclass

import numpy as np

from algorithms.matroid import ContractSolution, PartitionProblem, build_partition_problem, solution_for
from contract.core import Instance
from contract.errors import CapExceededError, SolverRefusal
from contract.rewards import check_property
from contract.utils import ENUM_CAP, EvalOptions, expected_over_product, has_null_outcome_structure, \
    make_rng, spawn_seeds

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class DrOptions:
    """
    Options of the DR-submodular solver.

    :param eps: Additive error target ε.
    :param seed: Seed of sampling and rounding.
    :param exact_cap: Largest 2^|ground| for which the multilinear extension is computed exactly.
    :param max_samples: Cap on Monte-Carlo samples per greedy step.
    :param rounding_draws: Independent roundings of the fractional point (best one kept).
    :param trust_tags: Skip the sampled DR-submodularity check.
    :param enum_cap: Enumeration cap for the exact expected reward of summed distributions.
    """

    eps: float = 0.01
    seed: int = 0
    exact_cap: int = 2 ** 14
    max_samples: int = 2000
    rounding_draws: int = 64
    trust_tags: bool = False
    enum_cap: int = ENUM_CAP


class ExtendedProblem:
    """
    f(S) = R_S - Σ_{e∈S} w_e on arbitrary subsets S of the non-null ground elements.

    R_S is the expected reward when agent i's outcome vector is the sum of one
    independent draw from F_{i,a} per element (i, a) of S (the null action always
    draws the zero outcome). The linear part is exact; only R_S is expensive.
    """

    def __init__(self, inst: Instance, pp: PartitionProblem, reward=None, enum_cap: int = ENUM_CAP,
                 seed: int = 0):
        self.inst = inst
        self.pp = pp
        self.reward = reward or inst.reward
        self.enum_cap = enum_cap
        self.seed = seed
        null = pp.null_actions
        self.base_weight = sum(pp.weights[(i, null[i])] for i in range(pp.n))
        self.elements = [(i, a) for i, part in enumerate(pp.parts) for a in part if a != null[i]]
        self.linear = np.array([-(pp.weights[e] - pp.weights[(e[0], null[e[0]])]) for e in self.elements])
        self.parts = [[k for k, (i, _) in enumerate(self.elements) if i == agent] for agent in range(pp.n)]
        self._sums: dict = {}
        self._values: dict[frozenset, float] = {}
        self._table: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.elements)

    def _agent_sum(self, agent: int, chosen: frozenset):
        key = (agent, chosen)
        if key not in self._sums:
            outcomes = self.inst.outcomes
            dist = {tuple(np.zeros(self.inst.q)): 1.0}
            for k in sorted(chosen):
                _, a = self.elements[k]
                probs = self.inst.agents[agent].dists[a]
                merged: dict = {}
                for vector, p in dist.items():
                    for w in np.flatnonzero(probs > 0):
                        target = tuple(np.add(vector, outcomes[w]))
                        merged[target] = merged.get(target, 0.0) + p * probs[w]
                dist = merged
            values = np.array(list(dist.keys()), dtype=float).reshape(-1, self.inst.q)
            self._sums[key] = (values, np.array(list(dist.values())))
        return self._sums[key]

    def reward_of(self, S) -> float:
        """
        R_S, by enumeration of the summed supports, seeded Monte-Carlo above the cap.
        """
        S = frozenset(S)
        value = self._values.get(S)
        if value is None:
            marginals = [self._agent_sum(i, S & frozenset(part)) for i, part in enumerate(self.parts)]
            try:
                value = expected_over_product(marginals, self.reward, self.enum_cap)
            except CapExceededError:
                rng = make_rng(self.seed)
                draws = np.stack([values[rng.choice(len(values), size=4096, p=probs)]
                                  for values, probs in marginals], axis=1)
                value = float(np.mean(self.reward.evaluate(draws)))
            self._values[S] = value
        return value

    def linear_of(self, S) -> float:
        return float(sum(self.linear[k] for k in S))

    def value(self, S) -> float:
        """
        f(S) = R_S + 𝗅(S), the latter relative to the all-null base.
        """
        return self.reward_of(S) + self.linear_of(S) - self.base_weight

    def table(self) -> np.ndarray:
        """
        R_S for every subset S, indexed by bitmask.
        """
        if self._table is None:
            table = np.empty(2 ** self.size)
            for mask in range(len(table)):
                table[mask] = self.reward_of(k for k in range(self.size) if mask >> k & 1)
            self._table = table
        return self._table

    def profile_of(self, S) -> tuple[int, ...]:
        profile = list(self.pp.null_actions)
        for k in S:
            i, a = self.elements[k]
            profile[i] = a
        return tuple(profile)


def extended_f(ep: ExtendedProblem, S) -> float:
    """
    The extension f(S) = R_S - Σ_{(i,a)∈S} P̂_{i,a} on any subset of the ground elements.
    """
    return ep.value(S)


def multilinear_estimate(ep: ExtendedProblem, x, samples: int = 1000, seed: int = 0,
                         exact_cap: int = 2 ** 14):
    """
    Multilinear extension F(x) = E_{S~x}[R_S] and marginals F(x ∨ e) - F(x).

    Exact (zero variance) when 2^|ground| <= exact_cap, otherwise a seeded Monte-Carlo
    estimate with common random sets for all marginals.

    :return: (value, marginal vector).
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    N = ep.size
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if N == 0:
        return ep.reward_of(()), np.zeros(0)
    if 2 ** N <= exact_cap:
        table = ep.table()
        masks = np.arange(2 ** N)
        bits = ((masks[:, None] >> np.arange(N)[None, :]) & 1).astype(bool)
        factors = np.where(bits, x[None, :], 1.0 - x[None, :])
        probs = factors.prod(axis=1)
        value = float(probs @ table)
        marginals = np.empty(N)
        for e in range(N):
            others = np.prod(np.delete(factors, e, axis=1), axis=1)
            marginals[e] = float((others * bits[:, e]) @ table) - value
        return value, marginals
    rng = make_rng(seed)
    total = 0.0
    gains = np.zeros(N)
    for _ in range(samples):
        S = frozenset(int(k) for k in np.flatnonzero(rng.random(N) < x))
        base = ep.reward_of(S)
        total += base
        for e in range(N):
            if e not in S:
                gains[e] += ep.reward_of(S | {e}) - base
    value = total / samples
    marginals = gains / samples
    return value, marginals


def check_extension(ep: ExtendedProblem, trials: int = 1000, seed: int = 0, tol: float = MONOTONE_TOL):
    """
    Sampled monotonicity and submodularity checks of S -> R_S.

    :return: None, or (kind, witness) with kind monotone or submodular.
    """
    rng = make_rng(seed)
    N = ep.size
    if N == 0:
        return None
    for _ in range(trials):
        big = rng.random(N) < 0.5
        small = big & (rng.random(N) < 0.5)
        S = frozenset(int(k) for k in np.flatnonzero(small))
        T = frozenset(int(k) for k in np.flatnonzero(big))
        if ep.reward_of(S) > ep.reward_of(T) + tol:
            return "monotone", (sorted(S), sorted(T))
        outside = np.flatnonzero(~big)
        if len(outside):
            e = int(rng.choice(outside))
            if ep.reward_of(S | {e}) - ep.reward_of(S) < ep.reward_of(T | {e}) - ep.reward_of(T) - tol:
                return "submodular", (sorted(S), sorted(T), e)
    return None


def _prune(pp: PartitionProblem, scale: float) -> PartitionProblem:
    # An element whose extra weight over the null action exceeds the reward range never helps
    null = pp.null_actions
    parts = [[a for a in part if a == null[i] or pp.weights[(i, a)] - pp.weights[(i, null[i])] <= scale]
             for i, part in enumerate(pp.parts)]
    return PartitionProblem(parts, pp.weights, pp.reward, pp.null_actions, pp.payments, pp.m)


def samples_per_step(ground: int, eps: float, max_samples: int) -> int:
    """
    ⌈N² ln(N/ε) / ε²⌉ samples for N ground elements, capped by max_samples.
    """
    if ground == 0:
        return 1
    needed = math.ceil(ground * ground * math.log(max(ground / eps, math.e)) / (eps * eps))
    return max(1, min(needed, max_samples))


def continuous_greedy(ep: ExtendedProblem, options: DrOptions, seed: int) -> np.ndarray:
    """
    Distorted continuous greedy over the partition-matroid polytope.

    With T = ⌈3/ε⌉ steps of size δ = 1/T, step t moves towards the element of each part
    maximizing (1 - δ)^{T-t-1}·(marginal of R) + 𝗅_e, when that weight is positive.
    """
    steps = math.ceil(3.0 / options.eps)
    delta = 1.0 / steps
    samples = samples_per_step(ep.size, options.eps, options.max_samples)
    seeds = spawn_seeds(seed, steps)
    x = np.zeros(ep.size)
    for t in range(steps):
        _, marginals = multilinear_estimate(ep, x, samples, seeds[t], options.exact_cap)
        weights = (1.0 - delta) ** (steps - t - 1) * marginals + ep.linear
        for part in ep.parts:
            if not part:
                continue
            best = max(part, key=lambda k: (weights[k], -k))
            if weights[best] > 0:
                x[best] += delta
        if t % 50 == 0:
            logger.debug(f"[dr] step {t}/{steps}: |x| = {x.sum():.3f}")
    return np.minimum(x, 1.0)


def round_point(ep: ExtendedProblem, x: np.ndarray, draws: int, seed: int) -> tuple[int, ...]:
    """
    Per-part categorical rounding; the best of several draws (and of the all-null base) by exact f.
    """
    rng = make_rng(seed)
    candidates = {ep.pp.null_actions}
    for _ in range(draws):
        chosen = []
        for part in ep.parts:
            if not part:
                continue
            probs = x[part]
            rest = max(0.0, 1.0 - probs.sum())
            pick = rng.choice(len(part) + 1, p=np.append(probs, rest) / (probs.sum() + rest))
            if pick < len(part):
                chosen.append(part[pick])
        candidates.add(ep.profile_of(chosen))
    return max(sorted(candidates), key=ep.pp.value)


def solve_dr_problem(inst: Instance, pp: PartitionProblem, options: DrOptions = DrOptions(),
                     reward_scale: float = 1.0) -> ContractSolution:
    """
    The DR approximation on a prepared partition problem (minimum payments or external weights).

    :param inst: The instance providing distributions and reward.
    :param pp: Partition problem over inst (its reward may be scaled by reward_scale).
    :param options: DrOptions.
    :param reward_scale: Factor applied to g in pp.
    """
    pruned = _prune(pp, reward_scale)
    reward = inst.reward.scaled(reward_scale) if reward_scale != 1.0 else inst.reward
    ep = ExtendedProblem(inst, pruned, reward, options.enum_cap, options.seed)
    greedy_seed, round_seed = spawn_seeds(options.seed, 2)
    x = continuous_greedy(ep, options, greedy_seed)
    profile = round_point(ep, x, options.rounding_draws, round_seed)
    logger.info(f"[dr] profile {profile} from fractional point of mass {x.sum():.3f} "
                f"({ep.size} ground elements)")
    return solution_for(pruned, profile, {"fractional": x.tolist(), "ground": ep.size})


def verify_dr(inst: Instance, seed: int = 0, trials: int = 1000) -> None:
    """
    :raises SolverRefusal: Without the null-outcome structure, or on a DR-submodularity counterexample.
    """
    if not has_null_outcome_structure(inst):
        raise SolverRefusal("the DR solver needs a zero outcome that exactly the null actions produce")
    prop = check_property(inst.reward, inst, "dr_submodular", mode="sampled", trials=trials, seed=seed)
    if not prop.ok:
        raise SolverRefusal(prop.message, witness=prop)


def solve_dr(inst: Instance, options: DrOptions = DrOptions(), eval_options: EvalOptions | None = None,
             table: dict | None = None) -> ContractSolution:
    """
    (1 - 1/e)-approximate contract for DR-submodular rewards.

    Elements with P̂ > 1 are dropped, the distorted continuous greedy is run on the
    extension R_S - Σ P̂ and the fractional point is rounded part by part.
    For every contract (p, a*) the returned utility is at least
    (1 - 1/e)·R_{(p,a*)} - P_{(p,a*)} - ε with high probability.

    :param inst: The instance.
    :param options: DrOptions (ε, seed, sampling and rounding settings).
    :param eval_options: Reward evaluation of the rounded profiles (default: exact with options.enum_cap).
    :param table: Optional precomputed payment table.
    :return: ContractSolution with the contract.
    :raises SolverRefusal: When the null-outcome assumption or the DR check fails.
    """
    if options.eps <= 0:
        raise ValueError(f"eps must be positive, got {options.eps}")
    if not has_null_outcome_structure(inst):
        raise SolverRefusal("the DR solver needs a zero outcome that exactly the null actions produce")
    if not options.trust_tags:
        verify_dr(inst, options.seed)
    eval_options = eval_options or EvalOptions(options.enum_cap, seed=options.seed)
    pp = build_partition_problem(inst, table, eval_options)
    return solve_dr_problem(inst, pp, options)
