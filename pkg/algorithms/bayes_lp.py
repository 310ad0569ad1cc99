"""
Linear programs of the Bayesian problem and the conversions between their solutions.

Variables (all >= 0 unless noted):
    t[θ, a]            probability of recommending profile a under reported tuple θ ∈ supp(λ);
    ξ[i, θ, a]         marginal probability that agent i is recommended a at tuple θ;
    y[i, θ, a, ω]      ξ-weighted payment of agent i for outcome ω;
    γ[i, θ, θ′, a]     value of deviating to report θ′ and then best-responding to offer a
                       (free in the equality LP, >= 0 in the relaxed one).
θ ranges over supp(λ) for t and γ and over every tuple (θ′, θ_{-i}) with θ_{-i} ∈ Θ̃_{-i}
for ξ and y. Rows come in four blocks, always in this order:
    x: Σ_a ξ[i, θ, a] = 1;
    y: Σ_{a: a_i = a} t[θ, a] - ξ[i, θ, a] (= or <=) 0;
    z: γ[i, θ, θ′, a] - F_{i,θ_i,a′}·y[i, (θ′, θ_{-i}), a] + c_{i,θ_i,a′} ξ[i, (θ′, θ_{-i}), a] >= 0;
    d: Σ_a (F_{i,θ_i,a}·y[i, θ, a] - c_{i,θ_i,a} ξ[i, θ, a]) - Σ_a γ[i, θ, θ′, a] >= 0.
The objective is Σ_θ λ_θ (Σ_a t[θ, a] R_{θ,a} - Σ_i Σ_a F_{i,θ_i,a}·y[i, θ, a]).
"""
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from algorithms.payments import PaymentSolution, inducible_actions, payment_bound, payment_table
from algorithms.simplex import LinearProgram, LPModel, LPResult, LPStatus, lp_residuals, solve_lp
from contract.bayesian import BayesianInstance, MenuEntry, Offer, RandomizedMenu
from contract.errors import CapExceededError, NumericalError
from contract.utils import ENUM_CAP, EvalOptions, RewardEvaluator

logger = logging.getLogger(__name__)

ZERO_TOL = 1e-12
IRREGULAR_TOL = 1e-9
DSIC_TOL = 1e-5


class BayesContext:
    """
    Data shared by every LP of a Bayesian instance: inducible action sets, the payment
    table and memoized expected rewards R_{θ,a}.
    """

    def __init__(self, bi: BayesianInstance, eval_options: EvalOptions = EvalOptions(), table: dict | None = None):
        self.bi = bi
        self.eval_options = eval_options
        self.table = payment_table(bi) if table is None else table
        self.actions: dict[tuple[int, int], list[int]] = {
            (i, theta): inducible_actions(bi, i, theta, self.table)
            for i in range(bi.n) for theta in range(bi.num_types)}
        self.lam = bi.lam
        self._evaluators: dict[tuple[int, ...], RewardEvaluator] = {}

    @property
    def n(self) -> int:
        return self.bi.n

    def profiles(self, theta) -> list[tuple[int, ...]]:
        return list(itertools.product(*[self.actions[(i, t)] for i, t in enumerate(theta)]))

    def num_profiles(self) -> int:
        total = 0
        for theta in self.bi.support:
            count = 1
            for i, t in enumerate(theta):
                count *= len(self.actions[(i, t)])
            total += count
        return total

    def null_profile(self, theta) -> tuple[int, ...]:
        return tuple(self.bi.agent(i, t).null_action for i, t in enumerate(theta))

    def reward(self, theta, profile) -> float:
        theta = tuple(theta)
        evaluator = self._evaluators.get(theta)
        if evaluator is None:
            opts = self.eval_options
            evaluator = RewardEvaluator(self.bi.type_instance(theta), opts.enum_cap, opts.mc_samples, opts.seed)
            self._evaluators[theta] = evaluator
        return evaluator(profile)

    def min_row(self, i: int, theta_i: int, a: int) -> np.ndarray:
        sol = self.table[(i, theta_i, a)]
        if not isinstance(sol, PaymentSolution):
            raise ValueError(f"action {a} of agent {i} is not inducible for type {theta_i}")
        return sol.payment_row


@dataclass
class BayesSolution:
    """
    A (possibly partial) assignment of the LP variables; missing t entries are 0.
    """

    t: dict = field(default_factory=dict)
    xi: dict = field(default_factory=dict)
    y: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    value: float | None = None

    def pool(self) -> dict:
        pool: dict = {}
        for theta, profile in self.t:
            pool.setdefault(theta, set()).add(profile)
        return pool

    def copy(self) -> "BayesSolution":
        return BayesSolution(dict(self.t), dict(self.xi), {k: v.copy() for k, v in self.y.items()},
                             dict(self.gamma), self.value)


def build_lp(ctx: BayesContext, pool: dict | None = None, relaxed: bool = False) -> LPModel:
    """
    The equality LP (relaxed=False) or the relaxed LP over all profiles (pool=None) or
    only over the profiles of pool[θ] (the restricted primal).
    """
    bi = ctx.bi
    model = LPModel("max")
    for theta in bi.support:
        profiles = ctx.profiles(theta) if pool is None else sorted(pool.get(theta, ()))
        for profile in profiles:
            model.var(("t", theta, profile), cost=ctx.lam[theta] * ctx.reward(theta, profile))
    for i in range(bi.n):
        for rep in bi.report_tuples(i):
            agent = bi.agent(i, rep[i])
            weight = ctx.lam.get(rep, 0.0)
            for a in ctx.actions[(i, rep[i])]:
                model.var(("xi", i, rep, a))
                for w in range(bi.m):
                    model.var(("y", i, rep, a, w), cost=-weight * agent.dists[a][w])
    for i in range(bi.n):
        for theta in bi.support:
            for other in range(bi.num_types):
                for a in ctx.actions[(i, other)]:
                    model.var(("g", i, theta, other, a), lower=0.0 if relaxed else -np.inf)

    for i in range(bi.n):
        for rep in bi.report_tuples(i):
            model.add_row({("xi", i, rep, a): 1.0 for a in ctx.actions[(i, rep[i])]}, "=", 1.0, tag=("x", i, rep))
    t_keys = [key for key in model.index if key[0] == "t"]
    for i in range(bi.n):
        for theta in bi.support:
            for a in ctx.actions[(i, theta[i])]:
                coeffs = {key: 1.0 for key in t_keys if key[1] == theta and key[2][i] == a}
                coeffs[("xi", i, theta, a)] = -1.0
                model.add_row(coeffs, "<=" if relaxed else "=", 0.0, tag=("y", i, theta, a))
    for i in range(bi.n):
        for theta in bi.support:
            true_agent = bi.agent(i, theta[i])
            rest = bi.drop(i, theta)
            for other in range(bi.num_types):
                rep = bi.compose(i, other, rest)
                for a in ctx.actions[(i, other)]:
                    for alt in ctx.actions[(i, theta[i])]:
                        coeffs = {("g", i, theta, other, a): 1.0, ("xi", i, rep, a): float(true_agent.costs[alt])}
                        for w in range(bi.m):
                            coeffs[("y", i, rep, a, w)] = -float(true_agent.dists[alt][w])
                        model.add_row(coeffs, ">=", 0.0, tag=("z", i, theta, other, a, alt))
    for i in range(bi.n):
        for theta in bi.support:
            true_agent = bi.agent(i, theta[i])
            for other in range(bi.num_types):
                coeffs = {}
                for a in ctx.actions[(i, theta[i])]:
                    coeffs[("xi", i, theta, a)] = -float(true_agent.costs[a])
                    for w in range(bi.m):
                        coeffs[("y", i, theta, a, w)] = float(true_agent.dists[a][w])
                for a in ctx.actions[(i, other)]:
                    coeffs[("g", i, theta, other, a)] = -1.0
                model.add_row(coeffs, ">=", 0.0, tag=("d", i, theta, other))
    return model


def solution_from_values(ctx: BayesContext, values: dict, value: float | None = None) -> BayesSolution:
    sol = BayesSolution(value=value)
    for key, v in values.items():
        kind = key[0]
        if kind == "t":
            sol.t[(key[1], key[2])] = max(v, 0.0)
        elif kind == "xi":
            sol.xi[key[1:]] = max(v, 0.0)
        elif kind == "y":
            sol.y.setdefault(key[1:4], np.zeros(ctx.bi.m))[key[4]] = max(v, 0.0)
        else:
            sol.gamma[key[1:]] = v
    return sol


def solution_vector(model: LPModel, sol: BayesSolution) -> np.ndarray:
    x = np.zeros(len(model.index))
    for key, j in model.index.items():
        kind = key[0]
        if kind == "t":
            x[j] = sol.t.get((key[1], key[2]), 0.0)
        elif kind == "xi":
            x[j] = sol.xi.get(key[1:], 0.0)
        elif kind == "y":
            row = sol.y.get(key[1:4])
            x[j] = 0.0 if row is None else row[key[4]]
        else:
            x[j] = sol.gamma.get(key[1:], 0.0)
    return x


def solve_bayes_lp(ctx: BayesContext, pool: dict | None = None, relaxed: bool = False):
    """
    Solve the equality or relaxed LP (optionally restricted to a pool of profiles).

    :return: (BayesSolution, LPResult, LPModel)
    :raises NumericalError: If the LP is not solved to optimality.
    """
    model = build_lp(ctx, pool, relaxed)
    lp = model.build()
    result = solve_lp(lp)
    if not result.optimal:
        raise NumericalError(f"Bayesian LP is {result.status.value}, expected an optimum")
    sol = solution_from_values(ctx, model.values(result.x), result.value)
    logger.debug(f"[bayes-lp] {'relaxed' if relaxed else 'equality'} LP with {lp.num_rows} rows and "
                 f"{lp.num_vars} columns: value {result.value:.9g}")
    return sol, result, model


def solve_lp3_direct(bi, cap: int = ENUM_CAP, eval_options: EvalOptions = EvalOptions(),
                     relaxed: bool = False) -> BayesSolution:
    """
    Solve the equality LP over every profile of every support tuple (ground-truth oracle).

    :param bi: BayesianInstance or a prepared BayesContext.
    :param cap: Largest total number of t variables.
    :param eval_options: Reward evaluation options.
    :param relaxed: Solve the relaxed LP instead (same optimal value).
    :return: BayesSolution carrying the optimal value.
    :raises CapExceededError: When there are more than cap t variables.
    """
    ctx = bi if isinstance(bi, BayesContext) else BayesContext(bi, eval_options)
    count = ctx.num_profiles()
    if count > cap:
        raise CapExceededError(f"direct LP needs {count} profile variables, cap is {cap}")
    sol, _, _ = solve_bayes_lp(ctx, None, relaxed)
    return sol


def lp3_objective(ctx: BayesContext, sol: BayesSolution) -> float:
    """
    Objective value of a solution (missing entries are 0).
    """
    bi = ctx.bi
    total = 0.0
    for (theta, profile), t in sol.t.items():
        total += ctx.lam[theta] * t * ctx.reward(theta, profile)
    for theta in bi.support:
        for i in range(bi.n):
            agent = bi.agent(i, theta[i])
            for a in ctx.actions[(i, theta[i])]:
                row = sol.y.get((i, theta, a))
                if row is not None:
                    total -= ctx.lam[theta] * float(agent.dists[a] @ row)
    return total


def lp3_residual(ctx: BayesContext, sol: BayesSolution, relaxed: bool = False) -> float:
    """
    Largest constraint violation of a solution in the equality (or relaxed) LP.
    """
    model = build_lp(ctx, sol.pool(), relaxed)
    return lp_residuals(model.build(), solution_vector(model, sol))


def _comonotone(marginals: list[np.ndarray]) -> list[tuple[float, tuple[int, ...]]]:
    """
    Quantile coupling of distributions on index sets: (mass, index tuple) pieces.
    """
    cuts = sorted({0.0, 1.0} | {float(c) for dist in marginals for c in np.cumsum(dist)[:-1]})
    pieces = []
    for low, high in zip(cuts, cuts[1:]):
        if high - low <= ZERO_TOL:
            continue
        mid = (low + high) / 2
        index = tuple(int(min(np.searchsorted(np.cumsum(dist), mid, side="right"), len(dist) - 1))
                      for dist in marginals)
        pieces.append((high - low, index))
    return pieces


def relaxed_to_equality(ctx: BayesContext, sol: BayesSolution) -> BayesSolution:
    """
    Turn a relaxed-LP solution into an equality-LP solution with no smaller value.

    For each support tuple θ the slack δ_{i,a} = ξ[i, θ, a] - Σ_{a: a_i = a} t[θ, a] has the same
    total δ_θ = 1 - Σ_a t[θ, a] for every agent; the missing mass is added as the quantile
    coupling of the marginals δ_{i,·}/δ_θ, whose support has at most Σ_i |A_{i,θ_i}| profiles.
    """
    bi = ctx.bi
    out = sol.copy()
    for theta in bi.support:
        total = sum(t for (th, _), t in sol.t.items() if th == theta)
        slack = 1.0 - total
        if slack <= ZERO_TOL:
            continue
        marginals, actions = [], []
        for i in range(bi.n):
            acts = ctx.actions[(i, theta[i])]
            used = np.array([sum(t for (th, p), t in sol.t.items() if th == theta and p[i] == a) for a in acts])
            delta = np.maximum(np.array([sol.xi.get((i, theta, a), 0.0) for a in acts]) - used, 0.0)
            if delta.sum() <= ZERO_TOL:
                delta = np.zeros(len(acts))
                delta[acts.index(bi.agent(i, theta[i]).null_action)] = 1.0
            marginals.append(delta / delta.sum())
            actions.append(acts)
        for mass, index in _comonotone(marginals):
            profile = tuple(actions[i][k] for i, k in enumerate(index))
            out.t[(theta, profile)] = out.t.get((theta, profile), 0.0) + slack * mass
    out.value = lp3_objective(ctx, out)
    return out


def irregular_indices(sol: BayesSolution, tol: float = IRREGULAR_TOL) -> list[tuple]:
    """
    Indices (i, θ, a) with positive payments y but zero probability ξ.
    """
    return sorted(key for key, row in sol.y.items()
                  if sol.xi.get(key, 0.0) <= ZERO_TOL and float(np.max(row, initial=0.0)) > tol)


def _best_response(agent, row: np.ndarray, actions: list[int], prefer: int | None = None) -> int:
    utilities = agent.utilities(row)
    best = max(utilities[a] for a in actions)
    if prefer is not None and utilities[prefer] >= best - 1e-9:
        return prefer
    return min(a for a in actions if utilities[a] >= best - 1e-9)


def tighten_gamma(ctx: BayesContext, sol: BayesSolution) -> None:
    """
    Set every γ to the deviation value it bounds (the smallest feasible value).
    """
    bi = ctx.bi
    for i in range(bi.n):
        for theta in bi.support:
            true_agent = bi.agent(i, theta[i])
            rest = bi.drop(i, theta)
            for other in range(bi.num_types):
                rep = bi.compose(i, other, rest)
                for a in ctx.actions[(i, other)]:
                    row = sol.y.get((i, rep, a), np.zeros(bi.m))
                    xi = sol.xi.get((i, rep, a), 0.0)
                    sol.gamma[(i, theta, other, a)] = max(
                        float(true_agent.dists[alt] @ row) - xi * float(true_agent.costs[alt])
                        for alt in ctx.actions[(i, theta[i])])


def forced_solution(ctx: BayesContext, index: tuple) -> BayesSolution:
    """
    The feasible solution that repairs one irregular index w = (i, θ, a).

    Agent i is offered the minimum-payment row of a at every tuple (θ″, θ_{-i}) and is
    recommended the type-θ″ best response (a itself at θ); every other agent and tuple
    gets the null action with zero payments.
    """
    bi = ctx.bi
    i, target, a = index
    row = ctx.min_row(i, target[i], a)
    rest = bi.drop(i, target)
    sol = BayesSolution()
    for j in range(bi.n):
        for rep in bi.report_tuples(j):
            agent = bi.agent(j, rep[j])
            if j == i and bi.drop(i, rep) == rest:
                prefer = a if rep[i] == target[i] else None
                action = _best_response(agent, row, ctx.actions[(i, rep[i])], prefer)
                sol.xi[(j, rep, action)] = 1.0
                sol.y[(j, rep, action)] = row.copy()
            else:
                sol.xi[(j, rep, agent.null_action)] = 1.0
    for theta in bi.support:
        profile = tuple(
            next(act for (j, rep, act), xi in sol.xi.items() if j == k and rep == theta and xi > 0)
            for k in range(bi.n))
        sol.t[(theta, profile)] = 1.0
    tighten_gamma(ctx, sol)
    return sol


def _mix(parts: list[tuple[float, BayesSolution]]) -> BayesSolution:
    out = BayesSolution()
    for weight, sol in parts:
        for key, v in sol.t.items():
            out.t[key] = out.t.get(key, 0.0) + weight * v
        for key, v in sol.xi.items():
            out.xi[key] = out.xi.get(key, 0.0) + weight * v
        for key, row in sol.y.items():
            out.y[key] = out.y.get(key, 0.0) + weight * row
        for key, v in sol.gamma.items():
            out.gamma[key] = out.gamma.get(key, 0.0) + weight * v
    return out


def regularize(ctx: BayesContext, sol: BayesSolution, eps: float) -> BayesSolution:
    """
    Remove irregular indices (y > 0 with ξ = 0) by mixing in repair solutions.

    Returns (1 - ε)·sol + ε/|W|·Σ_{w∈W} sol^w, whose value is at least the original
    value minus ε(n·τ + 1); an already regular solution is returned unchanged.

    :param ctx: The Bayesian context.
    :param sol: A feasible equality-LP solution.
    :param eps: Mixing weight in (0, 1).
    """
    irregular = irregular_indices(sol)
    if not irregular:
        return sol
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    logger.info(f"[bayes] regularizing {len(irregular)} irregular indices with eps = {eps:.3g}")
    parts = [(1.0 - eps, sol)] + [(eps / len(irregular), forced_solution(ctx, w)) for w in irregular]
    out = _mix(parts)
    for key in sol.gamma:
        out.gamma.setdefault(key, 0.0)
    out.value = lp3_objective(ctx, out)
    return out


def menu_from_solution(ctx: BayesContext, sol: BayesSolution) -> RandomizedMenu:
    """
    Menu of randomized contracts with payments p = y/ξ.

    :raises ValueError: If the solution has irregular indices.
    """
    irregular = irregular_indices(sol)
    if irregular:
        raise ValueError(f"solution has irregular indices, first {irregular[0]}")
    bi = ctx.bi
    rows = {}
    for key, xi in sol.xi.items():
        row = sol.y.get(key)
        rows[key] = np.zeros(bi.m) if row is None or xi <= ZERO_TOL else np.maximum(row / xi, 0.0)
    contracts = {}
    for theta in bi.support:
        entries = []
        for (th, profile), t in sorted(sol.t.items()):
            if th != theta or t <= ZERO_TOL:
                continue
            payments = np.array([rows.get((i, theta, a), np.zeros(bi.m)) for i, a in enumerate(profile)])
            entries.append(MenuEntry(float(t), profile, payments))
        contracts[theta] = entries
    offers = {}
    for i in range(bi.n):
        for rep in bi.report_tuples(i):
            offers[(i, rep)] = [Offer(float(sol.xi[(i, rep, a)]), a, rows[(i, rep, a)])
                                for a in ctx.actions[(i, rep[i])] if sol.xi.get((i, rep, a), 0.0) > ZERO_TOL]
    menu = RandomizedMenu(contracts, offers)
    menu.value = menu_value(ctx, menu)
    return menu


def menu_value(ctx: BayesContext, menu: RandomizedMenu) -> float:
    """
    Expected principal utility of a menu under truthful reports and obedient agents.
    """
    bi = ctx.bi
    total = 0.0
    for theta, entries in menu.contracts.items():
        for entry in entries:
            payment = sum(float(bi.agent(i, theta[i]).dists[a] @ entry.payments[i])
                          for i, a in enumerate(entry.profile))
            total += ctx.lam[theta] * entry.prob * (ctx.reward(theta, entry.profile) - payment)
    return total


@dataclass(frozen=True)
class DsicMargin:
    agent: int
    types: tuple[int, ...]
    report: int
    margin: float


@dataclass
class DsicReport:
    ok: bool
    margins: list[DsicMargin]
    tol: float

    @property
    def worst(self) -> DsicMargin | None:
        return min(self.margins, key=lambda m: m.margin, default=None)

    @property
    def message(self) -> str:
        worst = self.worst
        if worst is None:
            return "dsic: PASS (no constraints)"
        status = "PASS" if self.ok else "FAIL"
        return (f"dsic: {status}, worst margin {worst.margin:.3g} for agent {worst.agent} "
                f"of types {list(worst.types)} reporting {worst.report}")


def check_dsic(bi: BayesianInstance, menu: RandomizedMenu, tol: float = DSIC_TOL) -> DsicReport:
    """
    Truthful utility minus best misreporting utility for every agent, true tuple and report.

    Misreporting θ′ leads to the offers at (θ′, θ_{-i}); after seeing an offer the agent
    plays its best action over all of A. The report θ′ = θ_i measures obedience.

    :param bi: The Bayesian instance.
    :param menu: Menu with offers for every tuple an agent can face.
    :param tol: Margins must be >= -tol.
    :return: DsicReport listing every margin.
    """
    margins = []
    for i in range(bi.n):
        for theta in bi.support:
            agent = bi.agent(i, theta[i])
            truthful = sum(o.prob * float(agent.utilities(o.row)[o.action]) for o in menu.offers.get((i, theta), []))
            rest = bi.drop(i, theta)
            for other in range(bi.num_types):
                rep = bi.compose(i, other, rest)
                deviation = sum(o.prob * float(agent.utilities(o.row).max()) for o in menu.offers.get((i, rep), []))
                margins.append(DsicMargin(i, theta, other, truthful - deviation))
    ok = all(m.margin >= -tol for m in margins)
    return DsicReport(ok, margins, tol)


def menu_to_json(menu: RandomizedMenu, report: DsicReport | None = None) -> dict:
    data = menu.to_dict()
    if report is not None:
        worst = report.worst
        data["dsic"] = {"ok": report.ok, "tol": report.tol,
                        "worst_margin": None if worst is None else worst.margin}
    return data
