"""
Approximately optimal menus of randomized contracts for Bayesian instances.

The relaxed LP has one t variable per (θ, profile), exponentially many. Its dual F
has one constraint per t variable, Σ_i y_{i,θ,a_i} >= λ_θ R_{θ,a}, which is separated
approximately by a non-Bayesian contract solver with weights w = min(y, 2). A binary
search over the dual objective η collects the separating profiles ℋ; the relaxed LP
restricted to ℋ is then solved, completed to the equality LP, regularized and turned
into a menu.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from algorithms.bayes_lp import (BayesContext, DsicReport, build_lp, check_dsic, menu_from_solution,
                                 regularize, relaxed_to_equality, solve_bayes_lp)
from algorithms.ellipsoid import Cut, ellipsoid_feasibility
from algorithms.matroid import brute_force_optimal, build_weighted_problem
from algorithms.payments import payment_bound
from algorithms.submod import DrOptions, solve_dr_problem, verify_dr
from algorithms.supermod import solve_ir_fosd, verify_ir_fosd
from contract.bayesian import BayesianInstance, RandomizedMenu
from contract.errors import IndeterminateError, NumericalError, SolverRefusal
from contract.utils import EvalOptions, child_seed, has_null_outcome_structure

logger = logging.getLogger(__name__)

ORACLE_KINDS = ("ir_fosd", "dr_approx", "exact")
DUAL_METHODS = ("cutting_plane", "ellipsoid")
WEIGHT_CLIP = 2.0
CUT_TOL = 1e-9
EXPLICIT_TOL = 1e-6


@dataclass(frozen=True)
class BayesOptions:
    """
    Options of bayes_solve.

    :param rho: Additive error target ρ > 0.
    :param oracle_kind: ir_fosd (exact, α = 1), dr_approx (α = 1 - 1/e) or exact (enumeration).
    :param seed: Seed of the randomized oracle.
    :param dual_method: cutting_plane (restricted primal duals) or ellipsoid.
    :param trust_tags: Skip the sampled reward-property checks of every type instance.
    :param max_rounds: Cutting-plane rounds per binary-search step.
    :param ellipsoid_max_iters: Optional iteration cap of the ellipsoid method.
    :param failure_prob: Failure probability of a whole run with the dr_approx oracle
                         (default 1/(n·ℓ·|supp|)).
    :param eval_options: Reward evaluation options.
    """

    rho: float = 0.05
    oracle_kind: str = "ir_fosd"
    seed: int = 0
    dual_method: str = "cutting_plane"
    trust_tags: bool = False
    max_rounds: int = 500
    ellipsoid_max_iters: int | None = None
    failure_prob: float | None = None
    eval_options: EvalOptions = EvalOptions()


class DualLayout:
    """
    Variable layout of the dual of the relaxed LP without its t columns.

    One dual variable u_r per LP row (x, y, z, d blocks in build order). For the max LP
    the explicit constraints are: u_r >= 0 on <= rows, u_r <= 0 on >= rows, A_jᵀu >= c_j
    for every non-t column j and bᵀu <= η; each t column adds Σ_i u_{y(i,θ,a_i)} >= λ_θ R_{θ,a}.
    """

    def __init__(self, ctx: BayesContext):
        self.ctx = ctx
        model = build_lp(ctx, pool={}, relaxed=True)
        lp = model.build()
        self.tags = list(model.tags)
        self.relations = lp.relations
        self.b = lp.b
        self.keys = list(model.index)
        self.A = lp.A
        self.c = lp.c
        self.y_rows = {tag[1:]: r for r, tag in enumerate(self.tags) if tag[0] == "y"}

    @property
    def dim(self) -> int:
        return len(self.b)

    def explicit_cut(self, u: np.ndarray, eta: float, tol: float) -> Cut | None:
        """
        The most violated explicit constraint at u, or None.
        """
        cuts = []
        margin = float(self.b @ u - eta)
        if margin > tol:
            cuts.append(Cut(self.b.copy(), eta, margin, ("objective",)))
        for r, relation in enumerate(self.relations):
            if relation == "<=" and -u[r] > tol:
                normal = np.zeros(self.dim)
                normal[r] = -1.0
                cuts.append(Cut(normal, 0.0, float(-u[r]), ("sign", self.tags[r])))
            elif relation == ">=" and u[r] > tol:
                normal = np.zeros(self.dim)
                normal[r] = 1.0
                cuts.append(Cut(normal, 0.0, float(u[r]), ("sign", self.tags[r])))
        gaps = self.c - self.A.T @ u
        j = int(np.argmax(gaps)) if len(gaps) else -1
        if j >= 0 and gaps[j] > tol:
            cuts.append(Cut(-self.A[:, j], -float(self.c[j]), float(gaps[j]), ("column", self.keys[j])))
        return max(cuts, key=lambda cut: cut.margin, default=None)

    def profile_cut(self, theta, profile, u: np.ndarray) -> Cut:
        normal = np.zeros(self.dim)
        for i, a in enumerate(profile):
            normal[self.y_rows[(i, theta, a)]] = -1.0
        rhs = -self.ctx.lam[theta] * self.ctx.reward(theta, profile)
        return Cut(normal, rhs, float(normal @ u - rhs), ("t", theta, tuple(profile)))


def approx_oracle(ctx: BayesContext, theta, weights: dict, eps: float, kind: str = "ir_fosd",
                  seed: int = 0, rounding_draws: int = 64) -> tuple[int, ...]:
    """
    Approximately maximize λ_θ R_{θ,a} - Σ_i w_{i,a_i} over profiles of A_{1,θ_1} × ... × A_{n,θ_n}.

    :param ctx: The Bayesian context.
    :param theta: Support tuple.
    :param weights: w_{i,a} for every inducible (i, a) of θ.
    :param eps: Additive error of the dr_approx oracle.
    :param kind: ir_fosd, dr_approx or exact.
    :param seed: Seed of the dr_approx oracle.
    :param rounding_draws: Roundings of the dr_approx oracle.
    :return: The profile found.
    """
    if kind not in ORACLE_KINDS:
        raise ValueError(f"Unknown oracle kind: {kind}")
    theta = tuple(theta)
    inst = ctx.bi.type_instance(theta)
    parts = [ctx.actions[(i, t)] for i, t in enumerate(theta)]
    scale = ctx.lam[theta]
    pp = build_weighted_problem(inst, parts, weights, scale, ctx.eval_options)
    if kind == "ir_fosd":
        return solve_ir_fosd(pp).profile
    if kind == "dr_approx":
        options = DrOptions(eps=eps, seed=seed, trust_tags=True, enum_cap=ctx.eval_options.enum_cap,
                            rounding_draws=rounding_draws)
        return solve_dr_problem(inst, pp, options, reward_scale=scale).profile
    return brute_force_optimal(pp).profile


class _Separator:
    """
    separation_for_F bound to a context, an oracle configuration and a call counter for seeds.
    """

    def __init__(self, ctx: BayesContext, layout: DualLayout, options: BayesOptions, eps: float):
        self.ctx = ctx
        self.layout = layout
        self.options = options
        self.eps = eps
        self.calls = 0
        self.rounding_draws = _rounding_draws(ctx, options)

    def oracle(self, theta, weights) -> tuple[int, ...]:
        seed = child_seed(self.options.seed, self.calls)
        self.calls += 1
        return approx_oracle(self.ctx, theta, weights, self.eps, self.options.oracle_kind, seed,
                             self.rounding_draws)

    def profile_cuts(self, u: np.ndarray, first_only: bool = False) -> list[Cut]:
        cuts = []
        for theta in self.ctx.bi.support:
            weights = {(i, a): min(float(u[self.layout.y_rows[(i, theta, a)]]), WEIGHT_CLIP)
                       for i, t in enumerate(theta) for a in self.ctx.actions[(i, t)]}
            profile = self.oracle(theta, weights)
            cut = self.layout.profile_cut(theta, profile, u)
            if cut.margin > CUT_TOL:
                cuts.append(cut)
                if first_only:
                    break
        return cuts


def _rounding_draws(ctx: BayesContext, options: BayesOptions) -> int:
    # Spread the run's failure probability over every oracle call a run may make
    bi = ctx.bi
    ell = max(agent.num_actions for types in bi.per_type for agent in types)
    failure = options.failure_prob or 1.0 / (bi.n * ell * len(bi.support))
    calls = options.max_rounds * len(bi.support) * max(1, math.ceil(math.log2(4.0 / options.rho)))
    return max(64, math.ceil(8 * math.log(calls / failure)))


def separation_for_F(ctx: BayesContext, layout: DualLayout, u, eta: float, oracle,
                     tol: float = CUT_TOL) -> Cut | None:
    """
    Approximate separation over the η-capped dual.

    Explicit constraints are checked first (objective cut, signs, non-t columns); then, for
    every support tuple θ, the oracle is called with w_{i,a} = min(u_{y(i,θ,a)}, 2) and the
    returned profile's constraint is reported when violated. A clipped weight on the
    returned profile means Σ_i u_{y(i,θ,a_i)} >= 2 > λ_θ R_{θ,a}, so no cut is lost.

    :param ctx: The Bayesian context.
    :param layout: Dual variable layout.
    :param u: Query point.
    :param eta: Objective cap.
    :param oracle: Callable (θ, weights) -> profile.
    :param tol: Violation tolerance.
    :return: None (approximately feasible) or a violated Cut tagged by its constraint.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (layout.dim,):
        raise ValueError(f"dual point has shape {u.shape}, expected ({layout.dim},)")
    cut = layout.explicit_cut(u, eta, tol)
    if cut is not None:
        return cut
    for theta in ctx.bi.support:
        weights = {(i, a): min(float(u[layout.y_rows[(i, theta, a)]]), WEIGHT_CLIP)
                   for i, t in enumerate(theta) for a in ctx.actions[(i, t)]}
        cut = layout.profile_cut(theta, oracle(theta, weights), u)
        if cut.margin > tol:
            return cut
    return None


@dataclass
class BayesResult:
    menu: RandomizedMenu
    value: float
    dsic: DsicReport
    diagnostics: dict = field(default_factory=dict)


def verify_bayes(bi: BayesianInstance, options: BayesOptions) -> None:
    """
    Check the oracle's preconditions on every support type instance.

    :raises SolverRefusal: On the first failing type tuple.
    """
    for theta in bi.support:
        inst = bi.type_instance(theta)
        try:
            if options.oracle_kind == "ir_fosd" and not options.trust_tags:
                verify_ir_fosd(inst, options.seed)
            elif options.oracle_kind == "dr_approx":
                if not has_null_outcome_structure(inst):
                    raise SolverRefusal("the DR oracle needs a zero outcome that exactly the null actions produce")
                if not options.trust_tags:
                    verify_dr(inst, options.seed)
        except SolverRefusal as e:
            raise SolverRefusal(f"type tuple {list(theta)}: {e}", witness=e.witness) from e


class _DualSearch:
    """
    Feasibility of the η-capped dual, with the profile pool shared across calls.
    """

    def __init__(self, ctx: BayesContext, options: BayesOptions, beta: float, eps: float):
        self.ctx = ctx
        self.options = options
        self.beta = beta
        self.layout = DualLayout(ctx)
        self.separator = _Separator(ctx, self.layout, options, eps)
        self.pool = {theta: {ctx.null_profile(theta)} for theta in ctx.bi.support}
        self.steps = 0

    def _add(self, cuts: list[Cut]) -> int:
        added = 0
        for cut in cuts:
            if cut.tag and cut.tag[0] == "t":
                _, theta, profile = cut.tag
                if profile not in self.pool[theta]:
                    self.pool[theta].add(profile)
                    added += 1
        return added

    def feasible(self, eta: float) -> bool:
        self.steps += 1
        if self.options.dual_method == "cutting_plane":
            return self._cutting_plane(eta)
        if self.options.dual_method == "ellipsoid":
            return self._ellipsoid(eta)
        raise ValueError(f"Unknown dual method: {self.options.dual_method}")

    def _cutting_plane(self, eta: float) -> bool:
        for rounds in range(self.options.max_rounds):
            _, result, _ = solve_bayes_lp(self.ctx, self.pool, relaxed=True)
            if result.value > eta + CUT_TOL:
                logger.debug(f"[bayes] eta {eta:.6f}: restricted optimum {result.value:.6f} > eta, empty")
                return False
            u = result.duals
            explicit = self.layout.explicit_cut(u, eta, EXPLICIT_TOL)
            if explicit is not None:
                raise NumericalError(f"restricted dual violates {explicit.tag[0]} constraint "
                                     f"by {explicit.margin:.3g}")
            cuts = self.separator.profile_cuts(u)
            if not self._add(cuts):
                logger.debug(f"[bayes] eta {eta:.6f}: feasible after {rounds + 1} rounds")
                return True
        raise IndeterminateError(f"cutting planes did not settle within {self.options.max_rounds} rounds",
                                 best=self.pool)

    def _ellipsoid(self, eta: float) -> bool:
        ctx = self.ctx
        ell = max(agent.num_actions for types in ctx.bi.per_type for agent in types)
        tau = payment_bound(ctx.bi, ctx.table)
        radius = 1.0 + len(ctx.bi.support) * ctx.n * ell * (2.0 + tau)

        def oracle(u):
            return separation_for_F(ctx, self.layout, u, eta, self.separator.oracle)

        result = ellipsoid_feasibility(self.layout.dim, radius, oracle, self.options.ellipsoid_max_iters,
                                       tol=self.beta / 4)
        self._add(result.history)
        logger.debug(f"[bayes] eta {eta:.6f}: ellipsoid {'feasible' if result.feasible else 'empty'} "
                     f"after {result.iterations} iterations")
        return result.feasible


def bayes_solve(bi: BayesianInstance, options: BayesOptions = BayesOptions()) -> BayesResult:
    """
    Menu of randomized contracts within ρ of α·R_Γ - P_Γ for every DSIC menu Γ.

    β = ρ/4 and the oracle error is ρ/(4|supp|). Binary search on η in [0, 1] (the upper
    end doubles while infeasible, for unbounded rewards) until h - l <= β; the profile
    pool then spans a restricted relaxed LP whose value is at least l. Its solution is
    completed to the equality LP, regularized with ε = ρ/(2(nτ + 1)) and read off as a menu.

    :param bi: The Bayesian instance.
    :param options: BayesOptions.
    :return: BayesResult with the menu, its value and its DSIC report.
    :raises SolverRefusal: When a type instance fails the oracle's preconditions.
    :raises IndeterminateError: When the dual search exhausts its budget.
    """
    if options.rho <= 0:
        raise ValueError(f"rho must be positive, got {options.rho}")
    if options.oracle_kind not in ORACLE_KINDS:
        raise ValueError(f"Unknown oracle kind: {options.oracle_kind}")
    if options.dual_method not in DUAL_METHODS:
        raise ValueError(f"Unknown dual method: {options.dual_method}")
    verify_bayes(bi, options)
    ctx = BayesContext(bi, options.eval_options)
    beta = options.rho / 4
    eps = options.rho / (4 * len(bi.support))
    search = _DualSearch(ctx, options, beta, eps)

    low, high = 0.0, 1.0
    for _ in range(64):
        if search.feasible(high):
            break
        low, high = high, 2 * high
    else:
        raise IndeterminateError("no feasible dual objective found", best=search.pool)
    while high - low > beta:
        eta = (low + high) / 2
        if search.feasible(eta):
            high = eta
        else:
            low = eta
        logger.debug(f"[bayes] eta in [{low:.6f}, {high:.6f}], pool of {sum(map(len, search.pool.values()))}")

    relaxed, _, _ = solve_bayes_lp(ctx, search.pool, relaxed=True)
    completed = relaxed_to_equality(ctx, relaxed)
    tau = payment_bound(bi, ctx.table)
    eps_reg = options.rho / (2 * (bi.n * tau + 1))
    regular = regularize(ctx, completed, eps_reg)
    menu = menu_from_solution(ctx, regular)
    report = check_dsic(bi, menu)
    if not report.ok:
        logger.warning(f"[bayes] {report.message}")
    diagnostics = {
        "eta_low": low, "eta_high": high, "restricted_value": relaxed.value,
        "pool_size": sum(map(len, search.pool.values())), "search_steps": search.steps,
        "oracle_calls": search.separator.calls, "tau": tau, "eps_regularize": eps_reg,
    }
    menu.diagnostics.update(diagnostics)
    logger.info(f"[bayes] menu value {menu.value:.6g} (restricted LP {relaxed.value:.6g}, "
                f"eta in [{low:.4f}, {high:.4f}], {search.separator.calls} oracle calls)")
    return BayesResult(menu, menu.value, report, diagnostics)
