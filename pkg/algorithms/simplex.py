import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from contract.errors import NumericalError

logger = logging.getLogger(__name__)

RELATIONS = ("<=", "=", ">=")
SENSES = ("min", "max")

PIVOT_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
REFACTOR_EVERY = 50
CAREFUL_REFACTOR_EVERY = 10
DRIVE_OUT_TOL = 1e-7
REDUCED_COST_TOL = 1e-9
RESIDUAL_TOL = 1e-7
SLACKNESS_TOL = 1e-6
MAX_ITERATIONS = 50000
BLAND_AFTER = 30


@dataclass
class LinearProgram:
    """
    optimize c·x  s.t.  A_r·x (<=|=|>=) b_r for every row r,  lower <= x <= upper.

    Bounds may be infinite (lower = -inf, upper = +inf for a free variable).
    """

    c: np.ndarray
    A: np.ndarray
    relations: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        nv = len(self.c)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, nv)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.relations = tuple(self.relations)
        self.lower = np.zeros(nv) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.full(nv, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if self.sense not in SENSES:
            raise ValueError(f"Unknown objective sense: {self.sense}")
        if not (len(self.b) == len(self.relations) == self.A.shape[0]):
            raise ValueError(f"dimension mismatch: {self.A.shape[0]} rows, {len(self.b)} rhs, "
                             f"{len(self.relations)} relations")
        if len(self.lower) != nv or len(self.upper) != nv:
            raise ValueError(f"dimension mismatch: {nv} variables but bounds of length "
                             f"{len(self.lower)} / {len(self.upper)}")
        bad = set(self.relations) - set(RELATIONS)
        if bad:
            raise ValueError(f"Unknown row relations: {sorted(bad)}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf) or np.any(self.lower > self.upper):
            raise ValueError("inconsistent variable bounds")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.b)


class LPModel:
    """
    Incremental builder of a LinearProgram over hashable variable keys.
    """

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.index: dict = {}
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.cost: list[float] = []
        self.rows: list[dict[int, float]] = []
        self.relations: list[str] = []
        self.rhs: list[float] = []
        self.tags: list = []

    def var(self, key, lower: float = 0.0, upper: float = np.inf, cost: float = 0.0) -> int:
        if key in self.index:
            raise ValueError(f"duplicate LP variable {key}")
        self.index[key] = len(self.cost)
        self.lower.append(lower)
        self.upper.append(upper)
        self.cost.append(cost)
        return self.index[key]

    def add_cost(self, key, value: float) -> None:
        self.cost[self.index[key]] += value

    def add_row(self, coefficients: dict, relation: str, rhs: float, tag=None) -> int:
        row: dict[int, float] = {}
        for key, value in coefficients.items():
            j = self.index[key]
            row[j] = row.get(j, 0.0) + value
        self.rows.append(row)
        self.relations.append(relation)
        self.rhs.append(rhs)
        self.tags.append(tag)
        return len(self.rows) - 1

    def build(self) -> LinearProgram:
        A = np.zeros((len(self.rows), len(self.cost)))
        for r, row in enumerate(self.rows):
            for j, value in row.items():
                A[r, j] = value
        return LinearProgram(np.array(self.cost), A, tuple(self.relations), np.array(self.rhs),
                             np.array(self.lower), np.array(self.upper), self.sense)

    def values(self, x: np.ndarray) -> dict:
        return {key: float(x[j]) for key, j in self.index.items()}


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    """
    Outcome of solve_lp.

    OPTIMAL carries value, x and duals (∂ value / ∂ b_r per row); INFEASIBLE a Farkas
    certificate (row multipliers, see farkas_violation); UNBOUNDED a ray d with
    A d consistent with the relations, d inside the recession cone of the bounds
    and c·d improving.
    """

    status: LPStatus
    value: float | None = None
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    certificate: np.ndarray | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def lp_residuals(lp: LinearProgram, x) -> float:
    """
    Largest violation of a row or bound by x (0 when x is feasible).
    """
    x = np.asarray(x, dtype=float)
    lhs = lp.A @ x
    worst = 0.0
    for r, relation in enumerate(lp.relations):
        if relation == "<=":
            worst = max(worst, lhs[r] - lp.b[r])
        elif relation == ">=":
            worst = max(worst, lp.b[r] - lhs[r])
        else:
            worst = max(worst, abs(lhs[r] - lp.b[r]))
    if len(x):
        worst = max(worst, float(np.max(lp.lower - x)), float(np.max(x - lp.upper)))
    return float(worst)


def farkas_violation(lp: LinearProgram, certificate) -> float:
    """
    How strongly a row-multiplier vector v proves infeasibility.

    v must be <= 0 on <= rows and >= 0 on >= rows, so that every feasible x satisfies
    (Σ v_r A_r)·x >= Σ v_r b_r. The returned gap Σ v_r b_r - max_{lower<=x<=upper} (Σ v_r A_r)·x
    is positive iff the certificate is valid (the maximum may be +inf, giving -inf).
    """
    v = np.asarray(certificate, dtype=float)
    for r, relation in enumerate(lp.relations):
        if (relation == "<=" and v[r] > 1e-12) or (relation == ">=" and v[r] < -1e-12):
            return -np.inf
    g = v @ lp.A
    # Coefficients at numerical noise level contribute nothing
    g[np.abs(g) <= 1e-10 * (1 + np.abs(v).sum())] = 0.0
    with np.errstate(invalid="ignore"):
        best = np.where(g > 0, g * lp.upper, np.where(g < 0, g * lp.lower, 0.0))
    total = float(best.sum())
    if np.isnan(total):
        return -np.inf
    return float(v @ lp.b) - total


class _StandardForm:
    """
    min cost·z  s.t.  M z = rhs,  z >= 0, with the original x = offset + T z.

    Columns are [structural z | slack/surplus | artificial]; rows are the original rows
    followed by one row per finite upper bound of a lower-bounded variable, each flipped
    so that rhs >= 0.
    """

    def __init__(self, lp: LinearProgram):
        nv = lp.num_vars
        offset = np.zeros(nv)
        columns = []
        bound_rows = []
        for j in range(nv):
            lo, hi = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                offset[j] = lo
                columns.append((j, 1.0))
                if np.isfinite(hi):
                    bound_rows.append((len(columns) - 1, hi - lo))
            elif np.isfinite(hi):
                offset[j] = hi
                columns.append((j, -1.0))
            else:
                columns.append((j, 1.0))
                columns.append((j, -1.0))
        nz = len(columns)
        T = np.zeros((nv, nz))
        for k, (j, sign) in enumerate(columns):
            T[j, k] = sign
        A = lp.A @ T
        b = lp.b - lp.A @ offset
        relations = list(lp.relations)
        if bound_rows:
            extra = np.zeros((len(bound_rows), nz))
            for r, (k, width) in enumerate(bound_rows):
                extra[r, k] = 1.0
            A = np.vstack([A, extra])
            b = np.concatenate([b, [width for _, width in bound_rows]])
            relations += ["<="] * len(bound_rows)
        rows = len(b)
        inequality = [r for r in range(rows) if relations[r] != "="]
        slack = np.zeros((rows, len(inequality)))
        for k, r in enumerate(inequality):
            slack[r, k] = 1.0 if relations[r] == "<=" else -1.0
        M = np.hstack([A, slack])
        flip = np.where(b < 0, -1.0, 1.0)
        M = M * flip[:, None]
        self.matrix = np.hstack([M, np.eye(rows)])
        self.rhs = b * flip
        self.flip = flip
        self.T = T
        self.offset = offset
        self.nz = nz
        self.rows = rows
        self.num_original = lp.num_rows
        self.artificial = np.arange(M.shape[1], M.shape[1] + rows)
        sign = 1.0 if lp.sense == "min" else -1.0
        self.sign = sign
        self.cost = np.zeros(self.matrix.shape[1])
        self.cost[:nz] = sign * (lp.c @ T)


class _Tableau:
    def __init__(self, form: _StandardForm, bland: bool = False, refactor_every: int = REFACTOR_EVERY):
        self.form = form
        self.refactor_every = refactor_every
        self.T = form.matrix.copy()
        self.rhs = form.rhs.copy()
        self.basis = list(form.artificial)
        self.iterations = 0
        self.bland = bland
        self.degenerate = 0
        self.refactorizations = 0

    def pivot(self, r: int, j: int) -> None:
        piv = self.T[r, j]
        self.T[r] /= piv
        self.rhs[r] /= piv
        col = self.T[:, j].copy()
        col[r] = 0.0
        self.T -= np.outer(col, self.T[r])
        self.rhs -= col * self.rhs[r]
        self.rhs[(self.rhs < 0) & (self.rhs > -FEASIBILITY_TOL)] = 0.0
        self.basis[r] = j

    def refactor(self) -> None:
        """
        Rebuild T = B⁻¹M and rhs = B⁻¹b from the original rows and the current basis.
        """
        form = self.form
        B = form.matrix[:, self.basis]
        try:
            solved = np.linalg.solve(B, np.column_stack([form.matrix, form.rhs]))
        except np.linalg.LinAlgError:
            logger.warning(f"[simplex] singular basis after {self.iterations} pivots, keeping the updated tableau")
            return
        if not np.all(np.isfinite(solved)):
            logger.warning(f"[simplex] ill-conditioned basis after {self.iterations} pivots, keeping the updated tableau")
            return
        self.T = solved[:, :-1]
        self.T[:, self.basis] = np.eye(len(self.basis))
        self.rhs = solved[:, -1]
        drift = float(-self.rhs.min(initial=0.0))
        if drift > FEASIBILITY_TOL:
            logger.debug(f"[simplex] refactorization found basic values down to {-drift:.3g}")
        self.rhs[self.rhs < 0] = 0.0
        self.refactorizations += 1

    def leaving_row(self, col: np.ndarray) -> int | None:
        """
        Ratio test for an entering column, or None when the column has no usable pivot.

        Pivot candidates must exceed PIVOT_TOL relative to the column's largest entry, and
        basic values are read as max(rhs, 0). Under Bland's rule the exact minimum ratio
        wins (ties to the smallest basic index); otherwise Harris' two passes pick the
        largest pivot among the rows whose ratio stays within the relaxed bound.
        """
        threshold = PIVOT_TOL * max(1.0, float(np.abs(col).max(initial=0.0)))
        rows = np.flatnonzero(col > threshold)
        if len(rows) == 0:
            return None
        rhs = np.maximum(self.rhs[rows], 0.0)
        ratios = rhs / col[rows]
        if self.bland:
            best = ratios.min()
            ties = rows[ratios <= best + FEASIBILITY_TOL * max(1.0, best)]
            return int(min(ties, key=lambda t: self.basis[t]))
        bound = float(((rhs + FEASIBILITY_TOL) / col[rows]).min())
        eligible = rows[ratios <= bound]
        return int(eligible[np.argmax(col[eligible])])

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iterations: int, phase: int):
        """
        Primal simplex from the current feasible basis.

        :return: None at optimality, else the entering column proving unboundedness.
        """
        while True:
            if self.iterations >= max_iterations:
                raise NumericalError(f"simplex iteration budget {max_iterations} exhausted in phase {phase}")
            if self.iterations and self.iterations % self.refactor_every == 0:
                self.refactor()
            reduced = cost - cost[self.basis] @ self.T
            candidates = np.flatnonzero(allowed & (reduced < -REDUCED_COST_TOL))
            if len(candidates) == 0:
                return None
            if self.bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmin(reduced[candidates])])
            col = self.T[:, j]
            r = self.leaving_row(col)
            if r is None:
                return j
            step = max(self.rhs[r], 0.0) / col[r]
            if step <= FEASIBILITY_TOL:
                self.degenerate += 1
                if self.degenerate > BLAND_AFTER and not self.bland:
                    logger.warning(f"[simplex] {self.degenerate} degenerate pivots in a row, "
                                   f"switching to Bland's rule")
                    self.bland = True
            else:
                self.degenerate = 0
            self.pivot(r, j)
            self.iterations += 1


def _solve_basis(form: _StandardForm, basis: list[int], cost: np.ndarray, tab: _Tableau):
    # Recompute the basic solution and row prices from the original data.
    if not basis:
        return np.zeros(0), np.zeros(0)
    B = form.matrix[:, basis]
    try:
        z_basic = np.linalg.solve(B, form.rhs)
        prices = np.linalg.solve(B.T, cost[basis])
    except np.linalg.LinAlgError:
        z_basic = tab.rhs.copy()
        prices = cost[basis] @ tab.T[:, form.artificial]
    z_basic[(z_basic < 0) & (z_basic > -1e-9)] = 0.0
    return z_basic, prices


def _simplex(lp: LinearProgram, max_iterations: int, careful: bool = False) -> LPResult:
    form = _StandardForm(lp)
    tab = _Tableau(form, bland=careful, refactor_every=CAREFUL_REFACTOR_EVERY if careful else REFACTOR_EVERY)
    width = form.matrix.shape[1]
    art = np.zeros(width, dtype=bool)
    art[form.artificial] = True

    phase1 = art.astype(float)
    tab.run(phase1, np.ones(width, dtype=bool), max_iterations, 1)
    infeasibility = float(phase1[tab.basis] @ tab.rhs)
    logger.debug(f"[simplex] phase 1 finished after {tab.iterations} pivots, infeasibility {infeasibility:.3g}")
    scale = 1.0 + float(np.abs(form.rhs).max(initial=0.0))
    if infeasibility > 1e-9 * scale:
        prices = phase1[tab.basis] @ tab.T[:, form.artificial]
        certificate = (prices * form.flip)[:form.num_original]
        return LPResult(LPStatus.INFEASIBLE, certificate=certificate, iterations=tab.iterations)

    # Drive artificial variables out of the basis; rows where that is impossible are redundant
    redundant = []
    for r in range(form.rows):
        if not art[tab.basis[r]]:
            continue
        row = np.abs(tab.T[r]) * ~art
        j = int(np.argmax(row))
        if row[j] > DRIVE_OUT_TOL:
            tab.pivot(r, j)
        else:
            redundant.append(r)
    if redundant:
        logger.debug(f"[simplex] {len(redundant)} redundant rows")
    tab.refactor()

    tab.degenerate = 0
    entering = tab.run(form.cost, ~art, max_iterations, 2)
    logger.debug(f"[simplex] phase 2 finished after {tab.iterations} pivots, {tab.refactorizations} refactorizations")
    if entering is not None:
        direction = np.zeros(width)
        direction[entering] = 1.0
        for r, j in enumerate(tab.basis):
            direction[j] -= tab.T[r, entering]
        ray = form.T @ direction[:form.nz]
        return LPResult(LPStatus.UNBOUNDED, ray=ray, iterations=tab.iterations)

    z_basic, prices = _solve_basis(form, tab.basis, form.cost, tab)
    z = np.zeros(width)
    z[tab.basis] = z_basic
    x = form.offset + form.T @ z[:form.nz]
    duals = form.sign * (prices * form.flip)[:form.num_original]
    return LPResult(LPStatus.OPTIMAL, value=float(lp.c @ x), x=x, duals=duals, iterations=tab.iterations,
                    stats={"refactorizations": tab.refactorizations, "careful": careful})


def _highs(lp: LinearProgram) -> LPResult:
    from scipy.optimize import linprog

    upper = [r for r, rel in enumerate(lp.relations) if rel != "="]
    equal = [r for r, rel in enumerate(lp.relations) if rel == "="]
    flip = np.array([1.0 if lp.relations[r] == "<=" else -1.0 for r in upper])
    sign = 1.0 if lp.sense == "min" else -1.0
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(
        sign * lp.c,
        A_ub=lp.A[upper] * flip[:, None] if upper else None,
        b_ub=lp.b[upper] * flip if upper else None,
        A_eq=lp.A[equal] if equal else None,
        b_eq=lp.b[equal] if equal else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return LPResult(LPStatus.INFEASIBLE)
    if res.status == 3:
        return LPResult(LPStatus.UNBOUNDED)
    if res.status != 0:
        raise NumericalError(f"HiGHS failed: {res.message}")
    duals = np.zeros(lp.num_rows)
    if upper:
        duals[upper] = sign * flip * res.ineqlin.marginals
    if equal:
        duals[equal] = sign * res.eqlin.marginals
    x = np.asarray(res.x, dtype=float)
    return LPResult(LPStatus.OPTIMAL, value=float(lp.c @ x), x=x, duals=duals, iterations=int(res.nit))


def _post_check(lp: LinearProgram, result: LPResult) -> LPResult:
    if result.optimal:
        scale = 1.0 + float(np.abs(lp.b).max(initial=0.0))
        residual = lp_residuals(lp, result.x)
        if residual > RESIDUAL_TOL * scale:
            raise NumericalError(f"LP primal residual {residual:.3g} exceeds tolerance")
        slack = lp.b - lp.A @ result.x
        gap = float(np.max(np.abs(result.duals * slack), initial=0.0))
        if gap > SLACKNESS_TOL * (1.0 + abs(result.value)) * scale:
            raise NumericalError(f"LP complementary slackness gap {gap:.3g} exceeds tolerance")
    return result


def solve_lp(lp: LinearProgram, backend: str = "simplex", max_iterations: int = MAX_ITERATIONS) -> LPResult:
    """
    Solve a linear program.

    The default backend is a two-phase dense-tableau simplex with Dantzig pricing that
    falls back to Bland's rule after a run of degenerate pivots. The ratio test is
    Harris' two-pass test with a relative pivot tolerance, and the tableau is rebuilt
    from the basis every REFACTOR_EVERY pivots. Optimal answers are post-checked: primal
    residual <= 1e-7 and |dual_r · slack_r| <= 1e-6·(1 + |value|).

    :param lp: The LinearProgram.
    :param backend: simplex (in-house) or highs (scipy.optimize.linprog, certificates not provided).
    :param max_iterations: Pivot budget over both phases.
    :return: LPResult
    :raises NumericalError: On exhausted budgets or failed post-checks.
    """
    if backend == "simplex":
        try:
            result = _post_check(lp, _simplex(lp, max_iterations))
        except NumericalError as e:
            logger.warning(f"[simplex] {e}, retrying with Bland's rule and frequent refactorization")
            result = _post_check(lp, _simplex(lp, max_iterations, careful=True))
    elif backend == "highs":
        result = _post_check(lp, _highs(lp))
    else:
        raise ValueError(f"Unknown LP backend: {backend}")
    logger.debug(f"[simplex] {backend}: {result.status.value} after {result.iterations} iterations "
                 f"({lp.num_rows} rows, {lp.num_vars} variables)")
    return result
