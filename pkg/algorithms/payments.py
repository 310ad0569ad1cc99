import logging
from dataclasses import dataclass

import numpy as np

from algorithms.simplex import LinearProgram, LPStatus, solve_lp
from contract.bayesian import BayesianInstance
from contract.core import AgentSpec, Instance

logger = logging.getLogger(__name__)

IC_TIE_TOL = 1e-9
IC_SLACK_TOL = 1e-7


@dataclass(frozen=True)
class PaymentSolution:
    agent: int
    action: int
    min_expected_payment: float
    payment_row: np.ndarray
    type: int | None = None


@dataclass(frozen=True)
class NotInducible:
    agent: int
    action: int
    type: int | None = None
    certificate: np.ndarray | None = None


def ic_actions(inst, i: int, payment_row, theta: int | None = None, tol: float = IC_TIE_TOL) -> set[int]:
    """
    A*_i(p): the actions maximizing agent i's expected payment minus cost.

    :param inst: Instance, or BayesianInstance together with theta.
    :param i: Agent index.
    :param payment_row: Nonnegative vector of length m.
    :param theta: Agent i's type (Bayesian instances only).
    :param tol: Actions within tol of the best utility count as ties.
    :return: The set of IC action indices (never empty).
    """
    agent = _agent(inst, i, theta)
    row = np.asarray(payment_row, dtype=float)
    if row.shape != (agent.dists.shape[1],):
        raise ValueError(f"dimension mismatch: payment row of shape {row.shape}, m = {agent.dists.shape[1]}")
    if np.any(row < 0):
        raise ValueError("payments must be non-negative")
    utilities = agent.utilities(row)
    return {int(a) for a in np.flatnonzero(utilities >= utilities.max() - tol)}


def _agent(inst, i: int, theta: int | None) -> AgentSpec:
    if isinstance(inst, BayesianInstance):
        if theta is None:
            raise ValueError("a type is required for Bayesian instances")
        return inst.agent(i, theta)
    if isinstance(inst, AgentSpec):
        return inst
    return inst.agents[i]


def _ic_rows(agent: AgentSpec, a: int):
    others = [b for b in range(agent.num_actions) if b != a]
    A = agent.dists[a] - agent.dists[others]
    rhs = agent.costs[a] - agent.costs[others]
    return A, rhs


def min_payment(inst, i: int, a: int, theta: int | None = None) -> PaymentSolution | NotInducible:
    """
    Minimum expected payment P̂_{i,a} that makes action a IC for agent i.

    Solves min F_a·p s.t. (F_a - F_a')·p >= c_a - c_a' for every a' != a, p >= 0.
    Among optimal rows, a second LP picks one with the smallest total payment.

    :param inst: Instance, or BayesianInstance together with theta.
    :param i: Agent index.
    :param a: Action index.
    :param theta: Agent i's type (Bayesian instances only).
    :return: PaymentSolution, or NotInducible carrying the Farkas certificate.
    :raises NumericalError: Propagated from the LP solver.
    """
    agent = _agent(inst, i, theta)
    if not 0 <= a < agent.num_actions:
        raise IndexError(f"invalid action index {a} for agent {i}")
    m = agent.dists.shape[1]
    A, rhs = _ic_rows(agent, a)
    lp = LinearProgram(agent.dists[a], A, (">=",) * len(rhs), rhs)
    result = solve_lp(lp)
    if result.status is LPStatus.INFEASIBLE:
        logger.debug(f"[payments] action {a} of agent {i} (type {theta}) is not inducible")
        return NotInducible(i, a, theta, result.certificate)
    best = result.value
    tight = LinearProgram(np.ones(m), np.vstack([A, agent.dists[a]]), (">=",) * len(rhs) + ("<=",),
                          np.concatenate([rhs, [best + 1e-10 * (1 + abs(best))]]))
    second = solve_lp(tight)
    row = second.x if second.optimal else result.x
    row = np.maximum(row, 0.0)
    row.flags.writeable = False
    value = float(agent.dists[a] @ row)
    return PaymentSolution(i, a, value, row, theta)


def payment_table(inst) -> dict:
    """
    All min_payment results: keys (i, a) for an Instance, (i, θ, a) for a BayesianInstance.
    """
    table = {}
    if isinstance(inst, BayesianInstance):
        for i in range(inst.n):
            for theta in range(inst.num_types):
                for a in range(inst.agent(i, theta).num_actions):
                    table[(i, theta, a)] = min_payment(inst, i, a, theta)
    else:
        for i, agent in enumerate(inst.agents):
            for a in range(agent.num_actions):
                table[(i, a)] = min_payment(inst, i, a)
    return table


def inducible_actions(inst, i: int, theta: int | None = None, table: dict | None = None) -> list[int]:
    """
    A_i (or A_{i,θ}): the actions of agent i that some contract makes IC, in index order.
    """
    agent = _agent(inst, i, theta)
    actions = []
    for a in range(agent.num_actions):
        key = (i, a) if theta is None else (i, theta, a)
        sol = table[key] if table is not None else min_payment(inst, i, a, theta)
        if isinstance(sol, PaymentSolution):
            actions.append(a)
    return actions


def payment_bound(inst, table: dict | None = None) -> float:
    """
    τ: twice the largest coordinate of the attaining payment rows over all inducible triples.

    Every inducible (i, θ, a) then has an IC row with all entries <= τ.

    bayes_solve sizes two things from τ: the radius 1 + |supp|·n·ℓ·(2 + τ) of the
    ellipsoid's starting ball over the dual, and the regularization weight
    ε = ρ/(2(nτ + 1)). A looser τ keeps both valid but slows the ellipsoid and
    shrinks ε.
    """
    table = payment_table(inst) if table is None else table
    largest = 0.0
    for sol in table.values():
        if isinstance(sol, PaymentSolution) and len(sol.payment_row):
            largest = max(largest, float(sol.payment_row.max()))
    return 2.0 * largest


def table_to_dict(table: dict) -> list[dict]:
    """
    JSON-ready form of a payment table (used by the P̂ cache and `solve --min-payments`).
    """
    records = []
    for key, sol in sorted(table.items()):
        record = {"key": list(key), "inducible": isinstance(sol, PaymentSolution)}
        if isinstance(sol, PaymentSolution):
            record["min_expected_payment"] = sol.min_expected_payment
            record["payment_row"] = [float(x) for x in sol.payment_row]
        records.append(record)
    return records


def table_from_dict(records: list[dict]) -> dict:
    table = {}
    for record in records:
        key = tuple(record["key"])
        i, a = key[0], key[-1]
        theta = key[1] if len(key) == 3 else None
        if record["inducible"]:
            row = np.array(record["payment_row"], dtype=float)
            row.flags.writeable = False
            table[key] = PaymentSolution(i, a, float(record["min_expected_payment"]), row, theta)
        else:
            table[key] = NotInducible(i, a, theta)
    return table
