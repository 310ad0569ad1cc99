import logging
from dataclasses import dataclass, field

import numpy as np

from algorithms.simplex import LPModel, LPStatus, solve_lp
from contract.core import AgentSpec, Instance
from contract.errors import CapExceededError
from contract.utils import canonical_order

logger = logging.getLogger(__name__)

FOSD_TOL = 1e-9
BRUTE_FORCE_MAX_OUTCOMES = 12


@dataclass
class FosdPair:
    """
    Verdict for one consecutive pair (lower, higher) of the canonical action ordering of an agent.

    flow[ω′, ω] moves the cheaper action's mass at ω′ up to ω >= ω′ and reproduces
    the costlier action's distribution; witness is a comprehensive set on which
    dominance fails (brute-force verdicts and failed LP checks on small Ω).
    """

    agent: int
    lower: int
    higher: int
    ok: bool
    flow: np.ndarray | None = None
    witness: list[int] | None = None
    certificate: np.ndarray | None = None


@dataclass
class FosdVerdict:
    ok: bool
    pairs: list[FosdPair] = field(default_factory=list)

    @property
    def failures(self) -> list[FosdPair]:
        return [pair for pair in self.pairs if not pair.ok]

    @property
    def message(self) -> str:
        if self.ok:
            return f"fosd: PASS ({len(self.pairs)} action pairs)"
        pair = self.failures[0]
        where = f" on comprehensive set {pair.witness}" if pair.witness is not None else ""
        return (f"fosd: FAIL for agent {pair.agent}, action {pair.higher} does not dominate "
                f"action {pair.lower}{where}")


def dominance_order(outcomes: np.ndarray) -> np.ndarray:
    """
    below[k, l] is True when outcome l <= outcome k component-wise.
    """
    return np.all(outcomes[None, :, :] <= outcomes[:, None, :], axis=-1)


def transport_flow(outcomes: np.ndarray, lower: np.ndarray, higher: np.ndarray):
    """
    Solve the upward transport problem from distribution lower to distribution higher.

    :return: (flow matrix or None, Farkas certificate or None).
    """
    m = len(outcomes)
    below = dominance_order(outcomes)
    model = LPModel()
    for src in range(m):
        for dst in range(m):
            if below[dst, src]:
                model.var((src, dst))
    for src in range(m):
        model.add_row({(src, dst): 1.0 for dst in range(m) if below[dst, src]}, "=", float(lower[src]))
    for dst in range(m):
        model.add_row({(src, dst): 1.0 for src in range(m) if below[dst, src]}, "=", float(higher[dst]))
    result = solve_lp(model.build())
    if result.status is LPStatus.INFEASIBLE:
        return None, result.certificate
    flow = np.zeros((m, m))
    for (src, dst), value in model.values(result.x).items():
        flow[src, dst] = value
    return flow, None


def _consecutive_pairs(agent: AgentSpec) -> list[tuple[int, int]]:
    order = canonical_order(agent)
    return list(zip(order, order[1:]))


def comprehensive_sets(outcomes: np.ndarray, max_outcomes: int = BRUTE_FORCE_MAX_OUTCOMES) -> np.ndarray:
    """
    All downward-closed subsets of Ω as a boolean membership matrix (one row per set).

    :raises CapExceededError: When m exceeds max_outcomes.
    """
    m = len(outcomes)
    if m > max_outcomes:
        raise CapExceededError(f"comprehensive-set enumeration needs m <= {max_outcomes}, got m = {m}")
    below = dominance_order(outcomes)
    masks = np.arange(2 ** m)
    member = ((masks[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    closed = np.ones(len(masks), dtype=bool)
    for k in range(m):
        # k in S requires every outcome below k in S
        closed &= ~member[:, k] | np.all(member[:, below[k]], axis=1)
    return member[closed]


def _first_failure(sets: np.ndarray, lower: np.ndarray, higher: np.ndarray, tol: float):
    gap = sets.astype(float) @ higher - sets.astype(float) @ lower
    bad = np.flatnonzero(gap > tol)
    if len(bad) == 0:
        return None
    return [int(k) for k in np.flatnonzero(sets[bad[0]])]


def check_fosd(inst: Instance, tol: float = FOSD_TOL) -> FosdVerdict:
    """
    Decide first-order stochastic dominance along each agent's canonical action ordering.

    For each consecutive pair (a_j, a_{j+1}) a transport LP looks for a flow x(ω′, ω) >= 0,
    supported on ω >= ω′, with row marginals F_{a_j} and column marginals F_{a_{j+1}}.
    Dominance holds iff every such LP is feasible.

    :param inst: The instance.
    :param tol: Tolerance of the comprehensive-set search used for witnesses.
    :return: FosdVerdict with flows (feasible pairs) or certificates and witnesses (failed pairs).
    """
    pairs = []
    sets = None
    if inst.m <= BRUTE_FORCE_MAX_OUTCOMES:
        sets = comprehensive_sets(inst.outcomes)
    for i, agent in enumerate(inst.agents):
        for lo, hi in _consecutive_pairs(agent):
            flow, certificate = transport_flow(inst.outcomes, agent.dists[lo], agent.dists[hi])
            if flow is not None:
                pairs.append(FosdPair(i, lo, hi, True, flow=flow))
                continue
            witness = None if sets is None else _first_failure(sets, agent.dists[lo], agent.dists[hi], tol)
            logger.info(f"[fosd] agent {i}: action {hi} does not dominate action {lo}")
            pairs.append(FosdPair(i, lo, hi, False, witness=witness, certificate=certificate))
    return FosdVerdict(all(pair.ok for pair in pairs), pairs)


def fosd_bruteforce(inst: Instance, tol: float = FOSD_TOL,
                    max_outcomes: int = BRUTE_FORCE_MAX_OUTCOMES) -> FosdVerdict:
    """
    FOSD by definition: F_{a_{j+1}}(Ω′) <= F_{a_j}(Ω′) on every comprehensive set Ω′.

    :raises CapExceededError: When m exceeds max_outcomes.
    """
    sets = comprehensive_sets(inst.outcomes, max_outcomes)
    pairs = []
    for i, agent in enumerate(inst.agents):
        for lo, hi in _consecutive_pairs(agent):
            witness = _first_failure(sets, agent.dists[lo], agent.dists[hi], tol)
            pairs.append(FosdPair(i, lo, hi, witness is None, witness=witness))
    return FosdVerdict(all(pair.ok for pair in pairs), pairs)


def flow_residual(outcomes: np.ndarray, flow: np.ndarray, lower: np.ndarray, higher: np.ndarray) -> float:
    """
    Largest error of a transport flow: marginals, signs and mass moved against the order.
    """
    below = dominance_order(outcomes)
    off_support = np.abs(flow[~below.T]).max(initial=0.0)
    return float(max(np.abs(flow.sum(axis=1) - lower).max(), np.abs(flow.sum(axis=0) - higher).max(),
                     -flow.min(), off_support))
