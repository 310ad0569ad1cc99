import logging
from dataclasses import dataclass

import numpy as np

from contract.bayesian import BayesianInstance
from contract.core import AgentSpec, Contract, Instance, OutcomeSpace
from contract.rewards import RewardSpec
from contract.utils import make_rng, spawn_seeds

logger = logging.getLogger(__name__)

# Reward tags of the families gen_random can draw
FAMILY_TAGS = {
    "linear": ("increasing", "dr_submodular", "ir_supermodular"),
    "budget_additive": ("increasing", "dr_submodular"),
    "coverage_max": ("increasing",),
    "exp_sum": ("increasing", "ir_supermodular"),
}


@dataclass(frozen=True)
class GenParams:
    """
    Parameters of a random instance.

    :param n: Number of agents.
    :param ell: Actions per agent (action 0 is the null action).
    :param m: Number of outcomes (outcome 0 is the zero vector).
    :param q: Outcome dimension.
    :param family: Reward family (linear, budget_additive, coverage_max, exp_sum). coverage_max
                   draws outcomes from {0, 1}^q. It is not DR-submodular as a function of
                   ω, but with q = 1 and ell = 2 every summed outcome stays binary and
                   the DR solver's extension is a coverage function (use trust_tags).
    :param params: Reward parameters; None picks defaults that keep g within [0, 1].
    :param fosd: Build distributions that are FOSD-ordered by cost.
    :param omega_null: Null actions surely produce outcome 0 and no other action ever does.
    :param seed: Seed of the generator.
    :param transfers: Deteriorating transfers applied per cheaper action.
    """

    n: int = 2
    ell: int = 3
    m: int = 3
    q: int = 1
    family: str = "linear"
    params: dict | None = None
    fosd: bool = False
    omega_null: bool = False
    seed: int = 0
    transfers: int = 2

    def __post_init__(self):
        if min(self.n, self.ell, self.m, self.q) < 1:
            raise ValueError(f"sizes must be positive, got n={self.n}, ell={self.ell}, m={self.m}, q={self.q}")
        if self.m < 2 and (self.omega_null or self.ell > 1):
            raise ValueError("at least two outcomes are needed besides a lone null action")
        if self.family not in FAMILY_TAGS:
            raise ValueError(f"Unknown generator reward family: {self.family}")


def grid_steps(m: int, q: int, min_steps: int = 3) -> int:
    """
    Smallest k >= min_steps whose grid {0, 1/k, ..., 1}^q holds m distinct vectors.
    """
    k = max(int(min_steps), 1)
    while (k + 1) ** q < m:
        k += 1
    return k


def random_outcomes(m: int, q: int, rng: np.random.Generator, steps: int | None = None) -> np.ndarray:
    """
    m distinct vectors of the grid {0, 1/k, ..., 1}^q, the first being the zero vector.

    :param steps: k. Default: grid_steps(m, q), i.e. thirds unless m needs a finer grid.
    :raises ValueError: When a fixed k leaves fewer than m grid vectors.
    """
    k = grid_steps(m, q) if steps is None else int(steps)
    if k < 1 or m > (k + 1) ** q:
        raise ValueError(f"cannot draw {m} distinct outcomes of dimension {q} on a grid of step 1/{k}")
    outcomes = [np.zeros(q)]
    seen = {tuple(outcomes[0])}
    while len(outcomes) < m:
        vector = rng.integers(0, k + 1, size=q) / float(k)
        key = tuple(vector)
        if key not in seen:
            seen.add(key)
            outcomes.append(vector)
    return np.array(outcomes)


def _outcome_steps(params: GenParams) -> int | None:
    # coverage_max is a coverage function of the working agents only on binary outcomes
    return 1 if params.family == "coverage_max" else None


def _comparable_pairs(outcomes: np.ndarray, allowed: list[int]) -> list[tuple[int, int]]:
    # (high, low) with ω_low <= ω_high component-wise
    return [(h, lo) for h in allowed for lo in allowed
            if h != lo and np.all(outcomes[lo] <= outcomes[h])]


def deteriorate(dist: np.ndarray, pairs: list[tuple[int, int]], transfers: int,
                rng: np.random.Generator) -> np.ndarray:
    """
    Apply random bilateral transfers of mass from an outcome to one below it.

    Each step moves a uniform fraction of the mass at ω_high to ω_low, so the
    result is dominated by dist.
    """
    out = dist.copy()
    if not pairs:
        return out
    for _ in range(transfers):
        high, low = pairs[int(rng.integers(len(pairs)))]
        moved = out[high] * rng.random()
        out[high] -= moved
        out[low] += moved
    return out


def _default_reward(params: GenParams) -> RewardSpec:
    n, q = params.n, params.q
    tags = FAMILY_TAGS[params.family]
    if params.params is not None:
        return RewardSpec(params.family, params.params, tags)
    if params.family == "linear":
        return RewardSpec("linear", {"weights": 1.0 / (n * q)}, tags)
    if params.family == "budget_additive":
        return RewardSpec("budget_additive", {"budget": max(n * q / 2.0, 1e-9)}, tags)
    if params.family == "exp_sum":
        return RewardSpec("exp_sum", {"kappa": 1.0, "cap": float(n * q)}, tags)
    edges = [[i, i + 1] for i in range(n - 1)] or [[0, 0]]
    return RewardSpec("coverage_max", {"edges": edges, "scale": 1.0 / (len(edges) * q)}, tags)


def random_agent(outcomes: np.ndarray, params: GenParams, rng: np.random.Generator) -> AgentSpec:
    """
    One agent with the null action first and costs ascending with the action index.
    """
    m, ell = len(outcomes), params.ell
    null = np.zeros(m)
    null[0] = 1.0
    if ell == 1:
        return AgentSpec([0.0], [null])
    costs = np.concatenate([[0.0], np.sort(rng.random(ell - 1))])
    allowed = list(range(1, m)) if params.omega_null else list(range(m))
    dists = np.zeros((ell, m))
    dists[0] = null
    if params.fosd:
        pairs = _comparable_pairs(outcomes, allowed)
        top = np.zeros(m)
        top[allowed] = rng.dirichlet(np.ones(len(allowed)))
        dists[ell - 1] = top
        for a in range(ell - 2, 0, -1):
            dists[a] = deteriorate(dists[a + 1], pairs, params.transfers, rng)
    else:
        for a in range(1, ell):
            dists[a, allowed] = rng.dirichlet(np.ones(len(allowed)))
    return AgentSpec(costs, dists)


def gen_random(params: GenParams) -> Instance:
    """
    A seeded random instance.

    With fosd set the costliest action's distribution is drawn first and every cheaper
    action is obtained from the next costlier one by deteriorating transfers, so the
    instance passes check_fosd.

    :param params: GenParams.
    :return: The instance (identical for identical params).
    """
    rng = make_rng(params.seed)
    outcomes = random_outcomes(params.m, params.q, rng, _outcome_steps(params))
    space = OutcomeSpace(outcomes, null_index=0)
    agents = [random_agent(outcomes, params, rng) for _ in range(params.n)]
    inst = Instance(agents, space, _default_reward(params))
    logger.debug(f"[gen] random instance n={params.n} ell={params.ell} m={params.m} q={params.q} "
                 f"family={params.family} fosd={params.fosd} seed={params.seed}")
    return inst


def gen_bayesian(params: GenParams, num_types: int = 2, support_size: int | None = None) -> BayesianInstance:
    """
    A seeded random Bayesian instance: per agent and type a random agent over one shared
    outcome space, and λ uniform-at-random over a random support.

    :param params: GenParams of every type instance.
    :param num_types: |Θ|.
    :param support_size: Number of support tuples (default: all |Θ|^n tuples).
    """
    if num_types < 1:
        raise ValueError(f"num_types must be positive, got {num_types}")
    outcome_seed, agent_seed, support_seed = spawn_seeds(params.seed, 3)
    outcomes = random_outcomes(params.m, params.q, make_rng(outcome_seed), _outcome_steps(params))
    space = OutcomeSpace(outcomes, null_index=0)
    rng = make_rng(agent_seed)
    per_type = [[random_agent(outcomes, params, rng) for _ in range(num_types)] for _ in range(params.n)]
    tuples = [tuple(int(t) for t in np.unravel_index(k, (num_types,) * params.n))
              for k in range(num_types ** params.n)]
    size = len(tuples) if support_size is None else support_size
    if not 1 <= size <= len(tuples):
        raise ValueError(f"support size must lie in [1, {len(tuples)}], got {size}")
    rng = make_rng(support_seed)
    chosen = sorted(rng.choice(len(tuples), size=size, replace=False).tolist())
    probs = rng.dirichlet(np.ones(size))
    return BayesianInstance(per_type, space, [tuples[k] for k in chosen], probs, _default_reward(params))


def parse_edge_list(text: str) -> list[tuple[int, int]]:
    """
    Edges from text with one "u v" pair per line; blank lines and # comments are skipped.

    :raises ValueError: On a malformed line, a self-loop or a duplicate edge.
    """
    edges, seen = [], set()
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ValueError(f"line {number}: expected 'u v', got {line!r}")
        try:
            u, v = int(fields[0]), int(fields[1])
        except ValueError:
            raise ValueError(f"line {number}: node ids must be integers, got {line!r}") from None
        if u < 0 or v < 0 or u == v:
            raise ValueError(f"line {number}: invalid edge ({u}, {v})")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ValueError(f"line {number}: duplicate edge ({u}, {v})")
        seen.add(key)
        edges.append((u, v))
    return edges


def parse_label_cover(text: str) -> list[tuple[int, int, list[int]]]:
    """
    Label-cover constraints from text lines "u v pi_0 pi_1 ...": node u of the left side,
    node v of the right side and the label map σ ↦ pi_σ from v's labels to u's labels.
    """
    constraints = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            fields = [int(x) for x in line.split()]
        except ValueError:
            raise ValueError(f"line {number}: expected integers, got {line!r}") from None
        if len(fields) < 3:
            raise ValueError(f"line {number}: expected 'u v pi_0 ...', got {line!r}")
        constraints.append((fields[0], fields[1], fields[2:]))
    return constraints


def gen_label_cover(constraints, M: float = 20.0) -> Instance:
    """
    Label-cover gadget: one agent per node, one zero-cost action per label that
    produces the label's one-hot outcome, and the smoothed label-cover reward.

    Left nodes u become agents 0..|U|-1 and right nodes v agents |U|..|U|+|V|-1, both
    in increasing id order.

    :param constraints: (u, v, pi) triples, pi the label map of the edge.
    :param M: Smoothing parameter.
    :raises ValueError: On inconsistent label counts, labels out of range or unequal left degrees.
    """
    if not constraints:
        raise ValueError("label cover needs at least one constraint")
    labels = len(constraints[0][2])
    left = sorted({u for u, _, _ in constraints})
    right = sorted({v for _, v, _ in constraints})
    degrees = {u: 0 for u in left}
    for u, v, pi in constraints:
        if len(pi) != labels:
            raise ValueError(f"edge ({u}, {v}) maps {len(pi)} labels, expected {labels}")
        if any(not 0 <= s < labels for s in pi):
            raise ValueError(f"edge ({u}, {v}) has a label outside 0..{labels - 1}")
        degrees[u] += 1
    if len(set(degrees.values())) != 1:
        raise ValueError(f"left nodes must have equal degree, got {sorted(set(degrees.values()))}")
    index = {("u", u): k for k, u in enumerate(left)}
    index.update({("v", v): len(left) + k for k, v in enumerate(right)})
    outcomes = np.eye(labels)
    agents = [AgentSpec(np.zeros(labels), np.eye(labels)) for _ in range(len(index))]
    edges = [{"v": index[("v", v)], "u": index[("u", u)], "pi": list(pi)} for u, v, pi in constraints]
    reward = RewardSpec("label_cover_smooth", {"edges": edges, "M": float(M)}, ("increasing", "ir_supermodular"))
    return Instance(agents, OutcomeSpace(outcomes), reward)


def labeling_contract(inst: Instance, labels) -> Contract:
    """
    The zero-payment contract recommending each agent's label (agent order of gen_label_cover).
    """
    labels = [int(s) for s in labels]
    if len(labels) != inst.n:
        raise ValueError(f"expected {inst.n} labels, got {len(labels)}")
    return Contract(np.zeros((inst.n, inst.m)), inst.check_profile(labels))


def independent_set_delta(num_vertices: int) -> float:
    return 1.0 / num_vertices ** 2


def gen_independent_set(edges, num_vertices: int | None = None) -> Instance:
    """
    Independent-set gadget: one agent per vertex with a null action and an action of
    cost 1 - δ (δ = 1/|V|²) that surely produces the scalar outcome 1, and the reward
    Σ_{(u,v)∈E} max(ω_u/k_u, ω_v/k_v) with k_u the degree of u.

    Incentivizing an independent set S yields utility δ|S|.

    :param edges: (u, v) pairs over vertices 0..|V|-1.
    :param num_vertices: |V| (default: largest id + 1).
    :raises ValueError: On isolated vertices.
    """
    edges = [(int(u), int(v)) for u, v in edges]
    if not edges:
        raise ValueError("the graph needs at least one edge")
    size = max(max(e) for e in edges) + 1 if num_vertices is None else num_vertices
    degrees = np.zeros(size, dtype=int)
    for u, v in edges:
        degrees[u] += 1
        degrees[v] += 1
    isolated = np.flatnonzero(degrees == 0)
    if len(isolated):
        raise ValueError(f"isolated vertices are not allowed: {isolated.tolist()}")
    delta = independent_set_delta(size)
    agents = [AgentSpec([0.0, 1.0 - delta], [[1.0, 0.0], [0.0, 1.0]]) for _ in range(size)]
    reward = RewardSpec("coverage_max", {"edges": [list(e) for e in edges], "degrees": degrees.tolist(),
                                         "scale": 1.0}, ("increasing", "dr_submodular"), bounded=False)
    return Instance(agents, OutcomeSpace([0.0, 1.0], null_index=0), reward)


def independent_set_contract(inst: Instance, vertices) -> Contract:
    """
    The contract paying 1 - δ on outcome 1 to every vertex of the set and recommending its costly action.
    """
    chosen = sorted({int(v) for v in vertices})
    if any(not 0 <= v < inst.n for v in chosen):
        raise ValueError(f"vertex out of range in {chosen}")
    payments = np.zeros((inst.n, inst.m))
    profile = [0] * inst.n
    for v in chosen:
        payments[v, 1] = inst.agents[v].costs[1]
        profile[v] = 1
    return Contract(payments, tuple(profile))
