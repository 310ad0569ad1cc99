import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from contract.errors import CapExceededError

TAGS = ("increasing", "dr_submodular", "ir_supermodular")
PROPERTIES = TAGS
PROPERTY_TOL = 1e-9


class RewardFunction(ABC):
    """Contract for every succinct reward family g: R_+^{nq} -> R."""

    @abstractmethod
    def __call__(self, omega: np.ndarray) -> np.ndarray:
        """
        Evaluate g on a batch of outcome tuples.

        :param omega: Array of shape (..., n, q).
        :return: Array of shape (...).
        """
        raise NotImplementedError


def _weights(weights, omega: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim == 0:
        return np.full(omega.shape[-2:], float(w))
    return w.reshape(omega.shape[-2:])


class LinearReward(RewardFunction):
    def __init__(self, weights=1.0):
        if np.any(np.asarray(weights, dtype=float) < 0):
            raise ValueError("linear reward weights must be non-negative")
        self.weights = weights

    def __call__(self, omega):
        total = np.sum(omega * _weights(self.weights, omega), axis=(-2, -1))
        return np.clip(total, 0.0, 1.0)


class BudgetAdditiveReward(RewardFunction):
    def __init__(self, budget=1.0, weights=1.0):
        if budget <= 0:
            raise ValueError(f"budget must be positive, got {budget}")
        self.budget = float(budget)
        self.weights = weights

    def __call__(self, omega):
        total = np.sum(omega * _weights(self.weights, omega), axis=(-2, -1))
        return np.minimum(self.budget, total) / self.budget


class CoverageMaxReward(RewardFunction):
    """
    Sum over edges (u, v) of max(ω_u / k_u, ω_v / k_v), times a scale.

    An agent's scalar outcome is the sum of the components of its outcome vector.
    """

    def __init__(self, edges, degrees=None, scale=None):
        self.edges = [(int(u), int(v)) for u, v in edges]
        if not self.edges:
            raise ValueError("coverage_max needs at least one edge")
        if degrees is None:
            counts: dict[int, int] = {}
            for u, v in self.edges:
                counts[u] = counts.get(u, 0) + 1
                counts[v] = counts.get(v, 0) + 1
            size = max(counts) + 1
            degrees = [counts.get(i, 1) for i in range(size)]
        self.degrees = [float(k) for k in degrees]
        self.scale = 1.0 / len(self.edges) if scale is None else float(scale)

    def __call__(self, omega):
        level = omega.sum(axis=-1)
        total = np.zeros(omega.shape[:-2])
        for u, v in self.edges:
            total = total + np.maximum(level[..., u] / self.degrees[u], level[..., v] / self.degrees[v])
        return self.scale * total


class ExpSumReward(RewardFunction):
    def __init__(self, kappa=1.0, cap=1.0):
        if kappa <= 0 or cap <= 0:
            raise ValueError(f"exp_sum needs kappa > 0 and cap > 0, got {kappa}, {cap}")
        self.kappa = float(kappa)
        self.cap = float(cap)

    def __call__(self, omega):
        total = omega.sum(axis=(-2, -1))
        return np.expm1(self.kappa * total) / math.expm1(self.kappa * self.cap)


class LabelCoverSmoothReward(RewardFunction):
    """
    Smoothed label-cover reward: per edge e = (v, u) with label map pi_e,
    Σ_σ exp(M (ω_{v,σ} + ω_{u,pi_e(σ)} - 2)), averaged over edges and divided by
    1 + (|Σ| - 1) e^{-M} so one-hot outcome tuples map into [0, 1].
    """

    def __init__(self, edges, M=20.0):
        self.edges = [(int(e["v"]), int(e["u"]), [int(s) for s in e["pi"]]) for e in edges]
        if not self.edges:
            raise ValueError("label_cover_smooth needs at least one edge")
        self.M = float(M)
        labels = len(self.edges[0][2])
        self.norm = len(self.edges) * (1.0 + (labels - 1) * math.exp(-self.M))

    def __call__(self, omega):
        total = np.zeros(omega.shape[:-2])
        for v, u, pi in self.edges:
            left = omega[..., v, :len(pi)]
            right = omega[..., u, pi]
            total = total + np.exp(self.M * (left + right - 2.0)).sum(axis=-1)
        return total / self.norm


class CustomTableReward(RewardFunction):
    """Explicit r_ω per outcome tuple; only for small Ωⁿ."""

    def __init__(self, entries):
        self.table = {}
        for entry in entries:
            key = tuple(float(x) for x in np.asarray(entry["tuple"], dtype=float).reshape(-1))
            self.table[key] = float(entry["value"])

    def __call__(self, omega, strict: bool = True):
        flat = omega.reshape(-1, omega.shape[-2] * omega.shape[-1])
        out = np.empty(len(flat))
        for k, row in enumerate(flat):
            key = tuple(float(x) for x in row)
            if key in self.table:
                out[k] = self.table[key]
            elif strict:
                raise ValueError(f"custom_table lookup miss for tuple {list(key)}")
            else:
                out[k] = np.nan
        return out.reshape(omega.shape[:-2])


_REGISTRY = {
    "linear": LinearReward,
    "budget_additive": BudgetAdditiveReward,
    "coverage_max": CoverageMaxReward,
    "exp_sum": ExpSumReward,
    "label_cover_smooth": LabelCoverSmoothReward,
    "custom_table": CustomTableReward,
}


class RewardSpec:
    """
    A succinct reward: a family name, its parameters and advisory structural tags.
    """

    def __init__(self, family: str, params: dict | None = None, declared_tags=(), bounded: bool = True):
        """
        Initialize a reward specification.

        :param family: One of linear, budget_additive, coverage_max, exp_sum,
                       label_cover_smooth, custom_table.
        :param params: Family-specific keyword parameters.
        :param declared_tags: Subset of increasing, dr_submodular, ir_supermodular.
        :param bounded: Whether values on Ωⁿ must lie in [0, 1] (checked at load time).
        :raises ValueError: On unknown family, tag or parameters.
        """
        cls = _REGISTRY.get(family)
        if not cls:
            raise ValueError(f"Unknown reward family: {family}")
        unknown = set(declared_tags) - set(TAGS)
        if unknown:
            raise ValueError(f"Unknown reward tags: {sorted(unknown)}")
        self.family: str = family
        self.params: dict = dict(params or {})
        self.declared_tags: frozenset[str] = frozenset(declared_tags)
        self.bounded: bool = bounded
        try:
            self.function: RewardFunction = cls(**self.params)
        except TypeError as e:
            raise ValueError(f"Bad parameters for reward family {family}: {e}") from e

    def evaluate(self, omega, strict: bool = True) -> np.ndarray:
        """
        Evaluate on a batch of tuples of shape (..., n, q).

        :param strict: For custom_table, raise on a lookup miss (otherwise NaN).
        """
        omega = np.asarray(omega, dtype=float)
        if isinstance(self.function, CustomTableReward):
            return self.function(omega, strict=strict)
        return self.function(omega)

    def scaled(self, factor: float) -> "ScaledReward":
        return ScaledReward(self, factor)

    def to_dict(self) -> dict:
        data = {"family": self.family, "params": self.params}
        if self.declared_tags:
            data["tags"] = sorted(self.declared_tags)
        if not self.bounded:
            data["bounded"] = False
        return data


class ScaledReward:
    """A RewardSpec multiplied by a positive constant (λ_θ in the Bayesian oracle)."""

    def __init__(self, base: RewardSpec, factor: float):
        self.base = base
        self.factor = float(factor)
        self.family = base.family
        self.declared_tags = base.declared_tags
        self.bounded = base.bounded

    def evaluate(self, omega, strict: bool = True) -> np.ndarray:
        return self.factor * self.base.evaluate(omega, strict=strict)


def eval_reward(spec: RewardSpec, omega) -> float:
    """
    Evaluate g on a single tuple of n stacked q-vectors.

    :param spec: The reward.
    :param omega: Array-like of shape (n, q); a flat sequence is read as n scalar outcomes.
    :return: g(ω).
    :raises ValueError: On negative components or a custom_table miss.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim == 1:
        omega = omega.reshape(-1, 1)
    if np.any(omega < 0):
        raise ValueError("reward arguments must be component-wise >= 0")
    return float(spec.evaluate(omega))


@dataclass(frozen=True)
class PropertyVerdict:
    prop: str
    ok: bool
    checked: int
    mode: str
    witness: tuple | None = None

    @property
    def message(self) -> str:
        if not self.ok:
            return f"{self.prop}: FAIL with witness {self.witness}"
        if self.mode == "sampled":
            return f"{self.prop}: no violation found in {self.checked} trials"
        return f"{self.prop}: PASS ({self.checked} cases)"


def _tuples(inst) -> np.ndarray:
    # All of Ωⁿ as an array of shape (m^n, n, q).
    grid = itertools.product(range(inst.m), repeat=inst.n)
    index = np.array(list(grid), dtype=int).reshape(-1, inst.n)
    return inst.outcomes[index]


def _violations(spec, prop: str, low, high, extra, tol: float):
    # low <= high component-wise; extra is the increment ω″.
    if prop == "increasing":
        lhs = spec.evaluate(high, strict=False)
        rhs = spec.evaluate(low, strict=False)
    else:
        gain_low = spec.evaluate(low + extra, strict=False) - spec.evaluate(low, strict=False)
        gain_high = spec.evaluate(high + extra, strict=False) - spec.evaluate(high, strict=False)
        lhs, rhs = (gain_low, gain_high) if prop == "dr_submodular" else (gain_high, gain_low)
    diff = lhs - rhs
    valid = ~np.isnan(diff)
    return valid, valid & (diff < -tol)


def check_property(spec, inst, prop: str, mode: str = "exhaustive", trials: int = 1000,
                   seed: int = 0, cap: int = 10**6, tol: float = PROPERTY_TOL) -> PropertyVerdict:
    """
    Check a structural property of g on the lattice generated by Ω.

    DR-submodularity asks g(ω+ω″) - g(ω) >= g(ω′+ω″) - g(ω′) for all ω <= ω′ and ω″ >= 0,
    IR-supermodularity the reverse inequality, monotonicity g(ω) >= g(ω′) for ω >= ω′.
    Exhaustive mode ranges ω, ω′, ω″ over Ωⁿ; sampled mode draws ω, ω′ as the
    component-wise min and max of two random tuples of Ωⁿ.

    :param spec: The reward (RewardSpec or scaled view).
    :param inst: Instance (or BayesianInstance) supplying Ω and n.
    :param prop: increasing, dr_submodular or ir_supermodular.
    :param mode: exhaustive or sampled.
    :param trials: Number of sampled cases.
    :param seed: Seed of the sampled mode.
    :param cap: Maximal number of exhaustive cases.
    :param tol: A violation must exceed this tolerance.
    :return: PropertyVerdict, with a witness (ω, ω′, ω″) on failure.
    :raises CapExceededError: When the exhaustive test set exceeds cap.
    """
    if prop not in PROPERTIES:
        raise ValueError(f"Unknown property: {prop}")
    if mode == "exhaustive":
        size = inst.m ** inst.n
        count = size * size if prop == "increasing" else size ** 3
        if count > cap:
            raise CapExceededError(
                f"exhaustive {prop} check needs {count} cases, cap is {cap}; use sampled mode")
        points = _tuples(inst)
        comparable = np.all(points[:, None] <= points[None, :], axis=(-2, -1))
        lo_idx, hi_idx = np.nonzero(comparable)
        low, high = points[lo_idx], points[hi_idx]
        if prop == "increasing":
            valid, bad = _violations(spec, prop, low, high, None, tol)
            extra_idx = None
        else:
            low = np.repeat(low, len(points), axis=0)
            high = np.repeat(high, len(points), axis=0)
            extra_idx = np.tile(np.arange(len(points)), len(lo_idx))
            valid, bad = _violations(spec, prop, low, high, points[extra_idx], tol)
        checked = int(valid.sum())
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            extra = None if extra_idx is None else points[extra_idx[k]].tolist()
            return PropertyVerdict(prop, False, checked, mode, (low[k].tolist(), high[k].tolist(), extra))
        return PropertyVerdict(prop, True, checked, mode)
    if mode != "sampled":
        raise ValueError(f"Unknown check mode: {mode}")
    rng = np.random.Generator(np.random.Philox(seed))
    first = inst.outcomes[rng.integers(inst.m, size=(trials, inst.n))]
    second = inst.outcomes[rng.integers(inst.m, size=(trials, inst.n))]
    extra = inst.outcomes[rng.integers(inst.m, size=(trials, inst.n))]
    low, high = np.minimum(first, second), np.maximum(first, second)
    valid, bad = _violations(spec, prop, low, high, extra, tol)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        witness_extra = None if prop == "increasing" else extra[k].tolist()
        return PropertyVerdict(prop, False, int(valid.sum()), mode,
                               (low[k].tolist(), high[k].tolist(), witness_extra))
    return PropertyVerdict(prop, True, int(valid.sum()), mode)
