"""
Submodular function minimization by the Fujishige-Wolfe minimum-norm-point algorithm.

The minimum-norm point x* of the base polytope B(f) of a normalized submodular f
determines the minimizers: {i : x*_i < 0} is the minimal one. Numerically the point
is only approximate, so the set is read off by sweeping all level sets of x and
keeping the best oracle value.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from contract.errors import IndeterminateError
from contract.utils import make_rng

logger = logging.getLogger(__name__)

# Tolerances of the major/minor cycles
Z1 = 1e-12
Z2 = 1e-10

SetFunction = Callable[[frozenset], float]


@dataclass(frozen=True)
class SfmOptions:
    tol: float = 1e-9
    max_major: int = 10000
    max_minor: int = 10000


@dataclass(frozen=True)
class SfmResult:
    minimizer: frozenset
    value: float
    major_cycles: int
    norm: float


class _Memo:
    def __init__(self, oracle: SetFunction):
        self.oracle = oracle
        self.cache: dict[frozenset, float] = {}

    def __call__(self, S: Iterable[int]) -> float:
        key = frozenset(int(e) for e in S)
        value = self.cache.get(key)
        if value is None:
            value = float(self.oracle(key))
            self.cache[key] = value
        return value


def greedy_vertex(w: np.ndarray, f: _Memo, base: float):
    """
    Vertex of B(f - f(∅)) minimizing <w, x>, with the prefix values used to build it.
    """
    n = len(w)
    order = np.argsort(w, kind="mergesort")
    values = [f(order[:k]) - base for k in range(n + 1)]
    x = np.empty(n)
    for k in range(n):
        x[order[k]] = values[k + 1] - values[k]
    return x, order, values


def affine_minimizer(S: np.ndarray):
    """
    Barycentric coefficients and point of the min-norm point of the affine hull of the rows of S.
    """
    m = S.shape[0]
    M = np.zeros((m + 1, m + 1))
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = S @ S.T
    v = np.zeros(m + 1)
    v[0] = 1.0
    try:
        coefficients = np.linalg.solve(M, v)[1:]
    except np.linalg.LinAlgError:
        coefficients = np.linalg.lstsq(M, v, rcond=None)[0][1:]
    return coefficients, S.T @ coefficients


def sfm_min_norm(oracle: SetFunction, ground_size: int, options: SfmOptions = SfmOptions()) -> SfmResult:
    """
    Minimize a submodular set function over subsets of {0, ..., ground_size - 1}.

    :param oracle: Value oracle taking a frozenset of element indices.
    :param ground_size: Number of ground elements.
    :param options: SfmOptions (norm tolerance and cycle budgets).
    :return: SfmResult with the best level set of the final point and its value.
    :raises IndeterminateError: When the major-cycle budget runs out; best holds (set, value).
    """
    f = _Memo(oracle)
    empty = f(())
    if ground_size == 0:
        return SfmResult(frozenset(), empty, 0, 0.0)
    x, order, values = greedy_vertex(np.zeros(ground_size), f, empty)
    S = x.reshape(1, -1)
    a = np.ones(1)
    best = _sweep(order, values, empty)
    major = 0
    while True:
        if major >= options.max_major:
            raise IndeterminateError(f"min-norm point not reached after {major} major cycles", best=best)
        major += 1
        q, order, values = greedy_vertex(x, f, empty)
        best = min(best, _sweep(order, values, empty), key=lambda item: (item[1], len(item[0])))
        if np.any(np.all(np.abs(S - q) < Z2, axis=1)):
            break
        scale = max(float(q @ q), float(np.max(np.einsum("ij,ij->i", S, S))))
        if x @ q >= x @ x - max(Z1, options.tol) * scale:
            break
        S = np.vstack([S, q])
        a = np.append(a, 0.0)
        for _ in range(options.max_minor):
            b, y = affine_minimizer(S)
            if np.all(b >= -Z1):
                a, x = np.maximum(b, 0.0), y
                break
            mask = a - b > Z2
            theta = float(np.min(a[mask] / (a - b)[mask])) if mask.any() else 0.0
            a = theta * b + (1 - theta) * a
            keep = a > Z2
            S, a = S[keep], a[keep]
            a = a / a.sum()
            x = S.T @ a
        logger.debug(f"[sfm] major cycle {major}: |x| = {np.linalg.norm(x):.6g}, {len(S)} vertices")
    # The final greedy pass over x lists every level set of x
    _, order, values = greedy_vertex(x, f, empty)
    best = min(best, _sweep(order, values, empty), key=lambda item: (item[1], len(item[0])))
    minimizer, value = best
    logger.debug(f"[sfm] minimum {value:.9g} at {sorted(minimizer)} after {major} major cycles")
    return SfmResult(minimizer, value, major, float(np.linalg.norm(x)))


def _sweep(order: np.ndarray, values: list[float], base: float):
    # Best prefix of a greedy ordering; ties go to the shorter prefix
    k = int(np.argmin(np.round(values, 12)))
    return frozenset(int(e) for e in order[:k]), values[k] + base


def brute_force_min(oracle: SetFunction, ground_size: int):
    """
    Exhaustive minimum over all 2^ground_size subsets (smallest set on ties).
    """
    best_set, best_value = frozenset(), float(oracle(frozenset()))
    for mask in range(1, 2 ** ground_size):
        S = frozenset(e for e in range(ground_size) if mask >> e & 1)
        value = float(oracle(S))
        if value < best_value - 1e-12 or (abs(value - best_value) <= 1e-12 and len(S) < len(best_set)):
            best_set, best_value = S, value
    return best_set, best_value


def check_submodular(oracle: SetFunction, ground_size: int, trials: int = 1000, seed: int = 0,
                     tol: float = 1e-9):
    """
    Sampled diminishing-returns check f(S + e) - f(S) >= f(T + e) - f(T) for S ⊆ T, e ∉ T.

    :return: None when no violation is found, else the witness (S, T, e).
    """
    if ground_size == 0:
        return None
    rng = make_rng(seed)
    for _ in range(trials):
        T_mask = rng.random(ground_size) < 0.5
        S_mask = T_mask & (rng.random(ground_size) < 0.5)
        outside = np.flatnonzero(~T_mask)
        if len(outside) == 0:
            continue
        e = int(rng.choice(outside))
        S = frozenset(int(k) for k in np.flatnonzero(S_mask))
        T = frozenset(int(k) for k in np.flatnonzero(T_mask))
        gain_small = oracle(S | {e}) - oracle(S)
        gain_large = oracle(T | {e}) - oracle(T)
        if gain_small < gain_large - tol:
            return sorted(S), sorted(T), e
    return None
