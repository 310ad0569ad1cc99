import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from contract.errors import IndeterminateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cut:
    """
    The half-space normal·x <= rhs; margin is the violation normal·x - rhs at the query point.
    """

    normal: np.ndarray
    rhs: float
    margin: float = 0.0
    tag: object = None

    def violation(self, x) -> float:
        return float(np.dot(self.normal, x) - self.rhs)


# A separation oracle maps a point to None (feasible) or a violated Cut.
SeparationOracle = Callable[[np.ndarray], "Cut | None"]


def halfspace_oracle(cuts: list[Cut], tol: float = 0.0) -> SeparationOracle:
    """
    Separation oracle of the polyhedron given by an explicit list of inequalities.

    :param cuts: The inequalities normal·x <= rhs.
    :param tol: A point violating every inequality by at most tol is accepted.
    :return: Oracle returning the most violated inequality (with its margin) or None.
    """
    normals = np.array([cut.normal for cut in cuts], dtype=float)
    rhs = np.array([cut.rhs for cut in cuts], dtype=float)

    def oracle(x):
        if not cuts:
            return None
        margins = normals @ x - rhs
        k = int(np.argmax(margins))
        if margins[k] <= tol:
            return None
        return Cut(normals[k], float(rhs[k]), float(margins[k]), cuts[k].tag)

    return oracle


@dataclass
class EllipsoidResult:
    feasible: bool
    point: np.ndarray | None = None
    history: list[Cut] = field(default_factory=list)
    iterations: int = 0


def iteration_budget(dim: int, initial_radius: float, tol: float) -> int:
    """
    ⌈2·dim²·ln(initial_radius / tol)⌉, at least 1.
    """
    return max(1, math.ceil(2 * dim * dim * math.log(max(initial_radius / tol, 1.0))))


def ellipsoid_feasibility(dim: int, initial_radius: float, oracle: SeparationOracle,
                          max_iters: int | None = None, tol: float = 1e-6,
                          center=None) -> EllipsoidResult:
    """
    Central-cut ellipsoid method for finding a point accepted by a separation oracle.

    Starts from the ball of the given radius and shrinks the ellipsoid by the classical
    update. Once the volume budget ⌈2·dim²·ln(radius/tol)⌉ is spent without an accepted
    point, the region is reported empty together with every cut the oracle produced.

    :param dim: Dimension of the search space.
    :param initial_radius: Radius of the starting ball.
    :param oracle: Returns None for accepted points, else a violated Cut.
    :param max_iters: Optional hard cap; hitting it before the volume budget is indeterminate.
    :param tol: Radius of the smallest ball a nonempty region is assumed to contain.
    :param center: Optional center of the starting ball (default: origin).
    :return: EllipsoidResult; feasible with point, or not feasible with the cut history.
    :raises IndeterminateError: When max_iters runs out before the volume budget (best = history).
    """
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if initial_radius <= 0 or tol <= 0:
        raise ValueError("initial_radius and tol must be positive")
    budget = iteration_budget(dim, initial_radius, tol)
    c = np.zeros(dim) if center is None else np.array(center, dtype=float)
    P = np.eye(dim) * initial_radius ** 2
    history: list[Cut] = []
    for k in range(budget):
        if max_iters is not None and k >= max_iters:
            raise IndeterminateError(
                f"ellipsoid stopped after {max_iters} iterations, volume budget is {budget}", best=history)
        cut = oracle(c)
        if cut is None:
            logger.debug(f"[ellipsoid] feasible point after {k} cuts")
            return EllipsoidResult(True, c, history, k)
        history.append(cut)
        a = np.asarray(cut.normal, dtype=float)
        Pa = P @ a
        width = float(a @ Pa)
        if width <= 1e-300:
            logger.debug(f"[ellipsoid] degenerate ellipsoid after {k + 1} cuts")
            return EllipsoidResult(False, None, history, k + 1)
        Pg = Pa / math.sqrt(width)
        if dim == 1:
            c = c - Pg / 2
            P = P / 4
        else:
            c = c - Pg / (dim + 1)
            P = dim * dim / (dim * dim - 1.0) * (P - 2.0 / (dim + 1) * np.outer(Pg, Pg))
            P = (P + P.T) / 2
        if k % 1000 == 999:
            logger.debug(f"[ellipsoid] {k + 1}/{budget} iterations")
    logger.debug(f"[ellipsoid] empty after {budget} iterations, {len(history)} cuts")
    return EllipsoidResult(False, None, history, budget)
