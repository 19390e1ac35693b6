"""Space-filling designs and cost-based budget allocation"""

import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import AllocationError, ContractViolationError

logger = logging.getLogger(__name__)

FRACTION_TOLERANCE = 1e-12
BUDGET_TOLERANCE = 1e-9
# Guards floor(gamma * B / C) against representation error, e.g. 0.3 * 40 / 0.1
FLOOR_TOLERANCE = 1e-9


def derive_seed(*keys) -> int:
    """Deterministic 63-bit seed from an ordered tuple of keys"""
    text = "|".join(f"{type(key).__name__}:{key}" for key in keys)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def as_bounds(bounds) -> np.ndarray:
    """Validate and return a D x 2 array of (lower, upper) pairs"""
    array = np.asarray(bounds, dtype=float)
    if array.ndim != 2 or array.shape[1] != 2 or array.shape[0] == 0:
        raise ContractViolationError(f"bounds must be D x 2 pairs, got shape {array.shape}")
    if np.any(array[:, 0] > array[:, 1]):
        raise ContractViolationError("bounds must satisfy lower <= upper")
    return array


def lhs(n: int, bounds, seed) -> np.ndarray:
    """
    Latin hypercube sample with one point per stratum in every dimension.

    Each dimension gets an independent permutation of the n strata and a
    uniform position inside its stratum, then is mapped affinely to bounds.
    """
    if n < 1:
        raise ContractViolationError(f"lhs needs n >= 1, got {n}")
    box = as_bounds(bounds)
    rng = np.random.default_rng(seed)
    unit = np.empty((n, box.shape[0]))
    for d in range(box.shape[0]):
        strata = rng.permutation(n)
        unit[:, d] = (strata + rng.uniform(size=n)) / n
    return box[:, 0] + unit * (box[:, 1] - box[:, 0])


@dataclass(frozen=True)
class BudgetPlan:
    """Per-level sample counts; vectors are ordered highest fidelity first"""

    total_budget: float
    fractions: Tuple[float, ...]
    costs: Tuple[float, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        if not len(self.fractions) == len(self.costs) == len(self.counts):
            raise ContractViolationError("fractions, costs and counts must align")
        if abs(sum(self.fractions) - 1.0) > FRACTION_TOLERANCE:
            raise ContractViolationError(f"fractions must sum to 1, got {sum(self.fractions)}")
        if self.consumed_cost > self.total_budget + BUDGET_TOLERANCE:
            raise AllocationError(
                f"plan consumes {self.consumed_cost:g} of a {self.total_budget:g} budget"
            )

    @property
    def consumed_cost(self) -> float:
        return float(sum(n * c for n, c in zip(self.counts, self.costs)))

    @property
    def n_levels(self) -> int:
        return len(self.counts)


def allocate_budget(
    total: float,
    fractions: Sequence[float],
    costs: Sequence[float],
    minimums: Optional[Sequence[int]] = None,
) -> BudgetPlan:
    """
    Split a budget across fidelity levels with N_m = floor(gamma_m * B / C_m).

    Vectors are ordered highest fidelity first. Levels with a zero fraction
    are dropped; the others are raised to their minimum (2 for the highest
    level, 1 otherwise). When that overspends, lower levels give back points,
    cheapest first, until the plan fits again.

    Raises:
        ContractViolationError: On malformed fractions or costs
        AllocationError: If the minimums do not fit in the budget
    """
    fractions = tuple(float(f) for f in fractions)
    costs = tuple(float(c) for c in costs)
    if len(fractions) != len(costs) or not fractions:
        raise ContractViolationError("fractions and costs must be non-empty and aligned")
    if total <= 0:
        raise ContractViolationError(f"total budget must be positive, got {total}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > FRACTION_TOLERANCE:
        raise ContractViolationError(f"fractions must be non-negative and sum to 1: {fractions}")
    if any(c <= 0 for c in costs):
        raise ContractViolationError(f"costs must be positive: {costs}")
    if minimums is None:
        minimums = [2] + [1] * (len(costs) - 1)
    if len(minimums) != len(costs):
        raise ContractViolationError("minimums must align with costs")

    counts = []
    floors = []
    for fraction, cost, minimum in zip(fractions, costs, minimums):
        if fraction == 0:
            counts.append(0)
            floors.append(0)
            continue
        counts.append(max(math.floor(fraction * total / cost + FLOOR_TOLERANCE), int(minimum)))
        floors.append(int(minimum))

    required = sum(n * c for n, c in zip(floors, costs))
    if required > total + BUDGET_TOLERANCE:
        raise AllocationError(
            f"minimum counts {floors} cost {required:g}, more than the budget {total:g}"
        )
    # Raised minimums are paid for by the cheapest lower levels first, the HF level last
    order = sorted(range(1, len(costs)), key=lambda m: costs[m]) + [0]
    rebalanced = False
    for m in order:
        excess = sum(n * c for n, c in zip(counts, costs)) - total
        if excess <= BUDGET_TOLERANCE:
            break
        removed = min(counts[m] - floors[m], math.ceil(excess / costs[m] - FLOOR_TOLERANCE))
        if removed > 0:
            counts[m] -= removed
            rebalanced = True
    if rebalanced:
        logger.info(f"Rebalanced counts to {counts} to honor per-level minimums within {total:g}")
    logger.debug(f"Allocated budget {total:g} as counts {counts}")
    return BudgetPlan(total_budget=float(total), fractions=fractions, costs=costs, counts=tuple(counts))
