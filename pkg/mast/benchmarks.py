"""Benchmark catalog: high-fidelity functions, discrepancy terms and degradation.

Lower fidelities follow f_LF(x) = f_HF(x) + d * delta(x). Every function
accepts an array whose last axis is the input dimension and evaluates
row-wise.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .design import derive_seed, lhs
from .errors import ContractViolationError, UnknownProblemError

logger = logging.getLogger(__name__)

ArrayFunction = Callable[[np.ndarray], np.ndarray]

NOISE_ONLY_FRACTION = 0.05
NOISE_REFERENCE_POINTS = 10_000


class DiscrepancyKind(str, Enum):
    SPATIAL = "spatial"
    OSCILLATORY = "oscillatory"
    LINEAR_SCALING = "linear-scaling"
    NOISE_ONLY = "noise-only"
    PARAMETER_PERTURBATION = "parameter-perturbation"
    COEFFICIENT_SIMPLIFICATION = "coefficient-simplification"


@dataclass(frozen=True)
class FidelitySpec:
    """One fidelity level of a benchmark: degradation, cost and noise"""

    level: int
    degradation_d: float
    cost: float
    noise_std: float = 0.0

    def __post_init__(self):
        if self.degradation_d < 0:
            raise ContractViolationError(f"degradation_d must be >= 0, got {self.degradation_d}")
        if self.cost <= 0:
            raise ContractViolationError(f"cost must be positive, got {self.cost}")
        if self.noise_std < 0:
            raise ContractViolationError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class BenchmarkProblem:
    """
    A benchmark function with its discrepancy term and canonical domain.

    ``noise_std`` holds the default observation noise as
    (highest fidelity, lower fidelities), in output units.
    """

    name: str
    dimension: int
    bounds: np.ndarray
    hf: ArrayFunction
    delta: ArrayFunction
    discrepancy_kind: DiscrepancyKind
    noise_std: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        bounds = np.array(self.bounds, dtype=float)
        if bounds.shape != (self.dimension, 2):
            raise ContractViolationError(
                f"{self.name}: bounds shape {bounds.shape} does not match dimension {self.dimension}"
            )
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ContractViolationError(f"{self.name}: bounds must satisfy min < max")
        if any(s < 0 for s in self.noise_std):
            raise ContractViolationError(f"{self.name}: noise_std must be non-negative")
        bounds.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)


# High-fidelity functions and discrepancy terms

BRANIN_B = 5.1 / (4 * np.pi**2)


def branin(x: np.ndarray, b: float = BRANIN_B) -> np.ndarray:
    x1, x2 = x[..., 0], x[..., 1]
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def branin_delta(x: np.ndarray) -> np.ndarray:
    return branin(x, b=BRANIN_B - 0.1) - branin(x)


def rosenbrock(x: np.ndarray) -> np.ndarray:
    head, tail = x[..., :-1], x[..., 1:]
    return np.sum(100 * (tail - head**2) ** 2 + (1 - head) ** 2, axis=-1)


def oscillatory_delta(
    x: np.ndarray, amplitude: float = 0.1, omega1: float = 10.0, omega2: float = 5.0
) -> np.ndarray:
    return amplitude * np.sin(omega1 * x[..., 0] + omega2 * x[..., 1])


def rastrigin(x: np.ndarray, a: float = 10.0) -> np.ndarray:
    n = x.shape[-1]
    return a * n + np.sum(x**2 - a * np.cos(2 * np.pi * x), axis=-1)


def ackley(x: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2 * np.pi) -> np.ndarray:
    radial = np.sqrt(np.mean(x**2, axis=-1))
    return -a * np.exp(-b * radial) - np.exp(np.mean(np.cos(c * x), axis=-1)) + a + np.e


def zero_delta(x: np.ndarray) -> np.ndarray:
    return np.zeros(x.shape[:-1])


def levy(x: np.ndarray) -> np.ndarray:
    w = 1 + (x - 1) / 4
    head, last = w[..., :-1], w[..., -1]
    body = np.sum((head - 1) ** 2 * (1 + 10 * np.sin(np.pi * head + 1) ** 2), axis=-1)
    tail = (last - 1) ** 2 * (1 + np.sin(2 * np.pi * last) ** 2)
    return np.sin(np.pi * w[..., 0]) ** 2 + body + tail


HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN_DELTA_ALPHA = np.array([0.01, -0.01, -0.1, 0.1])

HARTMANN3_A = np.array(
    [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ]
)
HARTMANN3_P = np.array(
    [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ]
)
HARTMANN6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
HARTMANN6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)

for _table in (HARTMANN_ALPHA, HARTMANN_DELTA_ALPHA, HARTMANN3_A, HARTMANN3_P, HARTMANN6_A, HARTMANN6_P):
    _table.setflags(write=False)


def hartmann(
    x: np.ndarray, a_matrix: np.ndarray, p_matrix: np.ndarray, alpha: np.ndarray = HARTMANN_ALPHA
) -> np.ndarray:
    """Positive-sum Hartmann form (no leading minus)"""
    diff = x[..., None, :] - p_matrix
    exponent = np.sum(a_matrix * diff**2, axis=-1)
    return np.exp(-exponent) @ alpha


def _hartmann_pair(a_matrix: np.ndarray, p_matrix: np.ndarray) -> Tuple[ArrayFunction, ArrayFunction]:
    def hf(x: np.ndarray) -> np.ndarray:
        return hartmann(x, a_matrix, p_matrix)

    def delta(x: np.ndarray) -> np.ndarray:
        perturbed = hartmann(x, a_matrix, p_matrix, HARTMANN_ALPHA + HARTMANN_DELTA_ALPHA)
        return perturbed - hartmann(x, a_matrix, p_matrix)

    return hf, delta


def park1(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (x[..., i] for i in range(4))
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(1 + (x2 + x3**2) * x4 / x1**2) - 1
    return x1 / 2 * root + (x1 + 3 * x4) * np.exp(1 + np.sin(x3))


def park1_delta(x: np.ndarray) -> np.ndarray:
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.sin(x1) / 10 * park1(x) - 2 * x1 + x2**2 + x3**2 + 0.5


PARK2_GAMMA = 1.2
PARK2_BETA = -1.0


def park2(x: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (x[..., i] for i in range(4))
    return 2 / 3 * np.exp(x1 + x2) - x4 * np.sin(x3) + x3


def park2_delta(x: np.ndarray) -> np.ndarray:
    return (PARK2_GAMMA - 1) * park2(x) + PARK2_BETA


BOREHOLE_BOUNDS = [
    (0.05, 0.15),  # r_w, borehole radius (m)
    (100.0, 50_000.0),  # r, radius of influence (m)
    (63_070.0, 115_600.0),  # T_u, upper aquifer transmissivity (m^2/yr)
    (990.0, 1_110.0),  # H_u, upper aquifer head (m)
    (63.1, 116.0),  # T_l, lower aquifer transmissivity (m^2/yr)
    (700.0, 820.0),  # H_l, lower aquifer head (m)
    (1_120.0, 1_680.0),  # L, borehole length (m)
    (9_855.0, 12_045.0),  # K_w, hydraulic conductivity (m/yr)
]


def borehole(x: np.ndarray, coefficient: float = 2 * np.pi, offset: float = 1.0) -> np.ndarray:
    rw, r, tu, hu, tl, hl, length, kw = (x[..., i] for i in range(8))
    log_ratio = np.log(r / rw)
    denominator = log_ratio * (offset + 2 * length * tu / (log_ratio * rw**2 * kw) + tu / tl)
    return coefficient * tu * (hu - hl) / denominator


def borehole_delta(x: np.ndarray) -> np.ndarray:
    return borehole(x, coefficient=5.0, offset=1.5) - borehole(x)


# Registry


def _noise_only_std(hf: ArrayFunction, bounds: Sequence[Tuple[float, float]], name: str) -> float:
    """Lower-fidelity noise as a fraction of the HF output spread over an LHS sample"""
    sample = lhs(NOISE_REFERENCE_POINTS, bounds, derive_seed(name, len(bounds), "noise"))
    return NOISE_ONLY_FRACTION * float(np.std(hf(sample)))


def _branin_problem(dimension: Optional[int]) -> BenchmarkProblem:
    return BenchmarkProblem(
        "branin", 2, [(-5.0, 10.0), (0.0, 15.0)], branin, branin_delta,
        DiscrepancyKind.PARAMETER_PERTURBATION,
    )


def _rosenbrock_problem(dimension: Optional[int]) -> BenchmarkProblem:
    n = dimension or 10
    return BenchmarkProblem(
        "rosenbrock", n, [(-5.0, 10.0)] * n, rosenbrock, oscillatory_delta,
        DiscrepancyKind.OSCILLATORY,
    )


def _rastrigin_problem(dimension: Optional[int]) -> BenchmarkProblem:
    n = dimension or 5
    return BenchmarkProblem(
        "rastrigin", n, [(-5.12, 5.12)] * n, rastrigin, oscillatory_delta,
        DiscrepancyKind.OSCILLATORY,
    )


def _ackley_problem(dimension: Optional[int]) -> BenchmarkProblem:
    n = dimension or 4
    bounds = [(-5.0, 5.0)] * n
    return BenchmarkProblem(
        "ackley", n, bounds, ackley, zero_delta, DiscrepancyKind.NOISE_ONLY,
        noise_std=(0.0, _noise_only_std(ackley, bounds, "ackley")),
    )


def _levy_problem(dimension: Optional[int]) -> BenchmarkProblem:
    n = dimension or 7
    return BenchmarkProblem(
        "levy", n, [(-10.0, 10.0)] * n, levy, oscillatory_delta, DiscrepancyKind.OSCILLATORY
    )


def _hartmann3_problem(dimension: Optional[int]) -> BenchmarkProblem:
    hf, delta = _hartmann_pair(HARTMANN3_A, HARTMANN3_P)
    return BenchmarkProblem(
        "hartmann3", 3, [(0.0, 1.0)] * 3, hf, delta, DiscrepancyKind.PARAMETER_PERTURBATION
    )


def _hartmann6_problem(dimension: Optional[int]) -> BenchmarkProblem:
    hf, delta = _hartmann_pair(HARTMANN6_A, HARTMANN6_P)
    return BenchmarkProblem(
        "hartmann6", 6, [(0.0, 1.0)] * 6, hf, delta, DiscrepancyKind.PARAMETER_PERTURBATION
    )


def _park1_problem(dimension: Optional[int]) -> BenchmarkProblem:
    return BenchmarkProblem(
        "park1", 4, [(0.0, 1.0)] * 4, park1, park1_delta, DiscrepancyKind.SPATIAL
    )


def _park2_problem(dimension: Optional[int]) -> BenchmarkProblem:
    return BenchmarkProblem(
        "park2", 4, [(0.0, 1.0)] * 4, park2, park2_delta, DiscrepancyKind.LINEAR_SCALING
    )


def _borehole_problem(dimension: Optional[int]) -> BenchmarkProblem:
    return BenchmarkProblem(
        "borehole", 8, BOREHOLE_BOUNDS, borehole, borehole_delta,
        DiscrepancyKind.COEFFICIENT_SIMPLIFICATION,
    )


_BUILDERS: Dict[str, Callable[[Optional[int]], BenchmarkProblem]] = {
    "branin": _branin_problem,
    "rosenbrock": _rosenbrock_problem,
    "rastrigin": _rastrigin_problem,
    "ackley": _ackley_problem,
    "levy": _levy_problem,
    "hartmann3": _hartmann3_problem,
    "hartmann6": _hartmann6_problem,
    "park1": _park1_problem,
    "park2": _park2_problem,
    "borehole": _borehole_problem,
}
_N_DIMENSIONAL = {"rosenbrock", "rastrigin", "ackley", "levy"}


def problem_names() -> List[str]:
    return list(_BUILDERS)


@lru_cache(maxsize=None)
def make_problem(name: str, dimension: Optional[int] = None) -> BenchmarkProblem:
    """Build a registered problem, optionally at a non-default dimension"""
    key = name.strip().lower()
    if key not in _BUILDERS:
        raise UnknownProblemError(f"Unknown problem '{name}'. Known: {', '.join(_BUILDERS)}")
    if dimension is not None:
        if key not in _N_DIMENSIONAL:
            problem = _BUILDERS[key](None)
            if dimension != problem.dimension:
                raise ContractViolationError(f"{key} is fixed at dimension {problem.dimension}")
            return problem
        if dimension < 2:
            raise ContractViolationError(f"{key} needs dimension >= 2, got {dimension}")
    return _BUILDERS[key](dimension)


def get_problem(name: str) -> BenchmarkProblem:
    return make_problem(name)


def catalog() -> List[BenchmarkProblem]:
    """All ten problems at their default dimensions"""
    return [make_problem(name) for name in _BUILDERS]


def default_fidelity_specs(
    problem: BenchmarkProblem,
    degradations: Sequence[float] = (0.0, 1.0),
    costs: Sequence[float] = (1.0, 0.1),
) -> List[FidelitySpec]:
    """Fidelity specs ordered highest fidelity first, with the problem's default noise"""
    if len(degradations) != len(costs) or len(costs) < 2:
        raise ContractViolationError("need at least two aligned degradations and costs")
    n_levels = len(costs)
    high_noise, low_noise = problem.noise_std
    return [
        FidelitySpec(
            level=n_levels - index,
            degradation_d=float(d),
            cost=float(c),
            noise_std=high_noise if index == 0 else low_noise,
        )
        for index, (d, c) in enumerate(zip(degradations, costs))
    ]


def _rows(problem: BenchmarkProblem, x) -> Tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    rows = np.atleast_2d(points)
    if rows.ndim != 2 or rows.shape[1] != problem.dimension:
        raise ContractViolationError(
            f"{problem.name} expects {problem.dimension} inputs, got shape {points.shape}"
        )
    outside = np.any((rows < problem.bounds[:, 0]) | (rows > problem.bounds[:, 1]), axis=1)
    if np.any(outside):
        logger.warning(f"{int(outside.sum())} point(s) evaluated outside {problem.name} bounds")
    return rows, single


def _result(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


def eval_hf(problem: BenchmarkProblem, x):
    """Exact high-fidelity value for a D-vector (float) or N x D rows (vector)"""
    rows, single = _rows(problem, x)
    return _result(np.asarray(problem.hf(rows), dtype=float), single)


def eval_fidelity(problem: BenchmarkProblem, x, spec: FidelitySpec):
    """f_HF(x) + d * delta(x); exactly f_HF when d = 0"""
    rows, single = _rows(problem, x)
    values = np.asarray(problem.hf(rows), dtype=float)
    if spec.degradation_d:
        values = values + spec.degradation_d * problem.delta(rows)
    return _result(values, single)


def sample_observation(problem: BenchmarkProblem, x, spec: FidelitySpec, rng: np.random.Generator):
    """Noisy observation at the given fidelity using a caller-owned generator"""
    rows, single = _rows(problem, x)
    values = np.asarray(problem.hf(rows), dtype=float)
    if spec.degradation_d:
        values = values + spec.degradation_d * problem.delta(rows)
    values = values + rng.normal(0.0, spec.noise_std, size=values.shape)
    return _result(values, single)
