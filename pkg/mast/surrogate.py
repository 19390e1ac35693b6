"""Trust-weighted multi-fidelity augmentation and heteroscedastic fusion.

Stage 1 fits one GP per fidelity level. Stage 2 fits, for every lower
level independently, a discrepancy GP against the highest level and blends
each corrected lower-fidelity observation with the HF posterior using a
distance-based trust weight. Stage 3 fits a single GP on the HF data plus
the augmented points, each with a fixed noise variance.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .design import as_bounds
from .errors import ConfigurationError, ContractViolationError
from .gp_core import FitOptions, TrainedGp, fit_gp, predict

logger = logging.getLogger(__name__)

# Seed-sequence tags
STAGE_BASELINE = 1
STAGE_DISCREPANCY = 2
STAGE_FUSION = 3
HF_TAG = 0


def _power_decay(distance: np.ndarray, alpha: float) -> np.ndarray:
    return 1.0 - distance**alpha


def _exponential_decay(distance: np.ndarray, alpha: float) -> np.ndarray:
    return np.exp(-alpha * distance)


def _inverse_decay(distance: np.ndarray, alpha: float) -> np.ndarray:
    return 1.0 / (1.0 + distance**alpha)


WEIGHT_DECAYS: Dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "power": _power_decay,
    "exponential": _exponential_decay,
    "inverse": _inverse_decay,
}


@dataclass(frozen=True)
class FidelityDataset:
    """Observations of one fidelity level, inputs in original units"""

    level: int
    inputs: np.ndarray
    outputs: np.ndarray
    cost: float

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.asarray(self.outputs, dtype=float).reshape(-1)
        if outputs.size == 0:
            inputs = inputs.reshape(0, inputs.shape[-1] if inputs.size else 0)
        if inputs.shape[0] != outputs.size:
            raise ContractViolationError(
                f"level {self.level}: {inputs.shape[0]} inputs but {outputs.size} outputs"
            )
        if self.cost <= 0:
            raise ContractViolationError(f"level {self.level}: cost must be positive")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    @property
    def size(self) -> int:
        return int(self.outputs.size)


@dataclass(frozen=True)
class InputNormalizer:
    """Min-max map from declared bounds to the unit hypercube"""

    lower: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_bounds(cls, bounds) -> "InputNormalizer":
        box = as_bounds(bounds)
        span = box[:, 1] - box[:, 0]
        # Degenerate dimensions keep scale 1
        return cls(lower=box[:, 0].copy(), scale=np.where(span > 0, span, 1.0))

    @classmethod
    def identity(cls, dimension: int) -> "InputNormalizer":
        return cls(lower=np.zeros(dimension), scale=np.ones(dimension))

    @property
    def dimension(self) -> int:
        return int(self.lower.size)

    def normalize(self, x) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        if rows.shape[1] != self.dimension:
            raise ContractViolationError(
                f"expected {self.dimension} input columns, got {rows.shape[1]}"
            )
        return (rows - self.lower) / self.scale


@dataclass(frozen=True)
class TrustWeight:
    point_index: int
    d_min: float
    radius: float
    neighborhood: Tuple[int, ...]
    weight_W: float
    alpha: float


@dataclass(frozen=True)
class AugmentedObservation:
    """
    A lower-fidelity point pulled toward the highest fidelity.

    ``value`` and ``variance`` are in original output units; the corrected
    lower-fidelity value and the HF posterior mean are kept as provenance.
    """

    input: np.ndarray
    value: float
    variance: float
    source_level: int
    trust: TrustWeight
    corrected_value: float
    hf_mean: float


@dataclass(frozen=True)
class MastSurrogate:
    stage1_gps: Dict[int, TrainedGp]
    discrepancy_gps: Dict[int, TrainedGp]
    augmented: Tuple[AugmentedObservation, ...]
    fusion_gp: TrainedGp
    input_normalizer: InputNormalizer
    stage1_noise: Dict[int, float]
    costs: Dict[int, float]
    hf_level: int
    weight_decay: str = "power"
    sizes: Dict[int, int] = field(default_factory=dict)

    @property
    def levels(self) -> List[int]:
        return sorted(self.costs)


def alpha_exponent(cost_ratio: float) -> float:
    """Decay exponent log10(C_M / C_m) / 2 for a lower level"""
    if not cost_ratio > 1:
        raise ConfigurationError(
            f"cost ratio C_M/C_m must exceed 1 (strictly increasing costs), got {cost_ratio}"
        )
    return math.log10(cost_ratio) / 2


def trust_radius(d_min: float) -> float:
    if d_min < 0:
        raise ContractViolationError(f"d_min must be non-negative, got {d_min}")
    return math.sqrt(d_min)


def local_weight(
    point,
    hf_points,
    alpha: float,
    point_index: int = 0,
    decay: str = "power",
) -> TrustWeight:
    """
    Trust weight of one lower-fidelity point from HF points in its trust region.

    The neighborhood is every HF point within sqrt(d_min), plus the nearest
    one. Individual weights are clamped to [0, 1]; W is one minus their
    mean, clamped to [0, 1].
    """
    hf = np.atleast_2d(np.asarray(hf_points, dtype=float))
    x = np.asarray(point, dtype=float).reshape(-1)
    if hf.size == 0 or hf.shape[0] == 0:
        raise ContractViolationError("local_weight needs at least one HF point")
    if hf.shape[1] != x.size:
        raise ContractViolationError(f"point has {x.size} coordinates, HF points have {hf.shape[1]}")
    if decay not in WEIGHT_DECAYS:
        raise ContractViolationError(f"unknown weight decay '{decay}'")

    distances = np.sqrt(np.sum((hf - x) ** 2, axis=1))
    nearest = int(np.argmin(distances))
    d_min = float(distances[nearest])
    radius = trust_radius(d_min)
    members = distances <= radius
    members[nearest] = True
    neighborhood = np.flatnonzero(members)

    weights = np.clip(WEIGHT_DECAYS[decay](distances[neighborhood], alpha), 0.0, 1.0)
    weight_W = float(np.clip(1.0 - np.mean(weights), 0.0, 1.0))
    return TrustWeight(
        point_index=point_index,
        d_min=d_min,
        radius=radius,
        neighborhood=tuple(int(j) for j in neighborhood),
        weight_W=weight_W,
        alpha=float(alpha),
    )


def augment_point(
    y: float,
    mu_delta: float,
    var_delta: float,
    mu_hf: float,
    var_hf: float,
    sigma_m_sq: float,
    W: float,
) -> Tuple[float, float]:
    """Blend a corrected lower-fidelity value with the HF posterior"""
    if min(var_delta, var_hf, sigma_m_sq) < 0:
        raise ContractViolationError("variances must be non-negative")
    value = W * (y + mu_delta) + (1 - W) * mu_hf
    variance = W**2 * (sigma_m_sq + var_delta) + (1 - W) ** 2 * var_hf
    return value, variance


def fit_discrepancy(
    stage1_gp: TrainedGp,
    hf_data: FidelityDataset,
    options: Optional[FitOptions] = None,
    normalizer: Optional[InputNormalizer] = None,
    rng: Optional[np.random.Generator] = None,
) -> TrainedGp:
    """GP on residuals y_HF - mu_m(x_HF) at the HF locations, noise learned"""
    options = replace(options or FitOptions(), learn_noise=True)
    normalizer = normalizer or InputNormalizer.identity(hf_data.inputs.shape[1])
    hf_inputs = normalizer.normalize(hf_data.inputs)
    lf_means, _ = predict(stage1_gp, hf_inputs)
    residuals = hf_data.outputs - lf_means
    return fit_gp(hf_inputs, residuals, options, rng=rng)


def augment_level(
    dataset: FidelityDataset,
    hf_data: FidelityDataset,
    hf_gp: TrainedGp,
    discrepancy_gp: TrainedGp,
    sigma_m_sq: float,
    alpha: float,
    normalizer: InputNormalizer,
    decay: str = "power",
) -> List[AugmentedObservation]:
    """Stage-2 augmentation of every point of one lower level"""
    inputs = normalizer.normalize(dataset.inputs)
    hf_inputs = normalizer.normalize(hf_data.inputs)
    mu_delta, var_delta = predict(discrepancy_gp, inputs)
    mu_hf, var_hf = predict(hf_gp, inputs)

    augmented = []
    for i, x in enumerate(inputs):
        trust = local_weight(x, hf_inputs, alpha, point_index=i, decay=decay)
        value, variance = augment_point(
            dataset.outputs[i], mu_delta[i], var_delta[i], mu_hf[i], var_hf[i],
            sigma_m_sq, trust.weight_W,
        )
        augmented.append(
            AugmentedObservation(
                input=x,
                value=float(value),
                variance=float(variance),
                source_level=dataset.level,
                trust=trust,
                corrected_value=float(dataset.outputs[i] + mu_delta[i]),
                hf_mean=float(mu_hf[i]),
            )
        )
    return augmented


def _rng(seed: int, stage: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage, tag]))


def _validate_levels(datasets: Sequence[FidelityDataset]) -> List[FidelityDataset]:
    if len(datasets) < 2:
        raise ConfigurationError(f"need at least 2 fidelity levels, got {len(datasets)}")
    ordered = sorted(datasets, key=lambda d: d.level)
    levels = [d.level for d in ordered]
    if len(set(levels)) != len(levels):
        raise ConfigurationError(f"duplicate fidelity levels: {levels}")
    costs = [d.cost for d in ordered]
    if any(a >= b for a, b in zip(costs, costs[1:])):
        raise ConfigurationError(f"costs must strictly increase with level, got {costs}")
    dims = {d.inputs.shape[1] for d in ordered if d.size}
    if len(dims) > 1:
        raise ConfigurationError(f"levels disagree on input dimension: {sorted(dims)}")
    if ordered[-1].size < 2:
        raise ConfigurationError(
            f"need at least 2 highest-fidelity points, got {ordered[-1].size}"
        )
    return ordered


def build_mast(
    datasets: Sequence[FidelityDataset],
    bounds,
    options: Optional[FitOptions] = None,
    seed: int = 0,
    weight_decay: str = "power",
    max_workers: int = 1,
) -> MastSurrogate:
    """
    Run the three-stage pipeline for M >= 2 fidelity levels.

    Every lower level is augmented directly against the highest level;
    empty lower levels are skipped. Each level draws from its own seed
    sequence keyed by level, so one level's products never depend on which
    other intermediate levels are present.

    Raises:
        ConfigurationError: On fewer than 2 levels or HF points, or
            non-increasing costs
        FittingError: Propagated from any GP fit
    """
    options = options or FitOptions()
    if weight_decay not in WEIGHT_DECAYS:
        raise ConfigurationError(f"unknown weight decay '{weight_decay}'")
    ordered = _validate_levels(datasets)
    hf_data = ordered[-1]
    lower = [d for d in ordered[:-1] if d.size]
    normalizer = InputNormalizer.from_bounds(bounds)
    if normalizer.dimension != hf_data.inputs.shape[1]:
        raise ConfigurationError("bounds do not match the input dimension")
    hf_inputs = normalizer.normalize(hf_data.inputs)

    def tag(dataset: FidelityDataset) -> int:
        return HF_TAG if dataset is hf_data else dataset.level

    def stage1(dataset: FidelityDataset) -> TrainedGp:
        level_options = options if dataset.size >= 2 else replace(options, learn_noise=False)
        return fit_gp(
            normalizer.normalize(dataset.inputs),
            dataset.outputs,
            replace(level_options, fixed_noise=None),
            rng=_rng(seed, STAGE_BASELINE, tag(dataset)),
        )

    logger.info(
        f"Stage 1: fitting {len(lower) + 1} baseline GPs "
        f"(sizes {[d.size for d in lower] + [hf_data.size]})"
    )
    fit_order = lower + [hf_data]
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        baselines = list(pool.map(stage1, fit_order))
    stage1_gps = {d.level: gp for d, gp in zip(fit_order, baselines)}
    stage1_noise = {
        level: float(gp.params.noise_variance * gp.output_scale**2)
        for level, gp in stage1_gps.items()
    }
    hf_gp = stage1_gps[hf_data.level]

    def stage2(dataset: FidelityDataset) -> Tuple[TrainedGp, List[AugmentedObservation]]:
        discrepancy_gp = fit_discrepancy(
            stage1_gps[dataset.level], hf_data, options, normalizer,
            rng=_rng(seed, STAGE_DISCREPANCY, dataset.level),
        )
        alpha = alpha_exponent(hf_data.cost / dataset.cost)
        points = augment_level(
            dataset, hf_data, hf_gp, discrepancy_gp, stage1_noise[dataset.level],
            alpha, normalizer, weight_decay,
        )
        return discrepancy_gp, points

    logger.info(f"Stage 2: augmenting levels {[d.level for d in lower]} toward level {hf_data.level}")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        stage2_results = list(pool.map(stage2, lower))
    discrepancy_gps = {d.level: result[0] for d, result in zip(lower, stage2_results)}
    augmented = tuple(point for _, points in stage2_results for point in points)

    fusion_inputs = np.vstack([hf_inputs] + [p.input[None, :] for p in augmented])
    fusion_targets = np.concatenate([hf_data.outputs, [p.value for p in augmented]])
    fusion_noise = np.concatenate(
        [np.full(hf_data.size, stage1_noise[hf_data.level]), [p.variance for p in augmented]]
    )
    logger.info(
        f"Stage 3: fusion GP on {fusion_targets.size} points "
        f"({hf_data.size} HF, {len(augmented)} augmented)"
    )
    fusion_gp = fit_gp(
        fusion_inputs,
        fusion_targets,
        replace(options, learn_noise=False),
        per_point_noise=fusion_noise,
        rng=_rng(seed, STAGE_FUSION, HF_TAG),
    )
    return MastSurrogate(
        stage1_gps=stage1_gps,
        discrepancy_gps=discrepancy_gps,
        augmented=augmented,
        fusion_gp=fusion_gp,
        input_normalizer=normalizer,
        stage1_noise=stage1_noise,
        costs={d.level: float(d.cost) for d in ordered},
        hf_level=hf_data.level,
        weight_decay=weight_decay,
        sizes={d.level: d.size for d in ordered},
    )


def predict_mast(surrogate: MastSurrogate, queries) -> Tuple[np.ndarray, np.ndarray]:
    """Fusion-GP posterior mean and variance at queries in original units"""
    return predict(surrogate.fusion_gp, surrogate.input_normalizer.normalize(queries))
