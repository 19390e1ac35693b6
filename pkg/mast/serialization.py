"""Versioned JSON records of fitted surrogates.

Floats are written with their shortest round-trip representation, and the
stored Cholesky factor and dual weights are reused on load, so reloaded
predictions are bit-identical.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .errors import ConfigurationError
from .gp_core import KernelParams, TrainedGp, _frozen
from .surrogate import AugmentedObservation, InputNormalizer, MastSurrogate, TrustWeight

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _gp_to_dict(gp: TrainedGp) -> Dict[str, Any]:
    return {
        "lengthscales": gp.params.lengthscales.tolist(),
        "output_variance": gp.params.output_variance,
        "noise_variance": gp.params.noise_variance,
        "train_inputs": gp.train_inputs.tolist(),
        "train_targets": gp.train_targets.tolist(),
        "per_point_noise": None if gp.per_point_noise is None else gp.per_point_noise.tolist(),
        "factor": gp.factor.tolist(),
        "dual_weights": gp.dual_weights.tolist(),
        "output_mean": gp.output_mean,
        "output_scale": gp.output_scale,
        "log_likelihood": gp.log_likelihood,
        "jitter": gp.jitter,
    }


def _gp_from_dict(data: Dict[str, Any]) -> TrainedGp:
    dimension = len(data["lengthscales"])
    inputs = np.asarray(data["train_inputs"], dtype=float).reshape(-1, dimension)
    noise = data["per_point_noise"]
    return TrainedGp(
        params=KernelParams(
            np.asarray(data["lengthscales"], dtype=float),
            data["output_variance"],
            data["noise_variance"],
        ),
        train_inputs=_frozen(inputs),
        train_targets=_frozen(np.asarray(data["train_targets"], dtype=float)),
        per_point_noise=None if noise is None else _frozen(np.asarray(noise, dtype=float)),
        factor=_frozen(np.asarray(data["factor"], dtype=float).reshape(inputs.shape[0], -1)),
        dual_weights=_frozen(np.asarray(data["dual_weights"], dtype=float)),
        output_mean=float(data["output_mean"]),
        output_scale=float(data["output_scale"]),
        log_likelihood=float(data["log_likelihood"]),
        jitter=float(data["jitter"]),
    )


def _augmented_to_dict(point: AugmentedObservation) -> Dict[str, Any]:
    trust = point.trust
    return {
        "input": point.input.tolist(),
        "value": point.value,
        "variance": point.variance,
        "source_level": point.source_level,
        "corrected_value": point.corrected_value,
        "hf_mean": point.hf_mean,
        "trust": {
            "point_index": trust.point_index,
            "d_min": trust.d_min,
            "radius": trust.radius,
            "neighborhood": list(trust.neighborhood),
            "weight_W": trust.weight_W,
            "alpha": trust.alpha,
        },
    }


def _augmented_from_dict(data: Dict[str, Any]) -> AugmentedObservation:
    trust = dict(data["trust"])
    trust["neighborhood"] = tuple(trust["neighborhood"])
    return AugmentedObservation(
        input=np.asarray(data["input"], dtype=float),
        value=float(data["value"]),
        variance=float(data["variance"]),
        source_level=int(data["source_level"]),
        trust=TrustWeight(**trust),
        corrected_value=float(data["corrected_value"]),
        hf_mean=float(data["hf_mean"]),
    )


def surrogate_to_dict(surrogate: MastSurrogate) -> Dict[str, Any]:
    # JSON object keys are strings; levels are restored as ints on load
    return {
        "format_version": FORMAT_VERSION,
        "hf_level": surrogate.hf_level,
        "weight_decay": surrogate.weight_decay,
        "costs": {str(k): v for k, v in surrogate.costs.items()},
        "sizes": {str(k): v for k, v in surrogate.sizes.items()},
        "stage1_noise": {str(k): v for k, v in surrogate.stage1_noise.items()},
        "normalizer": {
            "lower": surrogate.input_normalizer.lower.tolist(),
            "scale": surrogate.input_normalizer.scale.tolist(),
        },
        "stage1_gps": {str(k): _gp_to_dict(gp) for k, gp in surrogate.stage1_gps.items()},
        "discrepancy_gps": {str(k): _gp_to_dict(gp) for k, gp in surrogate.discrepancy_gps.items()},
        "augmented": [_augmented_to_dict(p) for p in surrogate.augmented],
        "fusion_gp": _gp_to_dict(surrogate.fusion_gp),
    }


def surrogate_from_dict(data: Dict[str, Any]) -> MastSurrogate:
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(
            f"Unsupported surrogate format_version {version!r}, expected {FORMAT_VERSION}"
        )
    try:
        return MastSurrogate(
            stage1_gps={int(k): _gp_from_dict(v) for k, v in data["stage1_gps"].items()},
            discrepancy_gps={int(k): _gp_from_dict(v) for k, v in data["discrepancy_gps"].items()},
            augmented=tuple(_augmented_from_dict(p) for p in data["augmented"]),
            fusion_gp=_gp_from_dict(data["fusion_gp"]),
            input_normalizer=InputNormalizer(
                lower=np.asarray(data["normalizer"]["lower"], dtype=float),
                scale=np.asarray(data["normalizer"]["scale"], dtype=float),
            ),
            stage1_noise={int(k): float(v) for k, v in data["stage1_noise"].items()},
            costs={int(k): float(v) for k, v in data["costs"].items()},
            hf_level=int(data["hf_level"]),
            weight_decay=data.get("weight_decay", "power"),
            sizes={int(k): int(v) for k, v in data.get("sizes", {}).items()},
        )
    except (KeyError, TypeError) as e:
        raise ConfigurationError(f"Malformed surrogate record: {e}") from e


def save_surrogate(surrogate: MastSurrogate, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(surrogate_to_dict(surrogate)), encoding="utf-8")
    logger.info(f"Saved surrogate to {target}")
    return target


def load_surrogate(path: Union[str, Path]) -> MastSurrogate:
    source = Path(path)
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{source} is not valid JSON: {e}") from e
    return surrogate_from_dict(data)
