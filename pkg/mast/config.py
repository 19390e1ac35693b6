"""Experiment configuration files and process settings"""

import json
import logging
import os
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .benchmarks import FidelitySpec, default_fidelity_specs, make_problem
from .design import FRACTION_TOLERANCE
from .errors import ConfigurationError, MastError
from .gp_core import FitOptions
from .surrogate import WEIGHT_DECAYS

logger = logging.getLogger(__name__)

METHODS = ("mast", "hf_only", "lf_only")
DEFAULT_COSTS = {2: (1.0, 0.1), 3: (1.0, 0.2, 0.1)}
DEFAULT_FRACTIONS = {2: (0.7, 0.3), 3: (0.5, 0.3, 0.2)}
DEFAULT_DEGRADATIONS = {2: (0.0, 1.0), 3: (0.0, 0.5, 1.0)}


class FidelitySpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: int = Field(ge=1)
    degradation_d: float = Field(ge=0)
    cost: float = Field(gt=0)
    noise_std: Optional[float] = Field(default=None, ge=0)

    def to_spec(self, problem, top_level: int) -> FidelitySpec:
        """Unset noise falls back to the problem default for this level"""
        noise = self.noise_std
        if noise is None:
            high_noise, low_noise = problem.noise_std
            noise = high_noise if self.level == top_level else low_noise
        return FidelitySpec(self.level, self.degradation_d, self.cost, float(noise))


class BudgetRule(BaseModel):
    """Either an absolute budget or a multiple of the base budget 5D"""

    model_config = ConfigDict(extra="forbid")

    total: Optional[float] = Field(default=None, gt=0)
    scale: float = Field(default=1.0, gt=0)

    def resolve(self, dimension: int) -> float:
        if self.total is not None:
            return float(self.total)
        return float(self.scale * 5 * dimension)


class ExperimentConfig(BaseModel):
    """
    One experiment block. Fidelity specs and fractions are ordered highest
    fidelity first. When the specs are omitted, `levels` picks the default
    two-fidelity (costs 1.0/0.1, split 70/30, d 0/1) or three-fidelity
    (costs 1.0/0.2/0.1, split 50/30/20, d 0/0.5/1) setup.
    """

    model_config = ConfigDict(extra="forbid")

    problem: str
    dimension: Optional[int] = None
    levels: Optional[Literal[2, 3]] = None
    fidelity_specs: Optional[List[FidelitySpecModel]] = None
    budget_rule: BudgetRule = Field(default_factory=BudgetRule)
    fractions: Optional[List[float]] = None
    repetitions: int = Field(default=25, ge=1)
    n_test: int = Field(default=1000, ge=1)
    base_seed: int = 0
    methods: List[Literal["mast", "hf_only", "lf_only"]] = Field(
        default_factory=lambda: list(METHODS)
    )
    output_dir: str = "results"
    fit_restarts: int = Field(default=5, ge=1)
    max_iterations: int = Field(default=200, ge=1)
    weight_decay: str = "power"
    save_surrogates: bool = False

    @field_validator("methods")
    @classmethod
    def _unique_methods(cls, methods: List[str]) -> List[str]:
        if not methods or len(set(methods)) != len(methods):
            raise ValueError("methods must be a non-empty list without duplicates")
        return methods

    @field_validator("weight_decay")
    @classmethod
    def _known_decay(cls, decay: str) -> str:
        if decay not in WEIGHT_DECAYS:
            raise ValueError(f"weight_decay must be one of {sorted(WEIGHT_DECAYS)}")
        return decay

    @model_validator(mode="after")
    def _check_levels(self) -> "ExperimentConfig":
        try:
            problem = make_problem(self.problem, self.dimension)
        except MastError as e:
            raise ValueError(str(e)) from e
        if self.fidelity_specs and self.levels and self.levels != len(self.fidelity_specs):
            raise ValueError(
                f"levels is {self.levels} but {len(self.fidelity_specs)} fidelity_specs are given"
            )
        specs = self.specs(problem)
        levels = [s.level for s in specs]
        if levels != list(range(len(specs), 0, -1)):
            raise ValueError(f"fidelity_specs must list levels M..1, got {levels}")
        if specs[0].degradation_d != 0:
            raise ValueError(
                f"the highest level must be exact (degradation_d = 0), got {specs[0].degradation_d}"
            )
        costs = [s.cost for s in specs]
        if any(a <= b for a, b in zip(costs, costs[1:])):
            raise ValueError(f"costs must strictly decrease from the highest level, got {costs}")
        fractions = self.resolved_fractions()
        if len(fractions) != len(specs):
            raise ValueError(f"{len(fractions)} fractions for {len(specs)} fidelity levels")
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"fractions must be non-negative and sum to 1, got {fractions}")
        return self

    @property
    def n_levels(self) -> int:
        if self.fidelity_specs:
            return len(self.fidelity_specs)
        return self.levels or 2

    def specs(self, problem=None) -> List[FidelitySpec]:
        """Fidelity specs, highest fidelity first"""
        problem = problem or make_problem(self.problem, self.dimension)
        if self.fidelity_specs:
            top_level = max(s.level for s in self.fidelity_specs)
            return [s.to_spec(problem, top_level) for s in self.fidelity_specs]
        n = self.n_levels
        return default_fidelity_specs(problem, DEFAULT_DEGRADATIONS[n], DEFAULT_COSTS[n])

    def resolved_fractions(self) -> List[float]:
        if self.fractions is not None:
            return [float(f) for f in self.fractions]
        if self.n_levels in DEFAULT_FRACTIONS:
            return list(DEFAULT_FRACTIONS[self.n_levels])
        raise ValueError(f"no default fractions for {self.n_levels} levels; set fractions")

    def fit_options(self) -> FitOptions:
        return FitOptions(restarts=self.fit_restarts, max_iterations=self.max_iterations)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment config from a YAML or JSON file.

    Raises:
        ConfigurationError: If the file cannot be read or fails validation
    """
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
        data = json.loads(text) if source.suffix == ".json" else yaml.safe_load(text)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigurationError(f"Cannot read config {source}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {source} must contain a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid config {source}: {e}") from e


def worker_count() -> int:
    """Work-item cap from MAST_THREADS; 0 or unset means one per CPU"""
    raw = os.getenv("MAST_THREADS", "0")
    try:
        threads = int(raw)
    except ValueError as e:
        raise ConfigurationError(f"MAST_THREADS must be an integer, got '{raw}'") from e
    if threads < 0:
        raise ConfigurationError(f"MAST_THREADS must be >= 0, got {threads}")
    return threads or (os.cpu_count() or 1)


def surrogates_dir() -> str:
    return os.getenv("SURROGATES_DIR", "surrogates")
