"""Seeded experiment blocks, sensitivity sweeps and record files"""

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .benchmarks import BenchmarkProblem, FidelitySpec, eval_hf, make_problem, sample_observation
from .config import ExperimentConfig, surrogates_dir, worker_count
from .design import FLOOR_TOLERANCE, BudgetPlan, allocate_budget, derive_seed, lhs
from .errors import ConfigurationError, MastError
from .gp_core import FitOptions, fit_gp, predict
from .metrics import VARIANCE_FLOOR, MetricsRecord, mean_pdf, rmse
from .serialization import save_surrogate
from .surrogate import STAGE_BASELINE, FidelityDataset, InputNormalizer, build_mast, predict_mast

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RECORDS_FILE = "records.csv"
RECORD_COLUMNS = [
    "problem",
    "method",
    "repetition",
    "seed",
    "status",
    "rmse",
    "mean_pdf",
    "n_test",
    "counts",
    "consumed_cost",
    "budget",
    "test_digest",
    "hf_design_digest",
    "error",
]
SWEEP_KINDS = ("allocation", "budget_scale", "discrepancy")
SWEEP_ALIASES = {"budget": "budget_scale"}


@dataclass(frozen=True)
class RunRecord(MetricsRecord):
    """One (method, repetition) outcome; failed runs carry NaN metrics"""

    repetition: int
    status: str
    counts: str
    consumed_cost: float
    budget: float
    test_digest: str
    hf_design_digest: str
    error: str = ""

    def row(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in RECORD_COLUMNS}


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    grid: Tuple[float, ...]

    def __post_init__(self):
        kind = SWEEP_ALIASES.get(self.kind, self.kind)
        if kind not in SWEEP_KINDS:
            raise ConfigurationError(f"Unknown sweep kind '{self.kind}'. Known: {', '.join(SWEEP_KINDS)}")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ConfigurationError("sweep grid must not be empty")
        if kind == "allocation" and not all(0 < v <= 1 for v in grid):
            raise ConfigurationError(f"allocation grid must lie in (0, 1], got {grid}")
        if kind == "budget_scale" and not all(v > 0 for v in grid):
            raise ConfigurationError(f"budget_scale grid must be positive, got {grid}")
        if kind == "discrepancy" and not all(v >= 0 for v in grid):
            raise ConfigurationError(f"discrepancy grid must be non-negative, got {grid}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class ExperimentBlock:
    """Everything shared by the repetitions of one block"""

    name: str
    problem: BenchmarkProblem
    specs: Tuple[FidelitySpec, ...]
    fractions: Tuple[float, ...]
    budget: float
    test_inputs: np.ndarray
    test_truth: np.ndarray
    test_digest: str
    config_digest: str
    sweep_kind: Optional[str] = None
    grid_value: Optional[float] = None
    options: FitOptions = field(default_factory=FitOptions)

    def metadata(self) -> Dict[str, object]:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_digest": self.config_digest,
            "problem": self.problem.name,
            "dimension": self.problem.dimension,
            "sweep_kind": self.sweep_kind,
            "grid_value": self.grid_value,
            "budget": self.budget,
            "fractions": list(self.fractions),
            "costs": [s.cost for s in self.specs],
            "degradations": [s.degradation_d for s in self.specs],
            "n_test": int(self.test_truth.size),
            "test_digest": self.test_digest,
            "variance_floor": VARIANCE_FLOOR,
        }


def _digest(array: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(array, dtype=float).tobytes()).hexdigest()


def config_digest(config: ExperimentConfig) -> str:
    payload = config.model_dump_json(exclude={"output_dir", "save_surrogates"})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def fixed_test_set(problem: BenchmarkProblem, n_test: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed test inputs and HF truth; the seed depends only on the problem"""
    inputs = lhs(n_test, problem.bounds, derive_seed(problem.name, problem.dimension, "test"))
    return inputs, np.asarray(eval_hf(problem, inputs), dtype=float)


def _split_remainder(fractions: Sequence[float], hf_fraction: float) -> Tuple[float, ...]:
    """gamma_HF = hf_fraction; the rest goes to lower levels in their configured proportion"""
    lower = np.asarray(fractions[1:], dtype=float)
    weights = lower / lower.sum() if lower.sum() > 0 else np.full(lower.size, 1.0 / lower.size)
    remainder = (1.0 - hf_fraction) * weights
    # Absorb rounding in the last level so the vector sums to one
    remainder[-1] = max(0.0, 1.0 - hf_fraction - remainder[:-1].sum())
    return (float(hf_fraction), *(float(f) for f in remainder))


def make_block(
    config: ExperimentConfig,
    sweep_kind: Optional[str] = None,
    grid_value: Optional[float] = None,
) -> ExperimentBlock:
    problem = make_problem(config.problem, config.dimension)
    specs = list(config.specs(problem))
    fractions = tuple(config.resolved_fractions())
    budget = config.budget_rule.resolve(problem.dimension)
    name = f"{problem.name}-m{len(specs)}"

    if sweep_kind == "allocation":
        fractions = _split_remainder(fractions, grid_value)
    elif sweep_kind == "budget_scale":
        budget = float(grid_value * 5 * problem.dimension)
    elif sweep_kind == "discrepancy":
        specs[-1] = replace(specs[-1], degradation_d=float(grid_value))
    if sweep_kind is not None:
        name = f"{problem.name}-{sweep_kind}-{grid_value:g}"

    inputs, truth = fixed_test_set(problem, config.n_test)
    return ExperimentBlock(
        name=name,
        problem=problem,
        specs=tuple(specs),
        fractions=fractions,
        budget=budget,
        test_inputs=inputs,
        test_truth=truth,
        test_digest=_digest(inputs),
        config_digest=config_digest(config),
        sweep_kind=sweep_kind,
        grid_value=grid_value,
        options=config.fit_options(),
    )


def _observe(
    block: ExperimentBlock, spec: FidelitySpec, n: int, base_seed: int, repetition: int
) -> Tuple[np.ndarray, np.ndarray]:
    """LHS design and noisy observations of one level; seeds are keyed by level"""
    design = lhs(n, block.problem.bounds, derive_seed(base_seed, spec.level, repetition))
    rng = np.random.default_rng(derive_seed(base_seed, "obs", spec.level, repetition))
    values = np.asarray(sample_observation(block.problem, design, spec, rng), dtype=float)
    return design, values


def _record(
    block: ExperimentBlock,
    method: str,
    repetition: int,
    seed: int,
    counts: Sequence[int],
    consumed: float,
    hf_design: Optional[np.ndarray],
    means: Optional[np.ndarray] = None,
    variances: Optional[np.ndarray] = None,
    error: Optional[Exception] = None,
) -> RunRecord:
    if error is None:
        status, rmse_value = "ok", rmse(means, block.test_truth)
        pdf_value, message = mean_pdf(means, variances, block.test_truth), ""
    else:
        status, rmse_value, pdf_value = "failed", math.nan, math.nan
        message = f"{type(error).__name__}: {error}"
    return RunRecord(
        rmse=rmse_value,
        mean_pdf=pdf_value,
        n_test=int(block.test_truth.size),
        seed=seed,
        method=method,
        problem=block.problem.name,
        repetition=repetition,
        status=status,
        counts=";".join(str(int(n)) for n in counts),
        consumed_cost=float(consumed),
        budget=block.budget,
        test_digest=block.test_digest,
        hf_design_digest=_digest(hf_design) if hf_design is not None and hf_design.size else "",
        error=message,
    )


def _run_mast(block: ExperimentBlock, config: ExperimentConfig, repetition: int, seed: int) -> RunRecord:
    counts: Tuple[int, ...] = ()
    consumed = 0.0
    hf_design = None
    try:
        plan: BudgetPlan = allocate_budget(block.budget, block.fractions, [s.cost for s in block.specs])
        counts, consumed = plan.counts, plan.consumed_cost
        datasets = []
        for spec, n in zip(block.specs, plan.counts):
            if n:
                design, values = _observe(block, spec, n, config.base_seed, repetition)
            else:
                design, values = np.empty((0, block.problem.dimension)), np.empty(0)
            if spec is block.specs[0]:
                hf_design = design
            datasets.append(FidelityDataset(spec.level, design, values, spec.cost))
        surrogate = build_mast(
            datasets, block.problem.bounds, block.options, seed=seed, weight_decay=config.weight_decay
        )
        if config.save_surrogates:
            save_surrogate(surrogate, Path(surrogates_dir()) / block.name / f"rep{repetition}.json")
        means, variances = predict_mast(surrogate, block.test_inputs)
    except MastError as e:
        logger.warning(f"{block.name} repetition {repetition}: mast failed: {e}")
        return _record(block, "mast", repetition, seed, counts, consumed, hf_design, error=e)
    return _record(block, "mast", repetition, seed, counts, consumed, hf_design, means, variances)


def _run_single(
    block: ExperimentBlock, config: ExperimentConfig, method: str, repetition: int, seed: int
) -> RunRecord:
    """GP on one fidelity level with the full budget spent at that level's cost"""
    spec = block.specs[0] if method == "hf_only" else block.specs[-1]
    n = math.floor(block.budget / spec.cost + FLOOR_TOLERANCE)
    design = None
    try:
        if n < 2:
            raise ConfigurationError(f"budget {block.budget:g} buys {n} points at cost {spec.cost:g}")
        design, values = _observe(block, spec, n, config.base_seed, repetition)
        normalizer = InputNormalizer.from_bounds(block.problem.bounds)
        rng = np.random.default_rng(np.random.SeedSequence([seed, STAGE_BASELINE, 0]))
        gp = fit_gp(normalizer.normalize(design), values, block.options, rng=rng)
        means, variances = predict(gp, normalizer.normalize(block.test_inputs))
    except MastError as e:
        logger.warning(f"{block.name} repetition {repetition}: {method} failed: {e}")
        return _record(block, method, repetition, seed, [n], n * spec.cost, None, error=e)
    hf_design = design if method == "hf_only" else None
    return _record(block, method, repetition, seed, [n], n * spec.cost, hf_design, means, variances)


def run_repetition(config: ExperimentConfig, repetition: int, block: ExperimentBlock) -> List[RunRecord]:
    """All methods of one repetition; depends only on (config, repetition)"""
    seed = derive_seed(config.base_seed, repetition)
    records = []
    for method in config.methods:
        if method == "mast":
            records.append(_run_mast(block, config, repetition, seed))
        else:
            records.append(_run_single(block, config, method, repetition, seed))
    logger.info(f"{block.name}: repetition {repetition + 1}/{config.repetitions} done")
    return records


def write_records(block: ExperimentBlock, records: Sequence[RunRecord], output_dir) -> Path:
    """Metadata comment line, then one CSV row per (method, repetition)"""
    directory = Path(output_dir) / block.name
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RECORDS_FILE
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# {json.dumps(block.metadata(), sort_keys=True)}\n")
        writer = csv.DictWriter(f, fieldnames=RECORD_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(record.row())
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def _run_block(config: ExperimentConfig, block: ExperimentBlock, write: bool) -> List[RunRecord]:
    with ThreadPoolExecutor(max_workers=min(worker_count(), config.repetitions)) as pool:
        per_repetition = list(
            pool.map(lambda r: run_repetition(config, r, block), range(config.repetitions))
        )
    records = [record for batch in per_repetition for record in batch]
    failed = failed_count(records)
    if failed:
        logger.warning(f"{block.name}: {failed} of {len(records)} runs failed")
    if write:
        write_records(block, records, config.output_dir)
    return records


def run_experiment(config: ExperimentConfig, write: bool = True) -> List[RunRecord]:
    """
    Run every method for every repetition of one experiment block.

    Repetitions run concurrently, capped by MAST_THREADS; records are
    ordered by (repetition, method) and written after all complete.
    """
    block = make_block(config)
    logger.info(
        f"Running {block.name}: budget {block.budget:g}, fractions {block.fractions}, "
        f"{config.repetitions} repetitions"
    )
    return _run_block(config, block, write)


def run_sweep(config: ExperimentConfig, sweep: SweepSpec, write: bool = True) -> Dict[float, List[RunRecord]]:
    """One full experiment block per grid value, keyed by that value"""
    results: Dict[float, List[RunRecord]] = {}
    for value in sweep.grid:
        block = make_block(config, sweep.kind, value)
        logger.info(f"Sweep {sweep.kind}={value:g}: block {block.name}")
        results[value] = _run_block(config, block, write)
    return results


def failed_count(records: Sequence[RunRecord]) -> int:
    return sum(record.status != "ok" for record in records)


