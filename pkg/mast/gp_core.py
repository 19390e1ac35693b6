"""Exact Gaussian process regression with an RBF-ARD kernel.

Targets are standardized per fit and the prior mean is zero in that space.
Hyperparameters live in log space during optimization; the optimization
vector is ``[log l_1, ..., log l_D, log output_variance, log noise_variance]``.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .errors import ContractViolationError, FactorizationError, FittingError

logger = logging.getLogger(__name__)

DEFAULT_JITTER_SCHEDULE: Tuple[float, ...] = (1e-10, 1e-8, 1e-6, 1e-4)
OUTPUT_SCALE_FLOOR = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))

# Heuristic first restart, in natural units
_INITIAL_LENGTHSCALE = 0.5
_INITIAL_OUTPUT_VARIANCE = 1.0
_INITIAL_NOISE_VARIANCE = 1e-2


def _as_matrix(values, name: str) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(values, dtype=float))
    if matrix.ndim != 2:
        raise ContractViolationError(f"{name} must be a 2-D matrix, got shape {matrix.shape}")
    return matrix


def _as_vector(values, name: str) -> np.ndarray:
    vector = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(vector)):
        raise ContractViolationError(f"{name} contains non-finite values")
    return vector


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class KernelParams:
    """RBF-ARD hyperparameters in standardized-output units"""

    lengthscales: np.ndarray
    output_variance: float
    noise_variance: float = 0.0

    def __post_init__(self):
        lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if lengthscales.ndim != 1 or lengthscales.size == 0:
            raise ContractViolationError("lengthscales must be a non-empty vector")
        if not np.all(lengthscales > 0):
            raise ContractViolationError(f"lengthscales must be positive, got {lengthscales}")
        if not self.output_variance > 0:
            raise ContractViolationError(
                f"output_variance must be positive, got {self.output_variance}"
            )
        if not self.noise_variance >= 0:
            raise ContractViolationError(
                f"noise_variance must be non-negative, got {self.noise_variance}"
            )
        object.__setattr__(self, "lengthscales", _frozen(lengthscales))
        object.__setattr__(self, "output_variance", float(self.output_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dimension(self) -> int:
        return int(self.lengthscales.size)

    def to_log_vector(self) -> np.ndarray:
        noise = np.log(self.noise_variance) if self.noise_variance > 0 else -np.inf
        return np.concatenate(
            [np.log(self.lengthscales), [np.log(self.output_variance), noise]]
        )

    @classmethod
    def from_log_vector(cls, theta: Sequence[float], dimension: int) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        if theta.size != dimension + 2:
            raise ContractViolationError(
                f"expected {dimension + 2} log-hyperparameters, got {theta.size}"
            )
        return cls(
            lengthscales=np.exp(theta[:dimension]),
            output_variance=float(np.exp(theta[dimension])),
            noise_variance=float(np.exp(theta[dimension + 1])),
        )


@dataclass(frozen=True)
class FitOptions:
    """Settings for Type-II maximum likelihood fitting.

    Bounds are given in natural units of the standardized problem;
    ``parameter_bounds`` returns them per hyperparameter in log space.
    ``fixed_noise`` (original output units) is only read when
    ``learn_noise`` is false and no per-point noise is supplied; when it is
    ``None`` the lower noise bound is held instead.
    """

    restarts: int = 5
    max_iterations: int = 200
    lengthscale_bounds: Tuple[float, float] = (1e-3, 10.0)
    output_variance_bounds: Tuple[float, float] = (1e-4, 1e2)
    noise_variance_bounds: Tuple[float, float] = (1e-8, 1.0)
    jitter_schedule: Tuple[float, ...] = DEFAULT_JITTER_SCHEDULE
    learn_noise: bool = True
    fixed_noise: Optional[float] = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ContractViolationError("restarts must be a positive integer")
        if self.max_iterations < 1:
            raise ContractViolationError("max_iterations must be a positive integer")
        for name in ("lengthscale_bounds", "output_variance_bounds", "noise_variance_bounds"):
            lower, upper = getattr(self, name)
            if not 0 < lower < upper:
                raise ContractViolationError(f"{name} must satisfy 0 < lower < upper")
        schedule = tuple(float(j) for j in self.jitter_schedule)
        if any(j < 0 for j in schedule) or any(a >= b for a, b in zip(schedule, schedule[1:])):
            raise ContractViolationError("jitter_schedule must be increasing and non-negative")
        object.__setattr__(self, "jitter_schedule", schedule)
        if self.fixed_noise is not None and self.fixed_noise < 0:
            raise ContractViolationError("fixed_noise must be non-negative")

    def parameter_bounds(self, dimension: int) -> List[Tuple[float, float]]:
        """Per-hyperparameter (lower, upper) pairs in log space"""
        lengthscale = tuple(np.log(self.lengthscale_bounds))
        return [lengthscale] * dimension + [
            tuple(np.log(self.output_variance_bounds)),
            tuple(np.log(self.noise_variance_bounds)),
        ]


@dataclass(frozen=True)
class TrainedGp:
    """A conditioned GP; immutable and safe to share between threads"""

    params: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    per_point_noise: Optional[np.ndarray]
    factor: np.ndarray
    dual_weights: np.ndarray
    output_mean: float
    output_scale: float
    log_likelihood: float
    jitter: float = 0.0

    @property
    def output_transform(self) -> Tuple[float, float]:
        return self.output_mean, self.output_scale

    @property
    def n_train(self) -> int:
        return int(self.train_inputs.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.train_inputs.shape[1])

    def noise_diagonal(self) -> np.ndarray:
        """Observation noise variances in standardized units"""
        if self.per_point_noise is not None:
            return np.array(self.per_point_noise)
        return np.full(self.n_train, self.params.noise_variance)

    def noise_in_output_units(self) -> np.ndarray:
        return self.noise_diagonal() * self.output_scale**2


def kernel_matrix(x_rows, z_rows, params: KernelParams) -> np.ndarray:
    """Squared exponential ARD covariance between two sets of rows"""
    x = _as_matrix(x_rows, "x_rows")
    z = _as_matrix(z_rows, "z_rows")
    if x.shape[1] != params.dimension or z.shape[1] != params.dimension:
        raise ContractViolationError(
            f"inputs have {x.shape[1]} and {z.shape[1]} columns, "
            f"kernel has {params.dimension} lengthscales"
        )
    scaled_sq = cdist(x / params.lengthscales, z / params.lengthscales, "sqeuclidean")
    return params.output_variance * np.exp(-0.5 * scaled_sq)


def _factorize(
    matrix: np.ndarray, jitter_schedule: Sequence[float]
) -> Tuple[np.ndarray, float, List[float]]:
    """Lower Cholesky factor, escalating diagonal jitter on failure"""
    history: List[float] = []
    identity = np.eye(matrix.shape[0])
    for jitter in (0.0, *jitter_schedule):
        history.append(jitter)
        try:
            candidate = matrix + jitter * identity if jitter else matrix
            return cholesky(candidate, lower=True), jitter, history
        except (LinAlgError, ValueError):
            logger.debug(f"Cholesky failed with jitter {jitter:g}, escalating")
    raise FactorizationError(
        f"Covariance matrix not positive definite after jitter {history[-1]:g}",
        history,
    )


def _noise_vector(per_point_noise, n: int) -> np.ndarray:
    noise = _as_vector(per_point_noise, "per_point_noise")
    if noise.size != n:
        raise ContractViolationError(f"per_point_noise has {noise.size} entries, expected {n}")
    if np.any(noise < 0):
        raise ContractViolationError("per_point_noise entries must be non-negative")
    return noise


def _lml_terms(
    params: KernelParams,
    x: np.ndarray,
    y: np.ndarray,
    noise: np.ndarray,
    learn_noise: bool,
    jitter_schedule: Sequence[float],
) -> Tuple[float, np.ndarray]:
    n, dim = x.shape
    gram = kernel_matrix(x, x, params)
    factor, _, _ = _factorize(gram + np.diag(noise), jitter_schedule)
    alpha = cho_solve((factor, True), y)
    value = -0.5 * y @ alpha - np.log(np.diag(factor)).sum() - 0.5 * n * LOG_2PI

    # 0.5 * tr((alpha alpha^T - K^-1) dK/dtheta) for each log-hyperparameter
    inner = np.outer(alpha, alpha) - cho_solve((factor, True), np.eye(n))
    weighted = inner * gram
    gradient = np.zeros(dim + 2)
    for d in range(dim):
        diff_sq = (x[:, d, None] - x[None, :, d]) ** 2 / params.lengthscales[d] ** 2
        gradient[d] = 0.5 * np.sum(weighted * diff_sq)
    gradient[dim] = 0.5 * np.sum(weighted)
    if learn_noise:
        gradient[dim + 1] = 0.5 * params.noise_variance * np.trace(inner)
    return float(value), gradient


def log_marginal_likelihood(
    params: KernelParams,
    inputs,
    targets,
    per_point_noise=None,
    jitter_schedule: Sequence[float] = DEFAULT_JITTER_SCHEDULE,
) -> Tuple[float, np.ndarray]:
    """
    Log evidence of the targets and its gradient over log-hyperparameters.

    Targets are used as given (no standardization). When a per-point noise
    vector is supplied the noise entry of the gradient is zero.

    Raises:
        FactorizationError: If K + noise stays indefinite after all jitter
    """
    x = _as_matrix(inputs, "inputs")
    y = _as_vector(targets, "targets")
    n = x.shape[0]
    if n < 1 or y.size != n:
        raise ContractViolationError(f"need N >= 1 targets matching {n} input rows")
    if per_point_noise is not None:
        noise = _noise_vector(per_point_noise, n)
    else:
        noise = np.full(n, params.noise_variance)
    return _lml_terms(params, x, y, noise, per_point_noise is None, jitter_schedule)


def _standardization(y: np.ndarray) -> Tuple[float, float]:
    offset = float(np.mean(y))
    scale = max(float(np.std(y)), OUTPUT_SCALE_FLOOR)
    return offset, scale


def _posterior(
    params: KernelParams,
    x: np.ndarray,
    y_std: np.ndarray,
    noise: np.ndarray,
    per_point: bool,
    offset: float,
    scale: float,
    jitter_schedule: Sequence[float],
) -> TrainedGp:
    n = x.shape[0]
    gram = kernel_matrix(x, x, params)
    factor, jitter, _ = _factorize(gram + np.diag(noise), jitter_schedule)
    if jitter:
        logger.info(f"Posterior for {n} points needed diagonal jitter {jitter:g}")
    dual = cho_solve((factor, True), y_std)
    log_likelihood = -0.5 * y_std @ dual - np.log(np.diag(factor)).sum() - 0.5 * n * LOG_2PI
    return TrainedGp(
        params=params,
        train_inputs=_frozen(x),
        train_targets=_frozen(y_std),
        per_point_noise=_frozen(noise) if per_point else None,
        factor=_frozen(factor),
        dual_weights=_frozen(dual),
        output_mean=offset,
        output_scale=scale,
        log_likelihood=float(log_likelihood),
        jitter=jitter,
    )


def condition_gp(
    params: KernelParams,
    inputs,
    targets,
    per_point_noise=None,
    standardize: bool = True,
    jitter_schedule: Sequence[float] = DEFAULT_JITTER_SCHEDULE,
) -> TrainedGp:
    """
    Condition a GP on data at fixed hyperparameters.

    Args:
        params: Kernel hyperparameters in standardized-output units
        inputs: N x D normalized inputs
        targets: N targets in original output units
        per_point_noise: Optional noise variances in original output units;
            overrides ``params.noise_variance``
        standardize: Whether to standardize targets (identity transform otherwise)
    """
    x = _as_matrix(inputs, "inputs")
    y = _as_vector(targets, "targets")
    if y.size != x.shape[0]:
        raise ContractViolationError("targets must match input rows")
    offset, scale = _standardization(y) if standardize else (0.0, 1.0)
    y_std = (y - offset) / scale
    if per_point_noise is not None:
        noise = _noise_vector(per_point_noise, y.size) / scale**2
        params = KernelParams(params.lengthscales, params.output_variance, 0.0)
    else:
        noise = np.full(y.size, params.noise_variance)
    return _posterior(
        params, x, y_std, noise, per_point_noise is not None, offset, scale, jitter_schedule
    )


def fit_gp(
    inputs,
    targets,
    options: Optional[FitOptions] = None,
    per_point_noise=None,
    rng: Optional[np.random.Generator] = None,
) -> TrainedGp:
    """
    Fit kernel hyperparameters by multi-start L-BFGS-B on the log evidence.

    Args:
        inputs: N x D inputs, already normalized to the unit hypercube
        targets: N targets in original output units
        options: Fitting settings; defaults to ``FitOptions()``
        per_point_noise: Fixed noise variances in original output units.
            Requires ``options.learn_noise`` to be false.
        rng: Generator for the random restarts

    Returns:
        The restart with the highest log marginal likelihood (earliest wins ties)

    Raises:
        ContractViolationError: On shape or option mismatches
        FittingError: If every restart fails to factorize
    """
    options = options or FitOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    x = _as_matrix(inputs, "inputs")
    y = _as_vector(targets, "targets")
    n, dim = x.shape
    if n < 1 or y.size != n:
        raise ContractViolationError(f"need N >= 1 targets matching {n} input rows")
    if per_point_noise is not None and options.learn_noise:
        raise ContractViolationError("per_point_noise is held fixed; set learn_noise=False")
    if options.learn_noise and n < 2:
        raise ContractViolationError("learning the noise variance needs at least 2 points")

    offset, scale = _standardization(y)
    y_std = (y - offset) / scale
    if per_point_noise is not None:
        fixed_noise = _noise_vector(per_point_noise, n) / scale**2
    elif not options.learn_noise:
        if options.fixed_noise is None:
            fixed_noise = np.full(n, options.noise_variance_bounds[0])
        else:
            fixed_noise = np.full(n, options.fixed_noise / scale**2)
    else:
        fixed_noise = None

    bounds = np.array(options.parameter_bounds(dim))
    lows, highs = bounds[:, 0], bounds[:, 1]
    free = np.ones(dim + 2, dtype=bool)
    free[dim + 1] = options.learn_noise

    heuristic = np.log(
        np.concatenate(
            [np.full(dim, _INITIAL_LENGTHSCALE), [_INITIAL_OUTPUT_VARIANCE, _INITIAL_NOISE_VARIANCE]]
        )
    )
    starts = [np.clip(heuristic, lows, highs)]
    for _ in range(options.restarts - 1):
        starts.append(rng.uniform(lows, highs))

    def objective(free_theta: np.ndarray, base: np.ndarray) -> Tuple[float, np.ndarray]:
        theta = base.copy()
        theta[free] = free_theta
        params = KernelParams.from_log_vector(theta, dim)
        noise = fixed_noise if fixed_noise is not None else np.full(n, params.noise_variance)
        value, gradient = _lml_terms(
            params, x, y_std, noise, options.learn_noise, options.jitter_schedule
        )
        return -value, -gradient[free]

    best_theta: Optional[np.ndarray] = None
    best_value = -np.inf
    failures: List[List[float]] = []
    for index, start in enumerate(starts):
        try:
            result = minimize(
                objective,
                start[free],
                args=(start,),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds[free],
                options={"maxiter": options.max_iterations},
            )
        except FactorizationError as e:
            logger.warning(f"Restart {index} failed to factorize: {e}")
            failures.append(e.jitter_history)
            continue
        value = -float(result.fun)
        logger.debug(f"Restart {index}: log marginal likelihood {value:.6g}")
        if np.isfinite(value) and value > best_value:
            best_value = value
            best_theta = start.copy()
            best_theta[free] = result.x

    if best_theta is None:
        raise FittingError(f"All {len(starts)} restarts failed for {n} points", failures)

    params = KernelParams.from_log_vector(best_theta, dim)
    if fixed_noise is not None:
        noise = fixed_noise
        held = float(fixed_noise[0]) if per_point_noise is None else 0.0
        params = KernelParams(params.lengthscales, params.output_variance, held)
    else:
        noise = np.full(n, params.noise_variance)
    return _posterior(
        params,
        x,
        y_std,
        noise,
        per_point_noise is not None,
        offset,
        scale,
        options.jitter_schedule,
    )


def predict(gp: TrainedGp, query_rows) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance in original output units"""
    queries = _as_matrix(query_rows, "query_rows")
    cross = kernel_matrix(queries, gp.train_inputs, gp.params)
    mean_std = cross @ gp.dual_weights
    solved = solve_triangular(gp.factor, cross.T, lower=True)
    var_std = np.maximum(gp.params.output_variance - np.sum(solved**2, axis=0), 0.0)
    return mean_std * gp.output_scale + gp.output_mean, var_std * gp.output_scale**2
