import numpy as np
import pytest
from scipy.linalg import cholesky

import mast.gp_core as gp_core
from mast.errors import ContractViolationError, FactorizationError, FittingError
from mast.gp_core import (
    FitOptions,
    KernelParams,
    condition_gp,
    fit_gp,
    kernel_matrix,
    log_marginal_likelihood,
    predict,
)


def _random_params(rng, dim):
    return KernelParams(
        lengthscales=rng.uniform(0.3, 2.0, dim),
        output_variance=rng.uniform(0.5, 2.0),
        noise_variance=rng.uniform(0.05, 0.5),
    )


def test_kernel_identical_points():
    """Zero distance gives the output variance"""
    params = KernelParams([0.3, 2.0], 1.7)
    x = np.array([[0.2, 0.9]])
    assert kernel_matrix(x, x, params)[0, 0] == pytest.approx(1.7, abs=0)


def test_kernel_hand_value():
    """D=1, l=1, unit variance at distance sqrt(2) gives exp(-1)"""
    params = KernelParams([1.0], 1.0)
    value = kernel_matrix([[0.0]], [[np.sqrt(2.0)]], params)[0, 0]
    assert value == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_kernel_decays_with_separation():
    """Entries decrease monotonically toward zero"""
    params = KernelParams([0.5, 0.5], 1.0)
    distances = np.linspace(0.0, 8.0, 50)
    z = np.column_stack([distances, np.zeros_like(distances)])
    values = kernel_matrix([[0.0, 0.0]], z, params)[0]
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 1e-12


def test_kernel_dimension_mismatch():
    """Column counts must match the lengthscale count"""
    with pytest.raises(ContractViolationError):
        kernel_matrix(np.zeros((2, 3)), np.zeros((2, 3)), KernelParams([1.0, 1.0], 1.0))


def test_kernel_symmetric_positive_definite():
    """K(X, X) is symmetric and factorizes with 1e-10 jitter"""
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = rng.uniform(size=(200, 10))
        params = KernelParams(rng.uniform(0.3, 0.6, 10), rng.uniform(0.5, 2.0))
        gram = kernel_matrix(x, x, params)
        np.testing.assert_array_equal(gram, gram.T)
        cholesky(gram + 1e-10 * np.eye(200), lower=True)


def test_log_likelihood_single_zero_target():
    """N=1 with y=0 leaves only the determinant term"""
    params = KernelParams([0.7], 1.3, 0.2)
    value, _ = log_marginal_likelihood(params, [[0.4]], [0.0])
    assert value == pytest.approx(-0.5 * np.log(2 * np.pi * 1.5), rel=1e-12)


def test_log_likelihood_single_unit_target():
    """N=1, y=1 and total variance 1 gives -1/2 - log(2 pi)/2"""
    params = KernelParams([0.7], 0.6, 0.4)
    value, _ = log_marginal_likelihood(params, [[0.4]], [1.0])
    assert value == pytest.approx(-1.418939, abs=1e-6)


def test_log_likelihood_gradient_matches_finite_differences():
    """Analytic gradient agrees with central differences on 50 random instances"""
    rng = np.random.default_rng(11)
    step = 1e-5
    for _ in range(50):
        dim = int(rng.integers(1, 4))
        x = rng.uniform(size=(6, dim))
        y = rng.normal(size=6)
        params = _random_params(rng, dim)
        _, gradient = log_marginal_likelihood(params, x, y)
        theta = params.to_log_vector()
        numeric = np.zeros_like(theta)
        for k in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[k] += step
            down[k] -= step
            f_up, _ = log_marginal_likelihood(KernelParams.from_log_vector(up, dim), x, y)
            f_down, _ = log_marginal_likelihood(KernelParams.from_log_vector(down, dim), x, y)
            numeric[k] = (f_up - f_down) / (2 * step)
        np.testing.assert_allclose(gradient, numeric, rtol=1e-4, atol=1e-6)


def test_log_likelihood_fixed_noise_has_zero_noise_gradient():
    """Per-point noise is held, so its gradient entry is zero"""
    rng = np.random.default_rng(2)
    x = rng.uniform(size=(5, 2))
    _, gradient = log_marginal_likelihood(
        KernelParams([0.5, 0.5], 1.0), x, rng.normal(size=5), per_point_noise=np.full(5, 0.1)
    )
    assert gradient[-1] == 0.0


def test_factorize_raises_with_history():
    """An indefinite matrix exhausts the jitter schedule"""
    with pytest.raises(FactorizationError) as info:
        gp_core._factorize(np.array([[1.0, 2.0], [2.0, 1.0]]), (1e-10, 1e-8))
    assert info.value.jitter_history == [0.0, 1e-10, 1e-8]


def test_fit_zero_targets():
    """All-zero targets give a zero posterior mean"""
    x = np.linspace(0, 1, 6)[:, None]
    gp = fit_gp(x, np.zeros(6), FitOptions(restarts=2))
    means, _ = predict(gp, np.linspace(0, 1, 25)[:, None])
    assert np.max(np.abs(means)) < 1e-6


def test_fit_interpolates_noiseless_line():
    """Noise-free f(x) = x is reproduced at the training points"""
    x = np.linspace(0, 1, 5)[:, None]
    y = x[:, 0].copy()
    gp = fit_gp(x, y)
    means, _ = predict(gp, x)
    np.testing.assert_allclose(means, y, atol=1e-4)


def test_fit_recovers_noise_variance():
    """Noise learned from GP draws lands within a factor of 3 of the truth"""
    truth = KernelParams([0.4, 0.4], 1.0, 0.1)
    hits = 0
    for seed in range(25):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=(40, 2))
        cov = kernel_matrix(x, x, truth) + truth.noise_variance * np.eye(40)
        y = cholesky(cov, lower=True) @ rng.normal(size=40)
        gp = fit_gp(x, y, FitOptions(restarts=3), rng=np.random.default_rng(seed))
        recovered = gp.params.noise_variance * gp.output_scale**2
        hits += truth.noise_variance / 3 <= recovered <= truth.noise_variance * 3
    assert hits >= 20


def test_fit_is_deterministic_for_a_seed():
    """Same generator seed gives identical hyperparameters"""
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(12, 2))
    y = np.sin(4 * x[:, 0]) + x[:, 1]
    first = fit_gp(x, y, FitOptions(restarts=3), rng=np.random.default_rng(5))
    second = fit_gp(x, y, FitOptions(restarts=3), rng=np.random.default_rng(5))
    np.testing.assert_array_equal(first.params.to_log_vector(), second.params.to_log_vector())


def test_fit_rejects_per_point_noise_while_learning():
    """Per-point noise requires learn_noise=False"""
    with pytest.raises(ContractViolationError):
        fit_gp([[0.0], [0.5], [1.0]], [0.0, 1.0, 0.0], per_point_noise=[0.1] * 3)


def test_fit_requires_two_points_to_learn_noise():
    """A single point cannot identify the noise variance"""
    with pytest.raises(ContractViolationError):
        fit_gp([[0.5]], [1.0])


def test_fit_raises_when_every_restart_fails(monkeypatch):
    """Factorization failures in all restarts surface as FittingError"""

    def always_fail(*args, **kwargs):
        raise FactorizationError("indefinite", [0.0, 1e-10])

    monkeypatch.setattr(gp_core, "_lml_terms", always_fail)
    with pytest.raises(FittingError) as info:
        fit_gp(np.linspace(0, 1, 4)[:, None], [0.0, 1.0, 0.5, 0.2], FitOptions(restarts=3))
    assert len(info.value.jitter_history) == 3


def test_factor_reconstructs_covariance(fast_options):
    """factor @ factor.T equals K + noise to 1e-8"""
    rng = np.random.default_rng(4)
    x = rng.uniform(size=(15, 2))
    gp = fit_gp(x, np.cos(3 * x[:, 0]) * x[:, 1], fast_options)
    expected = kernel_matrix(x, x, gp.params) + np.diag(gp.noise_diagonal()) + gp.jitter * np.eye(15)
    np.testing.assert_allclose(gp.factor @ gp.factor.T, expected, rtol=1e-8, atol=1e-12)


def test_predict_reproduces_training_point():
    """A near-noiseless GP returns its targets with tiny variance"""
    x = np.array([[0.0], [0.3], [0.7], [1.0]])
    y = np.array([1.0, -0.5, 2.0, 0.3])
    params = KernelParams([0.2], 1.0, 1e-10)
    gp = condition_gp(params, x, y)
    means, variances = predict(gp, x)
    np.testing.assert_allclose(means, y, atol=1e-4)
    assert np.all(variances < 1e-4 * params.output_variance * gp.output_scale**2)


def test_predict_reverts_to_prior_far_away():
    """Far queries return the target mean and the prior variance"""
    x = np.array([[0.1], [0.4], [0.6]])
    y = np.array([3.0, 5.0, 4.0])
    gp = condition_gp(KernelParams([0.1], 1.3, 0.01), x, y)
    means, variances = predict(gp, [[100.0]])
    assert means[0] == pytest.approx(4.0, abs=1e-9)
    assert variances[0] == pytest.approx(1.3 * gp.output_scale**2, rel=1e-9)


def test_predict_single_point_hand_case():
    """One pair (0, y0) predicts exp(-1) y0 and 1 - exp(-2) at sqrt(2)"""
    y0 = 2.5
    gp = condition_gp(KernelParams([1.0], 1.0, 0.0), [[0.0]], [y0], standardize=False)
    means, variances = predict(gp, [[np.sqrt(2.0)]])
    assert means[0] == pytest.approx(np.exp(-1.0) * y0, rel=1e-12)
    assert variances[0] == pytest.approx(1 - np.exp(-2.0), rel=1e-12)


def test_predict_variance_bounds(fast_options):
    """Variances stay within [0, (output + max noise) variance]"""
    rng = np.random.default_rng(9)
    x = rng.uniform(size=(20, 3))
    gp = fit_gp(x, np.sum(x**2, axis=1) + 0.05 * rng.normal(size=20), fast_options)
    _, variances = predict(gp, rng.uniform(-0.5, 1.5, size=(200, 3)))
    upper = (gp.params.output_variance + gp.noise_diagonal().max()) * gp.output_scale**2
    assert np.all(variances >= 0)
    assert np.all(variances <= upper)


def test_predict_invariant_to_row_permutation():
    """Permuting the training rows leaves predictions unchanged"""
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(10, 2))
    y = np.sin(5 * x[:, 0]) - x[:, 1]
    params = KernelParams([0.3, 0.5], 1.0, 0.01)
    order = rng.permutation(10)
    queries = rng.uniform(size=(30, 2))
    first = predict(condition_gp(params, x, y), queries)
    second = predict(condition_gp(params, x[order], y[order]), queries)
    np.testing.assert_allclose(first[0], second[0], atol=1e-10)
    np.testing.assert_allclose(first[1], second[1], atol=1e-10)


def test_constant_per_point_noise_matches_fixed_noise():
    """A constant noise vector fits exactly like a fixed scalar noise"""
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(12, 2))
    y = np.cos(4 * x[:, 0]) + x[:, 1] ** 2
    v = 0.02
    vector_gp = fit_gp(
        x, y, FitOptions(restarts=3, learn_noise=False), per_point_noise=np.full(12, v),
        rng=np.random.default_rng(8),
    )
    scalar_gp = fit_gp(
        x, y, FitOptions(restarts=3, learn_noise=False, fixed_noise=v), rng=np.random.default_rng(8)
    )
    queries = rng.uniform(size=(25, 2))
    vector_pred = predict(vector_gp, queries)
    scalar_pred = predict(scalar_gp, queries)
    np.testing.assert_allclose(vector_pred[0], scalar_pred[0], atol=1e-10)
    np.testing.assert_allclose(vector_pred[1], scalar_pred[1], atol=1e-10)


def test_per_point_noise_is_never_altered(fast_options):
    """Supplied variances read back unchanged in output units"""
    rng = np.random.default_rng(6)
    x = rng.uniform(size=(10, 1))
    noise = rng.uniform(0.01, 0.3, size=10)
    gp = fit_gp(
        x, 5 * np.sin(6 * x[:, 0]), FitOptions(restarts=2, learn_noise=False), per_point_noise=noise
    )
    np.testing.assert_allclose(gp.noise_in_output_units(), noise, rtol=1e-12)
