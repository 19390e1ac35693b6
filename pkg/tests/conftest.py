import pytest

from mast.benchmarks import make_problem
from mast.design import lhs
from mast.gp_core import FitOptions
from mast.surrogate import FidelityDataset, build_mast


@pytest.fixture(autouse=True)
def thread_cap(monkeypatch):
    """Keep experiment runs on a small, fixed thread pool"""
    monkeypatch.setenv("MAST_THREADS", "2")


@pytest.fixture
def fast_options():
    return FitOptions(restarts=2, max_iterations=100)


def _branin_datasets(n_hf=6, n_lf=20, seed=0):
    problem = make_problem("branin")
    hf_x = lhs(n_hf, problem.bounds, seed)
    lf_x = lhs(n_lf, problem.bounds, seed + 1)
    hf = FidelityDataset(2, hf_x, problem.hf(hf_x), 1.0)
    lf = FidelityDataset(1, lf_x, problem.hf(lf_x) + problem.delta(lf_x), 0.1)
    return problem, [lf, hf]


@pytest.fixture
def branin_data():
    """Factory for two-fidelity Branin data with d = 1 and costs 1 / 0.1"""
    return _branin_datasets


@pytest.fixture
def small_surrogate(fast_options):
    problem, datasets = _branin_datasets()
    return build_mast(datasets, problem.bounds, fast_options, seed=3)
