import importlib
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from main import app
from mast.serialization import save_surrogate
from mast.surrogate import predict_mast


@pytest.fixture(autouse=True)
def surrogates_dir(monkeypatch):
    """Point the store at a fresh directory for each test"""
    test_dir = tempfile.mkdtemp()
    monkeypatch.setenv("SURROGATES_DIR", test_dir)

    # Re-import to get a fresh store with the new directory
    import api.routes

    importlib.reload(api.routes)

    yield Path(test_dir)

    if Path(test_dir).exists():
        shutil.rmtree(test_dir)


client = TestClient(app)


def test_health_endpoint(surrogates_dir):
    """Health reports the surrogate directory"""
    response = client.get("/health")
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "healthy"
    assert data["surrogates_dir"] == str(surrogates_dir.resolve())


def test_list_problems():
    """All registered benchmarks are listed"""
    response = client.get("/api/problems")
    assert response.status_code == 200
    problems = {p["name"]: p for p in response.json()}
    assert len(problems) == 10
    assert problems["branin"]["dimension"] == 2
    assert problems["ackley"]["discrepancy_kind"] == "noise-only"


def test_list_empty_directory():
    """No surrogates saved yet"""
    response = client.get("/api/surrogates")
    assert response.status_code == 200
    assert response.json() == []


def test_list_and_describe_surrogate(surrogates_dir, small_surrogate):
    """Saved surrogates are listed and described"""
    save_surrogate(small_surrogate, surrogates_dir / "branin" / "rep0.json")
    response = client.get("/api/surrogates")
    assert response.status_code == 200
    assert [item["name"] for item in response.json()] == ["branin/rep0"]

    response = client.get("/api/surrogates/branin/rep0")
    assert response.status_code == 200
    data = response.json()
    assert data["levels"] == [1, 2]
    assert data["hf_level"] == 2
    assert data["dimension"] == 2
    assert data["n_augmented"] == 20
    assert data["training_sizes"] == {"1": 20, "2": 6}
    assert data["fusion"]["n_train"] == 26


def test_predict_matches_library(surrogates_dir, small_surrogate):
    """Endpoint predictions equal in-process predictions"""
    save_surrogate(small_surrogate, surrogates_dir / "branin.json")
    queries = [[0.0, 5.0], [2.5, 7.5], [-3.0, 12.0]]
    response = client.post("/api/surrogates/branin/predict", json={"inputs": queries})
    assert response.status_code == 200
    data = response.json()
    means, variances = predict_mast(small_surrogate, np.array(queries))
    np.testing.assert_allclose(data["means"], means, rtol=1e-12)
    np.testing.assert_allclose(data["variances"], variances, rtol=1e-12)


def test_predict_rejects_bad_inputs(surrogates_dir, small_surrogate):
    """Wrong widths, ragged rows and empty inputs are client errors"""
    save_surrogate(small_surrogate, surrogates_dir / "branin.json")
    for inputs in ([[1.0, 2.0, 3.0]], [[1.0, 2.0], [1.0]], []):
        response = client.post("/api/surrogates/branin/predict", json={"inputs": inputs})
        assert response.status_code == 400


def test_missing_surrogate_returns_404():
    """Unknown names are not found"""
    assert client.get("/api/surrogates/nothing").status_code == 404
    response = client.post("/api/surrogates/nothing/predict", json={"inputs": [[0.0, 0.0]]})
    assert response.status_code == 404


def test_corrupt_surrogate_returns_500(surrogates_dir):
    """An unreadable surrogate file is a server error"""
    (surrogates_dir / "broken.json").write_text("{not json", encoding="utf-8")
    assert client.get("/api/surrogates/broken").status_code == 500
