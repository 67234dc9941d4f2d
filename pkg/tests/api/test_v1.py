from collections.abc import Iterator
import math

from fastapi.testclient import TestClient
import pytest

from app.main import create_app

BUDGET = {"radial_nodes": 48, "angular_nodes": 6, "refine_levels": 1}
GAUSSIAN = {"family": "gaussian", "domain": {"euclidean": 3}}
HALF_ROOT_3 = math.sqrt(3) / 2


@pytest.fixture
def client() -> Iterator[TestClient]:
    """Test client with the application lifespan running."""
    with TestClient(create_app()) as client:
        yield client


def test_health(client: TestClient):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_verify(client: TestClient):
    response = client.post("/api/v1/verify", json={"theorem_id": "hpw", "field": GAUSSIAN, "budget": BUDGET})
    assert response.status_code == 200

    (report,) = response.json()["reports"]
    assert report["theorem_id"] == "hpw"
    assert report["n"] == 3
    assert report["holds"] is True
    assert report["ratio_classical"] == pytest.approx(1.0, abs=1e-6)


def test_verify_rejects_malformed_requests(client: TestClient):
    response = client.post("/api/v1/verify", json={"theorem_id": "nope", "field": GAUSSIAN})
    assert response.status_code == 422

    response = client.post("/api/v1/verify", json={"theorem_id": "hpw", "field": {"family": "gaussian"}})
    assert response.status_code == 422
    assert "declare a domain" in response.text


def test_verify_reports_evaluation_errors(client: TestClient):
    response = client.post(
        "/api/v1/verify",
        json={"theorem_id": "ckn_vector", "params": {"n": 3, "p": 3.0, "q": 1.0}, "field": GAUSSIAN, "budget": BUDGET},
    )
    assert response.status_code == 400
    assert "needs a vector field" in response.json()["detail"]


def test_stats(client: TestClient):
    field = {
        "family": "polar",
        "amplitude": {"family": "affine_harmonic", "a": HALF_ROOT_3, "b": HALF_ROOT_3, "j": 0},
        "phase": {"family": "affine_harmonic", "j": 1},
        "domain": {"sphere": 2},
    }
    response = client.post("/api/v1/stats", json={"field": field, "n": 2, "budget": {"angular_nodes": 24}})
    assert response.status_code == 200

    stats = response.json()
    assert stats["codomain"] == "complex"
    assert stats["var_x"] == pytest.approx(0.75, abs=1e-10)
    assert stats["var_freq"] == pytest.approx(0.46, abs=1e-10)
    assert stats["a_star"] == pytest.approx([0.0, 0.7, 0.0], abs=1e-10)


def test_sweep(client: TestClient):
    response = client.post(
        "/api/v1/sweep",
        json={
            "theorem_id": "ckn_complex",
            "grid": {"n": [3], "p": [3.0], "q": [1.0, 1.5]},
            "field": GAUSSIAN,
            "budget": BUDGET,
        },
    )
    assert response.status_code == 200

    admissible, skipped = response.json()
    assert admissible["holds"] is True
    assert skipped["holds"] is None
    assert skipped["skipped_reason"] == "constraint violated: 2 < n < 2(p - q)/(p - 2)"


def test_search(client: TestClient):
    response = client.post(
        "/api/v1/search",
        json={
            "theorem_id": "hpw",
            "family": {"family": "gaussian", "b": 0.5, "domain": {"euclidean": 3}},
            "free_parameters": [{"path": "b", "lower": 0.25, "upper": 1.0}],
            "budget": BUDGET,
            "restarts": 1,
            "max_iterations": 3,
        },
    )
    assert response.status_code == 200

    result = response.json()
    assert result["parameters"] == ["b"]
    assert result["best_ratio"] == pytest.approx(1.0, abs=1e-5)
    assert len(result["restarts"]) == 1
