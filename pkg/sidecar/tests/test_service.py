import numpy as np
import pytest
from fastapi.testclient import TestClient

from embedding_sidecar import EMBEDDING_DIM
from embedding_sidecar.model import InferenceError
from embedding_sidecar.service import ServiceState, create_app


@pytest.fixture(scope="module")
def ready_state(embedder):
    state = ServiceState(model_id="test-encoder")
    state.embedder = embedder
    return state


@pytest.fixture(scope="module")
def client(ready_state):
    return TestClient(create_app(ready_state))


@pytest.fixture()
def loading_client():
    return TestClient(create_app(ServiceState(model_id="test-encoder")))


class TestHealth:
    def test_loading_returns_503(self, loading_client):
        response = loading_client.get("/health")
        assert response.status_code == 503
        body = response.json()
        assert body["status"] == "loading"
        assert body["model_id"] == "test-encoder"

    def test_failed_load_reports_detail(self):
        state = ServiceState(model_id="test-encoder")
        state.load_error = "disk exploded"
        response = TestClient(create_app(state)).get("/health")
        assert response.status_code == 503
        body = response.json()
        assert body["status"] == "error"
        assert body["detail"] == "disk exploded"

    def test_ready_returns_200_with_dimension(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {
            "status": "ok",
            "model_id": "test-encoder",
            "D": EMBEDDING_DIM,
        }


class TestEmbedHappyPath:
    def test_shapes_and_flags(self, client):
        sentences = ["first sentence", "second one", ""]
        response = client.post("/embed", json={"sentences": sentences})
        assert response.status_code == 200
        body = response.json()
        assert body["model_id"] == "test-encoder"
        assert body["D"] == EMBEDDING_DIM
        assert len(body["vectors"]) == len(sentences)
        assert all(len(v) == EMBEDDING_DIM for v in body["vectors"])
        assert body["truncated_flags"] == [False, False, False]
        assert all(isinstance(f, bool) for f in body["truncated_flags"])

    def test_truncation_flag_over_wire(self, client):
        long_sentence = " ".join(["overflow"] * 150)
        response = client.post(
            "/embed", json={"sentences": ["short", long_sentence]})
        assert response.status_code == 200
        assert response.json()["truncated_flags"] == [False, True]

    def test_explicit_matching_model_id_accepted(self, client):
        response = client.post(
            "/embed",
            json={"sentences": ["hello"], "model_id": "test-encoder"})
        assert response.status_code == 200

    def test_deterministic_across_requests(self, client):
        payload = {"sentences": ["alpha beta", "gamma delta epsilon"]}
        first = client.post("/embed", json=payload).json()["vectors"]
        second = client.post("/embed", json=payload).json()["vectors"]
        np.testing.assert_allclose(first, second, atol=1e-5)

    def test_empty_sentence_list(self, client):
        response = client.post("/embed", json={"sentences": []})
        assert response.status_code == 200
        body = response.json()
        assert body["vectors"] == []
        assert body["truncated_flags"] == []


class TestEmbedErrors:
    def test_unknown_model_id_is_404(self, client):
        response = client.post(
            "/embed", json={"sentences": ["hi"], "model_id": "other"})
        assert response.status_code == 404
        assert "other" in response.json()["detail"]

    def test_non_json_body_is_400(self, client):
        response = client.post(
            "/embed", content=b"not json at all",
            headers={"content-type": "application/json"})
        assert response.status_code == 400
        assert "JSON" in response.json()["detail"]

    def test_body_not_an_object_is_400(self, client):
        response = client.post("/embed", json=["just", "a", "list"])
        assert response.status_code == 400

    def test_missing_sentences_is_400(self, client):
        response = client.post("/embed", json={"model_id": "test-encoder"})
        assert response.status_code == 400
        assert "sentences" in response.json()["detail"]

    def test_sentences_not_a_list_is_400(self, client):
        response = client.post("/embed", json={"sentences": "one string"})
        assert response.status_code == 400

    def test_non_string_element_is_400(self, client):
        response = client.post(
            "/embed", json={"sentences": ["fine", 42, "fine"]})
        assert response.status_code == 400
        assert "1" in response.json()["detail"]  # index of the bad element

    def test_non_string_model_id_is_400(self, client):
        response = client.post(
            "/embed", json={"sentences": ["hi"], "model_id": 9})
        assert response.status_code == 400

    def test_embed_while_loading_is_503(self, loading_client):
        response = loading_client.post(
            "/embed", json={"sentences": ["hi"]})
        assert response.status_code == 503
        assert "loading" in response.json()["detail"]

    def test_inference_failure_is_500_with_diagnostic(
            self, embedder, monkeypatch):
        state = ServiceState(model_id="test-encoder")
        state.embedder = embedder

        def explode(sentences):
            raise InferenceError("matmul fell over")

        monkeypatch.setattr(state.embedder, "embed", explode)
        try:
            response = TestClient(create_app(state)).post(
                "/embed", json={"sentences": ["hi"]})
        finally:
            monkeypatch.undo()  # session-scoped embedder must be restored
        assert response.status_code == 500
        assert "matmul fell over" in response.json()["detail"]
