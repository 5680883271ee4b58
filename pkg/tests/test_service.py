import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from araida.experiments import make_synthetic_corpus
from araida.service import create_app


@pytest.fixture
def corpus():
    c = make_synthetic_corpus(30, num_classes=2, dim=4, separation=3.0, seed=9,
                              class_names=["neg", "pos"])
    for ex in c.examples:
        ex.text = f"document {ex.id}"
    return c


@pytest.fixture
def client(corpus, tmp_path):
    app = create_app({"demo": corpus}, checkpoint_dir=tmp_path / "ckpts")
    with TestClient(app) as client:
        yield client


def start_session(client, **config):
    config.setdefault("k", 3)
    config.setdefault("batch_size", 8)
    resp = client.post("/sessions", json={"corpus": "demo", "config": config})
    assert resp.status_code == 201
    return resp.json()


class TestCreateSession:
    def test_valid_request(self, client):
        body = start_session(client)
        assert set(body) == {"id", "classes"}
        assert body["classes"] == ["neg", "pos"]

    def test_unknown_corpus_404(self, client):
        resp = client.post("/sessions", json={"corpus": "nope", "config": {}})
        assert resp.status_code == 404

    def test_binary_mode_with_probabilistic_model_400(self, client):
        resp = client.post("/sessions", json={
            "corpus": "demo", "config": {"lambda_mode": "binary"}})
        assert resp.status_code == 400

    def test_invalid_config_key_400(self, client):
        resp = client.post("/sessions", json={
            "corpus": "demo", "config": {"bogus_field": 1}})
        assert resp.status_code == 400


class TestNextSuggestion:
    def test_payload_shape(self, client):
        session_id = start_session(client)["id"]
        resp = client.get(f"/sessions/{session_id}/next")
        assert resp.status_code == 200
        body = resp.json()
        assert {"example_id", "text", "suggested_class", "lambda",
                "f_probs", "g_probs", "neighbors"} <= set(body)
        assert body["suggested_class"] in ("neg", "pos")

    def test_idempotent_until_feedback(self, client):
        session_id = start_session(client)["id"]
        first = client.get(f"/sessions/{session_id}/next").json()
        second = client.get(f"/sessions/{session_id}/next").json()
        assert first == second

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/next").status_code == 404

    def test_exhausted_pool_204(self, client):
        session_id = start_session(client)["id"]
        for _ in range(30):
            body = client.get(f"/sessions/{session_id}/next").json()
            client.post(f"/sessions/{session_id}/feedback",
                        json={"example_id": body["example_id"], "label": "neg"})
        resp = client.get(f"/sessions/{session_id}/next")
        assert resp.status_code == 204


class TestFeedback:
    def test_accept_increments_correct(self, client):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/next").json()
        resp = client.post(f"/sessions/{session_id}/feedback",
                           json={"example_id": body["example_id"],
                                 "label": body["suggested_class"]})
        assert resp.status_code == 200
        assert resp.json() == {"total": 1, "correct": 1, "mca": 1.0}

    def test_correction_counts_total_only(self, client):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/next").json()
        other = "neg" if body["suggested_class"] == "pos" else "pos"
        resp = client.post(f"/sessions/{session_id}/feedback",
                           json={"example_id": body["example_id"], "label": other})
        assert resp.json() == {"total": 1, "correct": 0, "mca": 0.0}

    def test_stale_example_409(self, client):
        session_id = start_session(client)["id"]
        client.get(f"/sessions/{session_id}/next")
        resp = client.post(f"/sessions/{session_id}/feedback",
                           json={"example_id": "wrong", "label": "neg"})
        assert resp.status_code == 409

    def test_unknown_label_400(self, client):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/next").json()
        resp = client.post(f"/sessions/{session_id}/feedback",
                           json={"example_id": body["example_id"], "label": "banana"})
        assert resp.status_code == 400

    def test_concurrent_feedback_no_lost_updates(self, client):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/next").json()
        results = []

        def post():
            resp = client.post(f"/sessions/{session_id}/feedback",
                               json={"example_id": body["example_id"], "label": "neg"})
            results.append(resp.status_code)

        threads = [threading.Thread(target=post) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results.count(200) == 1
        assert results.count(409) == 7
        metrics = client.get(f"/sessions/{session_id}/metrics").json()
        assert metrics["total"] == 1


class TestMetrics:
    def test_before_any_feedback(self, client):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/metrics").json()
        assert body["total"] == 0
        assert body["correct"] == 0
        assert body["mca"] is None
        assert body["datastore_size"] == 0

    def test_mca_tracks_session(self, client):
        session_id = start_session(client)["id"]
        accepted = 0
        for i in range(4):
            body = client.get(f"/sessions/{session_id}/next").json()
            label = body["suggested_class"] if i < 3 else (
                "neg" if body["suggested_class"] == "pos" else "pos")
            if label == body["suggested_class"]:
                accepted += 1
            client.post(f"/sessions/{session_id}/feedback",
                        json={"example_id": body["example_id"], "label": label})
        metrics = client.get(f"/sessions/{session_id}/metrics").json()
        assert metrics["total"] == 4
        assert metrics["correct"] == 3
        assert metrics["mca"] == 0.75

    def test_datastore_bounded_by_capacity(self, client):
        session_id = start_session(client, capacity=5)["id"]
        for _ in range(12):
            body = client.get(f"/sessions/{session_id}/next").json()
            client.post(f"/sessions/{session_id}/feedback",
                        json={"example_id": body["example_id"], "label": "pos"})
        metrics = client.get(f"/sessions/{session_id}/metrics").json()
        assert metrics["datastore_size"] <= 5

    def test_neighbors_appear_with_text(self, client):
        session_id = start_session(client)["id"]
        for _ in range(3):
            body = client.get(f"/sessions/{session_id}/next").json()
            client.post(f"/sessions/{session_id}/feedback",
                        json={"example_id": body["example_id"], "label": "pos"})
        body = client.get(f"/sessions/{session_id}/next").json()
        assert body["neighbors"]
        for neighbor in body["neighbors"]:
            assert neighbor["label"] in ("neg", "pos")
            assert neighbor["distance"] > 0
            assert neighbor["text"].startswith("document")


class TestCheckpoint:
    def test_checkpoint_writes_file(self, client, tmp_path):
        session_id = start_session(client)["id"]
        body = client.get(f"/sessions/{session_id}/next").json()
        client.post(f"/sessions/{session_id}/feedback",
                    json={"example_id": body["example_id"], "label": "neg"})
        resp = client.post(f"/sessions/{session_id}/checkpoint")
        assert resp.status_code == 200
        from pathlib import Path

        assert Path(resp.json()["path"]).exists()
