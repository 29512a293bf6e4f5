"""
HTTP surface tests through FastAPI's TestClient.
"""
import base64
import inspect
import json

import pytest
from fastapi.routing import APIRoute
from fastapi.testclient import TestClient

from app.config import Settings
from app.core.imaging import encode_video
from app.evaluation.synthetic import face_population, synth_face_video, synth_typing, typist_population
from app.instruments.keystroke import encode_key_stream
from app.main import app
from app.pipeline.orchestrator import BiometricService, reset_biometric_service
from app.pipeline.trust import report_to_json


def b64(payload: bytes) -> str:
    return base64.b64encode(payload).decode("ascii")


@pytest.fixture
def client(service):
    reset_biometric_service(service)
    with TestClient(app) as c:
        yield c
    reset_biometric_service(None)


@pytest.fixture(scope="module")
def typist():
    return typist_population(3, seed=21)


@pytest.fixture(scope="module")
def face_profile():
    return face_population(2, seed=5)


def _learner(client, name="ada"):
    response = client.post("/learners", json={"display_name": name})
    assert response.status_code == 201
    return response.json()["id"]


def _enroll_keystroke(client, learner, typist):
    body = {"payload": b64(encode_key_stream(synth_typing(typist, 750, seed=1))), "session_id": "s1", "finalize": True}
    response = client.post(f"/learners/{learner}/enroll/keystroke", json=body)
    assert response.status_code == 200, response.text
    return response.json()


# ============ System ============

def test_health_lists_model_free_instruments(client):
    response = client.get("/health")
    assert response.status_code == 200
    data = response.json()
    assert data["status"] == "ok"
    assert {"FR", "KD"} <= set(data["instruments"])
    assert "VR" not in data["instruments"]


def test_root(client):
    assert client.get("/").json()["schema"] == 1


def test_route_handlers_are_coroutines():
    endpoints = [r.endpoint for r in app.routes if isinstance(r, APIRoute)]
    assert len(endpoints) >= 8
    assert all(inspect.iscoroutinefunction(e) for e in endpoints)


# ============ Registry ============

def test_register_and_enroll_keystroke(client, typist):
    learner = _learner(client)
    data = _enroll_keystroke(client, learner, typist[0])
    assert data["templates"] == 1
    assert data["status"]["complete"] is True


def test_blank_name_is_rejected(client):
    response = client.post("/learners", json={"display_name": "   "})
    assert response.status_code == 422
    assert response.json()["error"] == "InvalidName"


def test_unknown_learner(client, typist):
    body = {"payload": b64(encode_key_stream(synth_typing(typist[0], 60, seed=2)))}
    response = client.post("/learners/nobody/verify/keystroke", json=body)
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownIdentity"


def test_invalid_base64(client):
    learner = _learner(client)
    response = client.post(f"/learners/{learner}/enroll/keystroke", json={"payload": "%%%", "session_id": "s1"})
    assert response.status_code == 422
    assert response.json()["error"] == "MalformedSample"


def test_finalize_twice_conflicts(client, typist):
    learner = _learner(client)
    _enroll_keystroke(client, learner, typist[0])
    body = {"payload": b64(encode_key_stream(synth_typing(typist[0], 750, seed=3))), "session_id": "s2", "finalize": True}
    response = client.post(f"/learners/{learner}/enroll/keystroke", json=body)
    assert response.status_code == 409
    assert response.json()["error"] == "AlreadyEnrolled"


# ============ Verification & Reports ============

def test_activity_report_round_trip(client, service, typist, face_profile):
    learner = _learner(client)
    _enroll_keystroke(client, learner, typist[0])
    video = b64(encode_video(synth_face_video(face_profile[0], 5.0, 4.0, seed=1)))
    enrolled = client.post(f"/learners/{learner}/enroll/face", json={"payload": video, "session_id": "s1", "finalize": True})
    assert enrolled.status_code == 200, enrolled.text

    probe = {"payload": b64(encode_key_stream(synth_typing(typist[0], 150, seed=40))), "activity_id": "exam-1"}
    kd = client.post(f"/learners/{learner}/verify/keystroke", json=probe)
    assert kd.status_code == 200 and kd.json()["instrument"] == "KD"
    face_probe = {"payload": b64(encode_video(synth_face_video(face_profile[0], 1.0, 4.0, seed=9))), "activity_id": "exam-1"}
    fr = client.post(f"/learners/{learner}/verify/face", json=face_probe)
    assert fr.status_code == 200 and fr.json()["accepted"] is True

    built = client.post("/activities/exam-1/report", json={"identity_id": learner})
    assert built.status_code == 200
    doc = json.loads(built.text)
    assert doc["schema"] == 1
    assert doc["decision"] == "trusted"
    assert set(doc["instrument_scores"]) == {"FR", "KD"}
    fetched = client.get("/activities/exam-1/report")
    assert fetched.text == built.text == service.report_json("exam-1")
    assert report_to_json(service.build_report("exam-1", learner)) == built.text


def test_missing_report(client):
    response = client.get("/activities/nothing/report")
    assert response.status_code == 404
    assert response.json()["error"] == "UnknownActivity"


def test_untrained_instruments_are_unavailable(client):
    learner = _learner(client)
    response = client.post(f"/learners/{learner}/verify/voice", json={"payload": b64(b"RIFF0000WAVE")})
    assert response.status_code == 503
    assert response.json()["error"] == "InstrumentUnavailable"
    response = client.post("/pad/face", json={"payload": b64(b"PK")})
    assert response.status_code == 503


def test_keystroke_has_no_pad_route(client):
    assert client.post("/pad/keystroke", json={"payload": b64(b"x")}).status_code == 422


def test_payload_size_cap(tmp_path, typist):
    service = BiometricService(Settings(data_dir=str(tmp_path / "capped"), max_payload_mb=0))
    reset_biometric_service(service)
    try:
        with TestClient(app) as c:
            learner = c.post("/learners", json={"display_name": "ada"}).json()["id"]
            body = {"payload": b64(encode_key_stream(synth_typing(typist[0], 60, seed=2))), "session_id": "s1"}
            response = c.post(f"/learners/{learner}/enroll/keystroke", json=body)
    finally:
        reset_biometric_service(None)
    assert response.status_code == 413
    assert response.json()["error"] == "PayloadTooLarge"
