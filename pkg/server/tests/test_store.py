"""
Tests for the identity registry, enrollment lifecycle and audit log.
"""
from datetime import timedelta

import pytest

from app.core.enrollment import finalize_enrollment, submit_sample
from app.core.errors import (
    AlreadyEnrolled,
    CorruptLog,
    IncompleteEnrollment,
    InvalidName,
    MalformedSample,
    UnknownIdentity,
)
from app.core.models import AuditEvent, BiometricSample, utcnow
from app.core.store import TemplateStore, blob_id
from app.evaluation.synthetic import synth_typing, typist_population
from app.instruments.keystroke import KeystrokeInstrument, encode_key_stream


def _submit(store, identity_id, modality, session, amount, n=0, captured_at=None):
    ref = store.put_blob(f"{identity_id}:{modality}:{session}:{n}".encode())
    sample = BiometricSample(
        modality=modality,
        payload_ref=ref,
        duration_or_count=amount,
        captured_at=captured_at or utcnow(),
        session_id=session,
    )
    return store.submit_enrollment_sample(identity_id, sample)


# ============ Identities ============

def test_register_learner(store):
    identity = store.register_learner("alice")
    assert identity.display_name == "alice"
    assert store.get_identity(identity.id) == identity


def test_same_name_gives_distinct_ids(store):
    assert store.register_learner("alice").id != store.register_learner("alice").id


@pytest.mark.parametrize("name", ["", "   ", "bad\x00name"])
def test_invalid_names_rejected(store, name):
    with pytest.raises(InvalidName):
        store.register_learner(name)


def test_unknown_identity(store):
    with pytest.raises(UnknownIdentity) as exc:
        store.get_identity("nobody")
    assert exc.value.status_code == 404


def test_blob_ids_are_content_addressed(store):
    ref = store.put_blob(b"payload")
    assert ref == blob_id(b"payload")
    assert store.put_blob(b"payload") == ref
    assert store.get_blob(ref) == b"payload"


# ============ Enrollment Policy ============

def test_voice_policy_complete_with_15_samples_over_3_sessions(store):
    alice = store.register_learner("alice").id
    status = None
    for n in range(15):
        status = _submit(store, alice, "voice", f"s{n % 3}", 10.0, n)
    assert status.complete
    assert status.qualifying_samples == 15 and status.sessions == 3


def test_voice_policy_incomplete_with_14_samples(store):
    alice = store.register_learner("alice").id
    for n in range(14):
        status = _submit(store, alice, "voice", f"s{n % 3}", 10.0, n)
    assert not status.complete


def test_short_samples_are_stored_but_do_not_qualify(store):
    alice = store.register_learner("alice").id
    for n in range(15):
        status = _submit(store, alice, "voice", f"s{n % 3}", 4.0, n)
    assert status.samples == 15
    assert status.qualifying_samples == 0
    assert not status.complete


def test_keystroke_single_stream_meeting_minimum_is_complete(store):
    alice = store.register_learner("alice").id
    assert _submit(store, alice, "keystroke", "s1", 750).complete


def test_completeness_is_monotone(store):
    alice = store.register_learner("alice").id
    assert _submit(store, alice, "keystroke", "s1", 800).complete
    assert _submit(store, alice, "keystroke", "s2", 3, n=1).complete


def test_same_day_sessions_raise_an_advisory(store):
    alice = store.register_learner("alice").id
    start = utcnow()
    _submit(store, alice, "voice", "s1", 10.0, 0, start)
    status = _submit(store, alice, "voice", "s2", 10.0, 1, start + timedelta(hours=2))
    assert status.advisories


def test_sessions_days_apart_have_no_advisory(store):
    alice = store.register_learner("alice").id
    start = utcnow()
    _submit(store, alice, "voice", "s1", 10.0, 0, start)
    status = _submit(store, alice, "voice", "s2", 10.0, 1, start + timedelta(days=3))
    assert status.advisories == []


def test_sample_must_be_stored_first(store):
    alice = store.register_learner("alice").id
    sample = BiometricSample(modality="voice", payload_ref="0" * 64, duration_or_count=10,
                             captured_at=utcnow(), session_id="s1")
    with pytest.raises(MalformedSample):
        store.submit_enrollment_sample(alice, sample)


# ============ Finalize & Templates ============

@pytest.fixture
def typed_stream():
    return synth_typing(typist_population(2, seed=3)[0], 750, seed=1)


def test_finalize_builds_templates_once(store, typed_stream):
    alice = store.register_learner("alice").id
    kd = KeystrokeInstrument()
    submit_sample(store, kd, alice, encode_key_stream(typed_stream), "s1")
    templates = finalize_enrollment(store, kd, alice)
    assert len(templates) == 1
    assert store.fetch_templates(alice, "keystroke") == templates
    with pytest.raises(AlreadyEnrolled):
        finalize_enrollment(store, kd, alice)


def test_finalize_without_samples_is_incomplete(store):
    alice = store.register_learner("alice").id
    with pytest.raises(IncompleteEnrollment):
        finalize_enrollment(store, KeystrokeInstrument(), alice)


def test_enrollment_writes_an_audit_event(store, typed_stream):
    alice = store.register_learner("alice").id
    kd = KeystrokeInstrument()
    submit_sample(store, kd, alice, encode_key_stream(typed_stream), "s1")
    finalize_enrollment(store, kd, alice)
    last = store.read_audit_log()[-1]
    assert last.event_kind == "enroll" and last.identity == alice and last.instrument == "KD"


def test_fetch_templates_for_unenrolled_and_unknown(store):
    alice = store.register_learner("alice").id
    assert store.fetch_templates(alice, "voice") == []
    with pytest.raises(UnknownIdentity):
        store.fetch_templates("ghost", "voice")


# ============ Audit Log ============

def test_audit_append_then_read(store):
    event = AuditEvent(event_kind="verify", identity="x", instrument="VR", outcome_summary={"score": 0.5})
    stored = store.record_audit_event(event)
    assert store.read_audit_log()[-1] == stored


def test_audit_keeps_order_and_strictly_increasing_times(store):
    stamp = utcnow()
    for n in range(1000):
        store.record_audit_event(AuditEvent(event_kind="verify", identity="x", outcome_summary={"n": n}, at=stamp))
    events = store.read_audit_log()
    assert [e.outcome_summary["n"] for e in events] == list(range(1000))
    assert all(a.at < b.at for a, b in zip(events, events[1:]))


def test_corrupt_audit_line_reports_line_number(store, settings):
    store.record_audit_event(AuditEvent(event_kind="verify", identity="x"))
    with open(store.audit_path, "a", encoding="utf-8") as f:
        f.write("{not json\n")
    with pytest.raises(CorruptLog) as exc:
        TemplateStore(settings.data_dir).read_audit_log()
    assert exc.value.context["line"] == 2


# ============ Activities & Reports ============

def test_activity_records_and_reports_persist(store, settings):
    event = AuditEvent(event_kind="verify", identity="x")
    store.append_activity_record("exam-1", event)
    store.save_report("exam-1", '{"schema": 1}\n')
    reopened = TemplateStore(settings.data_dir)
    assert len(reopened.activity_records("exam-1")) == 1
    assert reopened.load_report("exam-1") == '{"schema": 1}\n'
    assert reopened.load_report("exam-2") is None


def test_activity_ids_cannot_escape_the_data_dir(store):
    with pytest.raises(MalformedSample):
        store.save_report("..", "{}")
