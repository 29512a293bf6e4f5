"""
Enrollment lifecycle: submit samples, check the modality policy, and hand the
stored samples to the instrument that turns them into templates.
"""
import logging
from datetime import datetime
from typing import Optional, Protocol

from .errors import AlreadyEnrolled, IncompleteEnrollment, MalformedSample
from .models import AuditEvent, BiometricSample, EnrollmentStatus, Instrument, Template, utcnow
from .store import TemplateStore


logger = logging.getLogger(__name__)


class TemplateBuilder(Protocol):
    """What an instrument must provide to take part in enrollment."""

    modality: str
    instrument: Instrument

    def measure(self, payload: bytes) -> float:
        """Seconds (voice, face) or keystroke count carried by a payload; MalformedSample if undecodable."""
        ...

    def build_templates(self, identity_id: str, samples: list[tuple[BiometricSample, bytes]]) -> list[Template]:
        ...


def submit_sample(
    store: TemplateStore,
    builder: TemplateBuilder,
    identity_id: str,
    payload: bytes,
    session_id: str,
    captured_at: Optional[datetime] = None,
) -> EnrollmentStatus:
    """Validate, store and register one enrollment payload."""
    store.get_identity(identity_id)
    amount = builder.measure(payload)
    if not amount > 0:
        raise MalformedSample(f"{builder.modality} payload carries no content")
    sample = BiometricSample(
        modality=builder.modality,
        payload_ref=store.put_blob(payload),
        duration_or_count=amount,
        captured_at=captured_at or utcnow(),
        session_id=session_id,
    )
    return store.submit_enrollment_sample(identity_id, sample)


def finalize_enrollment(store: TemplateStore, builder: TemplateBuilder, identity_id: str) -> list[Template]:
    """Build and persist templates from the qualifying samples; write-once."""
    modality = builder.modality
    if store.has_templates(identity_id, modality):
        raise AlreadyEnrolled(f"{identity_id} is already enrolled for {modality}")
    status = store.enrollment_status(identity_id, modality)
    if not status.complete:
        raise IncompleteEnrollment(
            f"{modality} enrollment incomplete: {status.qualifying_samples}/{status.policy.min_samples} samples, "
            f"{status.sessions}/{status.policy.min_sessions} sessions",
            status=status.model_dump(mode="json"),
        )
    policy = status.policy
    samples = [s for s in store.enrollment_samples(identity_id, modality) if s.duration_or_count >= policy.min_payload]
    templates = builder.build_templates(identity_id, [(s, store.get_blob(s.payload_ref)) for s in samples])
    store.save_templates(identity_id, modality, templates)
    store.record_audit_event(AuditEvent(
        event_kind="enroll",
        identity=identity_id,
        instrument=builder.instrument,
        outcome_summary={"modality": modality, "samples": len(samples), "templates": len(templates)},
    ))
    logger.info(f"✅ Enrolled {identity_id} for {modality}: {len(templates)} templates")
    return templates


def enroll(
    store: TemplateStore,
    builder: TemplateBuilder,
    identity_id: str,
    sessions: dict[str, list[bytes]],
) -> list[Template]:
    """Submit every payload grouped by session, then finalize."""
    store.get_identity(identity_id)
    if store.has_templates(identity_id, builder.modality):
        raise AlreadyEnrolled(f"{identity_id} is already enrolled for {builder.modality}")
    for session_id, payloads in sessions.items():
        for payload in payloads:
            submit_sample(store, builder, identity_id, payload, session_id)
    return finalize_enrollment(store, builder, identity_id)
