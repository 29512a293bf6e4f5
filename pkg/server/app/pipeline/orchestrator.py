"""
Biometric service: wires the store, the instruments and the trust engine
behind one object shared by the HTTP routes and the command line.
"""
import logging
import threading
from datetime import datetime
from typing import Any, Callable, Optional

from ..config import InstrumentThresholds, Modality, Settings, get_settings
from ..core.embeddings import get_embedding_extractor
from ..core.enrollment import finalize_enrollment, submit_sample
from ..core.errors import (
    BiometricError,
    InstrumentUnavailable,
    MalformedSample,
    UnknownActivity,
)
from ..core.imaging import decode_video
from ..core.models import (
    MODALITY_INSTRUMENT,
    PAD_INSTRUMENT,
    AuditEvent,
    EnrollmentStatus,
    Identity,
    PadOutcome,
    Template,
    VerificationOutcome,
)
from ..core.store import TemplateStore, blob_id
from ..instruments.face import FaceInstrument
from ..instruments.face_pad import FacePadInstrument, LinearPadModel
from ..instruments.keystroke import KeystrokeInstrument, parse_key_stream
from ..instruments.speaker import SpeakerInstrument, VoiceModels
from ..instruments.voice_pad import OccGmm, VoicePadInstrument
from .trust import InstrumentResult, TrustReport, build_trust_report, report_to_json


logger = logging.getLogger(__name__)


class BiometricService:
    """
    Enrollment, verification, anti-spoofing and reporting over one data directory.

    Instruments that depend on trained models are loaded lazily; a missing
    model marks the instrument unavailable instead of failing startup.
    """

    def __init__(self, settings: Optional[Settings] = None, store: Optional[TemplateStore] = None):
        self.settings = settings or get_settings()
        self.store = store or TemplateStore(self.settings.data_dir, self.settings.policies)
        self._instruments: dict[str, Any] = {}
        self._lock = threading.Lock()

    # ============ Configuration ============

    @property
    def thresholds(self) -> InstrumentThresholds:
        """Configured thresholds overlaid with the calibrated ones, if any."""
        calibrated = self.store.read_thresholds()
        if not calibrated:
            return self.settings.thresholds
        return self.settings.thresholds.model_copy(update=calibrated)

    def save_threshold(self, instrument: str, value: float) -> InstrumentThresholds:
        current = self.store.read_thresholds()
        current[instrument.lower()] = float(value)
        self.store.write_thresholds(current)
        logger.info(f"Threshold for {instrument.upper()} set to {value:.6f}")
        return self.thresholds

    def threshold_for(self, modality: str) -> float:
        return getattr(self.thresholds, MODALITY_INSTRUMENT[modality].lower())

    # ============ Instruments ============

    def _cached(self, key: str, factory: Callable[[], Any]) -> Any:
        with self._lock:
            if key not in self._instruments:
                self._instruments[key] = factory()
            return self._instruments[key]

    def _require_model(self, name: str) -> dict:
        doc = self.store.read_model(name)
        if doc is None:
            raise InstrumentUnavailable(f"model {name}.json is not trained; run the train command", model=name)
        return doc

    def reload_models(self) -> None:
        with self._lock:
            self._instruments.clear()

    def verifier(self, modality: Modality):
        s = self.settings
        if modality == "voice":
            return self._cached("VR", lambda: SpeakerInstrument(
                VoiceModels.from_documents(self._require_model("ubm"), self._require_model("tv")),
                s.frontend, s.speaker.min_voiced_s,
            ))
        if modality == "face":
            return self._cached("FR", lambda: FaceInstrument(
                get_embedding_extractor(s.face.extractor), s.face.frame_stride, s.face.accept_fraction,
                min_duration_s=s.policy("face").min_payload,
            ))
        if modality == "keystroke":
            return self._cached("KD", lambda: KeystrokeInstrument(
                s.keystroke.std_floor_ms, s.keystroke.min_entry_count, s.keystroke.probe_min_keystrokes,
            ))
        raise MalformedSample(f"unknown modality {modality!r}")

    def pad_detector(self, modality: Modality):
        s = self.settings
        if modality == "voice":
            return self._cached("VRA", lambda: VoicePadInstrument(OccGmm.from_dict(self._require_model("occ")), s.frontend))
        if modality == "face":
            return self._cached("FRA", lambda: FacePadInstrument(
                LinearPadModel.from_dict(self._require_model("face_pad")),
                s.face_pad.reference_sigma, s.face_pad.aggregation,
            ))
        raise MalformedSample(f"no anti-spoofing instrument for {modality!r}")

    def available_instruments(self) -> list[str]:
        available = []
        for name, probe in (("VR", lambda: self.verifier("voice")), ("FR", lambda: self.verifier("face")),
                            ("KD", lambda: self.verifier("keystroke")), ("FRA", lambda: self.pad_detector("face")),
                            ("VRA", lambda: self.pad_detector("voice"))):
            try:
                probe()
                available.append(name)
            except BiometricError as e:
                logger.debug(f"{name} unavailable: {e.message}")
        return available

    def install_models(self, documents: dict[str, dict]) -> None:
        """Persist trained model documents (ubm, tv, occ, face_pad) and drop cached instruments."""
        for name, doc in documents.items():
            path = self.store.write_model(name, doc)
            logger.info(f"💾 Saved {name} model to {path}")
        self.reload_models()

    # ============ Registry & Enrollment ============

    def register(self, display_name: str) -> Identity:
        return self.store.register_learner(display_name)

    def submit_enrollment(
        self,
        identity_id: str,
        modality: Modality,
        payload: bytes,
        session_id: str,
        captured_at: Optional[datetime] = None,
    ) -> EnrollmentStatus:
        return submit_sample(self.store, self.verifier(modality), identity_id, payload, session_id, captured_at)

    def enrollment_status(self, identity_id: str, modality: Modality) -> EnrollmentStatus:
        return self.store.enrollment_status(identity_id, modality)

    def finalize_enrollment(self, identity_id: str, modality: Modality) -> list[Template]:
        return finalize_enrollment(self.store, self.verifier(modality), identity_id)

    # ============ Verification & PAD ============

    def _decode_probe(self, modality: str, instrument, payload: bytes):
        if modality == "voice":
            return instrument.decode(payload)
        if modality == "face":
            return decode_video(payload, blob_id(payload)).frames
        return parse_key_stream(payload)

    def verify(
        self,
        identity_id: str,
        modality: Modality,
        payload: bytes,
        activity_id: Optional[str] = None,
        threshold: Optional[float] = None,
    ) -> VerificationOutcome:
        self.store.get_identity(identity_id)
        instrument = self.verifier(modality)
        templates = self.store.fetch_templates(identity_id, modality)
        probe = self._decode_probe(modality, instrument, payload)
        threshold = self.threshold_for(modality) if threshold is None else threshold
        outcome = instrument.verify(identity_id, templates, probe, threshold)
        sample_ref = self.store.put_blob(payload)
        self.store.record_audit_event(AuditEvent(
            event_kind="verify",
            identity=identity_id,
            instrument=outcome.instrument,
            outcome_summary={"accepted": outcome.accepted, "score": outcome.score,
                             "sample_ref": sample_ref, "activity_id": activity_id},
        ))
        if activity_id:
            self.store.append_activity_record(activity_id, InstrumentResult.verification(outcome, sample_ref))
        logger.info(f"{'✅' if outcome.accepted else '❌'} {outcome.instrument} {identity_id}: "
                    f"score {outcome.score:.4f} vs {threshold:.4f}")
        return outcome

    def pad_check(
        self,
        modality: Modality,
        payload: bytes,
        activity_id: Optional[str] = None,
        identity_id: Optional[str] = None,
    ) -> PadOutcome:
        detector = self.pad_detector(modality)
        if modality == "voice":
            outcome = detector.check(detector.decode(payload))
        else:
            outcome = detector.check(decode_video(payload, blob_id(payload)).frames)
        sample_ref = self.store.put_blob(payload)
        self.store.record_audit_event(AuditEvent(
            event_kind="pad_check",
            identity=identity_id,
            instrument=PAD_INSTRUMENT[modality],
            outcome_summary={"decision": outcome.decision, "score": outcome.score,
                             "sample_ref": sample_ref, "activity_id": activity_id},
        ))
        if activity_id:
            self.store.append_activity_record(activity_id, InstrumentResult.pad(outcome, sample_ref))
        if outcome.decision == "attack":
            logger.warning(f"⚠️ {outcome.instrument} flagged sample {sample_ref[:12]} as an attack")
        return outcome

    # ============ Reports ============

    def activity_results(self, activity_id: str) -> list[InstrumentResult]:
        return [InstrumentResult.model_validate(doc) for doc in self.store.activity_records(activity_id)]

    def build_report(self, activity_id: str, identity_id: Optional[str] = None) -> TrustReport:
        """Fuse everything recorded for an activity and persist the report."""
        results = self.activity_results(activity_id)
        if identity_id is None:
            claimed = sorted({r.outcome.identity for r in results if r.kind == "verification"})
            if not claimed:
                raise UnknownActivity(f"activity {activity_id!r} has no verification results", activity_id=activity_id)
            if len(claimed) > 1:
                raise MalformedSample(f"activity {activity_id!r} mixes identities {claimed}")
            identity_id = claimed[0]
        self.store.get_identity(identity_id)
        report = build_trust_report(identity_id, activity_id, results, self.settings.fusion)
        self.store.save_report(activity_id, report_to_json(report))
        self.store.record_audit_event(AuditEvent(
            event_kind="fuse",
            identity=identity_id,
            outcome_summary={"activity_id": activity_id, "decision": report.decision,
                             "fused_score": report.fused_score, "pad_flags": len(report.pad_flags)},
        ))
        logger.info(f"📋 Activity {activity_id}: {report.decision} (fused {report.fused_score:.4f})")
        return report

    def report_json(self, activity_id: str) -> str:
        text = self.store.load_report(activity_id)
        if text is None:
            raise UnknownActivity(f"no report for activity {activity_id!r}", activity_id=activity_id)
        return text

    def report(self, activity_id: str) -> TrustReport:
        return TrustReport.model_validate_json(self.report_json(activity_id))


# Singleton instance
_service: Optional[BiometricService] = None
_service_lock = threading.Lock()


def get_biometric_service() -> BiometricService:
    """Get or create the biometric service singleton."""
    global _service
    with _service_lock:
        if _service is None:
            _service = BiometricService()
    return _service


def reset_biometric_service(service: Optional[BiometricService] = None) -> None:
    global _service
    with _service_lock:
        _service = service
