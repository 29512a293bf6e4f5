"""
Template store: identity registry, content-addressed blobs, enrollment
samples, write-once templates, activity results and the audit log.

Everything lives under one data directory as plain JSON so a deployment can
be inspected with a text editor. Writes are serialized per identity; the
audit log has a single appender.
"""
import hashlib
import json
import logging
import os
import shutil
import tempfile
import threading
import uuid
from collections import defaultdict
from datetime import timedelta
from pathlib import Path
from typing import Iterable, Optional

from pydantic import BaseModel, ValidationError

from ..config import EnrollmentPolicy, default_policies
from .errors import (
    AlreadyEnrolled,
    CorruptLog,
    InvalidName,
    MalformedSample,
    StorageError,
    UnknownIdentity,
)
from .models import AuditEvent, BiometricSample, EnrollmentStatus, Identity, Template, utcnow


logger = logging.getLogger(__name__)


def blob_id(payload: bytes) -> str:
    """Lowercase hex SHA-256 of the payload bytes."""
    return hashlib.sha256(payload).hexdigest()


def evaluate_policy(samples: list[BiometricSample], policy: EnrollmentPolicy) -> tuple[int, int, bool]:
    """Return (qualifying samples, distinct sessions among them, complete)."""
    qualifying = [s for s in samples if s.duration_or_count >= policy.min_payload]
    sessions = len({s.session_id for s in qualifying})
    complete = len(qualifying) >= policy.min_samples and sessions >= policy.min_sessions
    return len(qualifying), sessions, complete


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise StorageError(f"could not write {path}: {e}") from e


class TemplateStore:
    """File-backed registry for identities, samples, templates and audit events."""

    def __init__(self, data_dir: str | Path, policies: Optional[dict[str, EnrollmentPolicy]] = None):
        self.root = Path(data_dir)
        self.policies = policies or default_policies()
        for sub in ("identities", "blobs", "samples", "templates", "activities", "reports", "models"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()
        self._audit_lock = threading.Lock()
        self._last_event_at: Optional[dict] = None

    @property
    def audit_path(self) -> Path:
        return self.root / "audit.jsonl"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    def _lock(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[key]

    # ============ Identities ============

    def register_learner(self, display_name: str) -> Identity:
        name = (display_name or "").strip()
        if not name or not name.isprintable():
            raise InvalidName("display_name must be a non-empty printable string")
        identity = Identity(id=uuid.uuid4().hex, display_name=name, created_at=utcnow())
        path = self.root / "identities" / f"{identity.id}.json"
        _atomic_write(path, identity.model_dump_json())
        logger.info(f"Registered learner {identity.id} ({name})")
        return identity

    def get_identity(self, identity_id: str) -> Identity:
        path = self.root / "identities" / f"{identity_id}.json"
        if not identity_id or not path.is_file():
            raise UnknownIdentity(f"unknown identity {identity_id!r}", identity=identity_id)
        return Identity.model_validate_json(path.read_text(encoding="utf-8"))

    # ============ Blobs ============

    def put_blob(self, payload: bytes) -> str:
        ref = blob_id(payload)
        path = self.root / "blobs" / ref
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp, path)
        return ref

    def get_blob(self, ref: str) -> bytes:
        path = self.root / "blobs" / ref
        if not path.is_file():
            raise MalformedSample(f"payload {ref} is not in the blob store", payload_ref=ref)
        return path.read_bytes()

    def has_blob(self, ref: str) -> bool:
        return (self.root / "blobs" / ref).is_file()

    # ============ Enrollment Samples ============

    def _samples_path(self, identity_id: str, modality: str) -> Path:
        return self.root / "samples" / identity_id / f"{modality}.jsonl"

    def enrollment_samples(self, identity_id: str, modality: str) -> list[BiometricSample]:
        path = self._samples_path(identity_id, modality)
        if not path.is_file():
            return []
        with open(path, encoding="utf-8") as f:
            return [BiometricSample.model_validate_json(line) for line in f if line.strip()]

    def submit_enrollment_sample(self, identity_id: str, sample: BiometricSample) -> EnrollmentStatus:
        self.get_identity(identity_id)
        if not self.has_blob(sample.payload_ref):
            raise MalformedSample("sample payload must be stored before submission", payload_ref=sample.payload_ref)
        with self._lock(identity_id):
            path = self._samples_path(identity_id, sample.modality)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as f:
                f.write(sample.model_dump_json() + "\n")
        return self.enrollment_status(identity_id, sample.modality)

    def enrollment_status(self, identity_id: str, modality: str) -> EnrollmentStatus:
        self.get_identity(identity_id)
        policy = self.policies[modality]
        samples = self.enrollment_samples(identity_id, modality)
        qualifying, sessions, complete = evaluate_policy(samples, policy)
        advisories = self._session_advisories(samples)
        for note in advisories:
            logger.warning(f"⚠️ {identity_id}/{modality}: {note}")
        return EnrollmentStatus(
            identity=identity_id,
            modality=modality,
            samples=len(samples),
            qualifying_samples=qualifying,
            sessions=sessions,
            total_payload=float(sum(s.duration_or_count for s in samples)),
            complete=complete,
            policy=policy,
            advisories=advisories,
        )

    @staticmethod
    def _session_advisories(samples: list[BiometricSample]) -> list[str]:
        # Sessions should be days apart; recorded, never enforced.
        first_seen: dict[str, object] = {}
        for s in sorted(samples, key=lambda s: s.captured_at):
            first_seen.setdefault(s.session_id, s.captured_at)
        starts = sorted(first_seen.values())
        close = sum(1 for a, b in zip(starts, starts[1:]) if b - a < timedelta(days=1))
        if close:
            return [f"{close} consecutive session(s) started less than a day apart"]
        return []

    # ============ Templates ============

    def _templates_dir(self, identity_id: str, modality: str) -> Path:
        return self.root / "templates" / identity_id / modality

    def has_templates(self, identity_id: str, modality: str) -> bool:
        path = self._templates_dir(identity_id, modality)
        return path.is_dir() and any(path.glob("*.json"))

    def save_templates(self, identity_id: str, modality: str, templates: list[Template]) -> list[Template]:
        """Persist a template set once; a second call raises AlreadyEnrolled."""
        self.get_identity(identity_id)
        target = self._templates_dir(identity_id, modality)
        with self._lock(identity_id):
            if target.exists():
                raise AlreadyEnrolled(f"{identity_id} is already enrolled for {modality}")
            target.parent.mkdir(parents=True, exist_ok=True)
            staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=".tmp-"))
            try:
                for n, template in enumerate(templates):
                    (staging / f"{n:05d}.json").write_text(template.model_dump_json(), encoding="utf-8")
                shutil.move(str(staging), str(target))
            except OSError as e:
                shutil.rmtree(staging, ignore_errors=True)
                raise StorageError(f"could not persist templates: {e}") from e
        return templates

    def fetch_templates(self, identity_id: str, modality: str) -> list[Template]:
        self.get_identity(identity_id)
        path = self._templates_dir(identity_id, modality)
        if not path.is_dir():
            return []
        return [
            Template.model_validate_json(p.read_text(encoding="utf-8"))
            for p in sorted(path.glob("*.json"))
        ]

    # ============ Audit Log ============

    def record_audit_event(self, event: AuditEvent) -> AuditEvent:
        with self._audit_lock:
            if self._last_event_at is None:
                self._last_event_at = {}
                for previous in self.read_audit_log():
                    self._last_event_at[previous.identity] = previous.at
            last = self._last_event_at.get(event.identity)
            if last is not None and event.at <= last:
                event = event.model_copy(update={"at": last + timedelta(microseconds=1)})
            try:
                with open(self.audit_path, "a", encoding="utf-8") as f:
                    f.write(event.model_dump_json() + "\n")
            except OSError as e:
                raise StorageError(f"could not append audit event: {e}") from e
            self._last_event_at[event.identity] = event.at
        return event

    def read_audit_log(self) -> list[AuditEvent]:
        if not self.audit_path.is_file():
            return []
        events = []
        with open(self.audit_path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    events.append(AuditEvent.model_validate_json(line))
                except ValidationError as e:
                    raise CorruptLog(f"audit log line {line_no} is corrupt", line=line_no) from e
        return events

    # ============ Activities & Reports ============

    def append_activity_record(self, activity_id: str, record: BaseModel) -> None:
        path = self.root / "activities" / f"{_safe_name(activity_id)}.jsonl"
        with self._lock(f"activity:{activity_id}"):
            with open(path, "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")

    def activity_records(self, activity_id: str) -> list[dict]:
        path = self.root / "activities" / f"{_safe_name(activity_id)}.jsonl"
        if not path.is_file():
            return []
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def save_report(self, activity_id: str, text: str) -> None:
        _atomic_write(self.root / "reports" / f"{_safe_name(activity_id)}.json", text)

    def load_report(self, activity_id: str) -> Optional[str]:
        path = self.root / "reports" / f"{_safe_name(activity_id)}.json"
        return path.read_text(encoding="utf-8") if path.is_file() else None

    # ============ Model Files ============

    def write_model(self, name: str, document: dict) -> Path:
        path = self.models_dir / f"{name}.json"
        _atomic_write(path, json.dumps(document))
        return path

    def read_model(self, name: str) -> Optional[dict]:
        path = self.models_dir / f"{name}.json"
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def read_thresholds(self) -> dict[str, float]:
        path = self.root / "thresholds.json"
        if not path.is_file():
            return {}
        return {k: float(v) for k, v in json.loads(path.read_text(encoding="utf-8")).items()}

    def write_thresholds(self, values: dict[str, float]) -> None:
        _atomic_write(self.root / "thresholds.json", json.dumps(values, sort_keys=True, indent=2))

    def iter_identities(self) -> Iterable[Identity]:
        for path in sorted((self.root / "identities").glob("*.json")):
            yield Identity.model_validate_json(path.read_text(encoding="utf-8"))


def _safe_name(name: str) -> str:
    cleaned = "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
    if not cleaned or cleaned.startswith("."):
        raise MalformedSample(f"invalid activity id {name!r}")
    return cleaned
