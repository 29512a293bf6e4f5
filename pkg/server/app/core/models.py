"""
Domain records shared by the registry, the instruments and the trust engine.

Everything here is a pydantic model so it round-trips through the JSON
documents the store writes and the API returns.
"""
from datetime import datetime, timezone
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..config import EnrollmentPolicy, Modality


Instrument = Literal["FR", "VR", "KD", "FRA", "VRA"]
EventKind = Literal["enroll", "verify", "pad_check", "fuse"]
PadDecision = Literal["bona_fide", "attack"]

MODALITY_INSTRUMENT: dict[str, Instrument] = {"voice": "VR", "face": "FR", "keystroke": "KD"}
PAD_INSTRUMENT: dict[str, Instrument] = {"voice": "VRA", "face": "FRA"}


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


# ============ Registry Records ============

class Identity(BaseModel):
    id: str
    display_name: str
    created_at: datetime


class BiometricSample(BaseModel):
    """Enrollment or probe sample; the payload itself lives in the blob store."""
    modality: Modality
    payload_ref: str
    duration_or_count: float = Field(gt=0)
    captured_at: datetime
    session_id: str


class AuditEvent(BaseModel):
    event_kind: EventKind
    identity: Optional[str] = None
    instrument: Optional[Instrument] = None
    outcome_summary: dict[str, Any] = Field(default_factory=dict)
    at: datetime = Field(default_factory=utcnow)


class EnrollmentStatus(BaseModel):
    identity: str
    modality: Modality
    samples: int
    qualifying_samples: int
    sessions: int
    total_payload: float
    complete: bool
    policy: EnrollmentPolicy
    advisories: list[str] = Field(default_factory=list)


# ============ Template Bodies ============

class IVector(BaseModel):
    kind: Literal["ivector"] = "ivector"
    w: list[float]
    source_sample: str

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.w, dtype=np.float64)


class FaceEmbedding(BaseModel):
    kind: Literal["face_embedding"] = "face_embedding"
    v: list[float]
    extractor_id: str
    source: Optional[str] = None

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.v, dtype=np.float64)


class KeyStat(BaseModel):
    mean: float
    std: float
    count: int = Field(ge=0)


class TypingModel(BaseModel):
    kind: Literal["typing_model"] = "typing_model"
    per_key_dwell: dict[str, KeyStat]
    per_pair_flight: dict[str, KeyStat]
    global_dwell: KeyStat
    global_flight: KeyStat
    total_keystrokes: int


TemplateBody = Annotated[Union[IVector, FaceEmbedding, TypingModel], Field(discriminator="kind")]

_BODY_KIND = {"voice": "ivector", "face": "face_embedding", "keystroke": "typing_model"}


class Template(BaseModel):
    """Write-once enrollment artifact."""
    identity: str
    modality: Modality
    session_id: str
    body: TemplateBody
    created_at: datetime = Field(default_factory=utcnow)

    @model_validator(mode="after")
    def _body_matches_modality(self) -> "Template":
        if self.body.kind != _BODY_KIND[self.modality]:
            raise ValueError(f"{self.body.kind} body cannot back a {self.modality} template")
        return self


# ============ Instrument Outcomes ============

class VerificationOutcome(BaseModel):
    instrument: Instrument
    identity: str
    accepted: bool
    score: float
    threshold: float
    similarity: Optional[float] = None
    template_scores: list[float] = Field(default_factory=list)


class PadOutcome(BaseModel):
    instrument: Instrument
    decision: PadDecision
    score: float

    @model_validator(mode="after")
    def _decision_follows_score(self) -> "PadOutcome":
        if (self.decision == "bona_fide") != (self.score > 0):
            raise ValueError("decision must be bona_fide exactly when score > 0")
        return self

    @classmethod
    def from_score(cls, instrument: Instrument, score: float) -> "PadOutcome":
        return cls(instrument=instrument, decision="bona_fide" if score > 0 else "attack", score=score)
