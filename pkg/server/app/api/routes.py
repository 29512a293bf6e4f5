"""
API Routes for the Biometric Trust Server.
"""
import base64
import binascii
from datetime import datetime
from typing import Literal, Optional

from fastapi import APIRouter, Depends, Response
from pydantic import BaseModel, ConfigDict, Field

from ..config import Modality
from ..core.errors import MalformedSample, PayloadTooLarge
from ..core.models import EnrollmentStatus, Identity, PadOutcome, VerificationOutcome
from ..pipeline.orchestrator import BiometricService, get_biometric_service


router = APIRouter()


# ============ Request/Response Models ============

class RegisterRequest(BaseModel):
    display_name: str

    model_config = ConfigDict(json_schema_extra={"example": {"display_name": "Ada Lovelace"}})


class PayloadRequest(BaseModel):
    """Base class for requests carrying a base64-encoded biometric payload."""
    payload: str = Field(description="base64 of a WAV file, an NPZ frame container or a keystroke stream")


class EnrollRequest(PayloadRequest):
    session_id: str
    captured_at: Optional[datetime] = None
    finalize: bool = False


class EnrollResponse(BaseModel):
    status: EnrollmentStatus
    templates: Optional[int] = None


class VerifyRequest(PayloadRequest):
    activity_id: Optional[str] = None
    threshold: Optional[float] = None


class PadRequest(PayloadRequest):
    activity_id: Optional[str] = None
    identity_id: Optional[str] = None


class ReportRequest(BaseModel):
    identity_id: Optional[str] = None


class HealthResponse(BaseModel):
    status: str
    instruments: list[str]


def decode_payload(text: str, service: BiometricService) -> bytes:
    """Decode a base64 payload and enforce the per-request size cap."""
    try:
        payload = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as e:
        raise MalformedSample(f"payload is not valid base64: {e}") from e
    limit = service.settings.max_payload_mb * 1024 * 1024
    if len(payload) > limit:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {service.settings.max_payload_mb} MB")
    if not payload:
        raise MalformedSample("payload is empty")
    return payload


def _report_response(text: str) -> Response:
    return Response(content=text, media_type="application/json")


# ============ Endpoints ============

@router.get("/health", response_model=HealthResponse, tags=["System"])
async def health_check(service: BiometricService = Depends(get_biometric_service)):
    """Liveness plus the instruments whose models are loaded."""
    return HealthResponse(status="ok", instruments=service.available_instruments())


@router.post("/learners", response_model=Identity, status_code=201, tags=["Registry"])
async def register_learner(request: RegisterRequest, service: BiometricService = Depends(get_biometric_service)):
    return service.register(request.display_name)


@router.post("/learners/{identity_id}/enroll/{modality}", response_model=EnrollResponse, tags=["Registry"])
async def enroll_sample(
    identity_id: str,
    modality: Modality,
    request: EnrollRequest,
    service: BiometricService = Depends(get_biometric_service),
):
    """
    Submit one enrollment sample. With `finalize`, templates are built as soon
    as the modality's enrollment policy is satisfied.
    """
    payload = decode_payload(request.payload, service)
    status = service.submit_enrollment(identity_id, modality, payload, request.session_id, request.captured_at)
    templates = None
    if request.finalize:
        templates = len(service.finalize_enrollment(identity_id, modality))
        status = service.enrollment_status(identity_id, modality)
    return EnrollResponse(status=status, templates=templates)


@router.post("/learners/{identity_id}/verify/{modality}", response_model=VerificationOutcome, tags=["Verification"])
async def verify_sample(
    identity_id: str,
    modality: Modality,
    request: VerifyRequest,
    service: BiometricService = Depends(get_biometric_service),
):
    payload = decode_payload(request.payload, service)
    return service.verify(identity_id, modality, payload, request.activity_id, request.threshold)


@router.post("/pad/{modality}", response_model=PadOutcome, tags=["Anti-Spoofing"])
async def pad_check(
    modality: Literal["voice", "face"],
    request: PadRequest,
    service: BiometricService = Depends(get_biometric_service),
):
    payload = decode_payload(request.payload, service)
    return service.pad_check(modality, payload, request.activity_id, request.identity_id)


@router.post("/activities/{activity_id}/report", tags=["Reports"])
async def build_report(
    activity_id: str,
    request: Optional[ReportRequest] = None,
    service: BiometricService = Depends(get_biometric_service),
):
    """Fuse the activity's recorded results into a persisted trust report."""
    service.build_report(activity_id, request.identity_id if request else None)
    return _report_response(service.report_json(activity_id))


@router.get("/activities/{activity_id}/report", tags=["Reports"])
async def get_report(activity_id: str, service: BiometricService = Depends(get_biometric_service)):
    return _report_response(service.report_json(activity_id))


@router.get("/", tags=["System"])
async def root():
    """Root endpoint with API information."""
    return {
        "name": "Biometric Trust API",
        "version": "1.0.0",
        "schema": 1,
        "endpoints": {
            "health": "/health",
            "register": "/learners (POST)",
            "enroll": "/learners/{id}/enroll/{modality} (POST)",
            "verify": "/learners/{id}/verify/{modality} (POST)",
            "pad": "/pad/{modality} (POST)",
            "report": "/activities/{id}/report (POST, GET)",
        },
    }
