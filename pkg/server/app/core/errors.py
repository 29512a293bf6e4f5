"""
Domain error hierarchy.

Every failure an instrument, the registry or the evaluation harness can
raise derives from BiometricError. The `code` is the stable identifier used
on the wire and in CLI output; `status_code` is the HTTP status the API maps
it to.
"""


class BiometricError(Exception):
    """Base class for all domain errors."""

    code: str = "BiometricError"
    status_code: int = 400

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.context = context

    def to_dict(self) -> dict:
        body = {"error": self.code, "detail": self.message}
        if self.context:
            body["context"] = self.context
        return body


# ============ Registry ============


class UnknownIdentity(BiometricError):
    """Identity id is not registered."""
    code = "UnknownIdentity"
    status_code = 404


class InvalidName(BiometricError):
    """Display name is empty or not printable."""
    code = "InvalidName"
    status_code = 422


class MalformedSample(BiometricError):
    """Payload does not match its declared modality."""
    code = "MalformedSample"
    status_code = 422


class IncompleteEnrollment(BiometricError):
    """Enrollment policy not yet satisfied."""
    code = "IncompleteEnrollment"
    status_code = 409


class AlreadyEnrolled(BiometricError):
    """Templates already exist for this identity and modality."""
    code = "AlreadyEnrolled"
    status_code = 409


class NotEnrolled(BiometricError):
    """Claimed identity has no templates for this modality."""
    code = "NotEnrolled"
    status_code = 404


class CorruptLog(BiometricError):
    """Audit log line could not be parsed."""
    code = "CorruptLog"
    status_code = 500


class StorageError(BiometricError):
    """Underlying storage failed."""
    code = "StorageError"
    status_code = 500


# ============ Signal processing ============


class AudioTooShort(BiometricError):
    """Audio shorter than one analysis frame."""
    code = "AudioTooShort"
    status_code = 422


class AllSilent(BiometricError):
    """Every frame is below the absolute energy floor."""
    code = "AllSilent"
    status_code = 422


class InsufficientSpeech(BiometricError):
    """Voiced duration below the minimum."""
    code = "InsufficientSpeech"
    status_code = 422


class UnsupportedAudio(BiometricError):
    """WAV file is not mono 16-bit PCM at the configured rate."""
    code = "UnsupportedAudio"
    status_code = 422


class DimensionMismatch(BiometricError):
    """Operand dimensions disagree."""
    code = "DimensionMismatch"
    status_code = 422


# ============ Models ============


class TooFewFrames(BiometricError):
    """Not enough frames to train or enroll."""
    code = "TooFewFrames"
    status_code = 422


class DegenerateComponent(BiometricError):
    """A mixture weight underflowed."""
    code = "DegenerateComponent"
    status_code = 500


class SingularSystem(BiometricError):
    """Linear system ill-conditioned after regularization."""
    code = "SingularSystem"
    status_code = 500


class DigestMismatch(BiometricError):
    """Model was built with a different configuration."""
    code = "DigestMismatch"
    status_code = 409


class NoModel(BiometricError):
    """No trained model is available."""
    code = "NoModel"
    status_code = 404


class InstrumentUnavailable(BiometricError):
    """Instrument models are not loaded."""
    code = "InstrumentUnavailable"
    status_code = 503


# ============ Instruments ============


class EmptyProbe(BiometricError):
    """Probe contains no frames."""
    code = "EmptyProbe"
    status_code = 422


class EmptyInput(BiometricError):
    """No input frames were supplied."""
    code = "EmptyInput"
    status_code = 422


class UnsortedStream(BiometricError):
    """Key events are not sorted by press time."""
    code = "UnsortedStream"
    status_code = 422


class NegativeDwell(BiometricError):
    """Key release precedes its press."""
    code = "NegativeDwell"
    status_code = 422


class TooFewKeystrokes(BiometricError):
    """Keystroke stream below the policy minimum."""
    code = "TooFewKeystrokes"
    status_code = 422


class ProbeTooShort(BiometricError):
    """Probe has fewer keystrokes than the scoring floor."""
    code = "ProbeTooShort"
    status_code = 422


class SingleClassData(BiometricError):
    """Training data must contain both classes."""
    code = "SingleClassData"
    status_code = 422


# ============ Evaluation ============


class EmptyScores(BiometricError):
    """Score or decision list is empty."""
    code = "EmptyScores"
    status_code = 422


class UnreachableTarget(BiometricError):
    """No threshold achieves the requested target."""
    code = "UnreachableTarget"
    status_code = 422


# ============ Service ============


class PayloadTooLarge(BiometricError):
    """Request payload exceeds the configured cap."""
    code = "PayloadTooLarge"
    status_code = 413


class UnknownActivity(BiometricError):
    """No report exists for this activity."""
    code = "UnknownActivity"
    status_code = 404

