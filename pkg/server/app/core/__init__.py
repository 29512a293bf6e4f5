# Core modules: registry, signal processing and shared domain types
from .errors import BiometricError
from .models import Identity, Template, VerificationOutcome, PadOutcome
from .store import TemplateStore

__all__ = ["BiometricError", "Identity", "Template", "VerificationOutcome", "PadOutcome", "TemplateStore"]
