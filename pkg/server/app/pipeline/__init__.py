# Trust engine and the service that wires instruments to the store
from .orchestrator import BiometricService, get_biometric_service
from .trust import TrustReport, build_trust_report

__all__ = ["BiometricService", "get_biometric_service", "TrustReport", "build_trust_report"]
