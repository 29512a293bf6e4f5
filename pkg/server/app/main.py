"""
Biometric Trust Server - FastAPI Application Entry Point

Enrollment, verification, presentation-attack detection and trust reports
for the voice, face and keystroke instruments.
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .api import router
from .config import get_settings
from .core.errors import BiometricError, PayloadTooLarge
from .core.logging_setup import configure_logging
from .pipeline.orchestrator import get_biometric_service


logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Lifespan context manager for startup/shutdown events.
    Opens the data directory and probes which instruments have trained models.
    """
    configure_logging(get_settings().log_level)
    logger.info("🚀 Starting Biometric Trust Server...")

    service = get_biometric_service()
    logger.info(f"📂 Data directory: {service.store.root}")
    instruments = service.available_instruments()
    logger.info(f"✅ Server ready! Instruments: {', '.join(instruments) or 'none'}")
    missing = sorted({"VR", "FR", "KD", "FRA", "VRA"} - set(instruments))
    if missing:
        logger.warning(f"⚠️ Unavailable until trained: {', '.join(missing)}")

    yield

    logger.info("👋 Shutting down server...")


async def biometric_error_handler(request: Request, exc: BiometricError) -> JSONResponse:
    return JSONResponse(status_code=exc.status_code, content=exc.to_dict())


def create_app() -> FastAPI:
    """Create and configure the FastAPI application."""
    settings = get_settings()

    app = FastAPI(
        title=settings.app_name,
        description="""
# 🔐 Biometric Trust API

Multi-instrument e-authentication for online assessment.

## Instruments
- **VR** speaker verification (i-vectors) and **VRA** replay detection
- **FR** face verification and **FRA** print/replay detection
- **KD** keystroke dynamics

## Usage
Register a learner, enroll samples per modality, then submit probes under an
activity id and request the activity's trust report.
        """,
        version="1.0.0",
        lifespan=lifespan,
        docs_url="/docs",
        redoc_url="/redoc",
    )

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_origins,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )

    limit = settings.max_payload_mb * 1024 * 1024

    @app.middleware("http")
    async def payload_cap(request: Request, call_next):
        length = request.headers.get("content-length")
        # base64 inflates payloads by 4/3
        if length and length.isdigit() and int(length) > limit * 4 // 3 + 4096:
            return JSONResponse(status_code=413, content=PayloadTooLarge(
                f"request body exceeds {settings.max_payload_mb} MB").to_dict())
        return await call_next(request)

    app.add_exception_handler(BiometricError, biometric_error_handler)
    app.include_router(router)

    return app


# Create the application instance
app = create_app()


if __name__ == "__main__":
    import uvicorn
    settings = get_settings()
    uvicorn.run(
        "app.main:app",
        host=settings.listen_host,
        port=settings.listen_port,
        reload=settings.debug,
    )
