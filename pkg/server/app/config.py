"""
Configuration management for the biometric trust service.
Uses environment variables, an optional JSON config file and sensible defaults.
"""
import hashlib
import json
import os
from functools import lru_cache
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)


Modality = Literal["voice", "face", "keystroke"]


# ============ Instrument Configuration ============

class FrontendConfig(BaseModel):
    """MFCC front-end shared by the VR and VRA instruments."""
    sample_rate: int = 16000
    preemphasis: float = 0.97
    frame_len: float = 0.025
    frame_step: float = 0.010
    n_fft: Optional[int] = None
    n_mels: int = 24
    n_ceps: int = 19
    delta_order: Literal[0, 1, 2] = 2
    delta_window: int = 2
    vad_energy_quantile: float = 0.1
    vad_offset_db: float = 3.0

    @model_validator(mode="after")
    def _check(self) -> "FrontendConfig":
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must lie in [0, 1)")
        if not self.frame_len >= self.frame_step > 0:
            raise ValueError("need frame_len >= frame_step > 0")
        if self.n_mels < 2 or not 1 <= self.n_ceps <= self.n_mels:
            raise ValueError("need n_mels >= 2 and 1 <= n_ceps <= n_mels")
        if self.n_fft is not None:
            if self.n_fft & (self.n_fft - 1) or self.n_fft < self.frame_samples:
                raise ValueError("n_fft must be a power of two >= frame samples")
        if not 0.0 <= self.vad_energy_quantile <= 1.0:
            raise ValueError("vad_energy_quantile must lie in [0, 1]")
        return self

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_len * self.sample_rate))

    @property
    def step_samples(self) -> int:
        return int(round(self.frame_step * self.sample_rate))

    @property
    def fft_size(self) -> int:
        if self.n_fft is not None:
            return self.n_fft
        n = 1
        while n < self.frame_samples:
            n *= 2
        return n

    @property
    def n_features(self) -> int:
        return self.n_ceps * (1 + self.delta_order)

    def digest(self) -> str:
        """Stable hash identifying the feature space this config produces."""
        payload = json.dumps(self.model_dump(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


class SpeakerConfig(BaseModel):
    ubm_components: int = 32
    ubm_iters: int = 10
    ivector_dim: int = 400
    tv_iters: int = 5
    var_floor_ratio: float = 1e-3
    min_voiced_s: float = 2.0
    seed: int = 0


class VoicePadConfig(BaseModel):
    components: int = 64
    iters: int = 10
    threshold_percentile: float = 5.0
    seed: int = 0


class FaceConfig(BaseModel):
    extractor: str = "toy-16x16"
    frame_stride: Optional[int] = None
    accept_fraction: float = 0.5


class FacePadConfig(BaseModel):
    reference_sigma: float = 0.5
    aggregation: Literal["median", "mean"] = "median"
    epochs: int = 300
    learning_rate: float = 0.5
    l2: float = 1e-3
    min_per_class: int = 10
    seed: int = 0


class KeystrokeConfig(BaseModel):
    std_floor_ms: float = 5.0
    min_entry_count: int = 3
    probe_min_keystrokes: int = 50


class InstrumentThresholds(BaseModel):
    """Decision thresholds; overwritten by calibration."""
    vr: float = 0.5
    fr: float = 0.5
    kd: float = 1.5


class FusionConfig(BaseModel):
    weights: dict[str, float] = Field(default_factory=lambda: {"VR": 1.0, "FR": 1.0, "KD": 1.0})
    trust_threshold: float = 0.6
    min_instruments: int = 1

    @field_validator("weights")
    @classmethod
    def _positive_weight(cls, weights: dict[str, float]) -> dict[str, float]:
        if any(w < 0 for w in weights.values()):
            raise ValueError("fusion weights must be non-negative")
        if not any(w > 0 for w in weights.values()):
            raise ValueError("at least one fusion weight must be positive")
        return weights

    @field_validator("trust_threshold")
    @classmethod
    def _unit_interval(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError("trust_threshold must lie in [0, 1]")
        return value


class EnrollmentPolicy(BaseModel):
    """Completeness requirements for one modality."""
    modality: Modality
    min_samples: int
    min_sessions: int
    min_payload: float

    @model_validator(mode="after")
    def _minima(self) -> "EnrollmentPolicy":
        if self.min_samples < 1 or self.min_sessions < 1 or self.min_payload < 1:
            raise ValueError("all enrollment minima must be >= 1")
        return self


def default_policies() -> dict[str, EnrollmentPolicy]:
    return {
        "voice": EnrollmentPolicy(modality="voice", min_samples=15, min_sessions=3, min_payload=10),
        "face": EnrollmentPolicy(modality="face", min_samples=1, min_sessions=1, min_payload=5),
        "keystroke": EnrollmentPolicy(modality="keystroke", min_samples=1, min_sessions=1, min_payload=750),
    }


# ============ Application Settings ============

class Settings(BaseSettings):
    """Application settings loaded from environment variables and a JSON file."""

    # API Configuration
    app_name: str = "Biometric Trust API"
    debug: bool = False
    log_level: str = "INFO"
    listen_host: str = "0.0.0.0"
    listen_port: int = 8000
    max_payload_mb: int = 50
    cors_origins: list[str] = ["http://localhost:3000", "http://127.0.0.1:3000"]

    # Storage
    data_dir: str = "./data"

    # Instruments
    frontend: FrontendConfig = Field(default_factory=FrontendConfig)
    speaker: SpeakerConfig = Field(default_factory=SpeakerConfig)
    voice_pad: VoicePadConfig = Field(default_factory=VoicePadConfig)
    face: FaceConfig = Field(default_factory=FaceConfig)
    face_pad: FacePadConfig = Field(default_factory=FacePadConfig)
    keystroke: KeystrokeConfig = Field(default_factory=KeystrokeConfig)
    thresholds: InstrumentThresholds = Field(default_factory=InstrumentThresholds)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    policies: dict[str, EnrollmentPolicy] = Field(default_factory=default_policies)

    model_config = SettingsConfigDict(
        env_prefix="BIOTRUST_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        sources = [init_settings, env_settings, dotenv_settings]
        config_file = os.environ.get("BIOTRUST_CONFIG_FILE")
        if config_file:
            sources.append(JsonConfigSettingsSource(settings_cls, json_file=config_file))
        sources.append(file_secret_settings)
        return tuple(sources)

    def policy(self, modality: str) -> EnrollmentPolicy:
        return self.policies[modality]


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
