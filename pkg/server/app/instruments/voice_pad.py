"""
VRA instrument: one-class GMM over bona fide MFCC frames. Replayed speech
(band-limited, noisier) scores a lower per-frame log-likelihood than the
threshold learned on genuine recordings.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..config import FrontendConfig
from ..core.audio import AudioBuffer, read_wav, voiced_features
from ..core.errors import DigestMismatch
from ..core.gmm import DiagGmm, fit_diag_gmm
from ..core.models import PadOutcome


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OccGmm:
    gmm: DiagGmm
    score_threshold: float
    frontend_digest: str

    def __post_init__(self):
        if not np.isfinite(self.score_threshold):
            raise ValueError("score threshold must be finite")

    def with_threshold(self, threshold: float) -> "OccGmm":
        return OccGmm(self.gmm, float(threshold), self.frontend_digest)

    def to_dict(self) -> dict:
        return {
            "kind": "occ_gmm",
            "score_threshold": self.score_threshold,
            "frontend_digest": self.frontend_digest,
            **self.gmm.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OccGmm":
        return cls(DiagGmm.from_dict(doc), float(doc["score_threshold"]), doc["frontend_digest"])


def train_occ(
    bona_fide: Sequence[AudioBuffer],
    n_components: int,
    iters: int,
    seed: int,
    frontend: FrontendConfig,
    threshold_percentile: float = 5.0,
    var_floor_ratio: float = 1e-3,
    min_frames_per_component: int = 10,
) -> OccGmm:
    """Fit the bona fide model; threshold at a low percentile of training-sample scores."""
    features = [voiced_features(buf, frontend).frames for buf in bona_fide]
    gmm, _ = fit_diag_gmm(features, n_components, iters, seed,
                          var_floor_ratio=var_floor_ratio, min_frames_per_component=min_frames_per_component)
    per_sample = [gmm.average_log_likelihood(f) for f in features if len(f)]
    threshold = float(np.percentile(per_sample, threshold_percentile))
    logger.info(f"OCC GMM trained: K={n_components} on {len(per_sample)} samples, threshold {threshold:.3f}")
    return OccGmm(gmm=gmm, score_threshold=threshold, frontend_digest=frontend.digest())


def occ_frame_score(model: OccGmm, frames: np.ndarray) -> float:
    return model.gmm.average_log_likelihood(frames) - model.score_threshold


def score_voice_pad(model: OccGmm, probe: AudioBuffer, frontend: FrontendConfig) -> PadOutcome:
    if model.frontend_digest != frontend.digest():
        raise DigestMismatch("OCC model was trained with a different front-end configuration")
    frames = voiced_features(probe, frontend).frames
    return PadOutcome.from_score("VRA", occ_frame_score(model, frames))


class VoicePadInstrument:
    """Identity-agnostic replay detection for voice samples."""

    instrument = "VRA"

    def __init__(self, model: OccGmm, frontend: FrontendConfig):
        if model.frontend_digest != frontend.digest():
            raise DigestMismatch("OCC model was trained with a different front-end configuration")
        self.model = model
        self.frontend = frontend

    def decode(self, payload: bytes) -> AudioBuffer:
        return read_wav(payload, self.frontend.sample_rate)

    def check(self, probe: AudioBuffer) -> PadOutcome:
        return score_voice_pad(self.model, probe, self.frontend)
