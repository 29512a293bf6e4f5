"""
VR instrument: GMM-UBM, total-variability model, i-vector extraction and
cosine scoring against every enrollment i-vector of the claimed identity.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..config import FrontendConfig, SpeakerConfig
from ..core.audio import AudioBuffer, MfccMatrix, read_wav, voiced_features, write_wav
from ..core.embeddings import cosine_scores, cosine_similarity
from ..core.enrollment import enroll
from ..core.errors import (
    BiometricError,
    DigestMismatch,
    DimensionMismatch,
    InsufficientSpeech,
    NotEnrolled,
    SingularSystem,
)
from ..core.gmm import DiagGmm, fit_diag_gmm
from ..core.models import BiometricSample, IVector, Template, VerificationOutcome
from ..core.store import TemplateStore


logger = logging.getLogger(__name__)

__all__ = [
    "BaumWelchStats",
    "TotalVariabilityModel",
    "VoiceModels",
    "SpeakerInstrument",
    "train_ubm",
    "accumulate_bw_stats",
    "train_tv_matrix",
    "extract_ivector",
    "cosine_similarity",
    "train_voice_models",
    "enroll_speaker",
    "verify_speaker",
]


@dataclass(frozen=True)
class BaumWelchStats:
    N: np.ndarray  # K zeroth-order counts
    F: np.ndarray  # K x D centered first-order sums


@dataclass(frozen=True)
class TotalVariabilityModel:
    T: np.ndarray  # (K*D) x R
    ubm_digest: str

    @property
    def rank(self) -> int:
        return self.T.shape[1]

    def to_dict(self) -> dict:
        rows, cols = self.T.shape
        return {"kind": "total_variability", "rows": rows, "cols": cols,
                "T": self.T.reshape(-1).tolist(), "ubm_digest": self.ubm_digest}

    @classmethod
    def from_dict(cls, doc: dict) -> "TotalVariabilityModel":
        T = np.asarray(doc["T"], dtype=np.float64).reshape(doc["rows"], doc["cols"])
        return cls(T=T, ubm_digest=doc["ubm_digest"])


# ============ UBM & Statistics ============

def _frames(features: MfccMatrix | np.ndarray) -> np.ndarray:
    return features.frames if isinstance(features, MfccMatrix) else np.atleast_2d(np.asarray(features, dtype=np.float64))


def train_ubm(
    features: Sequence[MfccMatrix | np.ndarray],
    n_components: int,
    iters: int,
    seed: int,
    var_floor_ratio: float = 1e-3,
    min_frames_per_component: int = 10,
) -> DiagGmm:
    """EM-trained diagonal UBM over pooled frames, k-means++ seeded."""
    ubm, history = fit_diag_gmm(
        [_frames(f) for f in features], n_components, iters, seed,
        var_floor_ratio=var_floor_ratio, min_frames_per_component=min_frames_per_component,
    )
    logger.info(f"UBM trained: K={n_components}, log-likelihood {history[0]:.1f} -> {history[-1]:.1f}")
    return ubm


def accumulate_bw_stats(features: MfccMatrix | np.ndarray, ubm: DiagGmm) -> BaumWelchStats:
    """N_k = sum_t gamma_k(t); F_k = sum_t gamma_k(t) (x_t - mu_k)."""
    X = _frames(features)
    if X.size == 0:
        return BaumWelchStats(N=np.zeros(ubm.n_components), F=np.zeros_like(ubm.means))
    if X.shape[1] != ubm.dim:
        raise DimensionMismatch(f"frames have dimension {X.shape[1]}, UBM expects {ubm.dim}")
    gamma = ubm.posteriors(X)
    N = gamma.sum(axis=0)
    F = gamma.T @ X - N[:, None] * ubm.means
    return BaumWelchStats(N=N, F=F)


# ============ Total Variability ============

def _precision_products(T: np.ndarray, ubm: DiagGmm) -> np.ndarray:
    """T_k^T Sigma_k^-1 T_k for every component, K x R x R."""
    K, D = ubm.means.shape
    Tk = T.reshape(K, D, -1)
    return np.einsum("kdr,kd,kds->krs", Tk, 1.0 / ubm.variances, Tk)


def _posterior(stats: BaumWelchStats, T: np.ndarray, ubm: DiagGmm, tsit: np.ndarray, ridge: float):
    R = T.shape[1]
    precision = np.eye(R) + np.tensordot(stats.N, tsit, axes=1)
    linear = T.T @ (stats.F / ubm.variances).reshape(-1)
    for attempt in range(2):
        try:
            cov = np.linalg.inv(precision)
            if np.all(np.isfinite(cov)) and np.linalg.cond(precision) < 1e12:
                return cov @ linear, cov
        except np.linalg.LinAlgError:
            pass
        if attempt == 0:
            precision = precision + ridge * np.eye(R)
    raise SingularSystem("i-vector posterior precision is ill-conditioned")


def train_tv_matrix(
    stats_set: Sequence[BaumWelchStats],
    ubm: DiagGmm,
    rank: int,
    iters: int,
    seed: int,
) -> TotalVariabilityModel:
    """EM estimate of the total-variability matrix from per-utterance statistics."""
    if rank < 1:
        raise ValueError("i-vector dimension must be >= 1")
    if len(stats_set) < rank:
        message = f"only {len(stats_set)} utterances for an i-vector dimension of {rank}"
        warnings.warn(message, RuntimeWarning, stacklevel=2)
        logger.warning(f"⚠️ TooFewUtterances: {message}")
    K, D = ubm.means.shape
    rng = np.random.default_rng(seed)
    scale = 0.1 * np.sqrt(ubm.variances.reshape(-1))
    T = rng.standard_normal((K * D, rank)) * scale[:, None]
    for it in range(iters):
        tsit = _precision_products(T, ubm)
        C = np.zeros((K * D, rank))
        A = np.zeros((K, rank, rank))
        for stats in stats_set:
            w, cov = _posterior(stats, T, ubm, tsit, ridge=1e-6)
            second = cov + np.outer(w, w)
            C += np.outer(stats.F.reshape(-1), w)
            A += stats.N[:, None, None] * second
        Tk = np.empty((K, D, rank))
        for k in range(K):
            Ak = A[k] + 1e-6 * np.eye(rank) if np.linalg.cond(A[k]) > 1e12 else A[k]
            Tk[k] = np.linalg.solve(Ak, C[k * D:(k + 1) * D].T).T
        T = Tk.reshape(K * D, rank)
        logger.debug(f"TV iteration {it + 1}/{iters} done")
    return TotalVariabilityModel(T=T, ubm_digest=ubm.digest())


def extract_ivector(stats: BaumWelchStats, ubm: DiagGmm, tv: TotalVariabilityModel) -> np.ndarray:
    """Posterior mean w = (I + T' S^-1 N T)^-1 T' S^-1 F."""
    if tv.ubm_digest != ubm.digest():
        raise DigestMismatch("total-variability model was trained on a different UBM")
    if tv.T.shape[0] != ubm.n_components * ubm.dim:
        raise DimensionMismatch("total-variability rows do not match the UBM supervector size")
    w, _ = _posterior(stats, tv.T, ubm, _precision_products(tv.T, ubm), ridge=1e-10)
    return w


# ============ Model Bundle ============

@dataclass(frozen=True)
class VoiceModels:
    ubm: DiagGmm
    tv: TotalVariabilityModel
    frontend_digest: str

    def documents(self) -> dict[str, dict]:
        return {
            "ubm": {"kind": "diag_gmm", "frontend_digest": self.frontend_digest, **self.ubm.to_dict()},
            "tv": self.tv.to_dict(),
        }

    @classmethod
    def from_documents(cls, ubm_doc: dict, tv_doc: dict) -> "VoiceModels":
        ubm = DiagGmm.from_dict(ubm_doc)
        tv = TotalVariabilityModel.from_dict(tv_doc)
        if tv.ubm_digest != ubm.digest():
            raise DigestMismatch("tv.json was trained against a different ubm.json")
        return cls(ubm=ubm, tv=tv, frontend_digest=ubm_doc["frontend_digest"])


def train_voice_models(
    utterances: Sequence[AudioBuffer],
    frontend: FrontendConfig,
    speaker: SpeakerConfig,
    ivector_dim: int | None = None,
) -> VoiceModels:
    """Train UBM then total variability on a background corpus."""
    features = [voiced_features(buf, frontend) for buf in utterances]
    ubm = train_ubm(features, speaker.ubm_components, speaker.ubm_iters, speaker.seed,
                    var_floor_ratio=speaker.var_floor_ratio)
    stats = [accumulate_bw_stats(f, ubm) for f in features]
    tv = train_tv_matrix(stats, ubm, ivector_dim or speaker.ivector_dim, speaker.tv_iters, speaker.seed)
    return VoiceModels(ubm=ubm, tv=tv, frontend_digest=frontend.digest())


# ============ Instrument ============

class SpeakerInstrument:
    """Enrollment and verification for the voice modality."""

    modality = "voice"
    instrument = "VR"

    def __init__(self, models: VoiceModels, frontend: FrontendConfig, min_voiced_s: float = 2.0):
        if models.frontend_digest != frontend.digest():
            raise DigestMismatch("voice models were trained with a different front-end configuration")
        self.models = models
        self.frontend = frontend
        self.min_voiced_s = min_voiced_s

    def decode(self, payload: bytes) -> AudioBuffer:
        return read_wav(payload, self.frontend.sample_rate)

    def measure(self, payload: bytes) -> float:
        return self.decode(payload).duration

    def ivector(self, buf: AudioBuffer) -> np.ndarray:
        features = voiced_features(buf, self.frontend)
        voiced_s = len(features.frames) * self.frontend.frame_step
        if voiced_s < self.min_voiced_s:
            raise InsufficientSpeech(f"{voiced_s:.2f} s of voiced audio, need {self.min_voiced_s} s")
        stats = accumulate_bw_stats(features, self.models.ubm)
        return extract_ivector(stats, self.models.ubm, self.models.tv)

    def build_templates(self, identity_id: str, samples: list[tuple[BiometricSample, bytes]]) -> list[Template]:
        templates = []
        for sample, payload in samples:
            try:
                w = self.ivector(self.decode(payload))
            except BiometricError as e:
                raise type(e)(f"enrollment sample {sample.payload_ref}: {e.message}",
                              payload_ref=sample.payload_ref) from e
            templates.append(Template(
                identity=identity_id,
                modality="voice",
                session_id=sample.session_id,
                body=IVector(w=w.tolist(), source_sample=sample.payload_ref),
            ))
        return templates

    def verify(self, identity_id: str, templates: list[Template], probe: AudioBuffer, threshold: float) -> VerificationOutcome:
        if not templates:
            raise NotEnrolled(f"{identity_id} has no voice templates")
        return self.score_ivector(identity_id, templates, self.ivector(probe), threshold)

    def score_ivector(self, identity_id: str, templates: list[Template], w: np.ndarray, threshold: float) -> VerificationOutcome:
        """Best cosine between a probe i-vector and the enrollment i-vectors."""
        if not templates:
            raise NotEnrolled(f"{identity_id} has no voice templates")
        scores = cosine_scores(w, np.stack([t.body.vector for t in templates]))
        score = float(scores.max())
        return VerificationOutcome(
            instrument="VR",
            identity=identity_id,
            accepted=score > threshold,
            score=score,
            threshold=threshold,
            similarity=score,
            template_scores=scores.tolist(),
        )


def enroll_speaker(
    store: TemplateStore,
    instrument: SpeakerInstrument,
    identity_id: str,
    sessions: dict[str, list[AudioBuffer]],
) -> list[Template]:
    """One i-vector template per enrollment sample, persisted in the store."""
    payloads = {session: [write_wav(buf) for buf in bufs] for session, bufs in sessions.items()}
    return enroll(store, instrument, identity_id, payloads)


def verify_speaker(
    store: TemplateStore,
    instrument: SpeakerInstrument,
    identity_id: str,
    probe: AudioBuffer,
    threshold: float,
) -> VerificationOutcome:
    templates = store.fetch_templates(identity_id, "voice")
    return instrument.verify(identity_id, templates, probe, threshold)
