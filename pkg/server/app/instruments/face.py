"""
FR instrument: embeds pre-cropped face frames with a pluggable extractor and
compares each probe frame against every enrollment embedding by cosine.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from ..core.embeddings import EmbeddingExtractor, cosine_scores, get_embedding_extractor
from ..core.enrollment import enroll
from ..core.errors import BiometricError, EmptyProbe, NotEnrolled, TooFewFrames
from ..core.imaging import FrameImage, FrameSequence, decode_video, encode_video
from ..core.models import BiometricSample, FaceEmbedding, Template, VerificationOutcome
from ..core.store import TemplateStore


logger = logging.getLogger(__name__)

MIN_VIDEO_S = 5.0


def default_stride(fps: float) -> int:
    """Two frames per second of video."""
    return max(1, int(round(fps / 2.0)))


def embed_frames(
    frames: Sequence[FrameImage],
    fps: float,
    extractor: EmbeddingExtractor,
    stride: Optional[int] = None,
    min_duration_s: float = MIN_VIDEO_S,
) -> list[FaceEmbedding]:
    """Embed every k-th frame of a clip that lasts at least min_duration_s."""
    duration = len(frames) / fps if fps > 0 else 0.0
    if duration < min_duration_s:
        raise TooFewFrames(f"{duration:.2f} s of video, enrollment needs {min_duration_s} s")
    k = stride or default_stride(fps)
    return [extractor.embed(frame) for frame in list(frames)[::k]]


def score_frames(probe: Sequence[FaceEmbedding], enrolled: Sequence[FaceEmbedding]) -> np.ndarray:
    """Per probe frame, the best cosine against any enrollment embedding."""
    if not probe:
        raise EmptyProbe("probe contains no frames")
    matrix = np.stack([e.vector for e in enrolled])
    return np.array([cosine_scores(p.vector, matrix).max() for p in probe])


class FaceInstrument:
    """Enrollment and verification for the face modality."""

    modality = "face"
    instrument = "FR"

    def __init__(
        self,
        extractor: Optional[EmbeddingExtractor] = None,
        stride: Optional[int] = None,
        accept_fraction: float = 0.5,
        min_duration_s: float = MIN_VIDEO_S,
    ):
        self.extractor = extractor or get_embedding_extractor()
        self.stride = stride
        self.accept_fraction = accept_fraction
        self.min_duration_s = min_duration_s

    def decode(self, payload: bytes, source: Optional[str] = None) -> FrameSequence:
        return decode_video(payload, source)

    def measure(self, payload: bytes) -> float:
        return self.decode(payload).duration

    def build_templates(self, identity_id: str, samples: list[tuple[BiometricSample, bytes]]) -> list[Template]:
        templates = []
        for sample, payload in samples:
            video = self.decode(payload, sample.payload_ref)
            try:
                embeddings = embed_frames(video.frames, video.fps, self.extractor, self.stride, self.min_duration_s)
            except BiometricError as e:
                raise type(e)(f"enrollment sample {sample.payload_ref}: {e.message}",
                              payload_ref=sample.payload_ref) from e
            templates.extend(
                Template(identity=identity_id, modality="face", session_id=sample.session_id, body=emb)
                for emb in embeddings
            )
        return templates

    def verify(
        self,
        identity_id: str,
        templates: list[Template],
        probe_frames: Sequence[FrameImage],
        threshold: float,
    ) -> VerificationOutcome:
        if not templates:
            raise NotEnrolled(f"{identity_id} has no face templates")
        if not probe_frames:
            raise EmptyProbe("probe contains no frames")
        frame_scores = score_frames([self.extractor.embed(f) for f in probe_frames], [t.body for t in templates])
        fraction = float(np.mean(frame_scores > threshold))
        return VerificationOutcome(
            instrument="FR",
            identity=identity_id,
            accepted=fraction >= self.accept_fraction,
            score=fraction,
            threshold=threshold,
            similarity=float(frame_scores.mean()),
            template_scores=frame_scores.tolist(),
        )


def enroll_face(
    store: TemplateStore,
    instrument: FaceInstrument,
    identity_id: str,
    video: FrameSequence,
    session_id: str = "s1",
) -> list[Template]:
    """Store a face clip and build one template per sampled frame."""
    if video.duration < instrument.min_duration_s:
        raise TooFewFrames(f"{video.duration:.2f} s of video, enrollment needs {instrument.min_duration_s} s")
    return enroll(store, instrument, identity_id, {session_id: [encode_video(video)]})


def verify_face(
    store: TemplateStore,
    instrument: FaceInstrument,
    identity_id: str,
    probe_frames: Sequence[FrameImage],
    threshold: float,
) -> VerificationOutcome:
    templates = store.fetch_templates(identity_id, "face")
    return instrument.verify(identity_id, templates, probe_frames, threshold)
