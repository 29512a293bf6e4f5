"""
Embedding service for face frames and cosine comparison of template vectors.
"""
from typing import Optional, Protocol

import numpy as np
from sklearn.metrics.pairwise import cosine_similarity as _sk_cosine

from .errors import DimensionMismatch
from .imaging import FrameImage, resize_bilinear
from .models import FaceEmbedding


NORM_EPS = 1e-12


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|), defined as 0 when either norm is below 1e-12."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot compare vectors of length {a.size} and {b.size}")
    if np.linalg.norm(a) < NORM_EPS or np.linalg.norm(b) < NORM_EPS:
        return 0.0
    return float(np.clip(_sk_cosine([a], [b])[0][0], -1.0, 1.0))


def cosine_scores(probe, enrolled) -> np.ndarray:
    """Cosine of one probe vector against every row of an enrollment matrix."""
    probe = np.asarray(probe, dtype=np.float64).reshape(1, -1)
    enrolled = np.atleast_2d(np.asarray(enrolled, dtype=np.float64))
    if enrolled.shape[1] != probe.shape[1]:
        raise DimensionMismatch(f"probe has dimension {probe.shape[1]}, templates have {enrolled.shape[1]}")
    scores = np.clip(_sk_cosine(probe, enrolled)[0], -1.0, 1.0)
    if np.linalg.norm(probe) < NORM_EPS:
        return np.zeros(len(enrolled))
    scores[np.linalg.norm(enrolled, axis=1) < NORM_EPS] = 0.0
    return scores


class EmbeddingExtractor(Protocol):
    """Deterministic frame -> unit vector mapping; a DCNN plugs in here."""

    extractor_id: str
    dim: int

    def embed(self, image: FrameImage) -> FaceEmbedding:
        ...


class ToyEmbeddingExtractor:
    """Bilinear 16x16 thumbnail, mean removed, scaled to unit norm."""

    def __init__(self, side: int = 16):
        self.side = side
        self.extractor_id = f"toy-{side}x{side}"
        self.dim = side * side

    def embed(self, image: FrameImage) -> FaceEmbedding:
        thumb = resize_bilinear(image.pixels, self.side, self.side).reshape(-1)
        thumb = thumb - thumb.mean()
        norm = np.linalg.norm(thumb)
        if norm < NORM_EPS:
            v = np.zeros(self.dim)
            v[0] = 1.0
        else:
            v = thumb / norm
        return FaceEmbedding(v=v.tolist(), extractor_id=self.extractor_id, source=image.source)


def toy_embed(image: FrameImage) -> FaceEmbedding:
    return get_embedding_extractor("toy-16x16").embed(image)


# Registry of extractor singletons
_extractors: dict[str, EmbeddingExtractor] = {}


def register_embedding_extractor(extractor: EmbeddingExtractor) -> None:
    _extractors[extractor.extractor_id] = extractor


def get_embedding_extractor(extractor_id: Optional[str] = None) -> EmbeddingExtractor:
    """Get or create an embedding extractor by id."""
    extractor_id = extractor_id or "toy-16x16"
    if extractor_id not in _extractors:
        if not extractor_id.startswith("toy-"):
            raise KeyError(f"no embedding extractor registered as {extractor_id!r}")
        side = int(extractor_id.split("-")[1].split("x")[0])
        _extractors[extractor_id] = ToyEmbeddingExtractor(side)
    return _extractors[extractor_id]
