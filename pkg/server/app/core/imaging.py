"""
Grayscale frame handling: the FrameImage record, PGM (P5) codec and the
NPZ frame-sequence container used for face videos.
"""
import io
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

from .errors import MalformedSample


MIN_SIDE = 16


@dataclass(frozen=True)
class FrameImage:
    pixels: np.ndarray
    source: Optional[str] = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or min(pixels.shape) < MIN_SIDE:
            raise MalformedSample(f"frames must be 2-D with both sides >= {MIN_SIDE}, got {pixels.shape}")
        if not np.all(np.isfinite(pixels)):
            raise MalformedSample("frame contains non-finite pixels")
        object.__setattr__(self, "pixels", pixels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def as_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.pixels), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class FrameSequence:
    frames: list[FrameImage]
    fps: float

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps if self.fps > 0 else 0.0


# ============ PGM ============

def decode_pgm(payload: bytes, source: Optional[str] = None) -> FrameImage:
    if not payload.startswith(b"P5"):
        raise MalformedSample("frame is not a binary PGM (P5) image")
    pixels = cv2.imdecode(np.frombuffer(payload, dtype=np.uint8), cv2.IMREAD_GRAYSCALE)
    if pixels is None:
        raise MalformedSample("PGM payload could not be decoded")
    return FrameImage(pixels, source)


def encode_pgm(image: FrameImage) -> bytes:
    ok, data = cv2.imencode(".pgm", image.as_uint8())
    if not ok:
        raise MalformedSample("frame could not be encoded as PGM")
    return data.tobytes()


# ============ Frame-Sequence Container ============

def encode_video(sequence: FrameSequence) -> bytes:
    stack = np.stack([f.as_uint8() for f in sequence.frames])
    out = io.BytesIO()
    np.savez_compressed(out, frames=stack, fps=np.float64(sequence.fps))
    return out.getvalue()


def decode_video(payload: bytes, source: Optional[str] = None) -> FrameSequence:
    if not payload.startswith(b"PK"):
        raise MalformedSample("face payload is not an NPZ frame container")
    try:
        with np.load(io.BytesIO(payload), allow_pickle=False) as doc:
            stack, fps = doc["frames"], float(doc["fps"])
    except (ValueError, KeyError, OSError) as e:
        raise MalformedSample(f"face payload could not be decoded: {e}") from e
    if stack.ndim != 3 or fps <= 0:
        raise MalformedSample("face container must hold N x H x W frames with positive fps")
    return FrameSequence([FrameImage(f, source) for f in stack], fps)


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    return cv2.resize(np.asarray(pixels, dtype=np.float64), (width, height), interpolation=cv2.INTER_LINEAR)
