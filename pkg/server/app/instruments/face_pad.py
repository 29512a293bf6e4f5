"""
FRA instrument: 2D presentation-attack detection for face frames.

Each frame is compared with a Gaussian low-pass copy of itself through 18
image-quality measures (IQMs). Recaptured faces (prints, screens) have lost
high-frequency content already, so the gap to their own blur is smaller than
for a bona fide capture. A linear hinge-loss classifier over the z-normalized
IQMs scores each frame; the median frame score decides the sample.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import cv2
import numpy as np
from sklearn.preprocessing import StandardScaler

from ..core.errors import DimensionMismatch, EmptyInput, MalformedSample, SingleClassData
from ..core.imaging import FrameImage, decode_pgm
from ..core.models import PadOutcome


logger = logging.getLogger(__name__)

IQM_NAMES = (
    "MSE", "PSNR", "SNR", "MAXDIFF", "AVGDIFF", "NAE", "RAMD", "STRUCT_CONTENT", "NXCORR",
    "LMSE", "NORM_MSE", "SSIM_GLOBAL", "MEAN_ANGLE", "MEAN_ANGLE_MAG", "TOTAL_EDGE_DIFF",
    "TOTAL_CORNER_DIFF", "SPECTRAL_MAG_ERR", "GRAD_MAG_ERR",
)
EPS = 1e-10
PEAK = 255.0
PSNR_CAP = 100.0
RAMD_TOP = 10
EDGE_THRESHOLD = 80.0
HARRIS_K = 0.04
SSIM_C1 = (0.01 * PEAK) ** 2
SSIM_C2 = (0.03 * PEAK) ** 2


# ============ Reference Image ============

def gaussian_ksize(sigma: float) -> int:
    """Odd kernel width truncated at 4 sigma."""
    return 2 * int(math.ceil(4.0 * sigma)) + 1


def lowpass_reference(img: FrameImage, sigma: float = 0.5) -> FrameImage:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = gaussian_ksize(sigma)
    blurred = cv2.GaussianBlur(img.pixels, (k, k), sigmaX=sigma, sigmaY=sigma, borderType=cv2.BORDER_REFLECT)
    return FrameImage(blurred, img.source)


# ============ Image-Quality Measures ============

def _gradients(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(x)
    return gx, gy


def _gradient_angles(I: np.ndarray, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel angle between the two gradient fields and the gradient difference norm."""
    ix, iy = _gradients(I)
    rx, ry = _gradients(R)
    ni, nr = np.hypot(ix, iy), np.hypot(rx, ry)
    both_flat = (ni < EPS) & (nr < EPS)
    one_flat = (ni < EPS) ^ (nr < EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(both_flat | one_flat, 1.0, (ix * rx + iy * ry) / (ni * nr))
    theta = np.arccos(np.clip(cos, -1.0, 1.0))
    theta[one_flat] = np.pi / 2
    return theta, np.hypot(ix - rx, iy - ry)


def _edge_map(x: np.ndarray) -> np.ndarray:
    gx = cv2.Sobel(x, cv2.CV_64F, 1, 0, ksize=3)
    gy = cv2.Sobel(x, cv2.CV_64F, 0, 1, ksize=3)
    return np.hypot(gx, gy) > EDGE_THRESHOLD


def _corner_count(x: np.ndarray) -> int:
    gx = cv2.Sobel(x, cv2.CV_64F, 1, 0, ksize=3)
    gy = cv2.Sobel(x, cv2.CV_64F, 0, 1, ksize=3)
    sxx = cv2.boxFilter(gx * gx, cv2.CV_64F, (3, 3))
    syy = cv2.boxFilter(gy * gy, cv2.CV_64F, (3, 3))
    sxy = cv2.boxFilter(gx * gy, cv2.CV_64F, (3, 3))
    response = sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2
    peak = response.max()
    if peak <= 0:
        return 0
    return int(np.count_nonzero(response > 0.01 * peak))


def _znorm(x: np.ndarray) -> np.ndarray:
    std = x.std()
    return (x - x.mean()) / std if std > EPS else np.zeros_like(x)


def compute_iqms(img: FrameImage, ref: FrameImage) -> np.ndarray:
    """The 18 measures of IQM_NAMES between an image and its reference, in that order."""
    if img.shape != ref.shape:
        raise DimensionMismatch(f"image {img.shape} and reference {ref.shape} differ in size")
    I, R = img.pixels, ref.pixels
    D = I - R
    absd = np.abs(D)
    mse = float(np.mean(D * D))
    psnr = PSNR_CAP if mse == 0 else min(PSNR_CAP, 10.0 * math.log10(PEAK ** 2 / mse))
    snr = float(np.clip(10.0 * np.log10((np.sum(I * I) + EPS) / (np.sum(D * D) + EPS)), -PSNR_CAP, PSNR_CAP))
    top = np.sort(absd, axis=None)[-min(RAMD_TOP, absd.size):]

    lap_i = cv2.Laplacian(I, cv2.CV_64F, ksize=1, borderType=cv2.BORDER_REFLECT_101)
    lap_r = cv2.Laplacian(R, cv2.CV_64F, ksize=1, borderType=cv2.BORDER_REFLECT_101)

    mu_i, mu_r = I.mean(), R.mean()
    cov = np.mean((I - mu_i) * (R - mu_r))
    ssim = ((2 * mu_i * mu_r + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mu_i ** 2 + mu_r ** 2 + SSIM_C1) * (I.var() + R.var() + SSIM_C2))

    theta, grad_diff = _gradient_angles(I, R)
    mean_angle_mag = np.mean((1.0 - 2.0 * theta / np.pi) * (1.0 - grad_diff / (2.0 * math.sqrt(2.0) * PEAK)))

    corners_i, corners_r = _corner_count(I), _corner_count(R)
    spec_i, spec_r = np.abs(np.fft.fft2(I)), np.abs(np.fft.fft2(R))
    ix, iy = _gradients(I)
    rx, ry = _gradients(R)

    values = [
        mse,
        psnr,
        snr,
        float(absd.max()),
        float(D.mean()),
        float(absd.sum() / (np.abs(I).sum() + EPS)),
        float(top.mean()),
        float((np.sum(I * I) + EPS) / (np.sum(R * R) + EPS)),
        float((np.sum(I * R) + EPS) / (np.sum(I * I) + EPS)),
        float(np.sum((lap_i - lap_r) ** 2) / (np.sum(lap_i ** 2) + EPS)),
        float(np.mean((_znorm(I) - _znorm(R)) ** 2)),
        float(ssim),
        float(1.0 - 2.0 / np.pi * theta.mean()),
        float(mean_angle_mag),
        float(np.mean(_edge_map(I) != _edge_map(R))),
        abs(corners_i - corners_r) / max(corners_i, corners_r, 1),
        float(np.mean((spec_i - spec_r) ** 2) / I.size),
        float(np.mean((np.hypot(ix, iy) - np.hypot(rx, ry)) ** 2)),
    ]
    return np.asarray(values, dtype=np.float64)


def frame_iqms(img: FrameImage, sigma: float = 0.5) -> np.ndarray:
    return compute_iqms(img, lowpass_reference(img, sigma))


# ============ Linear Classifier ============

@dataclass(frozen=True)
class LinearPadModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray

    def __post_init__(self):
        for name in ("weights", "feature_means", "feature_stds"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if np.any(self.feature_stds <= 0):
            raise ValueError("normalization stds must be positive")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.weights):
            raise DimensionMismatch(f"features have {X.shape[1]} columns, model expects {len(self.weights)}")
        return ((X - self.feature_means) / self.feature_stds) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {
            "kind": "linear_pad",
            "features": list(IQM_NAMES),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_means": self.feature_means.tolist(),
            "feature_stds": self.feature_stds.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearPadModel":
        return cls(doc["weights"], float(doc["bias"]), doc["feature_means"], doc["feature_stds"])


def _labels(labels: Sequence) -> np.ndarray:
    """+1 for bona fide, -1 for attack."""
    out = []
    for label in labels:
        if label in ("bona_fide", 1, True):
            out.append(1.0)
        elif label in ("attack", -1, 0, False):
            out.append(-1.0)
        else:
            raise MalformedSample(f"unknown PAD label {label!r}")
    return np.asarray(out)


def _hinge_objective(Z: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float) -> float:
    margins = 1.0 - y * (Z @ w + b)
    return float(np.mean(np.maximum(0.0, margins)) + 0.5 * l2 * (w @ w))


def train_pad_classifier(
    features: np.ndarray,
    labels: Sequence,
    epochs: int = 300,
    learning_rate: float = 0.5,
    seed: int = 0,
    l2: float = 1e-3,
    min_per_class: int = 10,
) -> tuple[LinearPadModel, list[float]]:
    """
    Fit a linear margin classifier by full-batch subgradient descent.

    Args:
        features: n x d feature matrix (one IQM vector per row)
        labels: "bona_fide"/"attack" (or +1/-1) per row

    Returns:
        The model and the training objective before each epoch plus the final value.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = _labels(labels)
    if len(X) != len(y):
        raise DimensionMismatch("features and labels differ in length")
    n_pos, n_neg = int(np.sum(y > 0)), int(np.sum(y < 0))
    if min(n_pos, n_neg) == 0 or min(n_pos, n_neg) < min_per_class:
        raise SingleClassData(f"need {min_per_class} examples per class, got {n_pos} bona fide and {n_neg} attack")

    scaler = StandardScaler().fit(X)
    order = np.random.default_rng(seed).permutation(len(X))
    Z, y = scaler.transform(X)[order], y[order]

    w, b = np.zeros(Z.shape[1]), 0.0
    loss = _hinge_objective(Z, y, w, b, l2)
    history = [loss]
    for _ in range(epochs):
        active = (1.0 - y * (Z @ w + b)) > 0
        grad_w = -(y[active] @ Z[active]) / len(Z) + l2 * w
        grad_b = -float(y[active].sum()) / len(Z)
        step = learning_rate
        for _ in range(30):
            cand_w, cand_b = w - step * grad_w, b - step * grad_b
            cand_loss = _hinge_objective(Z, y, cand_w, cand_b, l2)
            if cand_loss <= loss:
                w, b, loss = cand_w, cand_b, cand_loss
                break
            step /= 2.0
        history.append(loss)

    model = LinearPadModel(w, float(b), scaler.mean_, scaler.scale_)
    accuracy = float(np.mean(np.sign(model.decision_function(X)) == _labels(labels)))
    logger.info(f"PAD classifier trained on {len(X)} frames: objective {history[0]:.4f} -> {history[-1]:.4f}, "
                f"training accuracy {accuracy:.3f}")
    return model, history


# ============ Classification ============

def aggregate_scores(scores: Sequence[float], aggregation: Literal["median", "mean"] = "median") -> float:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInput("no frame scores to aggregate")
    return float(np.median(scores) if aggregation == "median" else np.mean(scores))


def frame_scores(model: LinearPadModel, frames: Sequence[FrameImage], sigma: float = 0.5) -> np.ndarray:
    if not frames:
        raise EmptyInput("no frames to check")
    return model.decision_function(np.stack([frame_iqms(f, sigma) for f in frames]))


def classify_face_pad(
    model: LinearPadModel,
    frames: Sequence[FrameImage],
    sigma: float = 0.5,
    aggregation: Literal["median", "mean"] = "median",
) -> PadOutcome:
    return PadOutcome.from_score("FRA", aggregate_scores(frame_scores(model, frames, sigma), aggregation))


class FacePadInstrument:
    """Identity-agnostic bona fide / attack decision for face frame sequences."""

    instrument = "FRA"

    def __init__(self, model: LinearPadModel, sigma: float = 0.5, aggregation: str = "median"):
        self.model = model
        self.sigma = sigma
        self.aggregation = aggregation

    def check(self, frames: Sequence[FrameImage]) -> PadOutcome:
        return classify_face_pad(self.model, frames, self.sigma, self.aggregation)


# ============ Training Corpus ============

@dataclass(frozen=True)
class LabeledFrame:
    image: FrameImage
    label: Literal["bona_fide", "attack"]
    attack_kind: Optional[str] = None


def load_pad_manifest(path: str | Path) -> list[LabeledFrame]:
    """Read a JSON manifest of {path, label, attack_kind} entries; paths are relative to it."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise MalformedSample(f"cannot read PAD manifest {path}: {e}") from e
    corpus = []
    for entry in entries:
        label = entry.get("label")
        if label not in ("bona_fide", "attack"):
            raise MalformedSample(f"manifest entry {entry.get('path')!r} has label {label!r}")
        frame_path = path.parent / entry["path"]
        corpus.append(LabeledFrame(decode_pgm(frame_path.read_bytes(), str(frame_path)), label, entry.get("attack_kind")))
    logger.info(f"Loaded {len(corpus)} labeled frames from {path}")
    return corpus
