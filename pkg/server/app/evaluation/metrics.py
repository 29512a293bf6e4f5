"""
Error-rate computation: FAR/FRR sweeps, EER, DET points, APCER/BPCER/ACER
and threshold calibration.

Scores follow one convention everywhere: higher means "more genuine" (or
"more bona fide"), and a trial is accepted when its score is strictly above
the threshold.
"""
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..core.errors import EmptyScores, UnreachableTarget


CalibrationTarget = Literal["eer", "far_at", "frr_at"]


class ErrorRates(BaseModel):
    far: Optional[float] = None
    frr: Optional[float] = None
    eer: Optional[float] = None
    total_error: Optional[float] = None
    threshold: Optional[float] = None
    apcer: Optional[float] = None
    bpcer: Optional[float] = None
    acer: Optional[float] = None
    thresholds: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _fractions(self) -> "ErrorRates":
        for name in ("far", "frr", "eer", "apcer", "bpcer", "acer"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        return self


class DetPoint(BaseModel):
    far: float
    frr: float
    threshold: float


def _scores(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if arr.size == 0:
        raise EmptyScores(f"no {name} scores")
    return arr


def _rates(genuine: np.ndarray, impostor: np.ndarray, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """FAR(t) = P(impostor > t), FRR(t) = P(genuine <= t) for sorted score arrays."""
    far = (impostor.size - np.searchsorted(impostor, thresholds, side="right")) / impostor.size
    frr = np.searchsorted(genuine, thresholds, side="right") / genuine.size
    return far, frr


def _candidates(genuine: np.ndarray, impostor: np.ndarray) -> np.ndarray:
    distinct = np.unique(np.concatenate([genuine, impostor]))
    return np.concatenate([[distinct[0] - 1.0], distinct])


def rates_at(genuine_scores: Sequence[float], impostor_scores: Sequence[float], threshold: float) -> tuple[float, float]:
    genuine, impostor = _scores(genuine_scores, "genuine"), _scores(impostor_scores, "impostor")
    far, frr = _rates(genuine, impostor, np.array([threshold]))
    return float(far[0]), float(frr[0])


def sweep_thresholds(
    genuine_scores: Sequence[float],
    impostor_scores: Sequence[float],
) -> tuple[ErrorRates, list[DetPoint]]:
    """
    Sweep every distinct score as a threshold.

    The EER operating point minimizes |FAR - FRR|, ties going to the lower
    threshold; the EER is the midpoint of FAR and FRR there.
    """
    genuine, impostor = _scores(genuine_scores, "genuine"), _scores(impostor_scores, "impostor")
    thresholds = _candidates(genuine, impostor)
    far, frr = _rates(genuine, impostor, thresholds)
    best = int(np.argmin(np.abs(far - frr)))
    rates = ErrorRates(
        far=float(far[best]),
        frr=float(frr[best]),
        eer=float((far[best] + frr[best]) / 2.0),
        total_error=float(far[best] + frr[best]),
        threshold=float(thresholds[best]),
        thresholds=thresholds[1:].tolist(),
    )
    det = [DetPoint(far=float(a), frr=float(r), threshold=float(t))
           for a, r, t in zip(far[1:], frr[1:], thresholds[1:])]
    return rates, det


def _classified_bona_fide(decisions: Sequence) -> np.ndarray:
    out = []
    for d in decisions:
        if isinstance(d, str):
            out.append(d == "bona_fide")
        else:
            out.append(bool(d))
    return np.asarray(out, dtype=bool)


def compute_acer(attack_decisions: Sequence, bonafide_decisions: Sequence) -> ErrorRates:
    """
    Args:
        attack_decisions: decisions made on attack presentations
        bonafide_decisions: decisions made on bona fide presentations

    Decisions are "bona_fide"/"attack" strings or booleans (True = bona fide).
    """
    attacks = _classified_bona_fide(attack_decisions)
    bona_fide = _classified_bona_fide(bonafide_decisions)
    if attacks.size == 0 or bona_fide.size == 0:
        raise EmptyScores("ACER needs both attack and bona fide decisions")
    apcer = float(attacks.mean())
    bpcer = float(1.0 - bona_fide.mean())
    return ErrorRates(apcer=apcer, bpcer=bpcer, acer=(apcer + bpcer) / 2)


def calibrate_threshold(
    genuine_scores: Sequence[float],
    impostor_scores: Sequence[float],
    target: CalibrationTarget,
    value: Optional[float] = None,
) -> float:
    """
    Threshold meeting a calibration target on the given scores.

    eer: the sweep's EER threshold. far_at: the lowest threshold whose FAR is
    at most `value`. frr_at: the highest threshold whose FRR is at most `value`.
    """
    genuine, impostor = _scores(genuine_scores, "genuine"), _scores(impostor_scores, "impostor")
    if target == "eer":
        return float(sweep_thresholds(genuine, impostor)[0].threshold)
    if value is None or not 0.0 <= value <= 1.0:
        raise UnreachableTarget(f"{target} needs a rate in [0, 1], got {value}")
    thresholds = _candidates(genuine, impostor)
    far, frr = _rates(genuine, impostor, thresholds)
    if target == "far_at":
        ok = np.flatnonzero(far <= value)
        if ok.size == 0:
            raise UnreachableTarget(f"no threshold reaches FAR <= {value}")
        return float(thresholds[ok[0]])
    if target == "frr_at":
        ok = np.flatnonzero(frr <= value)
        if ok.size == 0:
            raise UnreachableTarget(f"no threshold reaches FRR <= {value}")
        return float(thresholds[ok[-1]])
    raise UnreachableTarget(f"unknown calibration target {target!r}")
