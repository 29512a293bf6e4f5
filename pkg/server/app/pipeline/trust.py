"""
Trust engine: gate verification results by their paired anti-spoofing
checks, fuse what remains into one score and assemble the activity report.
"""
import json
import math
from collections import defaultdict
from datetime import datetime
from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator

from ..config import FusionConfig
from ..core.models import Instrument, PadOutcome, VerificationOutcome, utcnow


TrustDecision = Literal["trusted", "untrusted", "inconclusive"]

# PAD instrument -> verification instrument it protects
PAD_PAIRS: dict[str, str] = {"FRA": "FR", "VRA": "VR"}
REPORT_SCHEMA = 1


class InstrumentResult(BaseModel):
    instrument: Instrument
    kind: Literal["verification", "pad"]
    outcome: Union[VerificationOutcome, PadOutcome]
    sample_ref: str
    at: datetime = Field(default_factory=utcnow)

    @model_validator(mode="after")
    def _kind_matches_outcome(self) -> "InstrumentResult":
        expected = VerificationOutcome if self.kind == "verification" else PadOutcome
        if not isinstance(self.outcome, expected):
            raise ValueError(f"{self.kind} result carries a {type(self.outcome).__name__}")
        if self.outcome.instrument != self.instrument:
            raise ValueError("result and outcome disagree on the instrument")
        return self

    @classmethod
    def verification(cls, outcome: VerificationOutcome, sample_ref: str, at: Optional[datetime] = None) -> "InstrumentResult":
        return cls(instrument=outcome.instrument, kind="verification", outcome=outcome,
                   sample_ref=sample_ref, at=at or utcnow())

    @classmethod
    def pad(cls, outcome: PadOutcome, sample_ref: str, at: Optional[datetime] = None) -> "InstrumentResult":
        return cls(instrument=outcome.instrument, kind="pad", outcome=outcome,
                   sample_ref=sample_ref, at=at or utcnow())


class PadFlag(BaseModel):
    """A presentation the anti-spoofing instruments judged to be an attack."""
    instrument: Instrument
    sample_ref: str
    score: float
    excluded: list[Instrument] = Field(default_factory=list)


class TrustReport(BaseModel):
    schema_version: int = Field(default=REPORT_SCHEMA, alias="schema")
    identity: str
    activity_id: str
    results: list[InstrumentResult]
    instrument_scores: dict[str, float] = Field(default_factory=dict)
    fused_score: float
    pad_flags: list[PadFlag] = Field(default_factory=list)
    decision: TrustDecision

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _decision_consistent(self) -> "TrustReport":
        if self.pad_flags and self.decision != "untrusted":
            raise ValueError("a flagged activity cannot be anything but untrusted")
        if not 0.0 <= self.fused_score <= 1.0:
            raise ValueError("fused score must lie in [0, 1]")
        return self


# ============ Gating ============

def gate_by_pad(results: list[InstrumentResult]) -> tuple[list[InstrumentResult], list[PadFlag]]:
    """Drop verification results whose sample a paired PAD check rejected."""
    attacks = [r for r in results if r.kind == "pad" and r.outcome.decision == "attack"]
    rejected = {(PAD_PAIRS[r.instrument], r.sample_ref) for r in attacks if r.instrument in PAD_PAIRS}
    kept = [r for r in results
            if r.kind == "verification" and (r.instrument, r.sample_ref) not in rejected]
    flags = []
    for attack in attacks:
        paired = PAD_PAIRS.get(attack.instrument)
        excluded = sorted({r.instrument for r in results
                           if r.kind == "verification" and r.instrument == paired and r.sample_ref == attack.sample_ref})
        flags.append(PadFlag(instrument=attack.instrument, sample_ref=attack.sample_ref,
                             score=attack.outcome.score, excluded=excluded))
    return kept, flags


# ============ Fusion ============

def calibrated_score(outcome: VerificationOutcome) -> float:
    """Map an instrument's native score onto [0, 1]."""
    if outcome.instrument == "KD":
        return math.exp(-max(outcome.score, 0.0))
    cosine = outcome.similarity if outcome.similarity is not None else outcome.score
    return min(1.0, max(0.0, (cosine + 1.0) / 2.0))


def instrument_scores(results: list[InstrumentResult]) -> dict[str, float]:
    """Average calibrated score per instrument over an activity's captures."""
    grouped: dict[str, list[float]] = defaultdict(list)
    for r in results:
        if r.kind == "verification":
            grouped[r.instrument].append(calibrated_score(r.outcome))
    return {name: sum(values) / len(values) for name, values in sorted(grouped.items())}


def fuse(results_kept: list[InstrumentResult], cfg: FusionConfig) -> tuple[float, TrustDecision]:
    """
    Weighted sum over present instruments with weights renormalized to 1.

    `min_instruments` is compared with the number of kept verification
    results, so two captures of one instrument count twice. An activity
    whose kept results all carry zero weight is inconclusive.
    """
    scores = instrument_scores(results_kept)
    weighted = {name: cfg.weights.get(name, 0.0) for name in scores}
    total = sum(weighted.values())
    present = [name for name, w in weighted.items() if w > 0]
    kept_count = sum(1 for r in results_kept if r.kind == "verification")
    if total <= 0 or kept_count < max(cfg.min_instruments, 1):
        fused = sum(weighted[n] * scores[n] for n in present) / total if total > 0 else 0.0
        return fused, "inconclusive"
    fused = sum(weighted[n] * scores[n] for n in present) / total
    return fused, ("trusted" if fused >= cfg.trust_threshold else "untrusted")


def build_trust_report(
    identity: str,
    activity_id: str,
    results: list[InstrumentResult],
    cfg: FusionConfig,
) -> TrustReport:
    kept, flags = gate_by_pad(results)
    fused, decision = fuse(kept, cfg)
    if flags:
        decision = "untrusted"
    return TrustReport(
        identity=identity,
        activity_id=activity_id,
        results=results,
        instrument_scores=instrument_scores(kept),
        fused_score=fused,
        pad_flags=flags,
        decision=decision,
    )


def report_to_json(report: TrustReport) -> str:
    """Canonical JSON shared by the CLI and the HTTP service."""
    return json.dumps(report.model_dump(mode="json", by_alias=True), sort_keys=True, indent=2) + "\n"
