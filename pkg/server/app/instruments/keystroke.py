"""
KD instrument: dwell and press-to-press flight times, a per-key / per-digraph
statistical typing model, and a scaled Manhattan conformance distance.
"""
import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import distance

from ..core.enrollment import enroll
from ..core.errors import (
    MalformedSample,
    NegativeDwell,
    NoModel,
    NotEnrolled,
    ProbeTooShort,
    TooFewKeystrokes,
    UnsortedStream,
)
from ..core.models import BiometricSample, KeyStat, Template, TypingModel, VerificationOutcome
from ..core.store import TemplateStore


logger = logging.getLogger(__name__)

STD_FLOOR_MS = 5.0
MIN_ENTRY_COUNT = 3
PROBE_MIN_KEYSTROKES = 50


@dataclass(frozen=True)
class KeyEvent:
    key: str
    down_ms: float
    up_ms: float

    def __post_init__(self):
        if not str(self.key):
            raise MalformedSample("key event without a key name")
        if not (np.isfinite(self.down_ms) and np.isfinite(self.up_ms)):
            raise MalformedSample("key event timestamps must be finite")
        if self.up_ms < self.down_ms:
            raise NegativeDwell(f"key {self.key!r} released at {self.up_ms} before press at {self.down_ms}")
        object.__setattr__(self, "key", str(self.key).lower())

    @property
    def dwell(self) -> float:
        return self.up_ms - self.down_ms


def pair_key(first: str, second: str) -> str:
    return f"{first}>{second}"


@dataclass
class KeystrokeFeatures:
    dwell: list[tuple[str, float]] = field(default_factory=list)
    flight: list[tuple[str, float]] = field(default_factory=list)

    @property
    def keystrokes(self) -> int:
        return len(self.dwell)


# ============ Stream Codec ============

def parse_key_stream(payload: bytes) -> list[KeyEvent]:
    """JSON lines {key, down_ms, up_ms} or CSV with the same header."""
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedSample("keystroke stream is not UTF-8 text") from e
    stripped = text.lstrip()
    try:
        if stripped.startswith("{"):
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        else:
            rows = list(csv.DictReader(io.StringIO(text)))
        return [KeyEvent(str(r["key"]), float(r["down_ms"]), float(r["up_ms"])) for r in rows]
    except (ValueError, KeyError, TypeError) as e:
        raise MalformedSample(f"keystroke stream could not be parsed: {e}") from e


def encode_key_stream(events: Iterable[KeyEvent]) -> bytes:
    lines = [json.dumps({"key": e.key, "down_ms": e.down_ms, "up_ms": e.up_ms}) for e in events]
    return ("\n".join(lines) + "\n").encode("utf-8")


# ============ Features & Model ============

def extract_features(stream: Sequence[KeyEvent]) -> KeystrokeFeatures:
    """Dwell per event and press-to-press flight between consecutive events."""
    for prev, cur in zip(stream, stream[1:]):
        if cur.down_ms < prev.down_ms:
            raise UnsortedStream(f"press at {cur.down_ms} ms follows press at {prev.down_ms} ms")
    features = KeystrokeFeatures()
    for event in stream:
        if event.up_ms < event.down_ms:
            raise NegativeDwell(f"negative dwell for key {event.key!r}")
        features.dwell.append((event.key, event.dwell))
    for prev, cur in zip(stream, stream[1:]):
        features.flight.append((pair_key(prev.key, cur.key), cur.down_ms - prev.down_ms))
    return features


def _stat(values: Sequence[float], std_floor: float) -> KeyStat:
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return KeyStat(mean=0.0, std=std_floor, count=0)
    std = values.std(ddof=1) if len(values) > 1 else 0.0
    return KeyStat(mean=float(values.mean()), std=float(max(std, std_floor)), count=len(values))


def _grouped(pairs: Iterable[tuple[str, float]]) -> dict[str, list[float]]:
    groups: dict[str, list[float]] = defaultdict(list)
    for name, value in pairs:
        groups[name].append(value)
    return groups


def typing_model_from_features(sessions: Sequence[KeystrokeFeatures], std_floor: float = STD_FLOOR_MS) -> TypingModel:
    """Pool the features of several enrollment streams into one model."""
    dwell = [d for f in sessions for d in f.dwell]
    flight = [d for f in sessions for d in f.flight]
    return TypingModel(
        per_key_dwell={k: _stat(v, std_floor) for k, v in sorted(_grouped(dwell).items())},
        per_pair_flight={k: _stat(v, std_floor) for k, v in sorted(_grouped(flight).items())},
        global_dwell=_stat([v for _, v in dwell], std_floor),
        global_flight=_stat([v for _, v in flight], std_floor),
        total_keystrokes=len(dwell),
    )


def build_typing_model(stream: Sequence[KeyEvent], policy_min: int, std_floor: float = STD_FLOOR_MS) -> TypingModel:
    if len(stream) < policy_min:
        raise TooFewKeystrokes(f"{len(stream)} keystrokes, enrollment needs {policy_min}")
    return typing_model_from_features([extract_features(stream)], std_floor)


def _reference(entries: dict[str, KeyStat], fallback: KeyStat, name: str, min_count: int) -> KeyStat:
    entry = entries.get(name)
    return entry if entry is not None and entry.count >= min_count else fallback


def typing_distance(model: TypingModel, probe: KeystrokeFeatures, min_entry_count: int = MIN_ENTRY_COUNT) -> float:
    """Mean of |x - mu| / sigma over every dwell and flight value of the probe."""
    refs = [_reference(model.per_key_dwell, model.global_dwell, k, min_entry_count) for k, _ in probe.dwell]
    refs += [_reference(model.per_pair_flight, model.global_flight, k, min_entry_count) for k, _ in probe.flight]
    if not refs:
        return 0.0
    x = np.array([v for _, v in probe.dwell] + [v for _, v in probe.flight], dtype=np.float64)
    mu = np.array([r.mean for r in refs])
    sigma = np.array([r.std for r in refs])
    return float(distance.cityblock(x, mu, w=1.0 / sigma) / len(x))


def score_typing(
    model: Optional[TypingModel],
    probe: KeystrokeFeatures,
    threshold: float,
    identity_id: str = "",
    probe_min: int = PROBE_MIN_KEYSTROKES,
    min_entry_count: int = MIN_ENTRY_COUNT,
) -> VerificationOutcome:
    if model is None:
        raise NoModel("no typing model to score against")
    if probe.keystrokes < probe_min:
        raise ProbeTooShort(f"{probe.keystrokes} keystrokes, scoring needs {probe_min}")
    d = typing_distance(model, probe, min_entry_count)
    return VerificationOutcome(
        instrument="KD",
        identity=identity_id,
        accepted=d < threshold,
        score=d,
        threshold=threshold,
    )


# ============ Instrument ============

class KeystrokeInstrument:
    """Enrollment and verification for the keystroke modality."""

    modality = "keystroke"
    instrument = "KD"

    def __init__(
        self,
        std_floor: float = STD_FLOOR_MS,
        min_entry_count: int = MIN_ENTRY_COUNT,
        probe_min: int = PROBE_MIN_KEYSTROKES,
    ):
        self.std_floor = std_floor
        self.min_entry_count = min_entry_count
        self.probe_min = probe_min

    def measure(self, payload: bytes) -> float:
        return float(len(parse_key_stream(payload)))

    def build_templates(self, identity_id: str, samples: list[tuple[BiometricSample, bytes]]) -> list[Template]:
        features = [extract_features(parse_key_stream(payload)) for _, payload in samples]
        model = typing_model_from_features(features, self.std_floor)
        logger.info(f"Typing model for {identity_id}: {model.total_keystrokes} keystrokes, "
                    f"{len(model.per_key_dwell)} keys, {len(model.per_pair_flight)} digraphs")
        return [Template(identity=identity_id, modality="keystroke", session_id=samples[0][0].session_id, body=model)]

    def verify(self, identity_id: str, templates: list[Template], probe: Sequence[KeyEvent], threshold: float) -> VerificationOutcome:
        if not templates:
            raise NotEnrolled(f"{identity_id} has no keystroke template")
        return score_typing(templates[0].body, extract_features(probe), threshold, identity_id,
                            self.probe_min, self.min_entry_count)


def enroll_keystroke(
    store: TemplateStore,
    instrument: KeystrokeInstrument,
    identity_id: str,
    sessions: dict[str, list[Sequence[KeyEvent]]],
) -> list[Template]:
    policy = store.policies["keystroke"]
    for streams in sessions.values():
        for stream in streams:
            if len(stream) < policy.min_payload:
                raise TooFewKeystrokes(f"{len(stream)} keystrokes, enrollment needs {int(policy.min_payload)}")
    payloads = {s: [encode_key_stream(stream) for stream in streams] for s, streams in sessions.items()}
    return enroll(store, instrument, identity_id, payloads)


def verify_keystroke(
    store: TemplateStore,
    instrument: KeystrokeInstrument,
    identity_id: str,
    probe: Sequence[KeyEvent],
    threshold: float,
) -> VerificationOutcome:
    return instrument.verify(identity_id, store.fetch_templates(identity_id, "keystroke"), probe, threshold)
