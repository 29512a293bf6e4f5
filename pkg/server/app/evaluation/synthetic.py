"""
Seeded synthetic populations (speakers, typists, faces) and the attack
channels used to build presentation-attack corpora.

Every generator is a pure function of its profile and seed, so evaluation
runs are reproducible bit for bit.
"""
import math
from dataclasses import dataclass, field
from typing import Literal

import cv2
import numpy as np
from scipy.signal import firwin, fftconvolve, lfilter

from ..core.audio import AudioBuffer
from ..core.imaging import FrameImage, FrameSequence
from ..instruments.face_pad import gaussian_ksize
from ..instruments.keystroke import KeyEvent, pair_key


DEFAULT_KEYS = "etaoinshrd"


def _rng(*seeds: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(s) for s in seeds]))


# ============ Speakers ============

@dataclass(frozen=True)
class SyntheticSpeakerProfile:
    seed: int
    peaks: tuple[tuple[float, float], ...]  # (center Hz, bandwidth Hz)
    pitch_hz: float = 120.0
    envelope_rate_hz: float = 4.0
    envelope_depth: float = 0.6
    noise_level: float = 0.02
    sample_rate: int = 16000

    def __post_init__(self):
        if not self.peaks:
            raise ValueError("a speaker profile needs at least one spectral peak")
        for center, bandwidth in self.peaks:
            if not 100.0 <= center < self.sample_rate / 2 or bandwidth <= 0:
                raise ValueError(f"peak {center} Hz outside [100, {self.sample_rate / 2}) Hz")


def speaker_population(n: int, seed: int, sample_rate: int = 16000, peaks_per_speaker: int = 4) -> list[SyntheticSpeakerProfile]:
    """Speakers with pairwise disjoint peak sets drawn from a shared log-spaced grid."""
    rng = _rng(seed, 0x5)
    slots = np.geomspace(200.0, 0.45 * sample_rate, n * peaks_per_speaker)
    spacing = np.diff(np.log(slots)).mean()
    order = rng.permutation(len(slots))
    profiles = []
    for i in range(n):
        chosen = np.sort(slots[order[i * peaks_per_speaker:(i + 1) * peaks_per_speaker]])
        peaks = tuple((float(c), float(0.25 * spacing * c)) for c in chosen)
        profiles.append(SyntheticSpeakerProfile(
            seed=int(rng.integers(2 ** 31)),
            peaks=peaks,
            pitch_hz=float(rng.uniform(90.0, 220.0)),
            envelope_rate_hz=float(rng.uniform(3.0, 6.0)),
            sample_rate=sample_rate,
        ))
    return profiles


def synth_voice(profile: SyntheticSpeakerProfile, duration_s: float, utterance_seed: int) -> AudioBuffer:
    """Jittered sinusoids at the profile's peaks, pitch harmonics, a syllabic envelope and shaped noise."""
    if duration_s < 1.0:
        raise ValueError("synthetic utterances last at least 1 s")
    sr = profile.sample_rate
    rng = _rng(profile.seed, utterance_seed)
    t = np.arange(int(round(duration_s * sr))) / sr
    x = np.zeros_like(t)
    for center, bandwidth in profile.peaks:
        f = float(np.clip(center + rng.normal(0.0, bandwidth / 4.0), 100.0, sr / 2 - 1.0))
        x += rng.uniform(0.6, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    if profile.pitch_hz > 0:
        pitch = profile.pitch_hz * (1.0 + rng.normal(0.0, 0.02))
        for h in range(1, 4):
            if h * pitch < sr / 2:
                x += 0.3 / h * np.sin(2 * np.pi * h * pitch * t + rng.uniform(0, 2 * np.pi))
    if profile.envelope_depth > 0:
        phase = rng.uniform(0, 2 * np.pi)
        x *= 1.0 - profile.envelope_depth * (0.5 + 0.5 * np.sin(2 * np.pi * profile.envelope_rate_hz * t + phase))
    x = 0.5 * x / max(np.max(np.abs(x)), 1e-12)
    if profile.noise_level > 0:
        x += profile.noise_level * lfilter([1.0], [1.0, -0.9], rng.standard_normal(len(t))) * np.sqrt(1 - 0.81)
    return AudioBuffer(np.clip(x, -1.0, 1.0), sr)


def room_response(sample_rate: int, delay_s: float = 0.03, gain: float = 0.3, reflections: int = 3) -> np.ndarray:
    """Direct path followed by geometrically decaying reflections every `delay_s`."""
    step = max(1, int(round(delay_s * sample_rate)))
    h = np.zeros(step * reflections + 1)
    h[::step] = gain ** np.arange(reflections + 1)
    return h


def simulate_replay_voice(
    buf: AudioBuffer,
    seed: int = 0,
    snr_db: float = 20.0,
    band: tuple[float, float] = (300.0, 3400.0),
    clip: float = 0.9,
    taps: int = 255,
    echo_delay_s: float = 0.03,
    echo_gain: float = 0.3,
) -> AudioBuffer:
    """Loudspeaker-to-microphone re-recording: band-limit, room echo, white noise, clipping."""
    h = firwin(taps, list(band), pass_zero=False, fs=buf.sample_rate)
    filtered = fftconvolve(buf.samples, h, mode="same")
    if echo_gain > 0 and len(filtered):
        filtered = fftconvolve(filtered, room_response(buf.sample_rate, echo_delay_s, echo_gain))[:len(filtered)]
    power = float(np.mean(filtered ** 2)) if len(filtered) else 0.0
    noise_std = max(math.sqrt(power / 10 ** (snr_db / 10)), 1e-4)
    noisy = filtered + _rng(seed, 0xA7).normal(0.0, noise_std, len(filtered))
    return AudioBuffer(np.clip(noisy, -clip, clip), buf.sample_rate)


# ============ Typists ============

@dataclass(frozen=True)
class SyntheticTypistProfile:
    seed: int
    dwell: dict[str, tuple[float, float]]  # key -> (mean ms, std ms)
    flight: dict[str, tuple[float, float]]  # "a>b" -> (mean ms, std ms)
    keys: tuple[str, ...] = field(default=tuple(DEFAULT_KEYS))

    def __post_init__(self):
        for mean, std in list(self.dwell.values()) + list(self.flight.values()):
            if mean <= 0 or std < 0:
                raise ValueError("typing means must be positive and stds non-negative")


def typist_population(
    n: int,
    seed: int,
    keys: str = DEFAULT_KEYS,
    dwell_std: float = 6.0,
    flight_std: float = 10.0,
    separation: float = 3.0,
) -> list[SyntheticTypistProfile]:
    """Typists whose per-key and per-pair means sit at least `separation` stds apart."""
    rng = _rng(seed, 0x7)
    pairs = [pair_key(a, b) for a in keys for b in keys]
    dwell_rank = {k: rng.permutation(n) for k in keys}
    flight_rank = {p: rng.permutation(n) for p in pairs}
    profiles = []
    for i in range(n):
        profiles.append(SyntheticTypistProfile(
            seed=int(rng.integers(2 ** 31)),
            dwell={k: (60.0 + separation * dwell_std * dwell_rank[k][i], dwell_std) for k in keys},
            flight={p: (90.0 + separation * flight_std * flight_rank[p][i], flight_std) for p in pairs},
            keys=tuple(keys),
        ))
    return profiles


def synth_typing(profile: SyntheticTypistProfile, n_keystrokes: int, seed: int) -> list[KeyEvent]:
    """Gaussian dwell and flight draws, clipped at 1 ms, laid out as a sorted stream."""
    if n_keystrokes < 1:
        raise ValueError("need at least one keystroke")
    rng = _rng(profile.seed, seed)
    keys = [profile.keys[i] for i in rng.integers(len(profile.keys), size=n_keystrokes)]
    events, down, prev = [], 0.0, None
    for key in keys:
        if prev is not None:
            mean, std = profile.flight[pair_key(prev, key)]
            down += max(1.0, rng.normal(mean, std))
        mean, std = profile.dwell[key]
        events.append(KeyEvent(key, down, down + max(1.0, rng.normal(mean, std))))
        prev = key
    return events


# ============ Faces ============

@dataclass(frozen=True)
class SyntheticFaceProfile:
    seed: int
    blobs: tuple[tuple[float, float, float, float], ...]  # (cx, cy, sigma, amplitude), unit coords
    size: int = 64


def face_population(n: int, seed: int, size: int = 64, blobs_per_face: int = 6) -> list[SyntheticFaceProfile]:
    rng = _rng(seed, 0xF)
    profiles = []
    for _ in range(n):
        blobs = tuple(
            (float(rng.uniform(0.15, 0.85)), float(rng.uniform(0.15, 0.85)),
             float(rng.uniform(0.06, 0.16)), float(rng.uniform(-70.0, 70.0)))
            for _ in range(blobs_per_face)
        )
        profiles.append(SyntheticFaceProfile(seed=int(rng.integers(2 ** 31)), blobs=blobs, size=size))
    return profiles


def synth_face(profile: SyntheticFaceProfile, capture_seed: int, noise: float = 0.8) -> FrameImage:
    """Smooth identity pattern with a small per-capture shift, gain and sensor noise."""
    rng = _rng(profile.seed, capture_seed)
    n = profile.size
    shift = rng.normal(0.0, 0.01, size=2)
    gain = 1.0 + rng.normal(0.0, 0.03)
    yy, xx = np.mgrid[0:n, 0:n] / (n - 1)
    img = np.full((n, n), 128.0)
    for cx, cy, sigma, amp in profile.blobs:
        img += gain * amp * np.exp(-((xx - cx - shift[0]) ** 2 + (yy - cy - shift[1]) ** 2) / (2 * sigma ** 2))
    img += rng.normal(0.0, noise, img.shape)
    return FrameImage(np.clip(img, 0.0, 255.0), f"synthetic:{profile.seed}:{capture_seed}")


def synth_face_video(profile: SyntheticFaceProfile, seconds: float, fps: float, seed: int) -> FrameSequence:
    count = int(round(seconds * fps))
    return FrameSequence([synth_face(profile, seed * 100003 + i) for i in range(count)], fps)


AttackKind = Literal["print", "replay"]


def simulate_recapture_face(img: FrameImage, kind: AttackKind = "print", seed: int = 0) -> FrameImage:
    """
    Re-capture of a printed photo or screen: blur, 2x resampling, contrast
    compressed 20% toward mid-gray, sensor noise. Screen replays add a moire
    grating and a gamma lift.
    """
    rng = _rng(seed, 0xC)
    h, w = img.shape
    k = gaussian_ksize(1.5)
    x = cv2.GaussianBlur(img.pixels, (k, k), sigmaX=1.5, sigmaY=1.5, borderType=cv2.BORDER_REFLECT)
    x = cv2.resize(x, (max(1, w // 2), max(1, h // 2)), interpolation=cv2.INTER_LINEAR)
    x = cv2.resize(x, (w, h), interpolation=cv2.INTER_LINEAR)
    x = 128.0 + 0.8 * (x - 128.0)
    if kind == "replay":
        yy, xx = np.mgrid[0:h, 0:w]
        fx, fy = rng.uniform(0.18, 0.3, size=2)
        x = x + 3.0 * np.sin(2 * np.pi * (fx * xx + fy * yy))
        x = 255.0 * (np.clip(x, 0.0, 255.0) / 255.0) ** 0.9
    elif kind != "print":
        raise ValueError(f"unknown attack kind {kind!r}")
    x = x + rng.normal(0.0, 2.0, x.shape)
    return FrameImage(np.clip(x, 0.0, 255.0), img.source)


def recapture_sequence(video: FrameSequence, kind: AttackKind = "print", seed: int = 0) -> FrameSequence:
    return FrameSequence([simulate_recapture_face(f, kind, seed * 7919 + i) for i, f in enumerate(video.frames)], video.fps)
