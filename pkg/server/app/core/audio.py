"""
Audio front-end shared by the speaker-verification and voice anti-spoofing
instruments: WAV codec, pre-emphasis, framing, power spectrum, mel
filterbank, MFCC with derivatives, and energy-based voice activity masking.

All functions are pure; identical inputs give bit-identical outputs.
"""
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile

from ..config import FrontendConfig
from .errors import AllSilent, AudioTooShort, MalformedSample, UnsupportedAudio


LOG_FLOOR = 1e-10
SILENCE_FLOOR = 1e-8


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise UnsupportedAudio("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise MalformedSample("audio contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def scaled(self, alpha: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * alpha, self.sample_rate)


@dataclass
class MfccMatrix:
    frames: np.ndarray
    frame_step: float
    config_digest: str
    voiced: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames.shape

    def to_dict(self) -> dict:
        rows, cols = self.frames.shape
        return {
            "rows": rows,
            "cols": cols,
            "data": self.frames.reshape(-1).tolist(),
            "frame_step": self.frame_step,
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MfccMatrix":
        frames = np.asarray(doc["data"], dtype=np.float64).reshape(doc["rows"], doc["cols"])
        return cls(frames=frames, frame_step=doc["frame_step"], config_digest=doc["config_digest"])


# ============ WAV Codec ============

def read_wav(payload: bytes, expected_rate: int) -> AudioBuffer:
    """Decode mono 16-bit PCM WAV; other layouts and rates are rejected."""
    try:
        rate, data = wavfile.read(io.BytesIO(payload))
    except (ValueError, EOFError) as e:
        raise MalformedSample(f"payload is not a WAV file: {e}") from e
    if data.dtype != np.int16 or data.ndim != 1:
        raise UnsupportedAudio("only mono 16-bit PCM WAV is accepted")
    if rate != expected_rate:
        raise UnsupportedAudio(f"sample rate {rate} Hz does not match configured {expected_rate} Hz")
    return AudioBuffer(data.astype(np.float64) / 32768.0, rate)


def write_wav(buf: AudioBuffer) -> bytes:
    pcm = np.round(np.clip(buf.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    out = io.BytesIO()
    wavfile.write(out, buf.sample_rate, pcm)
    return out.getvalue()


# ============ Framing & Spectrum ============

def preemphasize(buf: AudioBuffer, coeff: float) -> AudioBuffer:
    """y[n] = x[n] - coeff * x[n-1], y[0] = x[0]."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError("pre-emphasis coefficient must lie in [0, 1)")
    x = buf.samples
    if len(x) == 0:
        return buf
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - coeff * x[:-1]
    return AudioBuffer(y, buf.sample_rate)


def _frame_view(x: np.ndarray, frame: int, step: int) -> np.ndarray:
    if len(x) < frame:
        raise AudioTooShort(f"{len(x)} samples is shorter than one {frame}-sample frame")
    return np.lib.stride_tricks.sliding_window_view(x, frame)[::step]


def frame_and_window(buf: AudioBuffer, frame_len: float, frame_step: float) -> np.ndarray:
    """Overlapping Hamming-windowed frames (T x N); the trailing partial frame is dropped."""
    if not frame_len >= frame_step > 0:
        raise ValueError("need frame_len >= frame_step > 0")
    frame = int(round(frame_len * buf.sample_rate))
    step = int(round(frame_step * buf.sample_rate))
    return _frame_view(buf.samples, frame, step) * np.hamming(frame)


def power_spectrum(frame: np.ndarray, n_fft: int) -> np.ndarray:
    """|FFT|^2 of the zero-padded frame(s), non-redundant half (n_fft/2 + 1 bins)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > n_fft:
        raise ValueError(f"frame length {frame.shape[-1]} exceeds n_fft {n_fft}")
    return np.abs(np.fft.rfft(frame, n_fft, axis=-1)) ** 2


# ============ Mel Filterbank ============

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_edges(sample_rate: int, n_mels: int) -> np.ndarray:
    """n_mels + 2 edge frequencies equally spaced on the mel scale from 0 to Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))


def mel_filter_centers(sample_rate: int, n_mels: int) -> np.ndarray:
    return mel_filter_edges(sample_rate, n_mels)[1:-1]


@lru_cache(maxsize=32)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Unit-peak triangular filters (n_mels x n_fft/2+1); adjacent filters sum to 1 between centers."""
    if n_mels < 2:
        raise ValueError("need at least two mel filters")
    edges = mel_filter_edges(sample_rate, n_mels)
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lo) / (center - lo)
    falling = (hi - bin_hz) / (hi - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank_energies(spectrum: np.ndarray, sample_rate: int, n_mels: int) -> np.ndarray:
    """Log filterbank energies, floored at 1e-10 before the log."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    n_fft = 2 * (spectrum.shape[-1] - 1)
    fb = mel_filterbank(sample_rate, n_fft, n_mels)
    return np.log(np.maximum(spectrum @ fb.T, LOG_FLOOR))


# ============ Cepstra ============

def deltas(c: np.ndarray, window: int) -> np.ndarray:
    """Regression deltas over +-window frames with edge replication."""
    if window < 1:
        raise ValueError("delta window must be >= 1")
    T = len(c)
    padded = np.pad(c, ((window, window), (0, 0)), mode="edge")
    denom = 2.0 * sum(k * k for k in range(1, window + 1))
    out = np.zeros_like(c, dtype=np.float64)
    for k in range(1, window + 1):
        out += k * (padded[window + k: window + k + T] - padded[window - k: window - k + T])
    return out / denom


def mfcc(buf: AudioBuffer, cfg: FrontendConfig) -> MfccMatrix:
    """MFCC matrix with optional first/second derivatives appended."""
    if buf.sample_rate != cfg.sample_rate:
        raise UnsupportedAudio(f"audio at {buf.sample_rate} Hz, front-end expects {cfg.sample_rate} Hz")
    emphasized = preemphasize(buf, cfg.preemphasis)
    frames = frame_and_window(emphasized, cfg.frame_len, cfg.frame_step)
    log_mel = mel_filterbank_energies(power_spectrum(frames, cfg.fft_size), cfg.sample_rate, cfg.n_mels)
    ceps = dct(log_mel, type=2, norm="ortho", axis=1)[:, :cfg.n_ceps]
    blocks = [ceps]
    if cfg.delta_order >= 1:
        blocks.append(deltas(ceps, cfg.delta_window))
    if cfg.delta_order >= 2:
        blocks.append(deltas(blocks[1], cfg.delta_window))
    return MfccMatrix(frames=np.hstack(blocks), frame_step=cfg.frame_step, config_digest=cfg.digest())


# ============ Voice Activity ============

def frame_energies(buf: AudioBuffer, cfg: FrontendConfig) -> np.ndarray:
    frames = _frame_view(buf.samples, cfg.frame_samples, cfg.step_samples)
    return np.sum(frames * frames, axis=1)


def voice_activity_mask(buf: AudioBuffer, cfg: FrontendConfig) -> np.ndarray:
    """Keep frames whose log energy exceeds the configured quantile plus an offset."""
    energy = frame_energies(buf, cfg)
    audible = energy > SILENCE_FLOOR
    if not audible.any():
        raise AllSilent("every frame is below the absolute energy floor")
    level = 10.0 * np.log10(np.maximum(energy, LOG_FLOOR))
    threshold = np.quantile(level, cfg.vad_energy_quantile) + cfg.vad_offset_db
    mask = (level > threshold) & audible
    if not mask.any():
        # flat-energy audio: keep what sits within the offset of the loudest frame
        mask = (level >= level.max() - cfg.vad_offset_db) & audible
    return mask


def voiced_features(buf: AudioBuffer, cfg: FrontendConfig) -> MfccMatrix:
    """MFCC rows of voiced frames only; derivatives are taken before masking."""
    full = mfcc(buf, cfg)
    mask = voice_activity_mask(buf, cfg)
    return MfccMatrix(frames=full.frames[mask], frame_step=cfg.frame_step, config_digest=full.config_digest, voiced=mask)
