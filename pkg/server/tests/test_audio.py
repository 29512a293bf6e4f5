"""
Tests for the audio front-end against direct numerical oracles.
"""
import numpy as np
import pytest

from app.config import FrontendConfig
from app.core.audio import (
    LOG_FLOOR,
    AudioBuffer,
    frame_and_window,
    mel_filter_centers,
    mel_filterbank,
    mel_filterbank_energies,
    mfcc,
    power_spectrum,
    preemphasize,
    read_wav,
    voice_activity_mask,
    voiced_features,
    write_wav,
)
from app.core.errors import AllSilent, AudioTooShort, UnsupportedAudio


SR = 16000


def _dft_power(frame: np.ndarray) -> np.ndarray:
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    X = (frame[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)
    return np.abs(X) ** 2


# ============ Pre-emphasis & Framing ============

def test_preemphasis_zero_is_identity(rng):
    x = rng.standard_normal(100)
    np.testing.assert_array_equal(preemphasize(AudioBuffer(x, SR), 0.0).samples, x)


def test_preemphasis_of_constant_signal():
    y = preemphasize(AudioBuffer(np.full(50, 0.4), SR), 0.97).samples
    assert y[0] == pytest.approx(0.4)
    np.testing.assert_allclose(y[1:], 0.03 * 0.4, rtol=1e-12)


def test_preemphasis_formula():
    np.testing.assert_allclose(preemphasize(AudioBuffer([1.0, 0.0], SR), 0.5).samples, [1.0, -0.5])


def test_one_second_gives_98_frames():
    frames = frame_and_window(AudioBuffer(np.zeros(SR), SR), 0.025, 0.010)
    assert frames.shape == (98, 400)


def test_shorter_than_one_frame():
    with pytest.raises(AudioTooShort):
        frame_and_window(AudioBuffer(np.zeros(100), SR), 0.025, 0.010)


def test_all_ones_frame_is_the_hamming_window():
    frames = frame_and_window(AudioBuffer(np.ones(400), SR), 0.025, 0.010)
    n = np.arange(400)
    oracle = 0.54 - 0.46 * np.cos(2 * np.pi * n / 399)
    np.testing.assert_allclose(frames[0], oracle, atol=1e-12)
    assert frames[0][200] == pytest.approx(oracle[200])


# ============ Power Spectrum ============

def test_zero_frame_has_zero_spectrum():
    np.testing.assert_array_equal(power_spectrum(np.zeros(64), 64), np.zeros(33))


def test_power_spectrum_matches_direct_dft(rng):
    for _ in range(200):
        frame = rng.standard_normal(64)
        oracle = _dft_power(frame)
        got = power_spectrum(frame, 64)
        assert np.max(np.abs(got - oracle)) <= 1e-9 * np.max(oracle)


def test_bin_exact_tone_has_single_dominant_bin():
    n = np.arange(64)
    spectrum = power_spectrum(np.cos(2 * np.pi * 8 * n / 64), 64)
    assert int(np.argmax(spectrum)) == 8
    assert spectrum[8] == pytest.approx(32.0 ** 2)
    assert np.sum(spectrum) - spectrum[8] < 1e-9


def test_parseval(rng):
    frame = rng.standard_normal(256)
    half = power_spectrum(frame, 256)
    full = half[0] + half[-1] + 2.0 * half[1:-1].sum()
    assert full == pytest.approx(256 * np.sum(frame ** 2), rel=1e-10)


def test_frame_longer_than_fft_is_rejected():
    with pytest.raises(ValueError):
        power_spectrum(np.zeros(300), 256)


# ============ Mel Filterbank ============

def test_zero_spectrum_gives_log_floor():
    np.testing.assert_allclose(mel_filterbank_energies(np.zeros(257), SR, 24), np.log(LOG_FLOOR))


def test_one_khz_tone_peaks_at_nearest_filter():
    t = np.arange(400) / SR
    frame = np.sin(2 * np.pi * 1000.0 * t) * np.hamming(400)
    energies = mel_filterbank_energies(power_spectrum(frame, 512), SR, 24)
    assert int(np.argmax(energies)) == int(np.argmin(np.abs(mel_filter_centers(SR, 24) - 1000.0)))


def test_tones_at_filter_centers_peak_in_their_filter():
    centers = mel_filter_centers(SR, 24)
    t = np.arange(2048) / SR
    for i in range(2, 22):
        frame = np.sin(2 * np.pi * centers[i] * t) * np.hamming(2048)
        energies = mel_filterbank_energies(power_spectrum(frame, 2048), SR, 24)
        assert int(np.argmax(energies)) == i


def test_filters_partition_the_spectrum():
    fb = mel_filterbank(SR, 512, 24)
    assert fb.shape == (24, 257)
    assert np.all(fb.sum(axis=0) <= 1.0 + 1e-9)
    assert np.allclose(fb.max(axis=1), 1.0, atol=0.2)


# ============ MFCC ============

def test_mfcc_is_deterministic(rng, frontend):
    buf = AudioBuffer(rng.standard_normal(SR) * 0.1, SR)
    np.testing.assert_array_equal(mfcc(buf, frontend).frames, mfcc(buf, frontend).frames)


def test_mfcc_of_constant_log_mel_keeps_only_c0(frontend):
    out = mfcc(AudioBuffer(np.zeros(SR), SR), frontend).frames
    assert out.shape[1] == frontend.n_features
    assert np.all(np.abs(out[:, 0]) > 1.0)
    np.testing.assert_allclose(out[:, 1:frontend.n_ceps], 0.0, atol=1e-9)


def test_deltas_of_constant_cepstra_are_zero(frontend):
    out = mfcc(AudioBuffer(np.zeros(SR), SR), frontend).frames
    np.testing.assert_allclose(out[:, frontend.n_ceps:], 0.0, atol=1e-9)


@pytest.mark.parametrize("alpha", [0.25, 0.8, 1.25, 3.0])
def test_amplitude_scaling_only_shifts_c0(rng, frontend, alpha):
    buf = AudioBuffer(rng.standard_normal(SR) * 0.1, SR)
    base = mfcc(buf, frontend).frames
    scaled = mfcc(buf.scaled(alpha), frontend).frames
    shift = 2.0 * np.log(alpha) * np.sqrt(frontend.n_mels)
    np.testing.assert_allclose(scaled[:, 0] - base[:, 0], shift, atol=1e-8)
    np.testing.assert_allclose(scaled[:, 1:], base[:, 1:], atol=1e-8)


def test_mfcc_rejects_other_sample_rates(frontend):
    with pytest.raises(UnsupportedAudio):
        mfcc(AudioBuffer(np.zeros(8000), 8000), frontend)


def test_mfcc_without_derivatives():
    cfg = FrontendConfig(delta_order=0)
    assert mfcc(AudioBuffer(np.ones(SR) * 0.1, SR), cfg).frames.shape[1] == cfg.n_ceps


# ============ Voice Activity ============

def test_silence_is_rejected(frontend):
    with pytest.raises(AllSilent):
        voice_activity_mask(AudioBuffer(np.zeros(SR), SR), frontend)


def test_tone_burst_frames_only(frontend):
    x = np.zeros(int(2.5 * SR))
    t = np.arange(SR // 2) / SR
    x[SR:SR + SR // 2] = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    mask = voice_activity_mask(AudioBuffer(x, SR), frontend)
    starts = np.arange(len(mask)) * frontend.step_samples
    ends = starts + frontend.frame_samples
    overlaps = (ends > SR) & (starts < SR + SR // 2)
    inside = (starts >= SR) & (ends <= SR + SR // 2)
    assert not np.any(mask & ~overlaps)
    assert np.all(mask[inside])


def test_equal_energy_audio_keeps_every_frame(frontend):
    mask = voice_activity_mask(AudioBuffer(np.full(SR, 0.5), SR), frontend)
    assert mask.all()


def test_voiced_features_drop_masked_rows(frontend):
    x = np.zeros(2 * SR)
    x[SR // 2:SR] = 0.3 * np.sin(2 * np.pi * 300.0 * np.arange(SR // 2) / SR)
    features = voiced_features(AudioBuffer(x, SR), frontend)
    assert features.frames.shape[0] == int(features.voiced.sum())
    assert features.config_digest == frontend.digest()


# ============ WAV Codec ============

def test_wav_codec_preserves_16_bit_samples(rng):
    buf = AudioBuffer(np.round(rng.uniform(-0.5, 0.5, SR) * 32768) / 32768, SR)
    np.testing.assert_array_equal(read_wav(write_wav(buf), SR).samples, buf.samples)


def test_wav_at_wrong_rate_is_rejected():
    with pytest.raises(UnsupportedAudio):
        read_wav(write_wav(AudioBuffer(np.zeros(800), 8000)), SR)
