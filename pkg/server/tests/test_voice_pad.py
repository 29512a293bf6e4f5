"""
Tests for the one-class GMM replay detector.
"""
import numpy as np
import pytest

from app.config import FrontendConfig
from app.core.audio import AudioBuffer, voiced_features
from app.core.errors import DigestMismatch, TooFewFrames
from app.evaluation.synthetic import simulate_replay_voice, synth_voice
from app.instruments.voice_pad import OccGmm, VoicePadInstrument, occ_frame_score, score_voice_pad, train_occ


@pytest.fixture(scope="module")
def corpus(speakers):
    return [synth_voice(speakers[i % len(speakers)], 3.0, 200 + i) for i in range(20)]


@pytest.fixture(scope="module")
def occ(corpus, frontend):
    return train_occ(corpus, n_components=4, iters=5, seed=0, frontend=frontend)


def test_single_component_is_the_frame_moments(corpus, frontend):
    model = train_occ(corpus[:4], n_components=1, iters=3, seed=0, frontend=frontend)
    frames = np.vstack([voiced_features(b, frontend).frames for b in corpus[:4]])
    np.testing.assert_allclose(model.gmm.means[0], frames.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(model.gmm.variances[0], frames.var(axis=0), rtol=1e-9)


def test_training_is_deterministic(corpus, frontend, occ):
    again = train_occ(corpus, n_components=4, iters=5, seed=0, frontend=frontend)
    assert again.gmm.digest() == occ.gmm.digest()
    assert again.score_threshold == occ.score_threshold


def test_no_bona_fide_audio(frontend):
    with pytest.raises(TooFewFrames):
        train_occ([], n_components=2, iters=2, seed=0, frontend=frontend)


def test_training_samples_mostly_pass(corpus, frontend, occ):
    outcomes = [score_voice_pad(occ, b, frontend) for b in corpus]
    assert np.mean([o.decision == "bona_fide" for o in outcomes]) >= 0.95
    assert all(o.instrument == "VRA" for o in outcomes)


def test_zero_percentile_puts_the_worst_sample_on_the_threshold(corpus, frontend):
    model = train_occ(corpus, n_components=4, iters=5, seed=0, frontend=frontend, threshold_percentile=0.0)
    scores = [score_voice_pad(model, b, frontend).score for b in corpus]
    assert min(scores) == pytest.approx(0.0, abs=1e-9)


def test_white_noise_is_an_attack(frontend, occ):
    noise = AudioBuffer(np.random.default_rng(3).uniform(-0.3, 0.3, 3 * 16000), 16000)
    assert score_voice_pad(occ, noise, frontend).decision == "attack"


def test_replay_scores_below_its_source(speakers, frontend, occ):
    lower = 0
    for i in range(6):
        source = synth_voice(speakers[i % len(speakers)], 3.0, 700 + i)
        replayed = simulate_replay_voice(source, seed=i)
        lower += score_voice_pad(occ, replayed, frontend).score < score_voice_pad(occ, source, frontend).score
    assert lower >= 5


def test_raising_the_threshold_never_admits_more(occ, corpus, frontend):
    samples = corpus[:4] + [simulate_replay_voice(b, seed=n) for n, b in enumerate(corpus[:4])]
    thresholds = occ.score_threshold + np.linspace(-20.0, 20.0, 21)
    for buf in samples:
        outcomes = [score_voice_pad(occ.with_threshold(t), buf, frontend) for t in thresholds]
        decisions = [o.decision == "bona_fide" for o in outcomes]
        assert all(a >= b for a, b in zip(decisions, decisions[1:]))
        base = score_voice_pad(occ, buf, frontend).score
        for t, o in zip(thresholds, outcomes):
            assert o.score == pytest.approx(base + occ.score_threshold - t, abs=1e-9)


def test_score_is_a_per_frame_average(occ, corpus, frontend):
    frames = voiced_features(corpus[0], frontend).frames
    assert occ_frame_score(occ, np.vstack([frames, frames])) == pytest.approx(occ_frame_score(occ, frames), abs=1e-12)


def test_model_is_bound_to_the_frontend(occ):
    with pytest.raises(DigestMismatch):
        VoicePadInstrument(occ, FrontendConfig(n_mels=26))
    with pytest.raises(DigestMismatch):
        score_voice_pad(occ, AudioBuffer(np.zeros(16000), 16000), FrontendConfig(n_mels=26))


def test_model_document_round_trip(occ):
    restored = OccGmm.from_dict(occ.to_dict())
    assert restored.gmm.digest() == occ.gmm.digest()
    assert restored.with_threshold(1.5).score_threshold == 1.5
