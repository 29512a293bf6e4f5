"""
Shared fixtures: an isolated data directory per test and small voice models
trained once per session on synthetic speakers.
"""
import numpy as np
import pytest

from app.config import FrontendConfig, Settings, SpeakerConfig
from app.core.store import TemplateStore
from app.evaluation.synthetic import speaker_population, synth_voice
from app.instruments.speaker import SpeakerInstrument, train_voice_models
from app.pipeline.orchestrator import BiometricService


SMALL_SPEAKER = SpeakerConfig(ubm_components=4, ubm_iters=5, ivector_dim=5, tv_iters=3, seed=0)


@pytest.fixture
def settings(tmp_path):
    return Settings(data_dir=str(tmp_path / "data"))


@pytest.fixture
def store(settings):
    return TemplateStore(settings.data_dir, settings.policies)


@pytest.fixture
def service(settings):
    return BiometricService(settings)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def frontend():
    return FrontendConfig()


@pytest.fixture(scope="session")
def speakers(frontend):
    return speaker_population(4, seed=1, sample_rate=frontend.sample_rate)


@pytest.fixture(scope="session")
def voice_models(frontend, speakers):
    corpus = [synth_voice(p, 3.0, j) for p in speakers for j in range(3)]
    return train_voice_models(corpus, frontend, SMALL_SPEAKER)


@pytest.fixture(scope="session")
def speaker_instrument(voice_models, frontend):
    return SpeakerInstrument(voice_models, frontend, min_voiced_s=1.0)
