"""
Tests for the evaluation runner.
"""
import csv
import json

import numpy as np
import pytest

from app.core.errors import MalformedSample, ProbeTooShort
from app.core.models import VerificationOutcome
from app.evaluation import runner
from app.evaluation.runner import (
    BACKGROUND_SEED_OFFSET,
    CALIBRATION_SEED_OFFSET,
    EvaluationReport,
    calibrate,
    eval_score,
    evaluate,
    kd_trials,
    parallel_map,
    report_from_scores,
    trial_seeds,
    vr_trials,
    write_report,
)
from app.evaluation.synthetic import speaker_population, synth_voice


def test_keystroke_evaluation_separates_typists(settings):
    report = evaluate("kd", settings, speakers=20, seed=7, quiet=True)
    assert report.instrument == "kd"
    assert report.n_genuine == 20 * 5
    assert report.n_impostor == 20 * 19 * 5
    assert report.eer <= 0.05
    assert report.parameters["typists"] == 20


def test_evaluation_is_reproducible(settings):
    a = evaluate("kd", settings, speakers=5, seed=3, quiet=True, enroll_keystrokes=300, probe_keystrokes=80)
    b = evaluate("kd", settings, speakers=5, seed=3, quiet=True, enroll_keystrokes=300, probe_keystrokes=80)
    assert a == b


def test_keystroke_trials_respect_the_scoring_floor(settings):
    floor = settings.keystroke.probe_min_keystrokes
    with pytest.raises(ProbeTooShort):
        kd_trials(settings, n_typists=2, seed=0, enroll_keystrokes=300, probe_keystrokes=floor - 30,
                  probes_per_typist=1, quiet=True)
    trials = kd_trials(settings, n_typists=2, seed=0, enroll_keystrokes=300, probe_keystrokes=floor,
                       probes_per_typist=1, quiet=True)
    assert len(trials) == 4


def test_voice_background_models_never_see_evaluated_speakers(settings, monkeypatch):
    class Trained(Exception):
        pass

    captured = []

    def capture(corpus, frontend, cfg):
        captured.extend(corpus)
        raise Trained

    monkeypatch.setattr(runner, "train_voice_models", capture)
    with pytest.raises(Trained):
        vr_trials(settings, n_speakers=2, seed=0, enroll_per_speaker=2, probes_per_speaker=1, duration_s=1.0, quiet=True)
    sr = settings.frontend.sample_rate
    evaluated = [synth_voice(p, 1.0, j).samples for p in speaker_population(2, 0, sr) for j in range(2)]
    assert len(captured) == 4
    assert not any(np.array_equal(b.samples, e) for b in captured for e in evaluated)
    evaluated_seeds = {p.seed for p in speaker_population(2, 0, sr)}
    assert evaluated_seeds.isdisjoint(p.seed for p in speaker_population(2, BACKGROUND_SEED_OFFSET, sr))


def test_calibration_draws_its_own_population(service, monkeypatch):
    seen = []
    real_trials = runner.kd_trials

    def recording(settings, n_typists, seed, **kwargs):
        seen.append(seed)
        return real_trials(settings, 3, seed, enroll_keystrokes=300, probe_keystrokes=80, probes_per_typist=2, quiet=True)

    monkeypatch.setattr(runner, "kd_trials", recording)
    threshold = calibrate(service, "kd", "eer", speakers=3, seed=0, quiet=True)
    assert seen == [CALIBRATION_SEED_OFFSET]
    assert threshold >= 0
    assert service.thresholds.kd == pytest.approx(threshold)


def test_face_evaluation_counts(settings):
    report = evaluate("fr", settings, speakers=3, seed=0, quiet=True, probes_per_identity=2)
    assert (report.n_genuine, report.n_impostor) == (6, 12)
    assert 0.0 <= report.eer <= 1.0


def test_unknown_instrument(settings):
    with pytest.raises(MalformedSample):
        evaluate("iris", settings)


def test_write_report(tmp_path):
    report = report_from_scores("vr", [0.9, 0.8], [0.1, 0.5, 0.85], seed=1, parameters={"speakers": 2})
    json_path, csv_path = write_report(report, tmp_path / "out")
    assert json_path.name == "eval_vr.json" and csv_path.name == "det_vr.csv"
    assert EvaluationReport(**json.loads(json_path.read_text())) == report
    with open(csv_path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["far", "frr", "threshold"]
    assert len(rows) - 1 == len(report.det) == 5


def test_trial_seeds_are_stable_and_distinct():
    seeds = trial_seeds(3, 5)
    assert seeds[:3] == trial_seeds(3, 3)
    assert len(set(seeds)) == 5
    assert seeds != trial_seeds(4, 5)


def test_parallel_map_keeps_order():
    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, workers=4, quiet=True) == [x * x for x in items]
    assert parallel_map(lambda x: x * x, items, workers=1, quiet=True) == [x * x for x in items]


def test_distance_scores_are_negated_for_sweeps():
    kd = VerificationOutcome(instrument="KD", identity="a", accepted=True, score=0.7, threshold=1.5)
    fr = VerificationOutcome(instrument="FR", identity="a", accepted=True, score=1.0, threshold=0.5, similarity=0.4)
    assert eval_score(kd) == -0.7
    assert eval_score(fr) == 0.4
