"""
Tests for keystroke features, the typing model and the conformance distance.
"""
import numpy as np
import pytest

from app.core.errors import (
    MalformedSample,
    NegativeDwell,
    NoModel,
    ProbeTooShort,
    TooFewKeystrokes,
    UnsortedStream,
)
from app.core.models import KeyStat, TypingModel
from app.evaluation.synthetic import synth_typing, typist_population
from app.instruments.keystroke import (
    KeyEvent,
    KeystrokeFeatures,
    KeystrokeInstrument,
    build_typing_model,
    encode_key_stream,
    enroll_keystroke,
    extract_features,
    parse_key_stream,
    score_typing,
    typing_distance,
    verify_keystroke,
)


def _model(dwell=None, flight=None, global_dwell=(100.0, 20.0), global_flight=(200.0, 40.0)):
    stat = lambda m, s, c=10: KeyStat(mean=m, std=s, count=c)
    return TypingModel(
        per_key_dwell={k: stat(*v) for k, v in (dwell or {}).items()},
        per_pair_flight={k: stat(*v) for k, v in (flight or {}).items()},
        global_dwell=stat(*global_dwell),
        global_flight=stat(*global_flight),
        total_keystrokes=10,
    )


@pytest.fixture(scope="module")
def typists():
    return typist_population(4, seed=11)


# ============ Features ============

def test_dwell_and_flight_from_two_events():
    features = extract_features([KeyEvent("a", 0, 80), KeyEvent("b", 150, 230)])
    assert features.dwell == [("a", 80), ("b", 80)]
    assert features.flight == [("a>b", 150)]


def test_single_event_has_no_flight():
    features = extract_features([KeyEvent("a", 10, 30)])
    assert features.dwell == [("a", 20)]
    assert features.flight == []


def test_release_before_press_is_rejected():
    with pytest.raises(NegativeDwell):
        KeyEvent("a", 100, 90)


def test_unsorted_stream_is_rejected():
    with pytest.raises(UnsortedStream):
        extract_features([KeyEvent("a", 100, 150), KeyEvent("b", 50, 90)])


def test_keys_are_case_folded():
    assert KeyEvent("A", 0, 1).key == "a"


# ============ Typing Model ============

def test_model_needs_the_policy_minimum(typists):
    with pytest.raises(TooFewKeystrokes):
        build_typing_model(synth_typing(typists[0], 100, seed=1), policy_min=750)


def test_std_is_floored():
    stream = [KeyEvent("a", 200.0 * i, 200.0 * i + 80) for i in range(10)]
    model = build_typing_model(stream, policy_min=10)
    assert model.per_key_dwell["a"].std == 5.0
    assert model.per_key_dwell["a"].mean == pytest.approx(80.0)
    assert model.per_pair_flight["a>a"].count == 9


def test_model_from_synthetic_stream(typists):
    model = build_typing_model(synth_typing(typists[1], 800, seed=2), policy_min=750)
    assert model.total_keystrokes == 800
    assert set(model.per_key_dwell) <= set(typists[1].keys)
    true_mean = typists[1].dwell["e"][0]
    assert model.per_key_dwell["e"].mean == pytest.approx(true_mean, abs=4.0)


# ============ Distance ============

def test_distance_is_zero_at_the_means():
    model = _model({"a": (80.0, 10.0)}, {"a>b": (150.0, 30.0)})
    probe = KeystrokeFeatures(dwell=[("a", 80.0)], flight=[("a>b", 150.0)])
    assert typing_distance(model, probe) == 0.0


def test_one_std_off_contributes_one():
    model = _model({"a": (80.0, 10.0)})
    assert typing_distance(model, KeystrokeFeatures(dwell=[("a", 90.0)])) == pytest.approx(1.0)


def test_unseen_and_rare_entries_use_the_global_statistic():
    model = _model({"r": (50.0, 5.0, 2)})
    unseen = KeystrokeFeatures(dwell=[("z", 120.0)])
    rare = KeystrokeFeatures(dwell=[("r", 120.0)])
    assert typing_distance(model, unseen) == pytest.approx(1.0)
    assert typing_distance(model, rare) == pytest.approx(1.0)


def test_distance_matches_brute_force(rng):
    keys = list("abcd")
    model = _model(
        {k: (rng.uniform(50, 150), rng.uniform(5, 30)) for k in keys[:3]},
        {f"{a}>{b}": (rng.uniform(100, 300), rng.uniform(5, 50)) for a in keys[:2] for b in keys},
    )
    for _ in range(50):
        probe = KeystrokeFeatures(
            dwell=[(keys[i], rng.uniform(20, 200)) for i in rng.integers(4, size=20)],
            flight=[(f"{keys[i]}>{keys[j]}", rng.uniform(50, 400)) for i, j in rng.integers(4, size=(19, 2))],
        )
        total, n = 0.0, 0
        for key, value in probe.dwell:
            ref = model.per_key_dwell.get(key, model.global_dwell)
            total += abs(value - ref.mean) / ref.std
            n += 1
        for pair, value in probe.flight:
            ref = model.per_pair_flight.get(pair, model.global_flight)
            total += abs(value - ref.mean) / ref.std
            n += 1
        assert typing_distance(model, probe) == pytest.approx(total / n, rel=1e-12)


def test_distance_ignores_probe_order(rng, typists):
    model = build_typing_model(synth_typing(typists[0], 750, seed=3), policy_min=750)
    features = extract_features(synth_typing(typists[0], 150, seed=4))
    shuffled = KeystrokeFeatures(
        dwell=[features.dwell[i] for i in rng.permutation(len(features.dwell))],
        flight=[features.flight[i] for i in rng.permutation(len(features.flight))],
    )
    assert typing_distance(model, shuffled) == pytest.approx(typing_distance(model, features), rel=1e-12)


def test_a_value_at_the_mean_never_increases_the_distance(rng, typists):
    model = build_typing_model(synth_typing(typists[1], 750, seed=5), policy_min=750)
    for seed in range(30):
        features = extract_features(synth_typing(typists[int(rng.integers(4))], 60, seed=100 + seed))
        before = typing_distance(model, features)
        frequent = sorted(k for k, s in model.per_key_dwell.items() if s.count >= 3)
        key = frequent[int(rng.integers(len(frequent)))]
        at_dwell_mean = KeystrokeFeatures(dwell=features.dwell + [(key, model.per_key_dwell[key].mean)],
                                          flight=list(features.flight))
        assert typing_distance(model, at_dwell_mean) <= before + 1e-12
        unseen = KeystrokeFeatures(dwell=list(features.dwell),
                                   flight=features.flight + [("unseen>pair", model.global_flight.mean)])
        assert typing_distance(model, unseen) <= before + 1e-12


def test_short_probe_and_missing_model(typists):
    features = extract_features(synth_typing(typists[0], 10, seed=1))
    with pytest.raises(ProbeTooShort):
        score_typing(_model(), features, 1.5)
    with pytest.raises(NoModel):
        score_typing(None, extract_features(synth_typing(typists[0], 60, seed=1)), 1.5)


def test_genuine_typist_is_closer_than_impostor(store, typists):
    alice = store.register_learner("alice").id
    kd = KeystrokeInstrument()
    enroll_keystroke(store, kd, alice, {"s1": [synth_typing(typists[2], 750, seed=1)]})
    genuine = verify_keystroke(store, kd, alice, synth_typing(typists[2], 150, seed=50), 1.5)
    impostor = verify_keystroke(store, kd, alice, synth_typing(typists[3], 150, seed=50), 1.5)
    assert genuine.score < impostor.score
    assert genuine.accepted
    assert genuine.instrument == "KD"


def test_enrollment_stream_below_minimum(store, typists):
    alice = store.register_learner("alice").id
    with pytest.raises(TooFewKeystrokes):
        enroll_keystroke(store, KeystrokeInstrument(), alice, {"s1": [synth_typing(typists[0], 749, seed=1)]})


# ============ Stream Codec ============

def test_json_lines_codec(typists):
    stream = synth_typing(typists[0], 20, seed=9)
    assert parse_key_stream(encode_key_stream(stream)) == stream


def test_csv_stream():
    payload = b"key,down_ms,up_ms\na,0,80\nb,150,230\n"
    assert parse_key_stream(payload) == [KeyEvent("a", 0, 80), KeyEvent("b", 150, 230)]


@pytest.mark.parametrize("payload", [b"\xff\xfe", b'{"key": "a"}\n', b"key,down_ms,up_ms\na,x,1\n"])
def test_malformed_streams(payload):
    with pytest.raises(MalformedSample):
        parse_key_stream(payload)


def test_measure_counts_keystrokes(typists):
    payload = encode_key_stream(synth_typing(typists[0], 42, seed=0))
    assert KeystrokeInstrument().measure(payload) == 42.0
    assert np.isfinite(KeystrokeInstrument().measure(payload))
