"""
Evaluation runner: builds synthetic genuine/impostor trials per instrument,
computes error rates, calibrates thresholds and trains service models.
"""
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Optional, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, Field
from tqdm import tqdm

from ..config import Settings
from ..core.audio import AudioBuffer, read_wav
from ..core.embeddings import get_embedding_extractor
from ..core.errors import MalformedSample
from ..core.models import IVector, Template, VerificationOutcome
from ..instruments.face import FaceInstrument, embed_frames
from ..instruments.face_pad import (
    classify_face_pad,
    frame_iqms,
    load_pad_manifest,
    train_pad_classifier,
)
from ..instruments.keystroke import (
    extract_features,
    score_typing,
    typing_model_from_features,
)
from ..instruments.speaker import SpeakerInstrument, train_voice_models
from ..instruments.voice_pad import score_voice_pad, train_occ
from ..pipeline.trust import InstrumentResult, fuse
from .metrics import CalibrationTarget, calibrate_threshold, compute_acer, sweep_thresholds
from .synthetic import (
    face_population,
    simulate_recapture_face,
    simulate_replay_voice,
    speaker_population,
    synth_face,
    synth_face_video,
    synth_typing,
    synth_voice,
    typist_population,
)


logger = logging.getLogger(__name__)

EvalInstrument = Literal["vr", "fr", "kd", "fra", "vra", "fusion"]

# Seed shifts keeping background and calibration speakers apart from the evaluated and trained ones.
BACKGROUND_SEED_OFFSET = 7_919
CALIBRATION_SEED_OFFSET = 104_729
T = TypeVar("T")
R = TypeVar("R")


class EvaluationReport(BaseModel):
    instrument: str
    n_genuine: int
    n_impostor: int
    far: Optional[float] = None
    frr: Optional[float] = None
    eer: Optional[float] = None
    total_error: Optional[float] = None
    threshold: Optional[float] = None
    apcer: Optional[float] = None
    bpcer: Optional[float] = None
    acer: Optional[float] = None
    apcer_per_kind: dict[str, float] = Field(default_factory=dict)
    single_instrument_eer: dict[str, float] = Field(default_factory=dict)
    det: list[list[float]] = Field(default_factory=list)
    seed: int
    parameters: dict[str, Any] = Field(default_factory=dict)


@dataclass(frozen=True)
class Trial:
    claimed: int
    owner: int
    probe: int
    outcome: VerificationOutcome

    @property
    def genuine(self) -> bool:
        return self.claimed == self.owner


# ============ Helpers ============

def trial_seeds(root: int, n: int) -> list[int]:
    """Independent per-trial seeds derived from one root seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(root).spawn(n)]


def parallel_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1, desc: str = "", quiet: bool = False) -> list[R]:
    """Order-preserving map with a progress bar; results never depend on `workers`."""
    bar = tqdm(total=len(items), desc=desc, disable=quiet, leave=False)
    try:
        if workers <= 1:
            out = []
            for item in items:
                out.append(fn(item))
                bar.update()
            return out
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = []
            for result in pool.map(fn, items):
                out.append(result)
                bar.update()
            return out
    finally:
        bar.close()


def eval_score(outcome: VerificationOutcome) -> float:
    """Higher-is-genuine score used for error-rate sweeps."""
    if outcome.instrument == "KD":
        return -outcome.score
    return outcome.similarity if outcome.similarity is not None else outcome.score


def split_scores(trials: Iterable[Trial]) -> tuple[list[float], list[float]]:
    genuine, impostor = [], []
    for t in trials:
        (genuine if t.genuine else impostor).append(eval_score(t.outcome))
    return genuine, impostor


def report_from_scores(
    instrument: str,
    genuine: Sequence[float],
    impostor: Sequence[float],
    seed: int,
    parameters: dict[str, Any],
) -> EvaluationReport:
    rates, det = sweep_thresholds(genuine, impostor)
    return EvaluationReport(
        instrument=instrument,
        n_genuine=len(genuine),
        n_impostor=len(impostor),
        far=rates.far,
        frr=rates.frr,
        eer=rates.eer,
        total_error=rates.total_error,
        threshold=rates.threshold,
        det=[[p.far, p.frr, p.threshold] for p in det],
        seed=seed,
        parameters=parameters,
    )


def write_report(report: EvaluationReport, out_dir: str | Path) -> tuple[Path, Path]:
    """JSON report plus a CSV of DET points."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"eval_{report.instrument}.json"
    csv_path = out_dir / f"det_{report.instrument}.csv"
    json_path.write_text(json.dumps(report.model_dump(), indent=2, sort_keys=True), encoding="utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["far", "frr", "threshold"])
        writer.writerows(report.det)
    return json_path, csv_path


# ============ Verification Trials ============

def vr_trials(
    settings: Settings,
    n_speakers: int = 10,
    seed: int = 0,
    enroll_per_speaker: int = 15,
    probes_per_speaker: int = 10,
    duration_s: float = 5.0,
    ivector_dim: int = 20,
    ubm_components: int = 16,
    instrument: Optional[SpeakerInstrument] = None,
    workers: int = 1,
    quiet: bool = False,
) -> list[Trial]:
    """
    Every probe scored against every speaker's enrollment i-vectors.

    Without a ready instrument, UBM and total variability are trained on a
    background population of the same size that shares no speaker with the
    evaluated one.
    """
    sr = settings.frontend.sample_rate
    profiles = speaker_population(n_speakers, seed, sr)
    enroll_sets = parallel_map(
        lambda p: [synth_voice(p, duration_s, j) for j in range(enroll_per_speaker)],
        profiles, workers, "VR enrollment audio", quiet,
    )
    if instrument is None:
        speaker_cfg = settings.speaker.model_copy(update={"ubm_components": ubm_components, "ivector_dim": ivector_dim})
        background = speaker_population(n_speakers, seed + BACKGROUND_SEED_OFFSET, sr)
        corpus = [synth_voice(p, duration_s, j) for p in background for j in range(enroll_per_speaker)]
        models = train_voice_models(corpus, settings.frontend, speaker_cfg)
        instrument = SpeakerInstrument(models, settings.frontend, settings.speaker.min_voiced_s)

    def enroll_one(i: int) -> list[Template]:
        return [
            Template(identity=f"speaker-{i}", modality="voice", session_id=f"s{j % 3}",
                     body=IVector(w=instrument.ivector(buf).tolist(), source_sample=f"synthetic:{i}:{j}"))
            for j, buf in enumerate(enroll_sets[i])
        ]

    templates = parallel_map(enroll_one, list(range(n_speakers)), workers, "VR templates", quiet)
    probe_keys = [(i, k) for i in range(n_speakers) for k in range(probes_per_speaker)]
    probe_vectors = parallel_map(
        lambda key: instrument.ivector(synth_voice(profiles[key[0]], duration_s, 10_000 + key[1])),
        probe_keys, workers, "VR probes", quiet,
    )
    threshold = settings.thresholds.vr
    return [
        Trial(claimed, owner, k, instrument.score_ivector(f"speaker-{claimed}", templates[claimed], w, threshold))
        for (owner, k), w in zip(probe_keys, probe_vectors)
        for claimed in range(n_speakers)
    ]


def fr_trials(
    settings: Settings,
    n_identities: int = 10,
    seed: int = 0,
    probes_per_identity: int = 10,
    enroll_seconds: float = 5.0,
    fps: float = 4.0,
    workers: int = 1,
    quiet: bool = False,
) -> list[Trial]:
    profiles = face_population(n_identities, seed)
    instrument = FaceInstrument(get_embedding_extractor(settings.face.extractor), settings.face.frame_stride,
                                settings.face.accept_fraction, min_duration_s=enroll_seconds)
    seeds = trial_seeds(seed, n_identities)

    def enroll_one(i: int) -> list[Template]:
        video = synth_face_video(profiles[i], enroll_seconds, fps, seeds[i])
        return [Template(identity=f"face-{i}", modality="face", session_id="s1", body=emb)
                for emb in embed_frames(video.frames, video.fps, instrument.extractor, instrument.stride, enroll_seconds)]

    templates = parallel_map(enroll_one, list(range(n_identities)), workers, "FR enrollment", quiet)
    threshold = settings.thresholds.fr
    trials = []
    for owner in tqdm(range(n_identities), desc="FR probes", disable=quiet, leave=False):
        for k in range(probes_per_identity):
            frame = synth_face(profiles[owner], 1_000_000 + k)
            for claimed in range(n_identities):
                outcome = instrument.verify(f"face-{claimed}", templates[claimed], [frame], threshold)
                trials.append(Trial(claimed, owner, k, outcome))
    return trials


def kd_trials(
    settings: Settings,
    n_typists: int = 20,
    seed: int = 0,
    enroll_keystrokes: int = 750,
    probe_keystrokes: int = 150,
    probes_per_typist: int = 5,
    quiet: bool = False,
) -> list[Trial]:
    cfg = settings.keystroke
    profiles = typist_population(n_typists, seed)
    models = [typing_model_from_features([extract_features(synth_typing(p, enroll_keystrokes, 1))], cfg.std_floor_ms)
              for p in profiles]
    threshold = settings.thresholds.kd
    trials = []
    for owner in tqdm(range(n_typists), desc="KD probes", disable=quiet, leave=False):
        for k in range(probes_per_typist):
            features = extract_features(synth_typing(profiles[owner], probe_keystrokes, 100 + k))
            for claimed in range(n_typists):
                outcome = score_typing(models[claimed], features, threshold, f"typist-{claimed}",
                                       cfg.probe_min_keystrokes, cfg.min_entry_count)
                trials.append(Trial(claimed, owner, k, outcome))
    return trials


# ============ Anti-Spoofing ============

def _face_pad_corpus(n_bona_fide: int, n_attack: int, seed: int, offset: int) -> tuple[list, list[str], list[Optional[str]]]:
    profiles = face_population(max(10, n_bona_fide // 5), seed)
    frames, labels, kinds = [], [], []
    for i in range(n_bona_fide):
        frames.append(synth_face(profiles[i % len(profiles)], offset + i))
        labels.append("bona_fide")
        kinds.append(None)
    for i in range(n_attack):
        kind = "print" if i % 2 == 0 else "replay"
        source = synth_face(profiles[i % len(profiles)], offset + 500_000 + i)
        frames.append(simulate_recapture_face(source, kind, seed=offset + i))
        labels.append("attack")
        kinds.append(kind)
    return frames, labels, kinds


def train_face_pad(settings: Settings, seed: int = 0, n_per_class: int = 200, manifest: Optional[str | Path] = None, quiet: bool = False):
    cfg = settings.face_pad
    if manifest:
        corpus = load_pad_manifest(manifest)
        frames, labels = [c.image for c in corpus], [c.label for c in corpus]
    else:
        frames, labels, _ = _face_pad_corpus(n_per_class, n_per_class, seed, offset=0)
    features = np.stack(parallel_map(lambda f: frame_iqms(f, cfg.reference_sigma), frames, 1, "IQMs", quiet))
    model, _ = train_pad_classifier(features, labels, cfg.epochs, cfg.learning_rate, cfg.seed, cfg.l2, cfg.min_per_class)
    return model


def evaluate_fra(settings: Settings, seed: int = 0, n_train: int = 200, n_test: int = 100, quiet: bool = False) -> EvaluationReport:
    cfg = settings.face_pad
    model = train_face_pad(settings, seed, n_train, quiet=quiet)
    frames, labels, kinds = _face_pad_corpus(n_test, n_test, seed + 1, offset=2_000_000)
    outcomes = [classify_face_pad(model, [f], cfg.reference_sigma, cfg.aggregation)
                for f in tqdm(frames, desc="FRA test", disable=quiet, leave=False)]
    attack = [o for o, lab in zip(outcomes, labels) if lab == "attack"]
    bona_fide = [o for o, lab in zip(outcomes, labels) if lab == "bona_fide"]
    report = report_from_scores("fra", [o.score for o in bona_fide], [o.score for o in attack], seed,
                                {"n_train_per_class": n_train, "n_test_per_class": n_test})
    rates = compute_acer([o.decision for o in attack], [o.decision for o in bona_fide])
    per_kind = {}
    for kind in ("print", "replay"):
        decisions = [o.decision for o, k in zip(outcomes, kinds) if k == kind]
        if decisions:
            per_kind[kind] = float(np.mean([d == "bona_fide" for d in decisions]))
    return report.model_copy(update={"apcer": rates.apcer, "bpcer": rates.bpcer, "acer": rates.acer,
                                     "apcer_per_kind": per_kind})


def train_voice_pad(settings: Settings, corpus: Sequence[AudioBuffer]):
    cfg = settings.voice_pad
    return train_occ(corpus, cfg.components, cfg.iters, cfg.seed, settings.frontend, cfg.threshold_percentile)


def evaluate_vra(
    settings: Settings,
    seed: int = 0,
    n_train: int = 100,
    n_test: int = 50,
    n_speakers: int = 10,
    duration_s: float = 3.0,
    quiet: bool = False,
) -> EvaluationReport:
    profiles = speaker_population(n_speakers, seed, settings.frontend.sample_rate)
    train = [synth_voice(profiles[i % n_speakers], duration_s, i)
             for i in tqdm(range(n_train), desc="VRA training audio", disable=quiet, leave=False)]
    model = train_voice_pad(settings, train)
    bona_fide = [score_voice_pad(model, synth_voice(profiles[i % n_speakers], duration_s, 50_000 + i), settings.frontend)
                 for i in range(n_test)]
    attack = [score_voice_pad(model, simulate_replay_voice(synth_voice(profiles[i % n_speakers], duration_s, 90_000 + i), seed=i),
                              settings.frontend)
              for i in range(n_test)]
    report = report_from_scores("vra", [o.score for o in bona_fide], [o.score for o in attack], seed,
                                {"n_train": n_train, "n_test_per_class": n_test, "components": settings.voice_pad.components})
    rates = compute_acer([o.decision for o in attack], [o.decision for o in bona_fide])
    return report.model_copy(update={"apcer": rates.apcer, "bpcer": rates.bpcer, "acer": rates.acer,
                                     "apcer_per_kind": {"replay": rates.apcer}})


# ============ Fusion ============

def evaluate_fusion(settings: Settings, n_identities: int = 10, seed: int = 0, probes: int = 5, quiet: bool = False) -> EvaluationReport:
    """Score every (claim, probe) through VR, FR and KD, then fuse the three."""
    per_instrument = {
        "VR": vr_trials(settings, n_identities, seed, probes_per_speaker=probes, quiet=quiet),
        "FR": fr_trials(settings, n_identities, seed, probes_per_identity=probes, quiet=quiet),
        "KD": kd_trials(settings, n_identities, seed, probes_per_typist=probes, quiet=quiet),
    }
    indexed = {name: {(t.claimed, t.owner, t.probe): t for t in trials} for name, trials in per_instrument.items()}
    genuine, impostor = [], []
    for key in sorted(indexed["VR"]):
        results = [InstrumentResult.verification(indexed[name][key].outcome, sample_ref=f"{name}:{key}")
                   for name in ("VR", "FR", "KD") if key in indexed[name]]
        fused, _ = fuse(results, settings.fusion)
        (genuine if key[0] == key[1] else impostor).append(fused)
    report = report_from_scores("fusion", genuine, impostor, seed, {"identities": n_identities, "probes": probes})
    singles = {name: sweep_thresholds(*split_scores(trials))[0].eer for name, trials in per_instrument.items()}
    return report.model_copy(update={"single_instrument_eer": singles})


# ============ Entry Points ============

def evaluate(
    instrument: EvalInstrument,
    settings: Settings,
    speakers: Optional[int] = None,
    seed: int = 0,
    quiet: bool = False,
    **options: Any,
) -> EvaluationReport:
    """Run the synthetic evaluation for one instrument."""
    logger.info(f"🔬 Evaluating {instrument.upper()} (seed {seed})")
    if instrument == "vr":
        n = speakers or 10
        return report_from_scores("vr", *split_scores(vr_trials(settings, n, seed, quiet=quiet, **options)), seed,
                                  {"speakers": n, **options})
    if instrument == "fr":
        n = speakers or 10
        return report_from_scores("fr", *split_scores(fr_trials(settings, n, seed, quiet=quiet, **options)), seed,
                                  {"identities": n, **options})
    if instrument == "kd":
        n = speakers or 20
        return report_from_scores("kd", *split_scores(kd_trials(settings, n, seed, quiet=quiet, **options)), seed,
                                  {"typists": n, **options})
    if instrument == "fra":
        return evaluate_fra(settings, seed, quiet=quiet, **options)
    if instrument == "vra":
        return evaluate_vra(settings, seed, quiet=quiet, **options)
    if instrument == "fusion":
        return evaluate_fusion(settings, speakers or 10, seed, quiet=quiet, **options)
    raise MalformedSample(f"unknown instrument {instrument!r}")


def calibrate(
    service,
    instrument: Literal["vr", "fr", "kd"],
    target: CalibrationTarget,
    value: Optional[float] = None,
    speakers: Optional[int] = None,
    seed: int = 0,
    quiet: bool = False,
) -> float:
    """
    Calibrate a verification threshold on synthetic trials and persist it.

    The trial population is drawn with `seed + CALIBRATION_SEED_OFFSET` so it
    never coincides with the one `train_models` used for the same seed.
    """
    settings = service.settings
    seed = seed + CALIBRATION_SEED_OFFSET
    if instrument == "vr":
        trials = vr_trials(settings, speakers or 10, seed, instrument=service.verifier("voice"), quiet=quiet)
    elif instrument == "fr":
        trials = fr_trials(settings, speakers or 10, seed, quiet=quiet)
    elif instrument == "kd":
        trials = kd_trials(settings, speakers or 20, seed, quiet=quiet)
    else:
        raise MalformedSample(f"no threshold to calibrate for {instrument!r}")
    threshold = calibrate_threshold(*split_scores(trials), target, value)
    native = -threshold if instrument == "kd" else threshold
    service.save_threshold(instrument, native)
    return native


def train_models(
    service,
    seed: int = 0,
    speakers: int = 10,
    utterances_per_speaker: int = 5,
    duration_s: float = 5.0,
    ivector_dim: Optional[int] = None,
    wav_dir: Optional[str | Path] = None,
    manifest: Optional[str | Path] = None,
    quiet: bool = False,
) -> dict[str, dict]:
    """Train UBM, total variability, the OCC and the face PAD classifier; install them in the service."""
    settings = service.settings
    if wav_dir:
        paths = sorted(Path(wav_dir).glob("*.wav"))
        if not paths:
            raise MalformedSample(f"no .wav files in {wav_dir}")
        corpus = [read_wav(p.read_bytes(), settings.frontend.sample_rate) for p in paths]
    else:
        profiles = speaker_population(speakers, seed, settings.frontend.sample_rate)
        corpus = [synth_voice(p, duration_s, j) for p in profiles for j in range(utterances_per_speaker)]
    logger.info(f"Training voice models on {len(corpus)} utterances")
    voice = train_voice_models(corpus, settings.frontend, settings.speaker, ivector_dim)
    occ = train_voice_pad(settings, corpus)
    face_pad = train_face_pad(settings, seed, manifest=manifest, quiet=quiet)
    documents = {**voice.documents(), "occ": occ.to_dict(), "face_pad": face_pad.to_dict()}
    service.install_models(documents)
    return documents
