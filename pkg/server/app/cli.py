"""
Command-line front door. Every subcommand goes through the same
BiometricService the HTTP routes use.

Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from .config import Settings
from .core.audio import write_wav
from .core.errors import BiometricError, MalformedSample
from .core.imaging import encode_video
from .core.logging_setup import configure_logging
from .evaluation.runner import calibrate, evaluate, train_models, write_report
from .evaluation.synthetic import (
    face_population,
    recapture_sequence,
    simulate_replay_voice,
    speaker_population,
    synth_face_video,
    synth_typing,
    synth_voice,
    typist_population,
)
from .instruments.keystroke import encode_key_stream
from .pipeline.orchestrator import BiometricService


logger = logging.getLogger(__name__)

MODALITIES = ("voice", "face", "keystroke")


def _emit(doc) -> None:
    if isinstance(doc, str):
        sys.stdout.write(doc if doc.endswith("\n") else doc + "\n")
    else:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise MalformedSample(f"cannot read {path}: {e}") from e


# ============ Commands ============

def cmd_enroll(service: BiometricService, args) -> int:
    identity_id = args.learner
    if identity_id is None:
        if not args.name:
            raise MalformedSample("enroll needs --learner or --name")
        identity_id = service.register(args.name).id
    status = None
    for path in args.files:
        session = Path(path).parent.name if args.session_from_parent else args.session
        status = service.submit_enrollment(identity_id, args.modality, _read(path), session)
    result = {"identity": identity_id, "status": status.model_dump(mode="json") if status else None}
    if args.finalize:
        result["templates"] = len(service.finalize_enrollment(identity_id, args.modality))
    _emit(result)
    return 0


def cmd_verify(service: BiometricService, args) -> int:
    outcome = service.verify(args.learner, args.modality, _read(args.file), args.activity, args.threshold)
    _emit(outcome.model_dump(mode="json"))
    return 0


def cmd_pad(service: BiometricService, args) -> int:
    outcome = service.pad_check(args.modality, _read(args.file), args.activity, args.learner)
    _emit(outcome.model_dump(mode="json"))
    return 0


def cmd_report(service: BiometricService, args) -> int:
    if args.show:
        text = service.report_json(args.activity)
    else:
        service.build_report(args.activity, args.learner)
        text = service.report_json(args.activity)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    _emit(text)
    return 0


def cmd_simulate(service: BiometricService, args) -> int:
    """Write synthetic samples for one member of a seeded population."""
    if not 0 <= args.identity < args.population:
        raise MalformedSample(f"identity {args.identity} is outside a population of {args.population}")
    if args.samples < 1 or args.sessions < 1:
        raise MalformedSample("--samples and --sessions must be >= 1")
    out = Path(args.out)
    settings = service.settings
    written = []
    for k in range(args.samples):
        session = f"s{k % args.sessions + 1}"
        target = out / session if args.sessions > 1 else out
        target.mkdir(parents=True, exist_ok=True)
        take = args.take + k
        if args.modality == "voice":
            profile = speaker_population(args.population, args.seed, settings.frontend.sample_rate)[args.identity]
            buf = synth_voice(profile, args.duration, take)
            if args.attack:
                buf = simulate_replay_voice(buf, seed=take)
            path = target / f"voice_{args.identity}_{take}.wav"
            path.write_bytes(write_wav(buf))
        elif args.modality == "face":
            profile = face_population(args.population, args.seed)[args.identity]
            video = synth_face_video(profile, args.duration, args.fps, take)
            if args.attack:
                video = recapture_sequence(video, args.attack, seed=take)
            path = target / f"face_{args.identity}_{take}.npz"
            path.write_bytes(encode_video(video))
        else:
            profile = typist_population(args.population, args.seed)[args.identity]
            path = target / f"keys_{args.identity}_{take}.jsonl"
            path.write_bytes(encode_key_stream(synth_typing(profile, args.keystrokes, take)))
        written.append({"path": str(path), "session_id": session})
    _emit({"modality": args.modality, "identity": args.identity, "attack": args.attack, "files": written})
    return 0


def cmd_evaluate(service: BiometricService, args) -> int:
    options = {}
    if args.instrument == "kd":
        options = {"enroll_keystrokes": args.enroll_keystrokes, "probe_keystrokes": args.probe_keystrokes}
    elif args.instrument in ("vr", "fr") and args.workers > 1:
        options = {"workers": args.workers}
    report = evaluate(args.instrument, service.settings, args.speakers, args.seed, quiet=args.quiet, **options)
    if args.out:
        write_report(report, args.out)
    _emit(report.model_dump(mode="json"))
    return 0


def cmd_calibrate(service: BiometricService, args) -> int:
    threshold = calibrate(service, args.instrument, args.target, args.value, args.speakers, args.seed, args.quiet)
    _emit({"instrument": args.instrument, "target": args.target, "value": args.value, "threshold": threshold})
    return 0


def cmd_train(service: BiometricService, args) -> int:
    documents = train_models(
        service, args.seed, args.speakers, args.utterances, args.duration, args.ivector_dim,
        wav_dir=args.wav_dir, manifest=args.pad_manifest, quiet=args.quiet,
    )
    _emit({"models": sorted(documents), "data_dir": str(service.store.root)})
    return 0


# ============ Parser ============

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biotrust", description="Multi-instrument biometric e-authentication.")
    parser.add_argument("--data-dir", help="data directory (overrides BIOTRUST_DATA_DIR)")
    parser.add_argument("--log-level", default=None, help="logging level, e.g. INFO or DEBUG")
    parser.add_argument("--quiet", action="store_true", help="hide progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="submit enrollment samples")
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--learner", help="existing learner id")
    who.add_argument("--name", help="register a new learner with this display name")
    p.add_argument("--modality", choices=MODALITIES, required=True)
    p.add_argument("--session", default="s1")
    p.add_argument("--session-from-parent", action="store_true", help="use each file's directory name as session id")
    p.add_argument("--finalize", action="store_true", help="build templates once the policy is met")
    p.add_argument("files", nargs="+")
    p.set_defaults(handler=cmd_enroll)

    p = sub.add_parser("verify", help="verify a probe against a claimed learner")
    p.add_argument("--learner", required=True)
    p.add_argument("--modality", choices=MODALITIES, required=True)
    p.add_argument("--activity")
    p.add_argument("--threshold", type=float)
    p.add_argument("file")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("pad", help="presentation attack check")
    p.add_argument("--modality", choices=("voice", "face"), required=True)
    p.add_argument("--activity")
    p.add_argument("--learner")
    p.add_argument("file")
    p.set_defaults(handler=cmd_pad)

    p = sub.add_parser("report", help="fuse an activity into a trust report")
    p.add_argument("--activity", required=True)
    p.add_argument("--learner")
    p.add_argument("--show", action="store_true", help="print the stored report without rebuilding it")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("simulate", help="write synthetic samples")
    p.add_argument("--modality", choices=MODALITIES, required=True)
    p.add_argument("--identity", type=int, default=0, help="index into the seeded population")
    p.add_argument("--population", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--take", type=int, default=0, help="first capture seed")
    p.add_argument("--duration", type=float, default=10.0, help="seconds of audio or video")
    p.add_argument("--fps", type=float, default=4.0)
    p.add_argument("--keystrokes", type=int, default=750)
    p.add_argument("--attack", choices=("print", "replay"))
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("evaluate", help="synthetic error-rate evaluation")
    p.add_argument("--instrument", choices=("vr", "fr", "kd", "fra", "vra", "fusion"), required=True)
    p.add_argument("--speakers", type=int, help="population size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--enroll-keystrokes", type=int, default=750)
    p.add_argument("--probe-keystrokes", type=int, default=150)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="directory for the JSON report and DET csv")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("calibrate", help="calibrate and persist a verification threshold")
    p.add_argument("--instrument", choices=("vr", "fr", "kd"), required=True)
    p.add_argument("--target", choices=("eer", "far_at", "frr_at"), default="eer")
    p.add_argument("--value", type=float)
    p.add_argument("--speakers", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("train", help="train UBM, total variability, OCC and face PAD models")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--utterances", type=int, default=5, help="synthetic utterances per speaker")
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--ivector-dim", type=int)
    p.add_argument("--wav-dir", help="directory of background WAV files")
    p.add_argument("--pad-manifest", help="JSON manifest of labeled PGM frames")
    p.set_defaults(handler=cmd_train)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"data_dir": args.data_dir} if args.data_dir else {}
    try:
        settings = Settings(**overrides)
    except ValidationError as e:
        sys.stderr.write(json.dumps({"error": "ConfigError", "detail": str(e)}) + "\n")
        return 2
    configure_logging(args.log_level or settings.log_level)
    try:
        return args.handler(BiometricService(settings), args)
    except BiometricError as e:
        logger.error(f"❌ {e.code}: {e.message}")
        sys.stderr.write(json.dumps(e.to_dict(), default=str) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
