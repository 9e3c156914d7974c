"""Command-line entry point wiring every stage of the toolkit.

Subcommands: version, synth-corpus, build-dataset, decode, extract-landmarks,
train, evaluate, predict, live.  Global options resolve as flags > config
file > built-in defaults; ``LIPREAD_DATA_ROOT`` is the only environment
variable, and it only seeds the default data root.

Failures print one machine-parsable line to stderr
(``lipread: error: <ErrorClass>: <message>``) and exit with the error's
class-specific code; usage mistakes exit 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import CHECKPOINT_FORMAT_VERSION, LANDMARK_CACHE_FORMAT_VERSION, MANIFEST_FORMAT_VERSION, TOOL_ID
from .corpus import build_dataset
from .detectors import get_face_detector, get_landmark_detector
from .errors import LipreadError, UsageError
from .evaluation import compare_methods, evaluate
from .frames import decode_clip, standardize_frames, write_frame_dir
from .landmarks import clip_to_tensor, extract_landmarks, save_landmark_cache
from .manifest import ClipManifest
from .models import ModelSpec, build_model, load_model, save_model
from .pipelines import _safe_name, make_pipeline
from .realtime import (
    SocketRobotClient,
    WindowConfig,
    default_bindings,
    load_bindings,
    make_source,
    mock_robot,
    run_live,
    write_event_log,
)
from .synth import generate_synthetic_corpus
from .training import SplitConfig, TrainConfig, emit_curves, split_manifest, train
from .vocab import DEFAULT_WORDS, WordVocabulary

PROG = "lipread"
DATA_ROOT_ENV = "LIPREAD_DATA_ROOT"
METHOD_FLAGS = {"indirect": "indirect_cnn", "cnn": "direct_cnn", "lstm": "direct_lstm"}
SPLIT_FLAGS = {"two": "two_way", "three": "three_way"}

log = logging.getLogger(PROG)


@dataclass(frozen=True)
class GlobalConfig:
    """Resolved global options shared by every subcommand."""

    data_root: Path
    model_root: Path
    fps: float
    log_level: str
    seed: int | None = None


def _resolve_globals(args) -> GlobalConfig:
    data_root = Path(args.data_root)
    model_root = Path(args.model_root) if args.model_root else data_root / "models"
    return GlobalConfig(
        data_root=data_root,
        model_root=model_root,
        fps=args.fps,
        log_level=args.log_level,
        seed=getattr(args, "seed", None),
    )


def _load_config_defaults(argv) -> dict:
    """Pre-scan for --config and return its JSON contents as flag defaults."""
    scout = argparse.ArgumentParser(add_help=False)
    scout.add_argument("--config")
    found, _ = scout.parse_known_args(argv)
    if not found.config:
        return {}
    path = Path(found.config)
    try:
        loaded = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    if "seed" in loaded:
        raise UsageError("seed cannot come from the config file; pass --seed")
    allowed = {
        "data_root", "model_root", "fps", "log_level", "cache", "detector",
        "epochs", "batch_size", "lr", "optimizer", "patience", "backbone",
        "window", "stride", "threshold", "cooldown", "robot",
    }
    unknown = sorted(set(loaded) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return loaded


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Visual word recognition: corpus, training, evaluation, live decoding.",
    )
    parser.add_argument("--config", help="JSON file with default values for optional flags")
    parser.add_argument(
        "--data-root",
        default=os.environ.get(DATA_ROOT_ENV, "."),
        help=f"base directory for corpora, caches and models (env {DATA_ROOT_ENV})",
    )
    parser.add_argument("--model-root", default=None, help="where trained models live (default DATA_ROOT/models)")
    parser.add_argument("--fps", type=float, default=20.0, help="default frame rate when a source does not declare one")
    parser.add_argument(
        "--log-level",
        default="info",
        choices=("debug", "info", "warning", "error"),
        help="logging verbosity",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    sub.add_parser("version", help="print tool and file-format versions")

    p = sub.add_parser("synth-corpus", help="render a deterministic synthetic word-clip corpus")
    p.add_argument("--classes", type=int, default=7, help="number of vocabulary words to use (1-7)")
    p.add_argument("--per-class", type=int, required=True, help="clips to render per word")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--output", default=None, help="corpus directory (default DATA_ROOT/corpus)")

    p = sub.add_parser("build-dataset", help="segment, face-crop and catalog raw recordings")
    p.add_argument("--input", required=True, help="directory of <word>/<recording> videos")
    p.add_argument("--output", required=True, help="destination for cropped clips + manifest")
    p.add_argument("--words", default=None, help="file with one expected word per line")
    p.add_argument("--fps", type=float, default=None, help="frame rate for undeclared sources")
    p.add_argument("--crop", type=int, default=300, help="face crop side in pixels (fixed at 300)")
    p.add_argument("--reps", type=int, default=1, help="words pronounced per recording")
    p.add_argument("--gap", type=float, default=1.0, help="minimum silence between words, seconds")
    p.add_argument("--face-detector", default="synthetic", help="face detector registry name")

    p = sub.add_parser("decode", help="re-materialize clips as standardized 20-frame directories")
    p.add_argument("--manifest", required=True, help="manifest file")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("extract-landmarks", help="write per-clip landmark cache files")
    p.add_argument("--manifest", required=True, help="manifest file")
    p.add_argument("--out", required=True, help="cache directory")
    p.add_argument("--detector", default="synthetic", help="landmark detector registry name")

    p = sub.add_parser("train", help="split a manifest, train one method, save the checkpoint")
    p.add_argument("--method", required=True, choices=sorted(METHOD_FLAGS), help="classifier family")
    p.add_argument("--manifest", required=True, help="manifest file")
    p.add_argument("--split", default="two", choices=sorted(SPLIT_FLAGS), help="two: train/test, three: train/val/test")
    p.add_argument("--seed", type=int, required=True, help="seed for split, init and batching (mandatory)")
    p.add_argument("--out", default=None, help="checkpoint directory (default MODEL_ROOT/METHOD)")
    p.add_argument("--backbone", default=None, help="indirect backbone: mobile, vgg or resnet")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--patience", type=int, default=5, help="early-stopping patience in epochs")
    p.add_argument("--by", default="clip", choices=("clip", "participant"), help="split granularity")
    p.add_argument("--no-stratify", action="store_true", help="split without per-class balancing")
    p.add_argument("--cache", default=None, help="feature cache directory (default DATA_ROOT/cache)")
    p.add_argument("--detector", default="synthetic", help="landmark detector for the indirect method")

    p = sub.add_parser("evaluate", help="score checkpoints on a manifest split")
    p.add_argument("--model-dir", required=True, action="append", help="checkpoint directory (repeatable)")
    p.add_argument("--manifest", required=True, help="manifest file with split assignments")
    p.add_argument("--split", default="test", help="which split to score")
    p.add_argument("--with-train", action="store_true", help="also score the train split for the comparison table")
    p.add_argument("--cache", default=None, help="feature cache directory (default DATA_ROOT/cache)")
    p.add_argument("--detector", default="synthetic", help="landmark detector for the indirect method")

    p = sub.add_parser("predict", help="classify one clip with a trained model")
    p.add_argument("--model-dir", required=True, help="checkpoint directory")
    p.add_argument("--clip", required=True, help="clip path (video file or frame directory)")
    p.add_argument("--detector", default="synthetic", help="landmark detector for the indirect method")

    p = sub.add_parser("live", help="sliding-window recognition over a frame source")
    p.add_argument("--model-dir", required=True, help="checkpoint directory")
    p.add_argument("--source", required=True, help="camera:N, file:PATH, or synth:word,word")
    p.add_argument("--bindings", default=None, help="word-to-action bindings JSON (default built in)")
    p.add_argument("--log", dest="event_log", default=None, help="write dispatch events as JSON lines")
    p.add_argument("--robot", default="mock", help="mock, mock-offline, or socket:HOST:PORT")
    p.add_argument("--window", type=int, default=20, help="frames per inference window")
    p.add_argument("--stride", type=int, default=5, help="frames between inferences")
    p.add_argument("--threshold", type=float, default=0.7, help="dispatch confidence threshold")
    p.add_argument("--cooldown", type=float, default=1.0, help="per-word re-dispatch spacing, stream seconds")
    p.add_argument("--max-windows", type=int, default=None, help="stop after this many evaluated windows")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic sources")
    p.add_argument("--detector", default="synthetic", help="landmark detector for the indirect method")
    return parser


# ---------------------------------------------------------------- handlers


def _cmd_version(args, cfg: GlobalConfig) -> int:
    print(TOOL_ID)
    print(f"manifest-format {MANIFEST_FORMAT_VERSION}")
    print(f"checkpoint-format {CHECKPOINT_FORMAT_VERSION}")
    print(f"landmark-cache-format {LANDMARK_CACHE_FORMAT_VERSION}")
    return 0


def _cmd_synth_corpus(args, cfg: GlobalConfig) -> int:
    if not 1 <= args.classes <= len(DEFAULT_WORDS):
        raise UsageError(f"--classes must be in 1..{len(DEFAULT_WORDS)}")
    if args.per_class < 1:
        raise UsageError("--per-class must be >= 1")
    words = tuple(sorted(DEFAULT_WORDS))[: args.classes]
    out = Path(args.output) if args.output else cfg.data_root / "corpus"
    manifest = generate_synthetic_corpus(WordVocabulary(words), args.per_class, args.seed, out)
    print(f"wrote {len(manifest.records)} clips to {out}")
    print(f"manifest {out / 'manifest.jsonl'}")
    return 0


def _cmd_build_dataset(args, cfg: GlobalConfig) -> int:
    if args.crop != 300:
        raise UsageError("only --crop 300 is supported; the pipeline is fixed at 300x300")
    input_root = Path(args.input)
    if args.words:
        try:
            listed = [w.strip() for w in Path(args.words).read_text().splitlines() if w.strip()]
        except OSError as exc:
            raise UsageError(f"cannot read words file: {exc}") from exc
        found = sorted(d.name for d in input_root.iterdir() if d.is_dir()) if input_root.is_dir() else []
        if sorted(set(listed)) != found:
            raise UsageError(
                f"class directories {found} do not match words file {sorted(set(listed))}"
            )
    manifest = build_dataset(
        input_root,
        Path(args.output),
        reps=args.reps,
        gap=args.gap,
        face_detector=get_face_detector(args.face_detector),
        fps_default=args.fps if args.fps else cfg.fps,
    )
    print(f"wrote {len(manifest.records)} clips to {args.output}")
    for warning in manifest.warnings:
        print(f"warning: {warning}")
    return 0


def _cmd_decode(args, cfg: GlobalConfig) -> int:
    manifest = ClipManifest.load(args.manifest)
    out = Path(args.out)
    for record in manifest.records:
        seq = standardize_frames(decode_clip(manifest.resolve_path(record), record.clip_id))
        write_frame_dir(seq, out / _safe_name(record.clip_id))
    print(f"decoded {len(manifest.records)} clips to {out}")
    return 0


def _cmd_extract_landmarks(args, cfg: GlobalConfig) -> int:
    manifest = ClipManifest.load(args.manifest)
    detector = get_landmark_detector(args.detector)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for record in manifest.records:
        seq = extract_landmarks(decode_clip(manifest.resolve_path(record), record.clip_id), detector)
        save_landmark_cache(seq, out / f"{_safe_name(record.clip_id)}.lmk")
    print(f"extracted landmarks for {len(manifest.records)} clips to {out}")
    return 0


def _make_pipeline(method: str, args, cfg: GlobalConfig):
    cache = Path(args.cache) if args.cache else cfg.data_root / "cache"
    detector = get_landmark_detector(args.detector) if method == "indirect_cnn" else None
    return make_pipeline(method, detector=detector, cache_dir=cache)


def _cmd_train(args, cfg: GlobalConfig) -> int:
    method = METHOD_FLAGS[args.method]
    if args.backbone and method != "indirect_cnn":
        raise UsageError("--backbone applies to the indirect method only")
    backbone = (args.backbone or "mobile") if method == "indirect_cnn" else None

    manifest = ClipManifest.load(args.manifest)
    split_cfg = SplitConfig(
        mode=SPLIT_FLAGS[args.split],
        seed=args.seed,
        stratified=not args.no_stratify,
        by=args.by,
    )
    manifest = split_manifest(manifest, split_cfg)

    spec = ModelSpec(method=method, num_classes=len(manifest.vocab), backbone=backbone)
    model = build_model(spec, manifest.vocab, seed=args.seed)
    pipeline = _make_pipeline(method, args, cfg)
    train_cfg = TrainConfig(
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        early_stopping_patience=args.patience,
    )
    log.info("training %s on %d clips", method, len(manifest.records))
    model, history = train(model, manifest, train_cfg, pipeline)

    out = Path(args.out) if args.out else cfg.model_root / args.method
    save_model(model, out)
    # the split manifest lives next to the checkpoint, away from the corpus,
    # so record paths must become absolute to stay resolvable
    portable = manifest.with_records(
        replace(r, path=str(manifest.resolve_path(r).resolve())) for r in manifest.records
    )
    portable.save(out / "manifest.jsonl")
    emit_curves(history, out)
    best = history.best()
    print(
        f"trained {method}: {len(history.records)} epochs, stop={history.stop_reason}, "
        f"best epoch {history.best_epoch} "
        f"(train acc {best.train_acc:.3f}, {history.monitor_split} acc {best.val_acc:.3f})"
    )
    print(f"checkpoint {out}")
    return 0


def _cmd_evaluate(args, cfg: GlobalConfig) -> int:
    manifest = ClipManifest.load(args.manifest)
    reports = []
    for model_dir in args.model_dir:
        model = load_model(model_dir)
        pipeline = _make_pipeline(model.spec.method, args, cfg)
        cm, report = evaluate(model, manifest, pipeline, split=args.split)
        reports.append(report)
        if args.with_train:
            _, train_report = evaluate(model, manifest, pipeline, split="train")
            reports.append(train_report)
        print(f"== {model.spec.method} ({model_dir}) ==")
        print(cm.to_text())
        print(report.to_text())
    if len(args.model_dir) > 1:
        print(compare_methods(reports))
    return 0


def _cmd_predict(args, cfg: GlobalConfig) -> int:
    model = load_model(args.model_dir)
    clip = decode_clip(args.clip)
    if model.spec.method == "indirect_cnn":
        features = clip_to_tensor(clip, get_landmark_detector(args.detector))
    else:
        features = clip
    pred = model.predict_clip(features)
    print(f"{pred.label} {pred.confidence:.4f}")
    return 0


def _make_robot(spec: str):
    if spec == "mock":
        return mock_robot()
    if spec == "mock-offline":
        return mock_robot(available=False)
    if spec.startswith("socket:"):
        _, _, rest = spec.partition(":")
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise UsageError("socket robot needs socket:HOST:PORT")
        return SocketRobotClient(host, int(port))
    raise UsageError(f"unknown robot {spec!r}; use mock, mock-offline, or socket:HOST:PORT")


def _cmd_live(args, cfg: GlobalConfig) -> int:
    model = load_model(args.model_dir)
    window_cfg = WindowConfig(
        window=args.window,
        stride=args.stride,
        confidence_threshold=args.threshold,
        cooldown=args.cooldown,
    )
    bindings = (
        load_bindings(args.bindings, model.vocab)
        if args.bindings
        else default_bindings(model.vocab)
    )
    source = make_source(args.source, seed=args.seed, fps_default=cfg.fps)
    robot = _make_robot(args.robot)
    landmark_detector = (
        get_landmark_detector(args.detector) if model.spec.method == "indirect_cnn" else None
    )
    live_log = run_live(
        source,
        model,
        window_cfg,
        bindings,
        robot,
        landmark_detector=landmark_detector,
        max_windows=args.max_windows,
    )
    for event in live_log.events:
        target = f" {event.object_label}" if event.object_label else ""
        status = "ok" if event.delivered else "undelivered"
        print(
            f"[{event.timestamp:8.2f}s] {event.word} ({event.confidence:.2f}) "
            f"-> {event.action}{target} [{status}]"
        )
    if args.event_log:
        write_event_log(live_log, args.event_log)
        print(f"event log {args.event_log}")
    print(
        f"{live_log.frames_seen} frames, {live_log.windows_evaluated} windows "
        f"({live_log.windows_per_second:.1f}/s), {live_log.windows_skipped} skipped, "
        f"{live_log.frames_dropped} dropped, {len(live_log.events)} dispatches"
    )
    return 0


_HANDLERS = {
    "version": _cmd_version,
    "synth-corpus": _cmd_synth_corpus,
    "build-dataset": _cmd_build_dataset,
    "decode": _cmd_decode,
    "extract-landmarks": _cmd_extract_landmarks,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "live": _cmd_live,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        defaults = _load_config_defaults(argv)
        if defaults:
            parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    except LipreadError as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # argparse --help (0) or usage error (2)
        return int(exc.code or 0)

    if not args.command:
        parser.print_help()
        return 2

    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    cfg = _resolve_globals(args)
    try:
        return _HANDLERS[args.command](args, cfg)
    except LipreadError as exc:
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"{PROG}: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print(f"{PROG}: interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
