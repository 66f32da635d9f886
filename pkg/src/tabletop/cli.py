"""Command-line entry point: propose, detect, acquire, synth, eval, bench.

Results go to stdout (or --out); structured JSONL logs go to stderr.
Exit codes: 0 success, 1 runtime error (single-line JSON on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, acquisition, suite
from .client import RemoteClassifier
from .cloud import load_pcd, save_pcd
from .config import CONFIG_SCHEMA_VERSION, PipelineConfig, load_config
from .errors import ConfigError, TabletopError
from .evaluation import bench as run_bench
from .evaluation import evaluate
from .image import load_ppm, save_ppm
from .proposal import propose_regions
from .recognition import detect, load_model, save_model, train_baseline
from .synth import format_scene, parse_scene, validate_spec

log = logging.getLogger("tabletop")


class _JsonlHandler(logging.Handler):
    def __init__(self, timestamps: bool):
        super().__init__()
        self.timestamps = timestamps

    def emit(self, record):
        entry = {"level": record.levelname.lower(), "msg": record.getMessage()}
        if self.timestamps:
            entry["ts"] = round(time.time(), 3)
        print(json.dumps(entry, sort_keys=True), file=sys.stderr)


def _setup_logging(no_timestamps: bool) -> None:
    log.handlers[:] = [_JsonlHandler(timestamps=not no_timestamps)]
    log.setLevel(logging.INFO)


_OVERRIDE_FLAGS = [
    # (flag, config key, type)
    ("--leaf", "leaf", float),
    ("--alpha", "alpha", float),
    ("--ransac-dist", "ransac.dist", float),
    ("--ransac-iters", "ransac.iters", int),
    ("--ransac-min-frac", "ransac.min_frac", float),
    ("--cluster-tol", "cluster.tol", float),
    ("--cluster-min", "cluster.min", int),
    ("--cluster-max", "cluster.max", int),
    ("--border-fraction", "border_fraction", float),
    ("--seed", "seed", int),
    ("--classifier", "classifier", str),
    ("--model", "classifier.model", str),
]


def _add_config_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key=value config file")
    for flag, _, typ in _OVERRIDE_FLAGS:
        sub.add_argument(flag, type=typ, default=None)


def _build_config(args, defaults: PipelineConfig | None = None) -> PipelineConfig:
    overrides = {}
    for flag, key, _ in _OVERRIDE_FLAGS:
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides=overrides, defaults=defaults)


def _make_classifier(config: PipelineConfig):
    selector = config.classifier
    if selector is None:
        raise ConfigError("no classifier configured (use --classifier)")
    if selector == "baseline":
        if not config.classifier_model:
            raise ConfigError("baseline classifier needs --model")
        return load_model(config.classifier_model)
    if selector.startswith("tcp:"):
        host, _, port = selector[4:].rpartition(":")
        if not host:
            raise ConfigError(f"bad tcp endpoint {selector!r}")
        return RemoteClassifier(host, int(port),
                                input_size=config.classifier_input)
    raise ConfigError(f"unknown classifier selector {selector!r}")


def _out_stream(args):
    return open(args.out, "w") if getattr(args, "out", None) else sys.stdout


def _close(stream) -> None:
    if stream is not sys.stdout:
        stream.close()


# --- subcommands -----------------------------------------------------------

def _cmd_propose(args) -> int:
    config = _build_config(args)
    cloud = load_pcd(args.cloud)
    proposals = propose_regions(cloud, config.camera, config)
    stream = _out_stream(args)
    for prop in proposals:
        stream.write(json.dumps(prop.to_record(args.frame), sort_keys=True) + "\n")
    _close(stream)
    log.info("propose: %d proposals from %d points", len(proposals), len(cloud))
    return 0


def _cmd_detect(args) -> int:
    config = _build_config(args)
    cloud = load_pcd(args.cloud)
    image = load_ppm(args.image)
    classifier = _make_classifier(config)
    detections = detect(cloud, image, config.camera, config, classifier)
    stream = _out_stream(args)
    for det in detections:
        rec = det.proposal.to_record(args.frame)
        rec["label"] = det.label
        rec["scores"] = {k: round(v, 9) for k, v in det.scores.items()}
        stream.write(json.dumps(rec, sort_keys=True) + "\n")
    _close(stream)
    log.info("detect: %d detections", len(detections))
    return 0


def _dir_frames(frames_dir: Path):
    stems = sorted(p.stem for p in frames_dir.glob("*.pcd"))
    for stem in stems:
        yield load_pcd(frames_dir / f"{stem}.pcd"), \
            load_ppm(frames_dir / f"{stem}.ppm")


def _cmd_acquire(args) -> int:
    config = _build_config(args, defaults=suite.standard_config())
    labels = args.label if args.label else (suite.LABELS if args.interactive else [])
    if not labels:
        raise ConfigError("need --label (or --interactive for all classes)")
    session = acquisition.AcquisitionSession(
        labels=labels, target_count=args.count,
        border_fraction=config.border_fraction, root=Path(args.out))

    total = 0
    for label in labels:
        if args.interactive:
            input(f"Place object {label!r} in the scene and press Enter... ")
        if args.frames:
            frames = _dir_frames(Path(args.frames))
        else:
            frames = suite.acquisition_frames(label, args.count * 2 + 5)
        stats = acquisition.acquire_class(frames, label, session,
                                          config.camera, config)
        log.info("acquire %s: stored %d, skipped %d empty / %d ambiguous%s",
                 label, stats.stored, stats.skipped_empty,
                 stats.skipped_ambiguous,
                 " (stream ended early)" if stats.stream_ended else "")
        total += stats.stored
    print(json.dumps({"stored": total, "root": str(session.root)},
                     sort_keys=True))
    return 0


def _cmd_train_baseline(args) -> int:
    dataset = acquisition.load_dataset(args.dataset)
    model = train_baseline(dataset, temperature=args.temperature)
    save_model(model, args.out)
    log.info("trained baseline on %d patches, %d classes -> %s",
             len(dataset), len(model.labels), args.out)
    print(json.dumps({"classes": len(model.labels), "patches": len(dataset),
                      "model": args.out}, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    if args.spec:
        spec = parse_scene(Path(args.spec).read_text(), args.spec)
    else:
        spec = suite.make_scene(args.scene)
    validate_spec(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scene.cfg").write_text(format_scene(spec))
    from .synth import FrameSource
    source = FrameSource(spec)
    for i in range(args.frames):
        cloud, image, truth = source.frame(i)
        save_pcd(cloud, out / f"frame_{i:04d}.pcd")
        save_ppm(image, out / f"frame_{i:04d}.ppm")
        record = {"frame": i, "objects": [t.to_record() for t in truth]}
        (out / f"frame_{i:04d}.truth.json").write_text(
            json.dumps(record, sort_keys=True) + "\n")
    log.info("synth: wrote %d frames to %s", args.frames, out)
    return 0


def _parse_scene_subset(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _cmd_eval(args) -> int:
    if args.suite != "standard":
        raise ConfigError(f"unknown suite {args.suite!r}")
    config = _build_config(args, defaults=suite.standard_config())
    classifier = _make_classifier(config)
    scene_ids = (_parse_scene_subset(args.scenes) if args.scenes
                 else list(range(40)))

    accuracies = {}
    for sid in scene_ids:
        spec = suite.make_scene(sid)
        log_fh = None
        if args.log_dir:
            Path(args.log_dir).mkdir(parents=True, exist_ok=True)
            log_fh = open(Path(args.log_dir) / f"scene_{sid + 1:02d}.jsonl", "w")
        acc = evaluate(spec, args.frames, config, classifier, log_fh=log_fh)
        if log_fh:
            log_fh.close()
        accuracies[sid] = acc
        log.info("eval scene %d: accuracy %.4f", sid + 1, acc)

    overall = sum(accuracies.values()) / len(accuracies)
    stream = _out_stream(args)
    header = ["classifier"] + [f"scene_{sid + 1:02d}" for sid in scene_ids] \
        + ["overall"]
    row = [config.classifier] + [f"{accuracies[sid]:.4f}" for sid in scene_ids] \
        + [f"{overall:.4f}"]
    stream.write(",".join(header) + "\n")
    stream.write(",".join(row) + "\n")
    _close(stream)
    return 0


def _cmd_bench(args) -> int:
    config = _build_config(args)
    classifier = _make_classifier(config) if config.classifier else None
    spec = suite.make_bench_scene()
    report = run_bench(spec, args.frames, config, classifier)
    print(json.dumps(report.to_record(), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabletop",
        description="Tabletop object detection from RGB-D point clouds")
    parser.add_argument(
        "--version", action="version",
        version=f"tabletop {__version__} (config schema v{CONFIG_SCHEMA_VERSION})")
    parser.add_argument("--no-timestamps", action="store_true",
                        help="omit timestamps from stderr logs")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("propose", help="region proposals from a PCD cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(func=_cmd_propose)

    p = subs.add_parser("detect", help="proposals + classification")
    p.add_argument("--cloud", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(func=_cmd_detect)

    p = subs.add_parser("acquire", help="capture a labeled patch dataset")
    p.add_argument("--label", action="append",
                   help="class label (repeatable)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", help="directory of NNN.pcd/NNN.ppm frame pairs")
    p.add_argument("--interactive", action="store_true",
                   help="prompt between classes, default all suite labels")
    _add_config_args(p)
    p.set_defaults(func=_cmd_acquire)

    p = subs.add_parser("train-baseline",
                        help="fit the histogram baseline on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=0.05)
    p.set_defaults(func=_cmd_train_baseline)

    p = subs.add_parser("synth", help="generate synthetic frames")
    p.add_argument("--spec", help="scene spec file")
    p.add_argument("--scene", type=int, default=0,
                   help="standard suite scene index (when no --spec)")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = subs.add_parser("eval", help="score a classifier on synthetic scenes")
    p.add_argument("--suite", default="standard")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--scenes", help="subset like 0-4,31 (default all 40)")
    p.add_argument("--log-dir", help="write per-frame JSONL logs here")
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("bench", help="throughput benchmark")
    p.add_argument("--frames", type=int, default=100)
    _add_config_args(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.no_timestamps)
    try:
        return args.func(args)
    except TabletopError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IoFailure", "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
