"""Post-process per-frame detections: track, relabel, expand, fuse and score.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from typing import Dict, List, Optional

from . import __version__
from .adaptive_labeling import refine_video_with_journal
from .config import ConfigError, PipelineConfig, load_config
from .contextual_expander import expand_video
from .core import FrameSet
from .evaluation import evaluate
from .fusion import FusionConfigError, fuse_frame
from .harness import CorruptionSpec, ScenarioError, corrupt, generate, scenario_from_config
from .io import (
    ParseError,
    fmt_num,
    parse_detections,
    parse_ground_truth,
    serialize_detections,
    serialize_ground_truth,
)
from .pipeline import run_pipeline
from .tracker import run_video

log = logging.getLogger("detrefine")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="\n") as fh:
            yield fh


def _read_lines(path: str) -> List[str]:
    if path == "-":
        return sys.stdin.read().splitlines()
    with open(path) as fh:
        return fh.read().splitlines()


def _load_dets(path: str, strict: bool) -> Dict[int, FrameSet]:
    result = parse_detections(_read_lines(path), strict=strict)
    for err in result.errors:
        log.warning("%s: %s", path, err)
    return result.videos


def _load_gt(path: str, strict: bool):
    gts, errors = parse_ground_truth(_read_lines(path), strict=strict)
    for err in errors:
        log.warning("%s: %s", path, err)
    return gts


def _write_journal(path: Optional[str], lines: List[str]) -> None:
    if path:
        with _open_out(path) as fh:
            for line in lines:
                fh.write(line + "\n")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "top_k", None) is not None:
        if args.top_k < 1:
            raise ConfigError("--top-k must be >= 1")
        cfg.top_k = args.top_k
    return cfg


# ---------------------------------------------------------------------------
# sub-commands


def cmd_track(args) -> int:
    cfg = _config(args)
    videos = _load_dets(args.detections, args.strict)
    with _open_out(args.output) as out:
        for vid in sorted(videos):
            for t in run_video(videos[vid], cfg.tracker):
                for obs in t.history:
                    d = obs.detection
                    b = d.box
                    out.write(",".join((str(vid), str(obs.frame), str(t.id), fmt_num(b.left), fmt_num(b.top),
                                        fmt_num(b.width), fmt_num(b.height), str(d.label),
                                        fmt_num(d.confidence))) + "\n")
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    videos = _load_dets(args.detections, args.strict)
    refined, journal = {}, []
    for vid in sorted(videos):
        tracks = run_video(videos[vid], cfg.tracker)
        refined[vid], j = refine_video_with_journal(videos[vid], tracks, cfg.refine)
        journal.extend(j)
    with _open_out(args.output) as out:
        serialize_detections(refined, out)
    _write_journal(args.journal, [c.to_line() for c in journal])
    log.info("refine: %d journal entries", len(journal))
    return EXIT_OK


def cmd_expand(args) -> int:
    cfg = _config(args)
    videos = _load_dets(args.detections, args.strict)
    out_videos = {vid: expand_video(videos[vid], cfg.expander, cfg.top_k) for vid in videos}
    with _open_out(args.output) as out:
        serialize_detections(out_videos, out)
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _config(args)
    if args.weights:
        cfg.fusion.source_weights = [float(w) for w in args.weights.split(",")]
    sources = [_load_dets(p, args.strict) for p in args.detections]
    cfg.fusion.weights_for(len(sources))
    fused: Dict[int, FrameSet] = {}
    for vid in sorted({v for s in sources for v in s}):
        frames = sorted({f for s in sources if vid in s for f in s[vid].frames})
        fs = FrameSet(vid)
        for f in frames:
            per_source = [s[vid].frames.get(f, []) if vid in s else [] for s in sources]
            fs.frames[f] = fuse_frame(per_source, cfg.fusion)
        fused[vid] = fs
    with _open_out(args.output) as out:
        serialize_detections(fused, out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    videos = _load_dets(args.detections, args.strict)
    gts = _load_gt(args.ground_truth, args.strict)
    report = evaluate(videos, gts, top_k=cfg.top_k)
    for vid in sorted(report.unknown_videos):
        log.warning("ground truth references video %d with no predictions", vid)
    print(report.table())
    _write_journal(args.records, report.records())
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    scen = dict(cfg.scenario)
    if args.seed is not None:
        scen["seed"] = args.seed
    sc = scenario_from_config(scen)
    fs, gts, identities = generate(sc)
    corr = dict(cfg.corruption)
    if args.seed is not None:
        corr.setdefault("seed", args.seed)
    journal = []
    if corr:
        fs, journal = corrupt(fs, CorruptionSpec(**corr), identities)
    with _open_out(args.output) as out:
        serialize_detections(fs, out)
    if args.gt:
        with _open_out(args.gt) as out:
            serialize_ground_truth(gts, out)
    _write_journal(args.journal, [r.to_line() for r in journal])
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if args.disable_al:
        cfg.stages.adaptive_labeling = False
    if args.disable_ce:
        cfg.stages.contextual_expander = False
    videos = _load_dets(args.detections, args.strict)
    gts = _load_gt(args.gt, args.strict) if args.gt else None
    result = run_pipeline(cfg, videos, gts, jobs=args.jobs)
    with _open_out(args.output) as out:
        serialize_detections(result.videos, out)
    _write_journal(args.journal, [c.to_line() for c in result.journal])
    for stage, n in result.counts.items():
        log.info("%s: %d detections", stage, n)
    if result.report is not None:
        print(result.report.table(), file=sys.stderr if args.output in (None, "-") else sys.stdout)
        _write_journal(args.records, result.report.records())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config (default: $DETREFINE_CONFIG or built-in defaults)")
    common.add_argument("--strict", action="store_true", help="fail on the first malformed input line")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="detrefine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", parents=[common], help="write track assignments")
    p.add_argument("detections")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("refine", parents=[common], help="track then correct labels")
    p.add_argument("detections")
    p.add_argument("-o", "--output")
    p.add_argument("--journal")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("expand", parents=[common], help="add virtual boxes and cap each frame")
    p.add_argument("detections")
    p.add_argument("-o", "--output")
    p.add_argument("--top-k", type=int)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("fuse", parents=[common], help="weighted box fusion of several files")
    p.add_argument("detections", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("--weights", help="comma-separated per-source weights")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="mAP@50 against ground truth")
    p.add_argument("detections")
    p.add_argument("ground_truth")
    p.add_argument("--top-k", type=int)
    p.add_argument("--records", help="write class_id,ap lines here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scenario")
    p.add_argument("-o", "--output")
    p.add_argument("--gt")
    p.add_argument("--journal")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", parents=[common], help="track, refine, expand, cap (and evaluate)")
    p.add_argument("detections")
    p.add_argument("--gt")
    p.add_argument("-o", "--output")
    p.add_argument("--journal")
    p.add_argument("--records")
    p.add_argument("--top-k", type=int)
    p.add_argument("--disable-al", action="store_true")
    p.add_argument("--disable-ce", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ParseError, ConfigError, FusionConfigError, ScenarioError, ValueError) as exc:
        print(f"detrefine: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BrokenPipeError:
        # downstream reader closed early (e.g. ``| head``); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        print(f"detrefine: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
