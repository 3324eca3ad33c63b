"""Stage chaining: track -> adaptive labeling -> contextual expansion -> top-k cap."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .adaptive_labeling import Correction, refine_video_with_journal
from .config import PipelineConfig
from .contextual_expander import cap_top_k, expand_video
from .core import FrameSet
from .evaluation import EvalReport, GroundTruth, evaluate
from .tracker import run_video


@dataclass
class VideoResult:
    output: FrameSet
    journal: List[Correction]
    counts: Dict[str, int]
    num_tracks: int = 0


@dataclass
class PipelineResult:
    videos: Dict[int, FrameSet]
    journal: List[Correction]
    counts: Dict[str, int]
    report: Optional[EvalReport] = None


def process_video(fs: FrameSet, cfg: PipelineConfig) -> VideoResult:
    counts = {"input": len(fs)}
    journal: List[Correction] = []
    num_tracks = 0
    out = fs
    if cfg.stages.adaptive_labeling:
        tracks = run_video(out, cfg.tracker)
        num_tracks = len(tracks)
        out, journal = refine_video_with_journal(out, tracks, cfg.refine)
        counts["after_al"] = len(out)
    if cfg.stages.contextual_expander:
        out = expand_video(out, cfg.expander)
        counts["after_ce"] = len(out)
    capped = FrameSet(out.video_id)
    for frame in out.frame_indices():
        capped.frames[frame] = cap_top_k(out.frames[frame], cfg.top_k)
    counts["output"] = len(capped)
    return VideoResult(capped, journal, counts, num_tracks)


def _worker(args: Tuple[FrameSet, PipelineConfig]) -> VideoResult:
    return process_video(*args)


def run_pipeline(
    cfg: PipelineConfig,
    videos: Mapping[int, FrameSet],
    gt: Optional[Sequence[GroundTruth]] = None,
    jobs: int = 1,
) -> PipelineResult:
    """Run every video through the enabled stages; merge results in video-id order."""
    order = sorted(videos)
    tasks = [(videos[v], cfg) for v in order]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]

    out: Dict[int, FrameSet] = {}
    journal: List[Correction] = []
    totals: Dict[str, int] = {}
    for vid, res in zip(order, results):
        out[vid] = res.output
        journal.extend(res.journal)
        for k, v in res.counts.items():
            totals[k] = totals.get(k, 0) + v
    report = evaluate(out, gt, top_k=cfg.top_k) if gt is not None else None
    return PipelineResult(out, journal, totals, report)
