"""Virtual low-confidence boxes for rare rider classes.

Every motorbike and rider detection spawns placeholder detections of related
classes at (or near) the same location.  Their confidences sit far below any
real detection, so under a top-k-per-frame scoring protocol they only fill
slots that would otherwise stay empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence

from .core import (
    CLASS_IDS,
    DHELMET,
    DNOHELMET,
    MOTORBIKE,
    P0NOHELMET,
    P1NOHELMET,
    P2NOHELMET,
    Detection,
    FrameSet,
    Origin,
    iou,
    scale_box,
)


@dataclass
class ExpanderConfig:
    dedup_iou: float = 0.8
    motor_conf: float = 1e-5
    human_conf_base: float = 1e-4
    rare_offset: float = 3e-5
    rare_classes: FrozenSet[int] = field(default_factory=lambda: frozenset({4, 6, 7, 8, 9}))
    p0_scale: float = 0.7
    motor_gate: float = 0.01
    p0_gate: float = 0.1
    p2_gate: float = 0.01

    def __post_init__(self):
        self.rare_classes = frozenset(self.rare_classes)
        for name in ("dedup_iou", "motor_conf", "human_conf_base", "rare_offset",
                     "motor_gate", "p0_gate", "p2_gate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.p0_scale <= 1.0:
            raise ValueError("p0_scale must lie in (0, 1]")


_ORIGIN_RANK = {Origin.DETECTOR: 0, Origin.RELABELED: 1, Origin.VIRTUAL: 2}


def dedup_overlaps(frame_dets: Sequence[Detection], cfg: Optional[ExpanderConfig] = None) -> List[Detection]:
    """Greedy same-class suppression at ``iou >= cfg.dedup_iou``; keeps input order."""
    cfg = cfg or ExpanderConfig()
    order = sorted(range(len(frame_dets)), key=lambda i: (-frame_dets[i].confidence, i))
    kept: List[int] = []
    for i in order:
        d = frame_dets[i]
        if any(frame_dets[k].label == d.label and iou(frame_dets[k].box, d.box) >= cfg.dedup_iou
               for k in kept):
            continue
        kept.append(i)
    return [frame_dets[i] for i in sorted(kept)]


def _virtual(src: Detection, label: int, conf: float, box=None) -> Detection:
    return Detection(src.frame, box if box is not None else src.box, label, conf, Origin.VIRTUAL)


def expand_frame(frame_dets: Sequence[Detection], cfg: Optional[ExpanderConfig] = None) -> List[Detection]:
    """Append virtual detections for one (already deduplicated) frame."""
    cfg = cfg or ExpanderConfig()
    motors = [d for d in frame_dets if d.label == MOTORBIKE]
    humans = [d for d in frame_dets if d.label != MOTORBIKE]
    results: List[Detection] = []

    for m in motors:
        results.append(m)
        for cl in CLASS_IDS:
            if cl != m.label:
                results.append(_virtual(m, cl, cfg.motor_conf))

    for h in humans:
        results.append(h)
        is_driver = h.label in (DHELMET, DNOHELMET)
        for cl in CLASS_IDS:
            if cl == h.label:
                continue
            c = cfg.human_conf_base
            if cl in cfg.rare_classes:
                c += cfg.rare_offset
            if cl == MOTORBIKE and is_driver and h.confidence > cfg.motor_gate:
                results.append(_virtual(h, cl, c))
            elif cl == P0NOHELMET and is_driver and h.confidence > cfg.p0_gate:
                results.append(_virtual(h, cl, c, scale_box(h.box, cfg.p0_scale)))
            elif cl == P2NOHELMET and h.label == P1NOHELMET and h.confidence > cfg.p2_gate:
                results.append(_virtual(h, cl, c))
            elif cl in (2, 3, 4, 5):
                results.append(_virtual(h, cl, c))
    return results


def _rank_key(item):
    i, d = item
    return (-d.confidence, _ORIGIN_RANK[d.origin], d.label, i)


def cap_top_k(frame_dets: Sequence[Detection], k: int = 100) -> List[Detection]:
    """The ``k`` best detections of a frame, highest confidence first.

    Ties prefer detector output over relabeled over virtual, then lower class
    id, then input order.
    """
    ranked = sorted(enumerate(frame_dets), key=_rank_key)
    return [d for _, d in ranked[:k]]


def expand_video(fs: FrameSet, cfg: Optional[ExpanderConfig] = None, top_k: Optional[int] = None) -> FrameSet:
    """Dedup, expand and (optionally) cap every frame of ``fs``."""
    cfg = cfg or ExpanderConfig()
    out = FrameSet(fs.video_id)
    for frame in fs.frame_indices():
        dets = expand_frame(dedup_overlaps(fs.frames[frame], cfg), cfg)
        if top_k is not None:
            dets = cap_top_k(dets, top_k)
        out.frames[frame] = dets
    return out
