"""mAP@50 with all-point interpolation and a top-k-per-frame cap."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from . import _kernels
from .contextual_expander import cap_top_k, _ORIGIN_RANK
from .core import CLASS_IDS, CLASS_NAMES, BoundingBox, Detection, FrameSet, boxes_to_xyxy


@dataclass(frozen=True)
class GroundTruth:
    video_id: int
    frame: int
    box: BoundingBox
    label: int


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    per_class_ap: Dict[int, float]
    map50: float
    counts: Dict[int, ClassCounts]
    classes_absent: Set[int]
    unknown_videos: Set[int] = field(default_factory=set)

    def records(self) -> List[str]:
        return [f"{cid},{ap!r}" for cid, ap in sorted(self.per_class_ap.items())]

    def table(self) -> str:
        lines = [f"{'class':<12} {'AP@50':>8} {'TP':>6} {'FP':>6} {'FN':>6}"]
        for cid in CLASS_IDS:
            c = self.counts.get(cid, ClassCounts())
            ap = "absent" if cid in self.classes_absent else f"{100 * self.per_class_ap[cid]:.3f}"
            lines.append(f"{CLASS_NAMES[cid]:<12} {ap:>8} {c.tp:>6} {c.fp:>6} {c.fn:>6}")
        lines.append(f"{'mAP@50':<12} {100 * self.map50:>8.3f}")
        return "\n".join(lines)


def match_frame(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thr: float = 0.5,
) -> List[Tuple[Detection, Optional[GroundTruth], bool]]:
    """Greedy matching in descending confidence; each gt matched at most once."""
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].confidence, _ORIGIN_RANK[dets[i].origin], dets[i].label, i))
    if dets and gts:
        ious = _kernels.iou_matrix(boxes_to_xyxy(d.box for d in dets), boxes_to_xyxy(g.box for g in gts))
    taken = [False] * len(gts)
    out = []
    for i in order:
        d = dets[i]
        best, best_iou = -1, iou_thr
        for j, g in enumerate(gts):
            if taken[j] or g.label != d.label:
                continue
            if ious[i, j] >= best_iou and (best < 0 or ious[i, j] > best_iou):
                best, best_iou = j, ious[i, j]
        if best >= 0:
            taken[best] = True
            out.append((d, gts[best], True))
        else:
            out.append((d, None, False))
    return out


def average_precision(flags: Sequence[bool], num_gt: int) -> float:
    """All-point interpolated AP of confidence-ranked TP/FP flags."""
    if num_gt <= 0:
        return float("nan")
    tp = np.asarray(flags, dtype=bool)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    precision = ctp / (ctp + cfp)
    # monotone envelope, right to left
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    # recall steps by 1/num_gt exactly at each TP; one division keeps 1.0 exact
    return float(np.sum(precision[tp]) / num_gt)


PredInput = Union[FrameSet, Mapping[int, FrameSet], Iterable[FrameSet]]


def _as_videos(pred: PredInput) -> Dict[int, FrameSet]:
    if isinstance(pred, FrameSet):
        return {pred.video_id: pred}
    if isinstance(pred, Mapping):
        return dict(pred)
    return {fs.video_id: fs for fs in pred}


def evaluate(
    pred: PredInput,
    gt: Iterable[GroundTruth],
    top_k: Optional[int] = 100,
    iou_thr: float = 0.5,
) -> EvalReport:
    videos = _as_videos(pred)
    gt_index: Dict[Tuple[int, int], List[GroundTruth]] = {}
    num_gt = {cid: 0 for cid in CLASS_IDS}
    unknown = set()
    for g in gt:
        gt_index.setdefault((g.video_id, g.frame), []).append(g)
        num_gt[g.label] += 1
        if g.video_id not in videos:
            unknown.add(g.video_id)

    # (-confidence, origin rank, global order, is_tp) per class
    ranked: Dict[int, List[Tuple[float, int, int, bool]]] = {cid: [] for cid in CLASS_IDS}
    order = 0
    for vid in sorted(videos):
        fs = videos[vid]
        for frame in fs.frame_indices():
            dets = fs.frames[frame]
            if top_k is not None:
                dets = cap_top_k(dets, top_k)
            gts = gt_index.get((vid, frame), [])
            for cid in sorted({d.label for d in dets}):
                cdets = [d for d in dets if d.label == cid]
                cgts = [g for g in gts if g.label == cid]
                for d, _, is_tp in match_frame(cdets, cgts, iou_thr):
                    ranked[cid].append((-d.confidence, _ORIGIN_RANK[d.origin], order, is_tp))
                    order += 1

    per_class, counts, absent = {}, {}, set()
    for cid in CLASS_IDS:
        entries = sorted(ranked[cid])
        flags = [e[3] for e in entries]
        tp = sum(flags)
        counts[cid] = ClassCounts(tp=tp, fp=len(flags) - tp, fn=num_gt[cid] - tp)
        if num_gt[cid] == 0:
            absent.add(cid)
            continue
        per_class[cid] = average_precision(flags, num_gt[cid])
    present = [per_class[c] for c in sorted(per_class)]
    map50 = float(np.mean(present)) if present else 0.0
    return EvalReport(per_class, map50, counts, absent, unknown)
