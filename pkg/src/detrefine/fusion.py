"""Weighted box fusion of several detectors' outputs for one frame."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import BoundingBox, Detection


class FusionConfigError(ValueError):
    pass


@dataclass
class FusionConfig:
    iou_thr: float = 0.55
    skip_box_thr: float = 0.0
    source_weights: Optional[List[float]] = None

    def __post_init__(self):
        if not 0.0 < self.iou_thr < 1.0:
            raise FusionConfigError("iou_thr must lie in (0, 1)")
        if self.source_weights is not None and any(w <= 0 for w in self.source_weights):
            raise FusionConfigError("source weights must be positive")

    def weights_for(self, n: int) -> np.ndarray:
        if self.source_weights is None:
            return np.ones(n)
        if len(self.source_weights) != n:
            raise FusionConfigError(
                f"{len(self.source_weights)} source weights given for {n} sources")
        return np.asarray(self.source_weights, dtype=np.float64)


def _iou_one(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    # boxes are (left, top, width, height)
    iw = np.minimum(box[0] + box[2], others[:, 0] + others[:, 2]) - np.maximum(box[0], others[:, 0])
    ih = np.minimum(box[1] + box[3], others[:, 1] + others[:, 3]) - np.maximum(box[1], others[:, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = box[2] * box[3] + others[:, 2] * others[:, 3] - inter
    return inter / union


def fuse_frame(sources: Sequence[Sequence[Detection]], cfg: Optional[FusionConfig] = None) -> List[Detection]:
    cfg = cfg or FusionConfig()
    weights = cfg.weights_for(len(sources))
    total_weight = float(weights.sum())
    entries = []
    for s, dets in enumerate(sources):
        for d in dets:
            if d.confidence >= cfg.skip_box_thr:
                entries.append((d, weights[s]))
    if not entries:
        return []
    frame = entries[0][0].frame

    fused: List[Detection] = []
    for label in sorted({d.label for d, _ in entries}):
        group = [(d, w) for d, w in entries if d.label == label]
        # coordinates in the key make the order independent of source order
        group.sort(key=lambda e: (-e[0].confidence, e[0].box.xyxy(), -e[1]))
        clusters: List[list] = []
        fused_boxes = np.empty((0, 4))
        for d, w in group:
            box = np.array([d.box.left, d.box.top, d.box.width, d.box.height])
            best = -1
            if len(clusters):
                ious = _iou_one(box, fused_boxes)
                j = int(np.argmax(ious))
                if ious[j] >= cfg.iou_thr:
                    best = j
            if best < 0:
                clusters.append([(box, d.confidence, w)])
                fused_boxes = np.vstack([fused_boxes, box])
            else:
                clusters[best].append((box, d.confidence, w))
                fused_boxes[best] = _weighted_box(clusters[best])
        for members in clusters:
            coords = _weighted_box(members)
            w = np.array([m[2] for m in members])
            c = np.array([m[1] for m in members])
            conf = float((w * c).sum() / w.sum())
            conf *= min(total_weight, float(w.sum())) / total_weight
            fused.append(Detection(frame, BoundingBox(*(float(v) for v in coords)), label, min(conf, 1.0)))
    fused.sort(key=lambda d: (-d.confidence, d.label, d.box.xyxy()))
    return fused


def _weighted_box(members) -> np.ndarray:
    boxes = np.array([m[0] for m in members])
    wc = np.array([m[1] * m[2] for m in members])
    if wc.sum() <= 0:
        wc = np.ones(len(members))
    # offsets from the first member keep identical boxes bit-exact
    return boxes[0] + (wc[:, None] * (boxes - boxes[0])).sum(axis=0) / wc.sum()
