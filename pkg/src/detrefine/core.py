"""Domain types and box geometry shared by every stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List

import numpy as np

MOTORBIKE = 1
DHELMET = 2
DNOHELMET = 3
P1HELMET = 4
P1NOHELMET = 5
P2HELMET = 6
P2NOHELMET = 7
P0HELMET = 8
P0NOHELMET = 9

CLASS_NAMES = {
    MOTORBIKE: "motorbike",
    DHELMET: "DHelmet",
    DNOHELMET: "DNoHelmet",
    P1HELMET: "P1Helmet",
    P1NOHELMET: "P1NoHelmet",
    P2HELMET: "P2Helmet",
    P2NOHELMET: "P2NoHelmet",
    P0HELMET: "P0Helmet",
    P0NOHELMET: "P0NoHelmet",
}
CLASS_IDS = tuple(sorted(CLASS_NAMES))
MOTOR_CLASSES = frozenset({MOTORBIKE})
HUMAN_CLASSES = frozenset(range(2, 10))
# never relabeled or removed by adaptive labeling
PROTECTED_CLASSES = frozenset({MOTORBIKE, DHELMET, DNOHELMET})


def is_valid_class(label: int) -> bool:
    return isinstance(label, (int, np.integer)) and 1 <= label <= 9


class Origin(str, enum.Enum):
    DETECTOR = "detector"
    RELABELED = "relabeled"
    VIRTUAL = "virtual"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle stored as (left, top, width, height)."""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.left, self.top, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + 0.5 * self.width, self.top + 0.5 * self.height)

    def xyxy(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.left + self.width, self.top + self.height)

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "BoundingBox":
        return cls(cx - 0.5 * width, cy - 0.5 * height, width, height)


@dataclass(frozen=True)
class Detection:
    frame: int
    box: BoundingBox
    label: int
    confidence: float
    origin: Origin = Origin.DETECTOR

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"negative frame index {self.frame}")
        if not is_valid_class(self.label):
            raise ValueError(f"class id {self.label} outside 1..9")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def with_(self, **changes) -> "Detection":
        return replace(self, **changes)


@dataclass
class FrameSet:
    """All detections of one video, keyed by frame index."""

    video_id: int
    frames: Dict[int, List[Detection]] = field(default_factory=dict)

    def __post_init__(self):
        for key, dets in self.frames.items():
            for det in dets:
                if det.frame != key:
                    raise ValueError(f"detection frame {det.frame} filed under frame {key}")

    def add(self, det: Detection) -> None:
        self.frames.setdefault(det.frame, []).append(det)

    def frame_indices(self) -> List[int]:
        return sorted(self.frames)

    def detections(self) -> Iterator[Detection]:
        for key in sorted(self.frames):
            yield from self.frames[key]

    def __len__(self) -> int:
        return sum(len(v) for v in self.frames.values())

    def copy(self) -> "FrameSet":
        return FrameSet(self.video_id, {k: list(v) for k, v in self.frames.items()})

    @classmethod
    def from_detections(cls, video_id: int, dets: Iterable[Detection]) -> "FrameSet":
        fs = cls(video_id)
        for det in dets:
            fs.add(det)
        return fs


def area(b: BoundingBox) -> float:
    return b.width * b.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.left + a.width, b.left + b.width) - max(a.left, b.left)
    ih = min(a.top + a.height, b.top + b.height) - max(a.top, b.top)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.width * a.height + b.width * b.height - inter
    return min(1.0, inter / union)


def scale_box(b: BoundingBox, factor: float) -> BoundingBox:
    """Scale width and height by ``factor`` about the box center."""
    if not factor > 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    cx, cy = b.center
    return BoundingBox.from_center(cx, cy, b.width * factor, b.height * factor)


def boxes_to_xyxy(boxes: Iterable[BoundingBox]) -> np.ndarray:
    arr = np.array([b.xyxy() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)
