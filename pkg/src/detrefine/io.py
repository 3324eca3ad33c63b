"""Line-oriented detection / ground-truth files.

Detection line: ``video_id,frame,bb_left,bb_top,bb_width,bb_height,class,confidence``.
Ground-truth lines are the same without the trailing confidence.  No header.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, TextIO, Tuple

from .core import BoundingBox, Detection, FrameSet, is_valid_class
from .contextual_expander import _ORIGIN_RANK
from .evaluation import GroundTruth


class ParseError(ValueError):
    def __init__(self, errors: Sequence["LineError"]):
        self.errors = list(errors)
        first = self.errors[0] if self.errors else None
        msg = f"{len(self.errors)} malformed line(s)"
        if first is not None:
            msg += f"; first at line {first.lineno}: {first.message}"
        super().__init__(msg)


@dataclass(frozen=True)
class LineError:
    lineno: int
    line: str
    message: str

    def __str__(self) -> str:
        return f"line {self.lineno}: {self.message}: {self.line!r}"


@dataclass
class ParseResult:
    videos: Dict[int, FrameSet] = field(default_factory=dict)
    errors: List[LineError] = field(default_factory=list)


def _parse_fields(parts: List[str], with_conf: bool):
    vid = int(parts[0])
    frame = int(parts[1])
    left, top, w, h = (float(x) for x in parts[2:6])
    label = int(parts[6])
    if not all(math.isfinite(v) for v in (left, top, w, h)):
        raise ValueError("non-finite box coordinate")
    if w <= 0 or h <= 0:
        raise ValueError(f"box size must be positive (width={w}, height={h})")
    if frame < 0:
        raise ValueError(f"negative frame {frame}")
    if not is_valid_class(label):
        raise ValueError(f"class {label} outside 1..9")
    conf = None
    if with_conf:
        conf = float(parts[7])
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence {conf} outside [0, 1]")
    return vid, frame, BoundingBox(left, top, w, h), label, conf


def _iter_records(lines: Iterable[str], width: int, result: ParseResult, strict: bool):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            if len(parts) != width:
                raise ValueError(f"expected {width} fields, got {len(parts)}")
            yield _parse_fields(parts, width == 8)
        except ValueError as exc:
            err = LineError(lineno, line, str(exc))
            result.errors.append(err)
            if strict:
                raise ParseError([err]) from exc


def parse_detections(lines: Iterable[str], strict: bool = False) -> ParseResult:
    """Group detection lines into one FrameSet per video.

    Malformed lines are skipped and reported; ``strict`` raises on the first.
    """
    result = ParseResult()
    for vid, frame, box, label, conf in _iter_records(lines, 8, result, strict):
        fs = result.videos.get(vid)
        if fs is None:
            fs = result.videos[vid] = FrameSet(vid)
        fs.add(Detection(frame, box, label, conf))
    return result


def parse_ground_truth(lines: Iterable[str], strict: bool = False) -> Tuple[List[GroundTruth], List[LineError]]:
    result = ParseResult()
    gts = [GroundTruth(vid, frame, box, label)
           for vid, frame, box, label, _ in _iter_records(lines, 7, result, strict)]
    return gts, result.errors


@functools.lru_cache(maxsize=1 << 16)
def fmt_num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _sorted_frame(dets: Sequence[Detection]) -> List[Detection]:
    return [d for _, d in sorted(enumerate(dets),
                                 key=lambda e: (-e[1].confidence, _ORIGIN_RANK[e[1].origin], e[1].label, e[0]))]


def detection_line(video_id: int, d: Detection) -> str:
    b = d.box
    return ",".join((str(video_id), str(d.frame), fmt_num(b.left), fmt_num(b.top),
                     fmt_num(b.width), fmt_num(b.height), str(d.label), fmt_num(d.confidence)))


def serialize_detections(videos, out: TextIO) -> None:
    """Write video by video, frame by frame, highest confidence first."""
    if isinstance(videos, FrameSet):
        videos = {videos.video_id: videos}
    for vid in sorted(videos):
        fs = videos[vid]
        for frame in fs.frame_indices():
            for d in _sorted_frame(fs.frames[frame]):
                out.write(detection_line(vid, d) + "\n")


def ground_truth_line(g: GroundTruth) -> str:
    b = g.box
    return ",".join((str(g.video_id), str(g.frame), fmt_num(b.left), fmt_num(b.top),
                     fmt_num(b.width), fmt_num(b.height), str(g.label)))


def serialize_ground_truth(gts: Iterable[GroundTruth], out: TextIO) -> None:
    for g in sorted(gts, key=lambda g: (g.video_id, g.frame, g.label, g.box.left, g.box.top)):
        out.write(ground_truth_line(g) + "\n")
