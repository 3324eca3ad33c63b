"""Track-based label correction.

A track's labels are trusted only when the track is stable and confident.
For such tracks, low-confidence detections that disagree with the track's
confidence-weighted majority label are relabeled (with a confidence penalty)
or removed, unless another confident detection of the majority class already
covers the same spot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import PROTECTED_CLASSES, Detection, FrameSet, Origin, iou
from .tracker import Track


@dataclass
class RefineConfig:
    theta0: float = 0.3
    alpha: float = 0.35
    theta_q: float = 0.4
    penalty: float = 0.1  # multiplies the confidence of relabeled detections
    spatial_iou: float = 0.8
    match_conf_min: float = 0.5
    area_min: float = 2500.0

    def __post_init__(self):
        if not 0.0 <= self.theta0 <= 1.0:
            raise ValueError("theta0 must lie in [0, 1]")
        if not 0.0 <= self.theta_q <= 1.0:
            raise ValueError("theta_q must lie in [0, 1]")
        if not 0.0 < self.penalty < 1.0:
            raise ValueError("penalty must lie in (0, 1)")
        if not 0.0 < self.spatial_iou <= 1.0:
            raise ValueError("spatial_iou must lie in (0, 1]")


@dataclass(frozen=True)
class TrackStats:
    mean_conf: float
    change_ratio: float
    quality: float
    consistent_label: int


@dataclass(frozen=True)
class Correction:
    """One journal entry.  ``action`` is ``relabel``, ``remove`` or ``none``."""

    frame: int
    track_id: int
    action: str
    index: int
    old_label: int
    new_label: int
    old_conf: float
    new_conf: float
    reason: str = ""
    video_id: int = 0

    FIELDS = ("video_id", "frame", "track_id", "action", "index",
              "old_label", "new_label", "old_conf", "new_conf")

    def to_line(self) -> str:
        return (f"{self.video_id},{self.frame},{self.track_id},{self.action},{self.index},"
                f"{self.old_label},{self.new_label},{self.old_conf!r},{self.new_conf!r}")

    @classmethod
    def from_line(cls, line: str) -> "Correction":
        parts = line.strip().split(",")
        if len(parts) != len(cls.FIELDS):
            raise ValueError(f"expected {len(cls.FIELDS)} fields, got {len(parts)}: {line!r}")
        v, f, t, action, idx, ol, nl, oc, nc = parts
        return cls(int(f), int(t), action, int(idx), int(ol), int(nl), float(oc), float(nc),
                   video_id=int(v))


def _labels_confs(t) -> Tuple[List[int], List[float]]:
    if isinstance(t, Track):
        return t.labels, t.confidences
    dets = list(t)
    return [d.label for d in dets], [d.confidence for d in dets]


def label_change_ratio(t) -> float:
    """Fraction of adjacent detection pairs whose labels differ."""
    labels, _ = _labels_confs(t)
    if not labels:
        raise ValueError("empty track")
    if len(labels) == 1:
        return 0.0
    changes = sum(1 for a, b in zip(labels, labels[1:]) if a != b)
    return changes / (len(labels) - 1)


def track_stats(t) -> TrackStats:
    """Quality and majority label of a track (or any sequence of detections)."""
    labels, confs = _labels_confs(t)
    if not labels:
        raise ValueError("empty track")
    mean_conf = sum(confs) / len(confs)
    r = label_change_ratio(t)
    votes: Dict[int, float] = {}
    for label, c in zip(labels, confs):
        votes[label] = votes.get(label, 0.0) + c
    best = max(votes.values())
    consistent = min(label for label, v in votes.items() if v == best)
    return TrackStats(mean_conf, r, (1.0 - r) * mean_conf, consistent)


def adaptive_threshold(stats: TrackStats, cfg: Optional[RefineConfig] = None) -> float:
    cfg = cfg or RefineConfig()
    return (cfg.theta0 + cfg.alpha * (1.0 - stats.mean_conf)) * (1.0 + (0.5 - stats.quality))


def _has_spatial_match(frame_dets, skip: int, det: Detection, label: int, cfg: RefineConfig) -> bool:
    for j, other in enumerate(frame_dets):
        if j == skip or other is None:
            continue
        if (other.label == label and other.confidence >= cfg.match_conf_min
                and iou(other.box, det.box) > cfg.spatial_iou):
            return True
    return False


def refine_track(
    t: Track,
    frames: Dict[int, List[Optional[Detection]]],
    cfg: Optional[RefineConfig] = None,
    video_id: int = 0,
) -> List[Correction]:
    """Correct one track in place.

    ``frames`` maps frame -> detection slots (the FrameSet's lists); removed
    detections are left as ``None`` so the other tracks' indices stay valid.
    Returns the journal of eligible detections, including ones left alone.
    """
    cfg = cfg or RefineConfig()
    current = []
    for obs in t.history:
        slot = frames.get(obs.frame)
        det = slot[obs.index] if slot is not None and 0 <= obs.index < len(slot) else None
        if det is not None:
            current.append((obs, det))
    if not current:
        return []
    stats = track_stats([d for _, d in current])
    if stats.quality < cfg.theta_q:
        return []
    target = stats.consistent_label
    threshold = adaptive_threshold(stats, cfg)

    journal = []
    for obs, det in current:
        if det.label == target or det.label in PROTECTED_CLASSES or det.confidence >= threshold:
            continue
        slot = frames[obs.frame]
        if _has_spatial_match(slot, obs.index, det, target, cfg):
            journal.append(Correction(obs.frame, t.id, "none", obs.index, det.label, det.label,
                                      det.confidence, det.confidence, "spatial match", video_id))
        elif det.box.area <= cfg.area_min:
            new_conf = cfg.penalty * det.confidence
            slot[obs.index] = det.with_(label=target, confidence=new_conf, origin=Origin.RELABELED)
            journal.append(Correction(obs.frame, t.id, "relabel", obs.index, det.label, target,
                                      det.confidence, new_conf, "no spatial match", video_id))
        else:
            slot[obs.index] = None
            journal.append(Correction(obs.frame, t.id, "remove", obs.index, det.label, det.label,
                                      det.confidence, det.confidence, "no spatial match, large box",
                                      video_id))
    return journal


def _compact(frames: Dict[int, List[Optional[Detection]]]) -> Dict[int, List[Detection]]:
    return {k: [d for d in slot if d is not None] for k, slot in frames.items()}


def refine_video_with_journal(
    fs: FrameSet,
    tracks: Sequence[Track],
    cfg: Optional[RefineConfig] = None,
) -> Tuple[FrameSet, List[Correction]]:
    cfg = cfg or RefineConfig()
    frames: Dict[int, List[Optional[Detection]]] = {k: list(v) for k, v in fs.frames.items()}
    journal: List[Correction] = []
    for t in tracks:
        journal.extend(refine_track(t, frames, cfg, fs.video_id))
    return FrameSet(fs.video_id, _compact(frames)), journal


def refine_video(fs: FrameSet, tracks: Sequence[Track], cfg: Optional[RefineConfig] = None) -> FrameSet:
    return refine_video_with_journal(fs, tracks, cfg)[0]


def apply_journal(fs: FrameSet, journal: Iterable[Correction]) -> FrameSet:
    """Replay a correction journal onto the FrameSet it was produced from."""
    frames: Dict[int, List[Optional[Detection]]] = {k: list(v) for k, v in fs.frames.items()}
    for c in journal:
        if c.action == "none":
            continue
        slot = frames[c.frame]
        det = slot[c.index]
        if det is None or det.label != c.old_label or det.confidence != c.old_conf:
            raise ValueError(f"journal entry does not match frame {c.frame} slot {c.index}")
        if c.action == "relabel":
            slot[c.index] = det.with_(label=c.new_label, confidence=c.new_conf, origin=Origin.RELABELED)
        elif c.action == "remove":
            slot[c.index] = None
        else:
            raise ValueError(f"unknown action {c.action!r}")
    return FrameSet(fs.video_id, _compact(frames))
