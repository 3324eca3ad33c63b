"""Observation-centric tracking-by-detection.

Constant-velocity Kalman filter over (cx, cy, area, aspect), IoU association
solved exactly by :func:`detrefine.assignment.solve`, a direction-consistency
(momentum) term in the association cost, and re-update along a virtual
trajectory when a lost track is re-acquired.  Association ignores class
labels; the label rides along on the detection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .assignment import FORBIDDEN, solve
from .core import BoundingBox, Detection, FrameSet, boxes_to_xyxy

STD_POSITION = 1.0 / 20
STD_VELOCITY = 1.0 / 160
_MIN_AREA = 1e-6


class SequencingError(ValueError):
    """Frames were fed to the tracker out of order."""


@dataclass
class TrackerConfig:
    det_thresh: float = 0.3
    iou_threshold: float = 0.85
    max_age: int = 10
    min_hits: int = 1
    momentum_window: int = 3
    # "cost": pairs need 1 - iou <= iou_threshold; "iou": pairs need iou >= iou_threshold
    gate_mode: str = "cost"
    inertia: float = 0.2
    # detections in [low_thresh, det_thresh) may extend existing tracks but never start one
    low_thresh: float = 0.1
    use_byte: bool = True

    def __post_init__(self):
        if not 0.0 <= self.det_thresh <= 1.0:
            raise ValueError("det_thresh must lie in [0, 1]")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")
        if self.momentum_window < 1:
            raise ValueError("momentum_window must be >= 1")
        if self.gate_mode not in ("cost", "iou"):
            raise ValueError(f"unknown gate_mode {self.gate_mode!r}")

    @property
    def iou_gate(self) -> float:
        if self.gate_mode == "iou":
            return self.iou_threshold
        return 1.0 - self.iou_threshold


# ---------------------------------------------------------------------------
# Kalman filter


@dataclass
class KalmanState:
    mean: np.ndarray  # (cx, cy, area, aspect, vcx, vcy, varea)
    covariance: np.ndarray

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.covariance.copy())


def box_to_z(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.width * box.height, box.width / box.height])


def z_to_box(mean: np.ndarray) -> BoundingBox:
    s = max(float(mean[2]), _MIN_AREA)
    r = max(float(mean[3]), 1e-6)
    w = math.sqrt(s * r)
    h = s / w
    return BoundingBox.from_center(float(mean[0]), float(mean[1]), w, h)


def _noise_scale(mean: np.ndarray) -> Tuple[float, float, float]:
    s = max(float(mean[2]), 1.0)
    return math.sqrt(s), s, max(abs(float(mean[3])), 1e-3)


def initiate(box: BoundingBox) -> KalmanState:
    z = box_to_z(box)
    mean = np.zeros(7)
    mean[:4] = z
    size, s, r = _noise_scale(mean)
    std = np.array([
        2 * STD_POSITION * size,
        2 * STD_POSITION * size,
        4 * STD_POSITION * s,
        2 * STD_POSITION * r,
        10 * STD_VELOCITY * size,
        10 * STD_VELOCITY * size,
        20 * STD_VELOCITY * s,
    ])
    return KalmanState(mean, np.diag(std**2))


def kf_predict(state: KalmanState) -> None:
    """Advance the state one frame in place."""
    _kernels.kf_predict(state.mean, state.covariance, STD_POSITION, STD_VELOCITY)


def kf_update(state: KalmanState, box: BoundingBox) -> None:
    _kernels.kf_update(state.mean, state.covariance, box_to_z(box), STD_POSITION)


# ---------------------------------------------------------------------------
# Tracks


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    DEAD = "dead"


class Observation(NamedTuple):
    frame: int
    detection: Detection
    index: int  # position of the detection within its FrameSet frame list, -1 if unknown


def _direction(a: BoundingBox, b: BoundingBox) -> np.ndarray:
    (ax, ay), (bx, by) = a.center, b.center
    d = np.array([by - ay, bx - ax])
    return d / (math.hypot(d[0], d[1]) + 1e-6)


@dataclass
class Track:
    id: int
    state: KalmanState
    history: List[Observation] = field(default_factory=list)
    age_since_update: int = 0
    hit_count: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    velocity: Optional[np.ndarray] = None
    frozen: Optional[KalmanState] = None
    predicted_box: Optional[BoundingBox] = None

    @property
    def last_observation(self) -> Detection:
        return self.history[-1].detection

    @property
    def last_frame(self) -> int:
        return self.history[-1].frame

    @property
    def detections(self) -> List[Detection]:
        return [obs.detection for obs in self.history]

    @property
    def labels(self) -> List[int]:
        return [obs.detection.label for obs in self.history]

    @property
    def confidences(self) -> List[float]:
        return [obs.detection.confidence for obs in self.history]

    def __len__(self) -> int:
        return len(self.history)

    def previous_box(self, frame: int, window: int) -> BoundingBox:
        """Observation ``window`` frames back, the nearest later one, else the last one."""
        by_frame = {obs.frame: obs.detection.box for obs in self.history[-window - 1:]}
        for dt in range(window, 0, -1):
            box = by_frame.get(frame - dt)
            if box is not None:
                return box
        return self.history[-1].detection.box


def predict(t: Track) -> BoundingBox:
    """Advance ``t`` one frame and return its predicted box."""
    if t.status == TrackStatus.DEAD:
        raise ValueError(f"track {t.id} is dead")
    kf_predict(t.state)
    t.predicted_box = z_to_box(t.state.mean)
    return t.predicted_box


def _interpolate(a: BoundingBox, b: BoundingBox, frac: float) -> BoundingBox:
    (ax, ay), (bx, by) = a.center, b.center
    return BoundingBox.from_center(
        ax + frac * (bx - ax),
        ay + frac * (by - ay),
        a.width + frac * (b.width - a.width),
        a.height + frac * (b.height - a.height),
    )


def _apply_update(t: Track, frame: int, det: Detection, index: int, cfg: TrackerConfig) -> None:
    gap = frame - t.last_frame
    if gap > 1 and t.frozen is not None:
        # re-update along the straight path between the last observation and this one
        prev = t.last_observation.box
        t.state = t.frozen.copy()
        for k in range(1, gap):
            kf_predict(t.state)
            kf_update(t.state, _interpolate(prev, det.box, k / gap))
        kf_predict(t.state)
    prev_box = t.previous_box(frame, cfg.momentum_window)
    t.velocity = _direction(prev_box, det.box)
    kf_update(t.state, det.box)
    t.frozen = t.state.copy()
    t.history.append(Observation(frame, det, index))
    t.age_since_update = 0
    t.hit_count += 1
    t.status = TrackStatus.ACTIVE if t.hit_count >= cfg.min_hits else TrackStatus.TENTATIVE


# ---------------------------------------------------------------------------
# Association


def _gated_assign(iou: np.ndarray, cost: np.ndarray, gate: float):
    cost = np.where(iou >= gate, cost, FORBIDDEN)
    return solve(cost)


def association_cost(
    tracks: Sequence[Track],
    detections: Sequence[Detection],
    frame: int,
    cfg: TrackerConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (iou, cost) matrices of shape (len(tracks), len(detections))."""
    trk_boxes = boxes_to_xyxy(t.predicted_box or z_to_box(t.state.mean) for t in tracks)
    det_boxes = boxes_to_xyxy(d.box for d in detections)
    iou = _kernels.iou_matrix(trk_boxes, det_boxes)
    cost = 1.0 - iou
    if cfg.inertia > 0 and len(tracks) and len(detections):
        det_c = np.column_stack([
            (det_boxes[:, 0] + det_boxes[:, 2]) * 0.5,
            (det_boxes[:, 1] + det_boxes[:, 3]) * 0.5,
        ])
        conf = np.array([d.confidence for d in detections])
        rows = [r for r, t in enumerate(tracks) if t.velocity is not None]
        if rows:
            vel = np.array([tracks[r].velocity for r in rows])
            prev = np.array([tracks[r].previous_box(frame, cfg.momentum_window).center for r in rows])
            dy = det_c[None, :, 1] - prev[:, 1:2]
            dx = det_c[None, :, 0] - prev[:, 0:1]
            norm = np.hypot(dy, dx) + 1e-6
            cos = np.clip((dy * vel[:, 0:1] + dx * vel[:, 1:2]) / norm, -1.0, 1.0)
            angle_cost = (np.pi / 2.0 - np.abs(np.arccos(cos))) / np.pi
            cost[rows] -= cfg.inertia * angle_cost * conf
    return iou, cost


def associate(
    tracks: Sequence[Track],
    detections: Sequence[Detection],
    cfg: TrackerConfig,
    frame: Optional[int] = None,
):
    """Match predicted tracks to detections.

    Returns ``(matches, unmatched_tracks, unmatched_detections)`` where matches
    are (track_index, detection_index) pairs.
    """
    if not tracks or not detections:
        return [], list(range(len(tracks))), list(range(len(detections)))
    if frame is None:
        frame = detections[0].frame
    iou, cost = association_cost(tracks, detections, frame, cfg)
    matches = _gated_assign(iou, cost, cfg.iou_gate)
    mt = {r for r, _ in matches}
    md = {c for _, c in matches}
    return (
        matches,
        [i for i in range(len(tracks)) if i not in mt],
        [j for j in range(len(detections)) if j not in md],
    )


def _iou_only(boxes_a: List[BoundingBox], boxes_b: List[BoundingBox], gate: float):
    iou = _kernels.iou_matrix(boxes_to_xyxy(boxes_a), boxes_to_xyxy(boxes_b))
    return _gated_assign(iou, 1.0 - iou, gate)


# ---------------------------------------------------------------------------
# Tracker state


class Tracker:
    """Per-video tracker state.  Feed frames in increasing order via :meth:`step`."""

    def __init__(self, cfg: Optional[TrackerConfig] = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: List[Track] = []
        self.finished: List[Track] = []
        self.frame: Optional[int] = None
        self._next_id = 1

    def _advance(self) -> None:
        for t in self.tracks:
            predict(t)
            t.age_since_update += 1
            if t.status != TrackStatus.TENTATIVE:
                t.status = TrackStatus.LOST

    def _reap(self) -> None:
        alive = []
        for t in self.tracks:
            if t.age_since_update > self.cfg.max_age:
                t.status = TrackStatus.DEAD
                self.finished.append(t)
            else:
                alive.append(t)
        self.tracks = alive

    def _spawn(self, frame: int, det: Detection, index: int) -> Track:
        t = Track(self._next_id, initiate(det.box))
        self._next_id += 1
        t.frozen = t.state.copy()
        t.history.append(Observation(frame, det, index))
        t.hit_count = 1
        t.status = TrackStatus.ACTIVE if self.cfg.min_hits <= 1 else TrackStatus.TENTATIVE
        self.tracks.append(t)
        return t

    def step(
        self,
        frame: int,
        detections: Sequence[Detection],
        indices: Optional[Sequence[int]] = None,
    ) -> List[Tuple[int, Detection]]:
        """Process one frame; return the (track_id, detection) pairs it emitted."""
        cfg = self.cfg
        if self.frame is not None and frame <= self.frame:
            raise SequencingError(f"frame {frame} presented after frame {self.frame}")
        if indices is None:
            indices = range(len(detections))
        gap = 1 if self.frame is None else frame - self.frame
        self.frame = frame
        for k in range(gap):
            if k:
                self._reap()
            self._advance()

        high = [(d, i) for d, i in zip(detections, indices) if d.confidence >= cfg.det_thresh]
        low = []
        if cfg.use_byte:
            low = [(d, i) for d, i in zip(detections, indices)
                   if cfg.low_thresh <= d.confidence < cfg.det_thresh]

        emitted: List[Tuple[int, Detection]] = []
        tracks = list(self.tracks)

        def commit(t: Track, pair):
            det, idx = pair
            _apply_update(t, frame, det, idx, cfg)
            emitted.append((t.id, det))

        matches, um_t, um_d = associate(tracks, [d for d, _ in high], cfg, frame)
        for r, c in matches:
            commit(tracks[r], high[c])

        # second stage: low-confidence detections against still-unmatched tracks
        if low and um_t:
            rest = [tracks[i] for i in um_t]
            pairs = _iou_only([t.predicted_box for t in rest], [d.box for d, _ in low], cfg.iou_gate)
            for r, c in pairs:
                commit(rest[r], low[c])
            matched = {r for r, _ in pairs}
            um_t = [um_t[k] for k in range(len(um_t)) if k not in matched]

        # recovery stage: leftover detections against the tracks' last observations
        if um_t and um_d:
            rest = [tracks[i] for i in um_t]
            left = [high[j] for j in um_d]
            pairs = _iou_only([t.last_observation.box for t in rest], [d.box for d, _ in left], cfg.iou_gate)
            for r, c in pairs:
                commit(rest[r], left[c])
            matched = {c for _, c in pairs}
            um_d = [um_d[k] for k in range(len(um_d)) if k not in matched]

        self._reap()
        for j in um_d:
            det, idx = high[j]
            t = self._spawn(frame, det, idx)
            emitted.append((t.id, det))
        return emitted

    def all_tracks(self) -> List[Track]:
        return sorted(self.finished + self.tracks, key=lambda t: t.id)


def run_video(fs: FrameSet, cfg: Optional[TrackerConfig] = None) -> List[Track]:
    """Track every frame of ``fs``; returns all tracks (dead ones included) ordered by id."""
    tracker = Tracker(cfg)
    for frame in fs.frame_indices():
        dets = fs.frames[frame]
        tracker.step(frame, dets, range(len(dets)))
    return tracker.all_tracks()


def track_assignment(tracks: Sequence[Track]) -> Dict[Tuple[int, int], int]:
    """Map (frame, index-in-frame) -> track id."""
    return {(obs.frame, obs.index): t.id for t in tracks for obs in t.history}
