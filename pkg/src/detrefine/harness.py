"""Synthetic scenes with known identities, plus controlled corruption.

The generator renders perfect detections for constant-velocity actors; the
corruption model flips labels, drops detections and jitters boxes while
journaling every change so recovery can be scored exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DHELMET,
    DNOHELMET,
    MOTORBIKE,
    P0NOHELMET,
    PROTECTED_CLASSES,
    BoundingBox,
    Detection,
    FrameSet,
    iou,
    scale_box,
)
from .evaluation import GroundTruth


class ScenarioError(ValueError):
    pass


@dataclass
class Actor:
    identity: int
    label: int
    start: Tuple[float, float]  # top-left corner at frame 0
    velocity: Tuple[float, float]  # px / frame
    size: Tuple[float, float]
    detected: bool = True  # False: ground truth only

    def box_at(self, frame: int) -> BoundingBox:
        return BoundingBox(
            self.start[0] + self.velocity[0] * frame,
            self.start[1] + self.velocity[1] * frame,
            self.size[0],
            self.size[1],
        )


@dataclass
class Scenario:
    seed: int
    num_frames: int
    actors: List[Actor]
    occlusions: List[Tuple[int, int, int]] = field(default_factory=list)  # identity, first, last (inclusive)
    extent: Tuple[float, float] = (1920.0, 1080.0)
    video_id: int = 1
    confidence: float = 0.9

    def __post_init__(self):
        ids = [a.identity for a in self.actors]
        if len(set(ids)) != len(ids):
            raise ScenarioError("actor identities must be unique")

    def occluded(self, identity: int, frame: int) -> bool:
        return any(i == identity and lo <= frame <= hi for i, lo, hi in self.occlusions)


def generate(sc: Scenario) -> Tuple[FrameSet, List[GroundTruth], Dict[Tuple[int, int], int]]:
    """Render detections (conf ``sc.confidence``), ground truth and an identity map.

    The identity map sends (frame, index-in-frame) to the actor identity.
    """
    W, H = sc.extent
    fs = FrameSet(sc.video_id)
    gts: List[GroundTruth] = []
    identities: Dict[Tuple[int, int], int] = {}
    for frame in range(sc.num_frames):
        dets = []
        for a in sc.actors:
            box = a.box_at(frame)
            if box.left < 0 or box.top < 0 or box.right > W or box.bottom > H:
                raise ScenarioError(f"actor {a.identity} leaves the {W}x{H} extent at frame {frame}")
            gts.append(GroundTruth(sc.video_id, frame, box, a.label))
            if a.detected and not sc.occluded(a.identity, frame):
                identities[(frame, len(dets))] = a.identity
                dets.append(Detection(frame, box, a.label, sc.confidence))
        fs.frames[frame] = dets
    return fs, gts, identities


def _max_iou_over_time(a: Actor, b: Actor, num_frames: int) -> float:
    return max(iou(a.box_at(f), b.box_at(f)) for f in range(num_frames))


def _fits(boxes: Iterable[BoundingBox], extent) -> bool:
    W, H = extent
    return all(b.left >= 0 and b.top >= 0 and b.right <= W and b.bottom <= H for b in boxes)


def random_scenario(
    seed: int,
    num_actors: int = 20,
    num_frames: int = 100,
    labels: Optional[Sequence[int]] = None,
    size_range: Tuple[float, float] = (20.0, 48.0),
    speed_max: float = 3.0,
    extent: Tuple[float, float] = (1920.0, 1080.0),
    margin: float = 10.0,
    video_id: int = 1,
    max_tries: int = 10_000,
) -> Scenario:
    """Linear movers whose boxes (grown by ``margin``) never touch on any frame."""
    rng = np.random.default_rng(seed)
    labels = list(labels) if labels is not None else list(range(1, 10))
    W, H = extent
    actors: List[Actor] = []
    last = num_frames - 1
    tries = 0
    while len(actors) < num_actors:
        tries += 1
        if tries > max_tries:
            raise ScenarioError(f"could not place {num_actors} actors in {max_tries} tries")
        w, h = rng.uniform(*size_range, size=2)
        vx, vy = rng.uniform(-speed_max, speed_max, size=2)
        x0 = rng.uniform(0, W - w)
        y0 = rng.uniform(0, H - h)
        cand = Actor(len(actors) + 1, labels[len(actors) % len(labels)],
                     (float(x0), float(y0)), (float(vx), float(vy)), (float(w), float(h)))
        if not _fits([cand.box_at(0), cand.box_at(last)], extent):
            continue
        grown = _grown(cand, margin)
        if any(_max_iou_over_time(grown, _grown(o, margin), num_frames) > 0 for o in actors):
            continue
        actors.append(cand)
    return Scenario(seed, num_frames, actors, extent=extent, video_id=video_id)


def _grown(a: Actor, margin: float) -> Actor:
    return Actor(a.identity, a.label, (a.start[0] - margin, a.start[1] - margin), a.velocity,
                 (a.size[0] + 2 * margin, a.size[1] + 2 * margin), a.detected)


def rider_scenario(
    seed: int,
    num_riders: int = 6,
    num_frames: int = 50,
    with_p0: bool = True,
    speed_max: float = 3.0,
    extent: Tuple[float, float] = (1920.0, 1080.0),
    video_id: int = 1,
) -> Scenario:
    """Motorbike + driver groups; optionally an undetected front passenger per group.

    The passenger's ground-truth box is the driver box scaled by 0.7 about its
    center, i.e. where a context-aware virtual box would land.
    """
    # each group reserves an 80x80 cell: driver on top, motorbike below it
    base = random_scenario(seed, num_riders, num_frames, labels=[MOTORBIKE], size_range=(80.0, 80.0),
                           speed_max=speed_max, extent=extent, margin=10.0, video_id=video_id)
    actors: List[Actor] = []
    nid = 1
    for k, cell in enumerate(base.actors):
        x, y = cell.start
        motor = Actor(nid, MOTORBIKE, (x, y + 20.0), cell.velocity, (40.0, 60.0))
        driver_label = DHELMET if k % 2 == 0 else DNOHELMET
        driver = Actor(nid + 1, driver_label, (x + 5.0, y), cell.velocity, (30.0, 40.0))
        actors += [motor, driver]
        if with_p0:
            p0 = scale_box(driver.box_at(0), 0.7)
            actors.append(Actor(nid + 2, P0NOHELMET, (p0.left, p0.top), cell.velocity,
                                (p0.width, p0.height), detected=False))
        nid += 3
    sc = Scenario(seed, num_frames, actors, extent=extent, video_id=video_id)
    generate(sc)  # validates the extent
    return sc


# ---------------------------------------------------------------------------
# Corruption


@dataclass
class CorruptionSpec:
    flip_rate: float = 0.0
    flip_conf: float = 0.2
    flip_targets: Tuple[int, ...] = (4, 5, 6, 7, 8, 9)
    # "single": each identity flipped at most once, mid-track; "independent": per detection
    flip_mode: str = "single"
    drop_rate: float = 0.0
    jitter_px: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.flip_targets = tuple(self.flip_targets)
        for name in ("flip_rate", "drop_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if any(t in PROTECTED_CLASSES or not 4 <= t <= 9 for t in self.flip_targets):
            raise ValueError("flip targets must be classes 4..9")
        if self.flip_mode not in ("single", "independent"):
            raise ValueError(f"unknown flip_mode {self.flip_mode!r}")


@dataclass(frozen=True)
class CorruptionRecord:
    frame: int
    index: int  # position in the original frame list
    kind: str  # flip | drop | jitter
    old_label: int
    new_label: int
    old_conf: float
    new_conf: float
    old_box: BoundingBox
    new_box: BoundingBox

    def to_line(self) -> str:
        ob, nb = self.old_box, self.new_box
        return ",".join(str(v) for v in (
            self.frame, self.index, self.kind, self.old_label, self.new_label,
            repr(self.old_conf), repr(self.new_conf),
            repr(ob.left), repr(ob.top), repr(ob.width), repr(ob.height),
            repr(nb.left), repr(nb.top), repr(nb.width), repr(nb.height)))

    @classmethod
    def from_line(cls, line: str) -> "CorruptionRecord":
        p = line.strip().split(",")
        if len(p) != 15:
            raise ValueError(f"expected 15 fields, got {len(p)}")
        f = [float(x) for x in p[7:]]
        return cls(int(p[0]), int(p[1]), p[2], int(p[3]), int(p[4]), float(p[5]), float(p[6]),
                   BoundingBox(*f[:4]), BoundingBox(*f[4:]))


def corrupt(
    fs: FrameSet,
    spec: CorruptionSpec,
    identities: Optional[Dict[Tuple[int, int], int]] = None,
) -> Tuple[FrameSet, List[CorruptionRecord]]:
    """Apply flips, drops and jitter.  Returns the corrupted copy and its journal.

    Single-flip mode needs ``identities`` ((frame, index) -> identity); without
    it every detection is its own identity.
    """
    rng = np.random.default_rng(spec.seed)
    frames = fs.frame_indices()

    flip_at = set()
    if spec.flip_rate > 0:
        if spec.flip_mode == "independent" or identities is None:
            for f in frames:
                for i in range(len(fs.frames[f])):
                    if rng.random() < spec.flip_rate:
                        flip_at.add((f, i))
        else:
            by_identity: Dict[int, List[Tuple[int, int]]] = {}
            for f in frames:
                for i in range(len(fs.frames[f])):
                    by_identity.setdefault(identities.get((f, i), -1 - len(by_identity)), []).append((f, i))
            for ident in sorted(by_identity):
                slots = by_identity[ident]
                if rng.random() < spec.flip_rate and len(slots) >= 3:
                    lo, hi = len(slots) // 4, max(len(slots) // 4 + 1, 3 * len(slots) // 4)
                    flip_at.add(slots[int(rng.integers(lo, hi))])

    out = FrameSet(fs.video_id)
    journal: List[CorruptionRecord] = []
    for f in frames:
        kept = []
        for i, d in enumerate(fs.frames[f]):
            if spec.drop_rate > 0 and rng.random() < spec.drop_rate:
                journal.append(CorruptionRecord(f, i, "drop", d.label, d.label, d.confidence,
                                                d.confidence, d.box, d.box))
                continue
            new = d
            if (f, i) in flip_at:
                choices = [t for t in spec.flip_targets if t != d.label]
                label = int(choices[int(rng.integers(len(choices)))])
                new = d.with_(label=label, confidence=spec.flip_conf)
                journal.append(CorruptionRecord(f, i, "flip", d.label, label, d.confidence,
                                                spec.flip_conf, d.box, d.box))
            if spec.jitter_px > 0:
                dx, dy = rng.uniform(-spec.jitter_px, spec.jitter_px, size=2)
                box = BoundingBox(d.box.left + float(dx), d.box.top + float(dy), d.box.width, d.box.height)
                journal.append(CorruptionRecord(f, i, "jitter", new.label, new.label, new.confidence,
                                                new.confidence, d.box, box))
                new = new.with_(box=box)
            kept.append(new)
        out.frames[f] = kept
    return out, journal


def apply_corruption(fs: FrameSet, journal: Sequence[CorruptionRecord]) -> FrameSet:
    """Replay a corruption journal on the original FrameSet."""
    slots: Dict[int, List[Optional[Detection]]] = {f: list(v) for f, v in fs.frames.items()}
    for rec in journal:
        d = slots[rec.frame][rec.index]
        if d is None:
            raise ValueError(f"journal touches dropped detection {rec.frame}/{rec.index}")
        if rec.kind == "drop":
            slots[rec.frame][rec.index] = None
        elif rec.kind == "flip":
            slots[rec.frame][rec.index] = d.with_(label=rec.new_label, confidence=rec.new_conf)
        elif rec.kind == "jitter":
            slots[rec.frame][rec.index] = d.with_(box=rec.new_box)
        else:
            raise ValueError(f"unknown corruption kind {rec.kind!r}")
    return FrameSet(fs.video_id, {f: [d for d in v if d is not None] for f, v in slots.items()})


@dataclass
class RecoveryReport:
    flips: int
    restored: int
    collateral: int
    protected_collateral: int

    @property
    def fraction(self) -> float:
        return self.restored / self.flips if self.flips else 1.0


def _key(d: Detection):
    return (d.box, d.label, d.confidence)


def score_recovery(original: FrameSet, refined: FrameSet, journal: Sequence[CorruptionRecord]) -> RecoveryReport:
    corrupted = apply_corruption(original, journal)
    touched = {(r.frame, r.index) for r in journal}
    flips = [r for r in journal if r.kind == "flip"]

    restored = 0
    for r in flips:
        dets = refined.frames.get(r.frame, [])
        boxes = {r.old_box, r.new_box}
        box_now = r.new_box
        for j in journal:
            if j.kind == "jitter" and (j.frame, j.index) == (r.frame, r.index):
                box_now = j.new_box
        boxes.add(box_now)
        if any(d.box in boxes and d.label == r.old_label for d in dets):
            restored += 1

    collateral = 0
    for f in original.frame_indices():
        have = Counter(_key(d) for d in refined.frames.get(f, []))
        for i, d in enumerate(original.frames[f]):
            if (f, i) in touched:
                continue
            if have[_key(d)] > 0:
                have[_key(d)] -= 1
            else:
                collateral += 1

    protected = 0
    for f in corrupted.frame_indices():
        have = Counter(_key(d) for d in refined.frames.get(f, []))
        for d in corrupted.frames[f]:
            if d.label not in PROTECTED_CLASSES:
                continue
            if have[_key(d)] > 0:
                have[_key(d)] -= 1
            else:
                protected += 1
    return RecoveryReport(len(flips), restored, collateral, protected)


def scenario_from_config(cfg: dict) -> Scenario:
    """Build a scenario from a ``scenario:`` config mapping."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", "random")
    seed = int(cfg.pop("seed", 0))
    if kind == "random":
        return random_scenario(seed, **cfg)
    if kind == "riders":
        return rider_scenario(seed, **cfg)
    raise ScenarioError(f"unknown scenario kind {kind!r}")
