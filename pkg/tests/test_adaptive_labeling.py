import pytest
from hypothesis import given, settings, strategies as st

from detrefine.adaptive_labeling import (
    Correction,
    RefineConfig,
    TrackStats,
    adaptive_threshold,
    apply_journal,
    label_change_ratio,
    refine_track,
    refine_video,
    refine_video_with_journal,
    track_stats,
)
from detrefine.core import BoundingBox, Detection, FrameSet, Origin
from detrefine.harness import CorruptionSpec, corrupt, generate, random_scenario
from detrefine.tracker import Observation, Track, initiate, run_video

SMALL = BoundingBox(10, 10, 30, 30)  # 900 px^2
LARGE = BoundingBox(10, 10, 80, 80)  # 6400 px^2


def make_track(labels, confs, box=SMALL, tid=1):
    """A track over frames 0..n-1 plus the FrameSet it indexes into."""
    fs = FrameSet(1)
    t = Track(tid, initiate(box))
    for f, (l, c) in enumerate(zip(labels, confs)):
        d = Detection(f, box, l, c)
        fs.frames[f] = [d]
        t.history.append(Observation(f, d, 0))
    return t, fs


def test_change_ratio_examples():
    assert label_change_ratio(make_track([2, 2, 2, 2], [0.5] * 4)[0]) == 0.0
    assert label_change_ratio(make_track([2, 3, 2, 3], [0.5] * 4)[0]) == 1.0
    assert label_change_ratio(make_track([2, 2, 3], [0.5] * 3)[0]) == 0.5
    assert label_change_ratio(make_track([7], [0.5])[0]) == 0.0
    with pytest.raises(ValueError):
        label_change_ratio([])


def test_track_stats_examples():
    s = track_stats(make_track([2, 2, 2, 2], [0.8] * 4)[0])
    assert (s.change_ratio, s.quality, s.consistent_label) == (0.0, pytest.approx(0.8, abs=1e-12), 2)
    assert s.mean_conf == pytest.approx(0.8, abs=1e-12)
    s = track_stats(make_track([2, 3, 2, 3], [0.5] * 4)[0])
    assert s.quality == 0.0
    s = track_stats(make_track([2, 2, 3], [0.9, 0.8, 0.4])[0])
    assert s.mean_conf == pytest.approx(0.7, abs=1e-12)
    assert s.change_ratio == 0.5
    assert s.quality == pytest.approx(0.35, abs=1e-12)
    assert s.consistent_label == 2


def test_vote_tie_goes_to_lowest_class():
    s = track_stats(make_track([6, 4], [0.5, 0.5])[0])
    assert s.consistent_label == 4


@pytest.mark.parametrize("mean_conf,quality,expected", [
    (1.0, 0.5, 0.3),
    (0.7, 0.4, 0.4455),
    (0.5, 0.5, 0.475),
])
def test_adaptive_threshold_examples(mean_conf, quality, expected):
    stats = TrackStats(mean_conf, 0.0, quality, 2)
    assert adaptive_threshold(stats, RefineConfig()) == pytest.approx(expected, abs=1e-12)


def test_uniform_track_no_corrections():
    t, fs = make_track([2, 2, 2], [0.9, 0.9, 0.9])
    assert refine_track(t, fs.frames) == []


def test_low_quality_track_untouched():
    t, fs = make_track([5, 5, 4], [0.9, 0.9, 0.2])
    s = track_stats(t)
    assert s.quality == pytest.approx((1 - 0.5) * (2.0 / 3), abs=1e-12)
    assert refine_track(t, fs.frames) == []


def test_full_hand_trace_relabels():
    t, fs = make_track([5, 5, 5, 4], [0.9, 0.9, 0.9, 0.2])
    s = track_stats(t)
    assert s.change_ratio == pytest.approx(1 / 3, abs=1e-12)
    assert s.mean_conf == pytest.approx(0.725, abs=1e-12)
    assert s.quality == pytest.approx(0.48333333333333, abs=1e-12)
    assert adaptive_threshold(s) == pytest.approx((0.3 + 0.35 * 0.275) * (1.5 - 0.725 * 2 / 3), abs=1e-12)
    assert adaptive_threshold(s) == pytest.approx(0.4029, abs=1e-4)
    journal = refine_track(t, fs.frames)
    assert [c.action for c in journal] == ["relabel"]
    d = fs.frames[3][0]
    assert d.label == 5 and d.confidence == pytest.approx(0.02, abs=1e-15)
    assert d.origin is Origin.RELABELED


def test_large_box_removed():
    t, fs = make_track([5, 5, 5, 4], [0.9, 0.9, 0.9, 0.2], box=LARGE)
    journal = refine_track(t, fs.frames)
    assert [c.action for c in journal] == ["remove"]
    assert fs.frames[3] == [None]


def test_spatial_match_blocks_relabel():
    t, fs = make_track([5, 5, 5, 4], [0.9, 0.9, 0.9, 0.2])
    fs.frames[3].append(Detection(3, BoundingBox(10, 10, 30, 31), 5, 0.7))
    journal = refine_track(t, fs.frames)
    assert [c.action for c in journal] == ["none"]
    assert fs.frames[3][0].label == 4


def test_weak_spatial_match_does_not_block():
    t, fs = make_track([5, 5, 5, 4], [0.9, 0.9, 0.9, 0.2])
    fs.frames[3].append(Detection(3, BoundingBox(10, 10, 30, 31), 5, 0.3))
    assert [c.action for c in refine_track(t, fs.frames)] == ["relabel"]


def test_protected_deviation_not_touched():
    t, fs = make_track([5, 5, 5, 2], [0.9, 0.9, 0.9, 0.05])
    assert refine_track(t, fs.frames) == []


def test_refine_video_vacuous():
    fs = FrameSet(1, {0: [Detection(0, SMALL, 4, 0.1)]})
    assert refine_video(fs, []).frames == fs.frames


def test_journal_replay_and_lines():
    t, fs = make_track([6, 6, 6, 6, 7, 6], [0.8] * 4 + [0.15, 0.8])
    out, journal = refine_video_with_journal(fs, [t])
    assert len(journal) == 1
    assert apply_journal(fs, journal).frames == out.frames
    again = [Correction.from_line(c.to_line()) for c in journal]
    assert apply_journal(fs, again).frames == out.frames


labels = st.integers(1, 9)
confs = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(labels, confs, st.booleans()), min_size=1, max_size=12))
def test_eligibility_gates_property(items):
    box_small, box_large = SMALL, LARGE
    fs = FrameSet(1)
    t = Track(1, initiate(SMALL))
    for f, (l, c, big) in enumerate(items):
        d = Detection(f, box_large if big else box_small, l, c)
        fs.frames[f] = [d]
        t.history.append(Observation(f, d, 0))
    stats = track_stats(t)
    theta = adaptive_threshold(stats)
    before = {f: v[0] for f, v in fs.frames.items()}
    out = refine_video(fs, [t])
    for f, d in before.items():
        after = out.frames[f][0] if out.frames[f] else None
        if d.label in (1, 2, 3) or d.confidence >= theta or stats.quality < 0.4:
            assert after == d
        elif after is not None and after != d:
            assert after.confidence < d.confidence


def test_idempotent_on_harness():
    sc = random_scenario(2, num_actors=10, num_frames=60)
    fs, _, ids = generate(sc)
    cfs, _ = corrupt(fs, CorruptionSpec(flip_rate=1.0, seed=3), ids)
    once = refine_video(cfs, run_video(cfs))
    twice = refine_video(once, run_video(once))
    assert twice.frames == once.frames
