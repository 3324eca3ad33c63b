import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from _oracles import ap_from_flags, map_oracle
from detrefine.core import BoundingBox, Detection, FrameSet
from detrefine.evaluation import GroundTruth, average_precision, evaluate, match_frame

B = BoundingBox(0, 0, 10, 10)


def gt(box=B, label=2, frame=0, vid=1):
    return GroundTruth(vid, frame, box, label)


def test_match_identical():
    d = Detection(0, B, 2, 0.9)
    assert match_frame([d], [gt()]) == [(d, gt(), True)]


def test_match_below_threshold():
    d = Detection(0, BoundingBox(0, 0, 10, 4), 2, 0.9)  # iou 0.4
    assert match_frame([d], [gt()]) == [(d, None, False)]


def test_match_rank_order_wins():
    g = gt(BoundingBox(0, 0, 100, 100))
    a = Detection(0, BoundingBox(0, 0, 100, 90), 2, 0.9)   # iou 0.9
    b = Detection(0, BoundingBox(0, 0, 100, 95), 2, 0.8)   # iou 0.95
    res = match_frame([b, a], [g])
    assert res == [(a, g, True), (b, None, False)]


@pytest.mark.parametrize("flags,num_gt,expected", [
    ([True], 1, 1.0),
    ([False], 1, 0.0),
    ([True, False], 1, 1.0),
    ([False, True, True], 2, 2 / 3),
    ([], 3, 0.0),
])
def test_ap_examples(flags, num_gt, expected):
    assert average_precision(flags, num_gt) == pytest.approx(expected, abs=1e-12)


def test_ap_absent_is_nan():
    assert math.isnan(average_precision([True], 0))


def test_perfect_predictions():
    gts = [gt(label=2), gt(BoundingBox(50, 50, 10, 10), label=5, frame=1)]
    fs = FrameSet.from_detections(1, [Detection(g.frame, g.box, g.label, 1.0) for g in gts])
    rep = evaluate(fs, gts)
    assert rep.per_class_ap == {2: 1.0, 5: 1.0}
    assert rep.map50 == 1.0
    assert rep.classes_absent == {1, 3, 4, 6, 7, 8, 9}


def test_empty_predictions():
    rep = evaluate(FrameSet(1), [gt()])
    assert rep.per_class_ap == {2: 0.0}
    assert rep.counts[2].fn == 1


def test_unknown_video_reported():
    rep = evaluate(FrameSet(1), [gt(vid=7)])
    assert rep.unknown_videos == {7}


def test_injected_fp_above_tps():
    gts = [gt(frame=0), gt(frame=1)]
    dets = [Detection(0, B, 2, 0.8), Detection(1, B, 2, 0.7), Detection(2, B, 2, 0.95)]
    rep = evaluate(FrameSet.from_detections(1, dets), gts)
    assert rep.per_class_ap[2] == pytest.approx(ap_from_flags([False, True, True], 2), abs=1e-12)
    assert rep.per_class_ap[2] == pytest.approx(2 / 3, abs=1e-12)


def test_records_and_table():
    rep = evaluate(FrameSet.from_detections(1, [Detection(0, B, 2, 1.0)]), [gt()])
    assert rep.records() == ["2,1.0"]
    assert "absent" in rep.table()


flag_st = st.lists(st.booleans(), max_size=30)


@settings(max_examples=300, deadline=None)
@given(flag_st, st.integers(1, 10))
def test_ap_matches_oracle(flags, extra):
    num_gt = sum(flags) + extra - 1 or 1
    assert average_precision(flags, num_gt) == pytest.approx(ap_from_flags(flags, num_gt), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=20), st.integers(1, 5))
def test_fp_on_top_never_increases_ap(flags, extra):
    num_gt = sum(flags) + extra
    assert average_precision([False] + flags, num_gt) <= average_precision(flags, num_gt) + 1e-12
    assert average_precision(flags + [False], num_gt) <= average_precision(flags, num_gt) + 1e-12


def random_instance(rng):
    gts, preds = [], []
    for frame in range(rng.randint(1, 5)):
        for _ in range(rng.randint(0, 6)):
            gts.append((frame, rng.randint(1, 3), (rng.randint(0, 40), rng.randint(0, 40), rng.randint(5, 20), rng.randint(5, 20))))
        for _ in range(rng.randint(0, 6)):
            if gts and rng.random() < 0.6:
                f, l, (x, y, w, h) = rng.choice(gts)
                if f == frame:
                    box = (x + rng.uniform(-4, 4), y + rng.uniform(-4, 4), w, h)
                    preds.append((frame, l if rng.random() < 0.8 else rng.randint(1, 3), rng.random(), box))
                    continue
            preds.append((frame, rng.randint(1, 3), rng.random(),
                          (rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(5, 20), rng.uniform(5, 20))))
    return preds, gts


def to_inputs(preds, gts):
    dets = [Detection(f, BoundingBox(*b), l, c) for f, l, c, b in preds]
    return FrameSet.from_detections(1, dets), [GroundTruth(1, f, BoundingBox(*b), l) for f, l, b in gts]


def test_oracle_equivalence_random():
    rng = random.Random(11)
    for _ in range(300):
        preds, gts = random_instance(rng)
        aps, mean = map_oracle(preds, gts)
        fs, g = to_inputs(preds, gts)
        rep = evaluate(fs, g)
        assert rep.per_class_ap.keys() == aps.keys()
        for k in aps:
            assert rep.per_class_ap[k] == pytest.approx(aps[k], abs=1e-9)
        assert rep.map50 == pytest.approx(mean, abs=1e-9)


def test_frame_and_input_order_invariance():
    rng = random.Random(5)
    for _ in range(50):
        preds, gts = random_instance(rng)
        fs, g = to_inputs(preds, gts)
        shuffled = list(preds)
        rng.shuffle(shuffled)
        fs2, _ = to_inputs(shuffled, gts)
        g2 = list(g)
        rng.shuffle(g2)
        assert evaluate(fs, g).map50 == evaluate(fs2, g2).map50
