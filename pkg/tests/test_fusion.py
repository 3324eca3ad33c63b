import pytest
from hypothesis import given, settings, strategies as st

from detrefine.core import BoundingBox, Detection
from detrefine.fusion import FusionConfig, FusionConfigError, fuse_frame

B = BoundingBox(10, 20, 30, 40)


def det(box, conf, label=2):
    return Detection(0, box, label, conf)


def test_single_source_passthrough():
    out = fuse_frame([[det(B, 0.77)]])
    assert out == [det(B, 0.77)]


def test_identical_boxes_average_confidence():
    out = fuse_frame([[det(B, 0.6)], [det(B, 0.8)]])
    assert len(out) == 1
    assert out[0].box == B
    assert out[0].confidence == pytest.approx(0.7, abs=1e-12)


def test_disjoint_boxes_halved():
    other = BoundingBox(500, 500, 30, 40)
    out = fuse_frame([[det(B, 0.6)], [det(other, 0.8)]])
    assert [d.confidence for d in out] == pytest.approx([0.4, 0.3], abs=1e-12)
    assert {d.box for d in out} == {B, other}


def test_classes_do_not_mix():
    out = fuse_frame([[det(B, 0.6, 2)], [det(B, 0.8, 3)]])
    assert sorted(d.label for d in out) == [2, 3]


def test_weights_mismatch():
    with pytest.raises(FusionConfigError):
        fuse_frame([[det(B, 0.5)], []], FusionConfig(source_weights=[1.0]))
    with pytest.raises(FusionConfigError):
        FusionConfig(source_weights=[1.0, -1.0])
    with pytest.raises(FusionConfigError):
        FusionConfig(iou_thr=1.0)


def test_empty():
    assert fuse_frame([[], []]) == []


box_st = st.builds(BoundingBox, st.integers(0, 60), st.integers(0, 60), st.integers(5, 40), st.integers(5, 40))
src_st = st.lists(st.builds(det, box_st, st.floats(0.01, 1.0), st.integers(1, 3)), max_size=5)


@settings(max_examples=200, deadline=None)
@given(st.lists(src_st, min_size=1, max_size=4))
def test_hull_and_confidence_bounds(sources):
    out = fuse_frame(sources)
    members = [d for s in sources for d in s]
    for f in out:
        same = [d for d in members if d.label == f.label]
        assert f.confidence <= max(d.confidence for d in same) + 1e-12
        for attr in ("left", "top", "right", "bottom"):
            vals = [getattr(d.box, attr) for d in same]
            assert min(vals) - 1e-9 <= getattr(f.box, attr) <= max(vals) + 1e-9
    confs = [d.confidence for d in out]
    assert confs == sorted(confs, reverse=True)


@settings(max_examples=100, deadline=None)
@given(st.lists(src_st, min_size=2, max_size=4), st.randoms())
def test_source_permutation_invariance(sources, rnd):
    perm = list(sources)
    rnd.shuffle(perm)
    key = lambda d: (d.label, d.box.xyxy(), d.confidence)
    a = sorted(fuse_frame(sources), key=key)
    b = sorted(fuse_frame(perm), key=key)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.label == y.label
        assert x.confidence == pytest.approx(y.confidence, abs=1e-12)
        assert x.box.xyxy() == pytest.approx(y.box.xyxy(), abs=1e-9)
