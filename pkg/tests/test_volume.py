import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxblock.volume import Roi, VoxelSize, VoxelVolume, read_region, roi_grow, roi_intersect

triples = st.tuples(*[st.integers(-20, 20)] * 3)
shapes = st.tuples(*[st.integers(0, 12)] * 3)
contexts = st.tuples(*[st.integers(0, 6)] * 3)
rois = st.builds(Roi, triples, shapes)


def test_grow_example():
    r = roi_grow(Roi((0, 0, 0), (8, 32, 32)), (4, 16, 16))
    assert r == Roi((-4, -16, -16), (16, 64, 64))


def test_grow_zero_and_empty():
    r = Roi((1, 2, 3), (4, 5, 6))
    assert roi_grow(r, (0, 0, 0)) == r
    assert roi_grow(Roi((0, 0, 0), (0, 5, 5)), (1, 1, 1)).shape == (2, 7, 7)


def test_intersect_examples():
    a = Roi((0, 0, 0), (10, 10, 10))
    assert roi_intersect(a, Roi((5, 5, 5), (10, 10, 10))) == Roi((5, 5, 5), (5, 5, 5))
    assert roi_intersect(a, a) == a
    assert roi_intersect(a, Roi((20, 0, 0), (3, 3, 3))).empty()


def test_negative_shape_rejected():
    with pytest.raises(ValueError):
        Roi((0, 0, 0), (1, -1, 1))
    with pytest.raises(ValueError):
        VoxelSize(0, 4, 4)


@given(rois, contexts, contexts)
def test_grow_composes(r, c1, c2):
    both = tuple(a + b for a, b in zip(c1, c2))
    assert roi_grow(roi_grow(r, c1), c2) == roi_grow(r, both)


def _same_region(a, b):
    return (a.empty() and b.empty()) or a == b


@given(rois, rois, rois)
def test_intersect_algebra(a, b, c):
    assert _same_region(roi_intersect(a, b), roi_intersect(b, a))
    assert _same_region(roi_intersect(roi_intersect(a, b), c), roi_intersect(a, roi_intersect(b, c)))
    assert _same_region(roi_intersect(a, a), a)


def test_read_region_inside_and_disjoint(rng):
    data = rng.integers(0, 255, (6, 7, 8)).astype(np.uint8)
    v = VoxelVolume.from_array(data, offset=(10, 10, 10))
    sub = read_region(v, Roi((11, 12, 13), (2, 3, 4)))
    np.testing.assert_array_equal(sub.data, data[1:3, 2:5, 3:7])
    far = read_region(v, Roi((0, 0, 0), (2, 2, 2)), fill=9)
    assert (far.data == 9).all()


def test_read_region_corner_membership():
    v = VoxelVolume.from_array(np.ones((4, 4, 4), np.uint8))
    roi = Roi((-2, 2, -1), (4, 4, 3))
    out = read_region(v, roi, fill=0).data
    for idx in np.ndindex(*roi.shape):
        p = [o + i for o, i in zip(roi.offset, idx)]
        inside = all(0 <= c < 4 for c in p)
        assert out[idx] == (1 if inside else 0)


@given(st.integers(0, 2**32 - 1), st.integers(0, 255), st.integers(0, 255), triples, shapes)
def test_read_region_fill_only_outside(seed, f1, f2, offset, shape):
    rng = np.random.default_rng(seed)
    v = VoxelVolume.from_array(rng.integers(0, 255, (5, 4, 3)).astype(np.uint8), offset=(1, -2, 0))
    roi = Roi(offset, shape)
    a, b = read_region(v, roi, f1).data, read_region(v, roi, f2).data
    inside = read_region(VoxelVolume.from_array(np.ones((5, 4, 3), np.uint8), offset=(1, -2, 0)), roi, 0).data == 1
    np.testing.assert_array_equal(a[inside], b[inside])


def test_read_region_whole_is_identity(rng):
    v = VoxelVolume.from_array(rng.random((3, 4, 5)), offset=(-1, 2, 3), voxel_size=(40, 4, 4))
    assert read_region(v, v.roi, 0.0) == v


def test_volume_is_read_only(rng):
    v = VoxelVolume.from_array(rng.random((2, 2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1


def test_volume_shape_mismatch():
    with pytest.raises(ValueError):
        VoxelVolume(Roi((0, 0, 0), (2, 2, 2)), np.zeros((2, 2, 3)))
