import numpy as np
import pytest

from oracles import brute_sedt
from voxblock.sdt import EmptyClassError, sedt, stdt, stdt_target, threshold_to_labels
from voxblock.volume import VoxelSize, VoxelVolume

ANISO = VoxelSize(40, 4, 4)


def vol(data, voxel_size=ANISO):
    return VoxelVolume.from_array(np.asarray(data), voxel_size=voxel_size)


def two_class(rng, shape, p=0.3):
    while True:
        labels = (rng.random(shape) < p).astype(np.uint8)
        if 0 < labels.sum() < labels.size:
            return labels


def test_single_voxel_line():
    labels = np.zeros((1, 1, 5), np.uint8)
    labels[0, 0, 2] = 1
    out = sedt(vol(labels))
    assert out.dtype == np.float32
    np.testing.assert_array_equal(out.data[0, 0], [-8, -4, 4, -4, -8])


def test_adjacent_pair_along_z():
    labels = np.zeros((4, 3, 3), np.uint8)
    labels[1:3, 1, 1] = 1
    out = sedt(vol(labels)).data
    assert out[1, 1, 1] >= 4 and out[2, 1, 1] >= 4
    assert out[0, 1, 1] == -40 and out[3, 1, 1] == -40


def test_checkerboard_in_plane():
    y, x = np.mgrid[:6, :6]
    labels = np.broadcast_to((y + x) % 2, (3, 6, 6)).astype(np.uint8)
    np.testing.assert_array_equal(np.abs(sedt(vol(labels)).data), 4)


def test_matches_brute_force(rng):
    for _ in range(30):
        shape = tuple(rng.integers(1, 9, 3))
        if np.prod(shape) < 2:
            continue
        spacing = tuple(rng.uniform(0.5, 50, 3))
        labels = two_class(rng, shape, rng.uniform(0.05, 0.9))
        got = sedt(vol(labels, spacing), dtype=np.float64).data
        np.testing.assert_allclose(got, brute_sedt(labels, spacing), atol=1e-6, rtol=0)


def test_antisymmetric_under_inversion(rng):
    for _ in range(20):
        labels = two_class(rng, (5, 7, 6))
        a = sedt(vol(labels), dtype=np.float64).data
        b = sedt(vol(1 - labels), dtype=np.float64).data
        np.testing.assert_array_equal(a, -b)


def test_voxel_size_taken_from_volume_or_argument():
    labels = np.zeros((1, 1, 3), np.uint8)
    labels[0, 0, 0] = 1
    assert sedt(vol(labels, (1, 1, 10))).data[0, 0, 2] == -20
    assert sedt(vol(labels), voxel_size=(1, 1, 1)).data[0, 0, 2] == -2


@pytest.mark.parametrize("value", [0, 1])
def test_single_class_rejected(value):
    with pytest.raises(EmptyClassError):
        sedt(vol(np.full((2, 2, 2), value, np.uint8)))


def test_stdt_values():
    s = 50.0
    out = stdt(vol(np.array([[[0.0, s, -4 * s]]], np.float32)), s).data[0, 0]
    assert out[0] == 0
    assert out[1] == pytest.approx(0.76159416, abs=1e-7)
    assert out[2] == pytest.approx(-0.9993293, abs=1e-7)
    assert out.dtype == np.float32


def test_stdt_monotone_and_bounded(rng):
    values = np.sort(rng.uniform(-300, 300, 1000)).reshape(1, 1, -1)
    out = stdt(vol(values), 50).data.ravel()
    assert np.all(np.diff(out) >= 0)
    assert np.all(np.abs(out) <= 1)
    assert np.all(np.sign(out) == np.sign(values.ravel()))


def test_stdt_rejects_bad_scale():
    with pytest.raises(ValueError):
        stdt(vol(np.zeros((1, 1, 1), np.float32)), 0)


def test_threshold_examples():
    v = vol(np.array([[[-0.5, -0.1, 0.0, 0.3]]], np.float32))
    np.testing.assert_array_equal(threshold_to_labels(v).data[0, 0], [0, 0, 0, 1])
    assert not threshold_to_labels(v, 1.0).data.any()
    assert threshold_to_labels(v, -1.0).data.all()


def test_round_trip_exhaustive_small():
    # every two-class labelling of a (1, 2, 3) volume
    for bits in range(1, 2 ** 6 - 1):
        labels = np.array([(bits >> i) & 1 for i in range(6)], np.uint8).reshape(1, 2, 3)
        for s in (1, 50, 500):
            back = threshold_to_labels(stdt(sedt(vol(labels)), s), 0)
            np.testing.assert_array_equal(back.data, labels)


def test_target_saturates_single_class():
    ones = vol(np.ones((2, 2, 2), np.uint8))
    assert np.all(stdt_target(ones).data == 1)
    assert np.all(stdt_target(ones.with_data(np.zeros((2, 2, 2), np.uint8))).data == -1)


def test_target_matches_composition(rng):
    labels = vol(two_class(rng, (3, 8, 8)))
    np.testing.assert_array_equal(stdt_target(labels, 50).data, stdt(sedt(labels), 50).data)
