import math

import numpy as np
import pytest

from oracles import brute_cleft, direct_gaussian_blur
from voxblock.metrics import binarize, cleft_score, gaussian_kernel, psf_density
from voxblock.volume import VoxelSize, VoxelVolume

ANISO = VoxelSize(40, 4, 4)


def vol(data, offset=(0, 0, 0), voxel_size=ANISO):
    return VoxelVolume.from_array(np.asarray(data), offset, voxel_size)


def points(shape, *coords):
    a = np.zeros(shape, np.uint8)
    for c in coords:
        a[c] = 1
    return a


def test_identical_is_zero():
    a = points((2, 3, 3), (0, 1, 1), (1, 2, 0))
    s = cleft_score(vol(a), vol(a))
    assert (s.fpd_nm, s.fnd_nm, s.cremi_score_nm) == (0, 0, 0)
    assert s.n_pred_pos == s.n_true_pos == 2


def test_neighbour_example():
    s = cleft_score(vol(points((1, 1, 4), (0, 0, 1))), vol(points((1, 1, 4), (0, 0, 0))))
    assert (s.fpd_nm, s.fnd_nm, s.cremi_score_nm) == (4, 4, 4)


def test_false_positive_example():
    pred = points((1, 1, 4), (0, 0, 0), (0, 0, 3))
    truth = points((1, 1, 4), (0, 0, 0))
    s = cleft_score(vol(pred), vol(truth))
    assert (s.fpd_nm, s.fnd_nm, s.cremi_score_nm) == (6, 0, 3)


def test_empty_conventions():
    empty = np.zeros((1, 2, 2), np.uint8)
    one = points((1, 2, 2), (0, 0, 0))
    both = cleft_score(vol(empty), vol(empty))
    assert both.cremi_score_nm == 0 and not both.undefined
    no_truth = cleft_score(vol(one), vol(empty))
    assert math.isinf(no_truth.fpd_nm) and no_truth.fnd_nm == 0 and no_truth.undefined
    no_pred = cleft_score(vol(empty), vol(one))
    assert no_pred.fpd_nm == 0 and math.isinf(no_pred.fnd_nm) and no_pred.undefined
    assert no_pred.to_json()["undefined"] is True


def test_matches_brute_force(rng):
    for _ in range(50):
        shape = (3, 6, 7)
        pred = (rng.random(shape) < 0.1).astype(np.uint8)
        truth = (rng.random(shape) < 0.1).astype(np.uint8)
        s = cleft_score(vol(pred), vol(truth))
        fpd, fnd, score = brute_cleft(pred, truth, ANISO.as_tuple())
        assert s.fpd_nm == pytest.approx(fpd, abs=1e-6)
        assert s.fnd_nm == pytest.approx(fnd, abs=1e-6)
        assert s.cremi_score_nm == pytest.approx(score, abs=1e-6)


def test_symmetry_and_translation(rng):
    for _ in range(20):
        pred = (rng.random((4, 8, 8)) < 0.15).astype(np.uint8)
        truth = (rng.random((4, 8, 8)) < 0.15).astype(np.uint8)
        a = cleft_score(vol(pred), vol(truth))
        b = cleft_score(vol(truth), vol(pred))
        assert (a.fpd_nm, a.fnd_nm) == (b.fnd_nm, b.fpd_nm)
        moved = cleft_score(vol(pred, (7, -3, 100)), vol(truth, (7, -3, 100)))
        assert (moved.fpd_nm, moved.fnd_nm) == (a.fpd_nm, a.fnd_nm)


def test_ignore_mask_drops_voxels():
    pred = points((1, 1, 6), (0, 0, 0), (0, 0, 5))
    truth = points((1, 1, 6), (0, 0, 0))
    ignore = points((1, 1, 6), (0, 0, 5))
    s = cleft_score(vol(pred), vol(truth), ignore=vol(ignore))
    assert s.cremi_score_nm == 0 and s.n_pred_pos == 1


def test_multilabel_truth_binarized():
    truth = np.array([[[0, 3, 7, 255]]], np.uint64)
    np.testing.assert_array_equal(binarize(truth), [[[False, True, True, True]]])
    np.testing.assert_array_equal(binarize(truth, ignore_value=255), [[[False, True, True, False]]])
    pred = np.array([[[0, 1, 1, 0]]], np.uint8)
    assert cleft_score(vol(pred), vol(truth), ignore_value=255).cremi_score_nm == 0


def test_roi_mismatch_rejected():
    a = np.zeros((1, 2, 2), np.uint8)
    with pytest.raises(ValueError):
        cleft_score(vol(a), vol(a, (1, 0, 0)))
    with pytest.raises(ValueError):
        cleft_score(vol(a), vol(np.zeros((1, 2, 3), np.uint8)))


def test_kernel_normalized():
    for sigma in (0.3, 1.0, 2.5, 17.0):
        k = gaussian_kernel(sigma)
        assert k.sum() == pytest.approx(1, abs=1e-12)
        assert len(k) == 2 * math.ceil(4 * sigma) + 1


def test_psf_mass_preserved():
    data = np.zeros((16, 32, 32), np.float32)
    data[8, 16, 16] = 1
    pred = vol(data, voxel_size=(40, 4, 4))
    out = psf_density(pred, (80, 16, 16), output_voxel_size=(80, 16, 16))
    ratio = np.prod(out.voxel_size.as_tuple()) / np.prod(pred.voxel_size.as_tuple())
    assert float(out.data.sum()) * ratio == pytest.approx(1.0, rel=1e-3)
    assert out.voxel_size == VoxelSize(80, 16, 16)
    assert out.shape == (8, 8, 8)


def test_psf_uniform_interior():
    # kernel radius is 4 voxels in z and 8 in-plane
    out = psf_density(vol(np.full((12, 24, 24), 3.0)), (40, 8, 8)).data
    np.testing.assert_allclose(out[4:-4, 8:-8, 8:-8], 3.0, rtol=1e-6)


def test_psf_matches_direct_convolution():
    data = np.zeros((32, 32, 32))
    data[16, 16, 10] = 1.0
    data[16, 16, 22] = 0.5
    for sigma in ((40, 8, 8), (80, 12, 16)):
        got = psf_density(vol(data), sigma).data
        want = direct_gaussian_blur(data, [s / v for s, v in zip(sigma, (40, 4, 4))])
        np.testing.assert_allclose(got, want, atol=1e-5)


def test_psf_maximum_moves_with_sigma():
    data = np.zeros((1, 1, 64))
    data[0, 0, 20] = 1.0
    data[0, 0, 30] = 1.0
    narrow = psf_density(vol(data), (40, 4, 4)).data[0, 0]
    wide = psf_density(vol(data), (40, 4, 40)).data[0, 0]
    assert narrow.argmax() in (20, 30)
    assert 22 <= wide.argmax() <= 28


def test_psf_linear(rng):
    data = rng.random((6, 10, 10))
    a = psf_density(vol(data), (50, 6, 6)).data.astype(np.float64)
    b = psf_density(vol(2.5 * data), (50, 6, 6)).data.astype(np.float64)
    np.testing.assert_allclose(b, 2.5 * a, atol=1e-6)


def test_psf_rejects_bad_arguments():
    v = vol(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        psf_density(v, (0, 1, 1))
    with pytest.raises(ValueError):
        psf_density(v, (40, 4, 4), output_voxel_size=(60, 4, 4))
