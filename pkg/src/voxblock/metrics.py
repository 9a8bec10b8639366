"""Synaptic cleft detection score and PSF density simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .pyramid import downscale
from .sdt import distance_to
from .volume import VoxelSize, VoxelVolume


@dataclass(frozen=True)
class CleftScore:
    fpd_nm: float
    fnd_nm: float
    cremi_score_nm: float
    n_pred_pos: int
    n_true_pos: int
    # set when one side is empty while the other is not; the affected
    # distance is +inf
    undefined: bool = False

    def to_json(self) -> dict:
        out = {
            "fpd": self.fpd_nm,
            "fnd": self.fnd_nm,
            "cremi_score": self.cremi_score_nm,
            "n_pred_pos": self.n_pred_pos,
            "n_true_pos": self.n_true_pos,
        }
        if self.undefined:
            out["undefined"] = True
        return out


def binarize(labels, ignore_value: Optional[int] = None) -> np.ndarray:
    """Any nonzero label is positive, except ``ignore_value``."""
    data = np.asarray(labels.data if isinstance(labels, VoxelVolume) else labels)
    positive = data != 0
    if ignore_value is not None:
        positive &= data != ignore_value
    return positive


def _mean_distance(sources: np.ndarray, sites: np.ndarray, spacing) -> float:
    if not sources.any():
        return 0.0
    if not sites.any():
        return math.inf
    return float(distance_to(sites, spacing)[sources].mean())


def cleft_score(pred: VoxelVolume, truth: VoxelVolume, voxel_size=None,
                ignore: Optional[VoxelVolume] = None,
                ignore_value: Optional[int] = None) -> CleftScore:
    """Mean of the average false positive and false negative distances.

    FPD averages, over predicted positives, the distance to the nearest true
    positive; FND swaps the roles. Voxels under ``ignore`` are dropped from
    both positive sets. An empty side contributes 0 for its own average; if
    exactly one side is empty the other distance is ``inf`` and the score is
    flagged ``undefined``.
    """
    if pred.roi.shape != truth.roi.shape or pred.roi != truth.roi:
        raise ValueError(f"pred {pred.roi} and truth {truth.roi} differ")
    if ignore is not None and ignore.roi != pred.roi:
        raise ValueError(f"ignore {ignore.roi} differs from {pred.roi}")
    spacing = VoxelSize.of(voxel_size if voxel_size is not None else truth.voxel_size).as_array()
    p = binarize(pred)
    t = binarize(truth, ignore_value)
    if ignore is not None:
        keep = np.asarray(ignore.data) == 0
        p &= keep
        t &= keep
    fpd = _mean_distance(p, t, spacing)
    fnd = _mean_distance(t, p, spacing)
    return CleftScore(
        fpd_nm=fpd,
        fnd_nm=fnd,
        cremi_score_nm=(fpd + fnd) / 2,
        n_pred_pos=int(p.sum()),
        n_true_pos=int(t.sum()),
        undefined=math.isinf(fpd) or math.isinf(fnd),
    )


def gaussian_kernel(sigma_voxels: float, truncate: float = 4.0) -> np.ndarray:
    """Sampled Gaussian truncated at ``truncate`` sigma, normalized to unit sum."""
    radius = int(math.ceil(truncate * sigma_voxels))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma_voxels) ** 2)
    return kernel / kernel.sum()


def psf_density(pred: VoxelVolume, sigma_nm, output_voxel_size=None, truncate: float = 4.0) -> VoxelVolume:
    """Blur predictions with an anisotropic Gaussian PSF, then mean-downsample.

    ``sigma_nm`` is per axis (z, y, x). ``output_voxel_size`` must be an
    integer multiple of the input voxel size per axis. Voxels beyond the
    volume are treated as zero, so mass near the border leaks out.
    """
    sigma_nm = tuple(float(s) for s in sigma_nm)
    if len(sigma_nm) != 3 or min(sigma_nm) <= 0:
        raise ValueError(f"sigma must be 3 positive values, got {sigma_nm}")
    voxel_size = pred.voxel_size
    data = np.asarray(pred.data, dtype=np.float64)
    for axis, (s, v) in enumerate(zip(sigma_nm, voxel_size.as_tuple())):
        data = ndimage.correlate1d(data, gaussian_kernel(s / v, truncate), axis=axis, mode="constant")
    blurred = VoxelVolume(pred.roi, data.astype(np.float32), voxel_size)
    if output_voxel_size is None:
        return blurred
    ratio = np.asarray(VoxelSize.of(output_voxel_size).as_tuple()) / voxel_size.as_array()
    factors = np.rint(ratio).astype(int)
    if np.any(factors < 1) or not np.allclose(ratio, factors):
        raise ValueError(f"output voxel size must be an integer multiple of {voxel_size}")
    return downscale(VoxelVolume(pred.roi, data, voxel_size), factors, dtype=np.float32)

