"""Scale pyramids and low-resolution foreground masks."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .n5 import N5Container, N5Dataset
from .volume import Roi, VoxelVolume, roi_intersect

log = logging.getLogger(__name__)


def _factors(factors) -> tuple:
    factors = tuple(int(f) for f in factors)
    if len(factors) != 3 or min(factors) < 1:
        raise ValueError(f"downscale factors must be 3 integers >= 1, got {factors}")
    return factors


def _block_sums(data: np.ndarray, factors) -> tuple:
    """Per-cell sums and in-bounds counts, padding ragged edges with zeros."""
    padded_shape = tuple(-(-s // f) * f for s, f in zip(data.shape, factors))
    pad = [(0, p - s) for p, s in zip(padded_shape, data.shape)]
    values = np.pad(data.astype(np.float64), pad)
    counts = np.pad(np.ones(data.shape), pad)
    shape = []
    for n, f in zip(padded_shape, factors):
        shape += [n // f, f]
    sums = values.reshape(shape).sum(axis=(1, 3, 5))
    n = counts.reshape(shape).sum(axis=(1, 3, 5))
    return sums, n


def downscale(volume: VoxelVolume, factors, dtype=None) -> VoxelVolume:
    """Mean pooling over ``factors``-sized cells.

    Edge cells that stick out of the volume average their in-bounds voxels
    only. The output offset is ``floor(offset / factors)``, so use
    factor-aligned offsets for exact alignment.
    """
    factors = _factors(factors)
    sums, counts = _block_sums(np.asarray(volume.data), factors)
    mean = sums / counts
    if dtype is None:
        dtype = volume.dtype if volume.dtype.kind == "f" else np.float32
    dtype = np.dtype(dtype)
    if dtype.kind in "ui":
        mean = np.rint(mean)
    roi = Roi(tuple(o // f for o, f in zip(volume.roi.offset, factors)), mean.shape)
    return VoxelVolume(roi, mean.astype(dtype), volume.voxel_size.scaled(factors))


def downscale_labels(volume: VoxelVolume, factors) -> VoxelVolume:
    """Majority vote over cells for binary labels; ties count as foreground."""
    factors = _factors(factors)
    sums, counts = _block_sums(np.asarray(volume.data) != 0, factors)
    roi = Roi(tuple(o // f for o, f in zip(volume.roi.offset, factors)), sums.shape)
    return VoxelVolume(roi, (2 * sums >= counts).astype(np.uint8), volume.voxel_size.scaled(factors))


def build_mask(volume: VoxelVolume, lo: float, hi: float) -> VoxelVolume:
    """Binary mask of voxels whose value lies in the closed range ``[lo, hi]``."""
    data = np.asarray(volume.data)
    return volume.with_data(((data >= lo) & (data <= hi)).astype(np.uint8))


@dataclass(frozen=True)
class PyramidLevel:
    level: int
    factors: tuple
    dataset: N5Dataset


def _downscale_dataset(source: N5Dataset, target: N5Dataset, factors, block_shape, n_workers: int) -> None:
    from .engine import plan_blocks

    plans = plan_blocks(target.roi, block_shape, (0, 0, 0))

    def work(plan):
        out_roi = plan.output_roi
        src_roi = roi_intersect(
            Roi(tuple(o * f for o, f in zip(out_roi.offset, factors)),
                tuple(s * f for s, f in zip(out_roi.shape, factors))),
            source.roi,
        )
        scaled = downscale(source.read_roi(src_roi), factors, dtype=target.dtype)
        target.write_roi(VoxelVolume(out_roi, scaled.data, target.voxel_size))

    with ThreadPoolExecutor(max_workers=max(1, n_workers)) as pool:
        for _ in pool.map(work, plans):
            pass


def build_pyramid(container: N5Container, source: str, level_factors: Sequence, group: str = None,
                  n_workers: int = 1, chunk_size=None) -> List[PyramidLevel]:
    """Write successive mean-downscaled copies of ``container[source]``.

    ``level_factors`` holds the relative factors of each new level. Levels are
    stored as ``<group>/s0`` (a copy-free link to the source is not possible
    in N5, so ``s0`` refers to the source dataset itself) and ``<group>/s1``...
    Each dataset records cumulative ``downsamplingFactors`` in (x, y, z).
    """
    base = container[source]
    group = group if group is not None else f"{source}_pyramid"
    levels = [PyramidLevel(0, (1, 1, 1), base)]
    cumulative = (1, 1, 1)
    current = base
    for i, rel in enumerate(level_factors, start=1):
        rel = _factors(rel)
        cumulative = tuple(c * r for c, r in zip(cumulative, rel))
        shape = tuple(-(-s // r) for s, r in zip(current.shape, rel))
        chunks = chunk_size or current.attrs.chunk_size
        name = f"{group}/s{i}"
        target = container.create_dataset(
            name, shape, chunk_size=chunks, element_type=current.attrs.element_type,
            compression=current.attrs.compression, voxel_size=current.voxel_size.scaled(rel),
            overwrite=True,
        )
        _downscale_dataset(current, target, rel, target.attrs.chunk_size, n_workers)
        container.set_attributes(name, downsamplingFactors=list(cumulative[::-1]))
        log.info("pyramid level %d: factors %s shape %s", i, cumulative, shape)
        levels.append(PyramidLevel(i, cumulative, target))
        current = target
    container.set_attributes(group, scales=[list(l.factors[::-1]) for l in levels], source=source)
    return levels
