"""Signed Euclidean distance transform and its tanh-squashed regression target.

Distances are physical (nm) and measured between voxel centers. The exact
transform is separable: a 1D lower envelope of parabolas is taken along x,
then y, then z, each with its own sample spacing.
"""

from __future__ import annotations

import numba
import numpy as np

from .volume import VoxelSize, VoxelVolume

DEFAULT_SCALE_NM = 50.0


class EmptyClassError(ValueError):
    """Labels contain only foreground or only background."""


@numba.njit(cache=True)
def _envelope_1d(f, spacing, out, v, z):
    # Squared distance to the lower envelope of parabolas rooted at the finite
    # entries of f; sample q sits at position q * spacing.
    n = f.shape[0]
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        pq = q * spacing
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            pv = v[k] * spacing
            s = ((fq + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = np.inf
        return
    k = 0
    for q in range(n):
        x = q * spacing
        while z[k + 1] < x:
            k += 1
        d = x - v[k] * spacing
        out[q] = d * d + f[v[k]]


@numba.njit(cache=True)
def _squared_edt(sites, spacing):
    nz, ny, nx = sites.shape
    n = max(nz, ny, nx)
    f = np.empty(n)
    line = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    d = np.empty((nz, ny, nx))
    for i in range(nz):
        for j in range(ny):
            for q in range(nx):
                f[q] = 0.0 if sites[i, j, q] else np.inf
            _envelope_1d(f[:nx], spacing[2], line[:nx], v, z)
            for q in range(nx):
                d[i, j, q] = line[q]
    for i in range(nz):
        for q in range(nx):
            for j in range(ny):
                f[j] = d[i, j, q]
            _envelope_1d(f[:ny], spacing[1], line[:ny], v, z)
            for j in range(ny):
                d[i, j, q] = line[j]
    for j in range(ny):
        for q in range(nx):
            for i in range(nz):
                f[i] = d[i, j, q]
            _envelope_1d(f[:nz], spacing[0], line[:nz], v, z)
            for i in range(nz):
                d[i, j, q] = line[i]
    return d


def squared_distance_to(sites: np.ndarray, spacing) -> np.ndarray:
    """Squared physical distance from every voxel to the nearest ``True`` site.

    Returns ``inf`` everywhere when there are no sites.
    """
    sites = np.ascontiguousarray(sites, dtype=np.bool_)
    if sites.ndim != 3:
        raise ValueError(f"expected a 3D array, got shape {sites.shape}")
    if sites.size == 0:
        return np.zeros(sites.shape)
    return _squared_edt(sites, np.asarray(spacing, dtype=np.float64))


def distance_to(sites: np.ndarray, spacing) -> np.ndarray:
    return np.sqrt(squared_distance_to(sites, spacing))


def sedt(labels: VoxelVolume, voxel_size=None, dtype=np.float32) -> VoxelVolume:
    """Signed distance: positive inside the foreground, negative outside.

    Each foreground voxel gets the distance to the nearest background voxel
    center, each background voxel minus the distance to the nearest
    foreground voxel center. ``dtype=np.float64`` keeps full precision.
    """
    voxel_size = VoxelSize.of(voxel_size if voxel_size is not None else labels.voxel_size)
    fg = np.asarray(labels.data) != 0
    if fg.all() or not fg.any():
        raise EmptyClassError("sedt needs at least one foreground and one background voxel")
    spacing = voxel_size.as_array()
    to_bg = distance_to(~fg, spacing)
    to_fg = distance_to(fg, spacing)
    signed = np.where(fg, to_bg, -to_fg).astype(dtype)
    return VoxelVolume(labels.roi, signed, voxel_size)


def stdt(sedt_volume: VoxelVolume, scale_s: float = DEFAULT_SCALE_NM) -> VoxelVolume:
    """``tanh(sedt / scale_s)``, elementwise."""
    if not scale_s > 0:
        raise ValueError(f"scale_s must be > 0, got {scale_s}")
    data = np.asarray(sedt_volume.data)
    out_dtype = data.dtype if data.dtype.kind == "f" else np.float32
    return sedt_volume.with_data(np.tanh(data.astype(np.float64) / scale_s).astype(out_dtype))


def threshold_to_labels(volume: VoxelVolume, threshold: float = 0.0) -> VoxelVolume:
    return volume.with_data((np.asarray(volume.data) > threshold).astype(np.uint8))


def stdt_target(labels: VoxelVolume, scale_s: float = DEFAULT_SCALE_NM, voxel_size=None) -> VoxelVolume:
    """Regression target for a label block; saturates to +/-1 for single-class blocks."""
    fg = np.asarray(labels.data) != 0
    if fg.all() or not fg.any():
        value = 1.0 if fg.any() else -1.0
        return labels.with_data(np.full(labels.shape, value, dtype=np.float32))
    return stdt(sedt(labels, voxel_size), scale_s)
