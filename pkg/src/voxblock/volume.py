"""Geometric core types: voxel sizes, regions of interest and dense volumes.

All coordinates and shapes use (z, y, x) order. Region offsets are signed so
that regions grown by a network context may extend below zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

Triple = Tuple[int, int, int]

ELEMENT_TYPES = {
    "u8": np.dtype(np.uint8),
    "u16": np.dtype(np.uint16),
    "u32": np.dtype(np.uint32),
    "u64": np.dtype(np.uint64),
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
}
_DTYPE_TO_ELEMENT = {v: k for k, v in ELEMENT_TYPES.items()}


def element_type_of(dtype) -> str:
    dtype = np.dtype(dtype)
    if dtype == np.bool_:
        return "u8"
    try:
        return _DTYPE_TO_ELEMENT[dtype.newbyteorder("=")]
    except KeyError:
        raise TypeError(f"unsupported element type {dtype}") from None


def _triple(values: Sequence, name: str, cast=int) -> tuple:
    values = tuple(cast(v) for v in values)
    if len(values) != 3:
        raise ValueError(f"{name} must have 3 components (z, y, x), got {values}")
    return values


@dataclass(frozen=True)
class VoxelSize:
    """Physical extent of one voxel in nanometers."""

    z_nm: float = 40.0
    y_nm: float = 4.0
    x_nm: float = 4.0

    def __post_init__(self):
        for name in ("z_nm", "y_nm", "x_nm"):
            value = float(getattr(self, name))
            if not value > 0:
                raise ValueError(f"voxel size component {name} must be > 0, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def of(cls, value) -> "VoxelSize":
        if isinstance(value, VoxelSize):
            return value
        return cls(*_triple(value, "voxel size", float))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.z_nm, self.y_nm, self.x_nm)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    def scaled(self, factors) -> "VoxelSize":
        return VoxelSize(*(s * f for s, f in zip(self.as_tuple(), _triple(factors, "factors"))))


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box in voxel coordinates, ``offset`` inclusive."""

    offset: Triple
    shape: Triple

    def __post_init__(self):
        object.__setattr__(self, "offset", _triple(self.offset, "offset"))
        shape = _triple(self.shape, "shape")
        if any(s < 0 for s in shape):
            raise ValueError(f"Roi shape must be non-negative, got {shape}")
        object.__setattr__(self, "shape", shape)

    @property
    def end(self) -> Triple:
        return tuple(o + s for o, s in zip(self.offset, self.shape))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def empty(self) -> bool:
        return any(s == 0 for s in self.shape)

    def contains(self, other: "Roi") -> bool:
        if other.empty():
            return True
        return all(
            so <= oo and oe <= se
            for so, se, oo, oe in zip(self.offset, self.end, other.offset, other.end)
        )

    def shift(self, delta) -> "Roi":
        return Roi(tuple(o + d for o, d in zip(self.offset, _triple(delta, "delta"))), self.shape)

    def slices(self, relative_to: "Roi | None" = None) -> Tuple[slice, slice, slice]:
        """Index slices of this region inside an array covering ``relative_to``."""
        base = relative_to.offset if relative_to is not None else (0, 0, 0)
        return tuple(slice(o - b, o - b + s) for o, b, s in zip(self.offset, base, self.shape))

    def __str__(self):
        return f"Roi(offset={self.offset}, shape={self.shape})"


def roi_grow(roi: Roi, context) -> Roi:
    """Grow ``roi`` by ``context`` voxels on both sides of every axis."""
    context = _triple(context, "context")
    if any(c < 0 for c in context):
        raise ValueError(f"context must be non-negative, got {context}")
    return Roi(
        tuple(o - c for o, c in zip(roi.offset, context)),
        tuple(s + 2 * c for s, c in zip(roi.shape, context)),
    )


def roi_intersect(a: Roi, b: Roi) -> Roi:
    """Largest Roi contained in both ``a`` and ``b``.

    Disjoint inputs give an empty Roi whose offset is the clamped lower corner.
    """
    lo = tuple(max(x, y) for x, y in zip(a.offset, b.offset))
    hi = tuple(min(x, y) for x, y in zip(a.end, b.end))
    return Roi(lo, tuple(max(h - l, 0) for l, h in zip(lo, hi)))


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """Dense 3D array anchored at ``roi.offset`` with physical voxel size.

    ``data`` is treated as immutable once wrapped; it is marked read-only.
    """

    roi: Roi
    data: np.ndarray
    voxel_size: VoxelSize = VoxelSize()

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype == np.bool_:
            data = data.astype(np.uint8)
        element_type_of(data.dtype)
        if data.shape != self.roi.shape:
            raise ValueError(f"data shape {data.shape} does not match roi shape {self.roi.shape}")
        if data.flags.writeable:
            data = data.view()
            data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "voxel_size", VoxelSize.of(self.voxel_size))

    @classmethod
    def from_array(cls, array, offset=(0, 0, 0), voxel_size=VoxelSize()) -> "VoxelVolume":
        array = np.asarray(array)
        return cls(Roi(offset, array.shape), array, VoxelSize.of(voxel_size))

    @property
    def element_type(self) -> str:
        return element_type_of(self.data.dtype)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def shape(self) -> Triple:
        return self.roi.shape

    def with_data(self, data) -> "VoxelVolume":
        return VoxelVolume(self.roi, data, self.voxel_size)

    def __eq__(self, other):
        if not isinstance(other, VoxelVolume):
            return NotImplemented
        return (
            self.roi == other.roi
            and self.voxel_size == other.voxel_size
            and self.dtype == other.dtype
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def read_region(volume: VoxelVolume, roi: Roi, fill=0) -> VoxelVolume:
    """Extract ``roi`` from ``volume``; voxels outside ``volume`` get ``fill``."""
    out = np.full(roi.shape, fill, dtype=volume.dtype)
    if out.dtype.kind in "ui" and np.asarray(fill).dtype.kind == "f" and float(fill) != int(fill):
        raise TypeError(f"fill value {fill!r} does not fit element type {volume.element_type}")
    overlap = roi_intersect(volume.roi, roi)
    if not overlap.empty():
        out[overlap.slices(roi)] = volume.data[overlap.slices(volume.roi)]
    return VoxelVolume(roi, out, volume.voxel_size)
