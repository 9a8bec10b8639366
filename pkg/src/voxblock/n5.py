"""Filesystem N5 datasets: chunk codec, attributes and region I/O.

Layout on disk::

    <container>/attributes.json            {"n5": "2.0.0"}
    <container>/<dataset>/attributes.json  dimensions, blockSize, dataType, compression
    <container>/<dataset>/<gx>/<gy>/<gz>   one encoded chunk per file

N5 stores axis-ordered lists fastest-axis first (x, y, z); this module keeps
the public API in (z, y, x) and reverses at the boundary.
"""

from __future__ import annotations

import gzip
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np

from .volume import ELEMENT_TYPES, Roi, VoxelSize, VoxelVolume, element_type_of, roi_intersect

N5_VERSION = "2.0.0"

_N5_DATA_TYPES = {
    "u8": "uint8",
    "u16": "uint16",
    "u32": "uint32",
    "u64": "uint64",
    "f32": "float32",
    "f64": "float64",
}
_ELEMENT_FROM_N5 = {v: k for k, v in _N5_DATA_TYPES.items()}


class CodecError(ValueError):
    """Raised when a chunk cannot be encoded or decoded."""


class StoreBoundsError(IndexError):
    """Raised when a write falls outside the dataset."""


@dataclass(frozen=True)
class DatasetAttributes:
    dimensions: Tuple[int, int, int]
    chunk_size: Tuple[int, int, int]
    element_type: str = "u8"
    compression: str = "gzip"
    gzip_level: int = -1
    voxel_size: VoxelSize = field(default_factory=VoxelSize)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dimensions)
        chunks = tuple(int(c) for c in self.chunk_size)
        if len(dims) != 3 or len(chunks) != 3:
            raise ValueError("dimensions and chunk_size must have 3 components")
        if min(dims) < 1 or min(chunks) < 1:
            raise ValueError(f"dimensions {dims} and chunk_size {chunks} must all be >= 1")
        if self.element_type not in ELEMENT_TYPES:
            raise ValueError(f"unsupported element type {self.element_type!r}")
        if self.compression not in ("raw", "gzip"):
            raise ValueError(f"unsupported compression {self.compression!r}")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "chunk_size", chunks)
        object.__setattr__(self, "voxel_size", VoxelSize.of(self.voxel_size))

    @property
    def dtype(self) -> np.dtype:
        return ELEMENT_TYPES[self.element_type]

    @property
    def grid_shape(self) -> Tuple[int, int, int]:
        return tuple(-(-d // c) for d, c in zip(self.dimensions, self.chunk_size))

    @property
    def roi(self) -> Roi:
        return Roi((0, 0, 0), self.dimensions)

    def chunk_roi(self, index) -> Roi:
        offset = tuple(i * c for i, c in zip(index, self.chunk_size))
        shape = tuple(min(c, d - o) for c, d, o in zip(self.chunk_size, self.dimensions, offset))
        return Roi(offset, shape)

    def to_json(self) -> dict:
        if self.compression == "gzip":
            compression = {"type": "gzip", "level": self.gzip_level}
        else:
            compression = {"type": "raw"}
        return {
            "dimensions": list(self.dimensions[::-1]),
            "blockSize": list(self.chunk_size[::-1]),
            "dataType": _N5_DATA_TYPES[self.element_type],
            "compression": compression,
            "resolution": list(self.voxel_size.as_tuple()[::-1]),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, attrs: dict) -> "DatasetAttributes":
        try:
            compression = attrs.get("compression", {"type": "raw"})
            if isinstance(compression, str):  # pre-2.0 N5 writers
                compression = {"type": compression}
            data_type = attrs["dataType"]
            if data_type not in _ELEMENT_FROM_N5:
                raise ValueError(f"unsupported dataType {data_type!r}")
            resolution = attrs.get("resolution")
            return cls(
                dimensions=tuple(attrs["dimensions"][::-1]),
                chunk_size=tuple(attrs["blockSize"][::-1]),
                element_type=_ELEMENT_FROM_N5[data_type],
                compression=compression["type"],
                gzip_level=int(compression.get("level", -1)),
                voxel_size=VoxelSize(*resolution[::-1]) if resolution else VoxelSize(),
            )
        except KeyError as exc:
            raise ValueError(f"attributes.json missing key {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "DatasetAttributes":
        return cls.from_json(json.loads(text))


def _compress(payload: bytes, attrs: DatasetAttributes) -> bytes:
    if attrs.compression == "raw":
        return payload
    level = 6 if attrs.gzip_level < 0 else attrs.gzip_level
    # mtime=0 keeps chunk bytes reproducible
    return gzip.compress(payload, compresslevel=level, mtime=0)


def _decompress(data: bytes, attrs: DatasetAttributes) -> bytes:
    if attrs.compression == "raw":
        return data
    try:
        return gzip.decompress(data)
    except (OSError, EOFError, zlib.error) as exc:
        raise CodecError(f"gzip payload corrupt: {exc}") from None


def encode_chunk(attrs: DatasetAttributes, chunk_shape, payload) -> bytes:
    """Serialize one chunk: big-endian header then the (compressed) payload.

    ``chunk_shape`` is (z, y, x); ``payload`` is any array or buffer holding
    ``prod(chunk_shape)`` elements in C order (x fastest).
    """
    chunk_shape = tuple(int(s) for s in chunk_shape)
    payload = np.asarray(payload)
    if payload.size != int(np.prod(chunk_shape)):
        raise CodecError(f"payload has {payload.size} elements, chunk shape {chunk_shape} needs {int(np.prod(chunk_shape))}")
    header = struct.pack(">HH", 0, len(chunk_shape))
    header += struct.pack(f">{len(chunk_shape)}I", *chunk_shape[::-1])
    body = np.ascontiguousarray(payload, dtype=attrs.dtype.newbyteorder(">")).tobytes()
    return header + _compress(body, attrs)


def decode_chunk(attrs: DatasetAttributes, data: bytes) -> np.ndarray:
    """Inverse of :func:`encode_chunk`; returns a native-endian (z, y, x) array."""
    if len(data) < 4:
        raise CodecError("chunk shorter than its header")
    mode, ndim = struct.unpack_from(">HH", data, 0)
    if mode not in (0, 1):
        raise CodecError(f"unsupported chunk mode {mode}")
    if ndim != 3:
        raise CodecError(f"expected 3 chunk dimensions, header says {ndim}")
    pos = 4 + 4 * ndim
    if len(data) < pos:
        raise CodecError("chunk header truncated")
    shape = struct.unpack_from(f">{ndim}I", data, 4)[::-1]
    n = int(np.prod(shape))
    if mode == 1:  # varlength: explicit element count
        if len(data) < pos + 4:
            raise CodecError("chunk header truncated")
        (n,) = struct.unpack_from(">I", data, pos)
        pos += 4
    body = _decompress(data[pos:], attrs)
    big = attrs.dtype.newbyteorder(">")
    if len(body) != n * big.itemsize:
        raise CodecError(f"payload holds {len(body)} bytes, header implies {n * big.itemsize}")
    array = np.frombuffer(body, dtype=big)
    if mode == 0:
        array = array.reshape(shape)
    return array.astype(attrs.dtype)


class N5Dataset:
    """Handle on one N5 dataset directory.

    Safe to share between threads. Concurrent writes must touch disjoint
    chunk sets; unaligned writes do a read-modify-write of edge chunks and
    are single-writer only.
    """

    def __init__(self, path, attrs: Optional[DatasetAttributes] = None):
        self.path = Path(path)
        if attrs is None:
            attrs_file = self.path / "attributes.json"
            if not attrs_file.exists():
                raise FileNotFoundError(f"no N5 dataset at {self.path}")
            attrs = DatasetAttributes.loads(attrs_file.read_text(encoding="utf-8"))
        self.attrs = attrs

    @classmethod
    def create(cls, path, shape, chunk_size=(64, 64, 64), element_type="u8",
               compression="gzip", voxel_size=VoxelSize(), overwrite=False) -> "N5Dataset":
        path = Path(path)
        if isinstance(element_type, np.dtype) or not isinstance(element_type, str):
            element_type = element_type_of(element_type)
        attrs = DatasetAttributes(shape, chunk_size, element_type, compression,
                                  voxel_size=VoxelSize.of(voxel_size))
        attrs_file = path / "attributes.json"
        if attrs_file.exists() and not overwrite:
            existing = DatasetAttributes.loads(attrs_file.read_text(encoding="utf-8"))
            if existing != attrs:
                raise FileExistsError(f"dataset {path} exists with different attributes")
            return cls(path, existing)
        path.mkdir(parents=True, exist_ok=True)
        _atomic_write(attrs_file, attrs.dumps().encode("utf-8"))
        return cls(path, attrs)

    @property
    def shape(self):
        return self.attrs.dimensions

    @property
    def dtype(self):
        return self.attrs.dtype

    @property
    def roi(self) -> Roi:
        return self.attrs.roi

    @property
    def voxel_size(self) -> VoxelSize:
        return self.attrs.voxel_size

    def chunk_path(self, index) -> Path:
        gz, gy, gx = index
        return self.path / str(gx) / str(gy) / str(gz)

    def chunks_in(self, roi: Roi) -> Iterator[Tuple[int, int, int]]:
        """Grid indices of every chunk intersecting ``roi`` (clipped to the dataset)."""
        roi = roi_intersect(roi, self.roi)
        if roi.empty():
            return iter(())
        ranges = [
            range(o // c, (e - 1) // c + 1)
            for o, e, c in zip(roi.offset, roi.end, self.attrs.chunk_size)
        ]
        return product(*ranges)

    def read_chunk(self, index) -> Optional[np.ndarray]:
        path = self.chunk_path(index)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        try:
            array = decode_chunk(self.attrs, data)
        except CodecError as exc:
            raise CodecError(f"chunk {tuple(index)} at {path}: {exc}") from None
        expected = self.attrs.chunk_roi(index).shape
        if array.shape != expected:
            # some writers store edge chunks at the full block size
            if array.shape != self.attrs.chunk_size:
                raise CodecError(f"chunk {tuple(index)} at {path}: shape {array.shape}, expected {expected}")
            array = array[tuple(slice(0, e) for e in expected)]
        return array

    def write_chunk(self, index, array: np.ndarray) -> None:
        expected = self.attrs.chunk_roi(index).shape
        if array.shape != expected:
            raise CodecError(f"chunk {tuple(index)}: shape {array.shape}, expected {expected}")
        _atomic_write(self.chunk_path(index), encode_chunk(self.attrs, array.shape, array))

    def read_roi(self, roi: Roi, fill=0) -> VoxelVolume:
        out = np.full(roi.shape, fill, dtype=self.dtype)
        for index in self.chunks_in(roi):
            chunk = self.read_chunk(index)
            if chunk is None:
                continue
            chunk_roi = self.attrs.chunk_roi(index)
            overlap = roi_intersect(chunk_roi, roi)
            out[overlap.slices(roi)] = chunk[overlap.slices(chunk_roi)]
        return VoxelVolume(roi, out, self.voxel_size)

    def write_roi(self, volume: VoxelVolume) -> None:
        roi = volume.roi
        if not self.roi.contains(roi):
            raise StoreBoundsError(f"{roi} outside dataset bounds {self.shape}")
        data = volume.data
        if not np.can_cast(data.dtype, self.dtype, "safe"):
            raise TypeError(f"cannot store {data.dtype} in a {self.attrs.element_type} dataset without loss")
        for index in self.chunks_in(roi):
            chunk_roi = self.attrs.chunk_roi(index)
            overlap = roi_intersect(chunk_roi, roi)
            if overlap == chunk_roi:
                chunk = data[overlap.slices(roi)]
            else:
                chunk = self.read_chunk(index)
                if chunk is None:
                    chunk = np.zeros(chunk_roi.shape, dtype=self.dtype)
                else:
                    chunk = chunk.copy()
                chunk[overlap.slices(chunk_roi)] = data[overlap.slices(roi)]
            self.write_chunk(index, np.ascontiguousarray(chunk, dtype=self.dtype))

    def __getitem__(self, key) -> np.ndarray:
        """Numpy-style read with plain slices, e.g. ``ds[:, 10:20, :]``."""
        if not isinstance(key, tuple):
            key = (key,)
        key = key + (slice(None),) * (3 - len(key))
        starts, stops = [], []
        for k, n in zip(key, self.shape):
            start, stop, step = k.indices(n)
            if step != 1:
                raise IndexError("only unit-step slices are supported")
            starts.append(start)
            stops.append(max(stop, start))
        roi = Roi(starts, [b - a for a, b in zip(starts, stops)])
        return np.array(self.read_roi(roi).data)

    def __repr__(self):
        return f"N5Dataset({str(self.path)!r}, shape={self.shape}, chunks={self.attrs.chunk_size}, {self.attrs.element_type})"


class N5Container:
    """Directory holding N5 datasets, possibly nested in groups."""

    def __init__(self, root, mode: str = "a"):
        self.root = Path(root)
        attrs_file = self.root / "attributes.json"
        if mode == "r":
            if not self.root.is_dir():
                raise FileNotFoundError(f"no N5 container at {self.root}")
        elif not attrs_file.exists():
            self.root.mkdir(parents=True, exist_ok=True)
            _atomic_write(attrs_file, json.dumps({"n5": N5_VERSION}).encode("utf-8"))

    def create_dataset(self, name: str, shape, **kwargs) -> N5Dataset:
        self._ensure_groups(name)
        return N5Dataset.create(self.root / name, shape, **kwargs)

    def __getitem__(self, name: str) -> N5Dataset:
        return N5Dataset(self.root / name)

    def __contains__(self, name: str) -> bool:
        return (self.root / name / "attributes.json").exists()

    def get_attributes(self, name: str = "") -> dict:
        path = self.root / name / "attributes.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def set_attributes(self, name: str, **attrs) -> None:
        """Merge extra keys into a group's or dataset's attributes.json."""
        current = self.get_attributes(name)
        current.update(attrs)
        (self.root / name).mkdir(parents=True, exist_ok=True)
        _atomic_write(self.root / name / "attributes.json", json.dumps(current).encode("utf-8"))

    def _ensure_groups(self, name: str) -> None:
        parts = Path(name).parts[:-1]
        for depth in range(1, len(parts) + 1):
            group = self.root.joinpath(*parts[:depth])
            if not (group / "attributes.json").exists():
                group.mkdir(parents=True, exist_ok=True)
                _atomic_write(group / "attributes.json", b"{}")


def open_dataset(spec: str) -> N5Dataset:
    """Open ``path/to/dataset`` or ``container.n5:group/dataset``."""
    if ":" in spec and not Path(spec).exists():
        container, name = spec.rsplit(":", 1)
        return N5Dataset(Path(container) / name)
    return N5Dataset(spec)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
