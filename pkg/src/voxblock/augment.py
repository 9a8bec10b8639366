"""Training batches: rejection sampling, ssTEM augmentations and balanced losses.

Every random choice is drawn from a ``numpy.random.Generator`` seeded by the
caller, so a batch is a pure function of its inputs and seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .volume import Roi, VoxelVolume, read_region

MAX_RETRIES = 1000
REJECT_PROBABILITY = 0.95


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation parameters. Defaults are placeholders, not tuned values."""

    transpose_xy: float = 0.5
    intensity_scale: Tuple[float, float] = (0.9, 1.1)
    intensity_shift: Tuple[float, float] = (-0.1, 0.1)
    control_spacing: int = 10
    jitter_sigma: float = 1.0
    rotation: Tuple[float, float] = (0.0, 0.0)  # radians, in-plane
    missing_section: float = 0.02
    noisy_section: float = 0.02
    noise_sigma: float = 0.1
    reject_probability: float = REJECT_PROBABILITY
    max_retries: int = MAX_RETRIES

    def __post_init__(self):
        for name in ("transpose_xy", "missing_section", "noisy_section", "reject_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")
        for name in ("jitter_sigma", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.control_spacing < 1:
            raise ValueError("control_spacing must be >= 1")
        for name in ("intensity_scale", "intensity_shift", "rotation"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    @classmethod
    def none(cls) -> "AugmentConfig":
        """All augmentations disabled."""
        return cls(transpose_xy=0.0, intensity_scale=(1.0, 1.0), intensity_shift=(0.0, 0.0),
                   jitter_sigma=0.0, missing_section=0.0, noisy_section=0.0)

    @classmethod
    def from_json(cls, data: dict) -> "AugmentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown augmentation keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "AugmentConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True, eq=False)
class Batch:
    raw: VoxelVolume
    labels: VoxelVolume
    aux_labels: Optional[VoxelVolume] = None
    rng_seed: int = 0
    attempts: int = 1  # draws taken, including the accepted one

    def __eq__(self, other):
        if not isinstance(other, Batch):
            return NotImplemented
        return (self.raw == other.raw and self.labels == other.labels
                and self.aux_labels == other.aux_labels and self.rng_seed == other.rng_seed
                and self.attempts == other.attempts)


# -- individual augmentations -------------------------------------------------

def transpose_xy(volume: VoxelVolume) -> VoxelVolume:
    """Swap the y and x axes (and their voxel sizes)."""
    vs = volume.voxel_size
    oz, oy, ox = volume.roi.offset
    return VoxelVolume(Roi((oz, ox, oy), volume.shape[0:1] + volume.shape[2:0:-1]),
                       np.ascontiguousarray(np.swapaxes(volume.data, 1, 2)),
                       (vs.z_nm, vs.x_nm, vs.y_nm))


def control_grid_shape(plane_shape, spacing: int) -> Tuple[int, int]:
    return tuple(-(-(n - 1) // spacing) + 1 for n in plane_shape)


def elastic_displacement(plane_shape, control_offsets: np.ndarray, spacing: int) -> np.ndarray:
    """Dense in-plane displacement, shape ``(2, ny, nx)``.

    ``control_offsets`` has shape ``(2, cy, cx)``: the (dy, dx) offset of the
    control point at pixel ``(i * spacing, j * spacing)``. Pixels between
    control points interpolate bilinearly.
    """
    ny, nx = plane_shape
    gy = np.arange(ny, dtype=np.float64) / spacing
    gx = np.arange(nx, dtype=np.float64) / spacing
    coords = np.meshgrid(gy, gx, indexing="ij")
    return np.stack([
        ndimage.map_coordinates(np.asarray(c, dtype=np.float64), coords, order=1, mode="nearest")
        for c in control_offsets
    ])


def rotation_displacement(plane_shape, angle: float) -> np.ndarray:
    ny, nx = plane_shape
    cy, cx = (ny - 1) / 2.0, (nx - 1) / 2.0
    y, x = np.meshgrid(np.arange(ny) - cy, np.arange(nx) - cx, indexing="ij")
    c, s = math.cos(angle), math.sin(angle)
    return np.stack([c * y - s * x - y, s * y + c * x - x])


def warp(volume: VoxelVolume, displacement: np.ndarray, order: int) -> VoxelVolume:
    """Resample every z-section at ``position + displacement``."""
    data = np.asarray(volume.data)
    ny, nx = data.shape[1:]
    y, x = np.meshgrid(np.arange(ny, dtype=np.float64), np.arange(nx, dtype=np.float64), indexing="ij")
    coords = np.stack([y + displacement[0], x + displacement[1]])
    out = np.empty_like(data)
    for z in range(data.shape[0]):
        out[z] = ndimage.map_coordinates(data[z], coords, order=order, mode="nearest")
    return volume.with_data(out)


def apply_elastic(volume: VoxelVolume, control_spacing: int, jitter_sigma: float,
                  rng: np.random.Generator, rotation: Tuple[float, float] = (0.0, 0.0),
                  labels: bool = False) -> VoxelVolume:
    """In-plane elastic deformation; z is never displaced.

    Labels (``labels=True``) are resampled nearest-neighbor, intensities
    linearly.
    """
    if control_spacing < 1:
        raise ValueError("control_spacing must be >= 1")
    displacement = _draw_displacement(volume.shape[1:], control_spacing, jitter_sigma, rotation, rng)
    if displacement is None:
        return volume
    return warp(volume, displacement, order=0 if labels else 1)


def _draw_displacement(plane_shape, spacing, jitter_sigma, rotation, rng):
    cy, cx = control_grid_shape(plane_shape, spacing)
    offsets = rng.normal(0.0, 1.0, size=(2, cy, cx)) * jitter_sigma
    angle = rng.uniform(*rotation) if rotation[1] > rotation[0] else rotation[0]
    if jitter_sigma == 0 and angle == 0:
        return None
    displacement = elastic_displacement(plane_shape, offsets, spacing)
    if angle:
        displacement += rotation_displacement(plane_shape, angle)
    return displacement


def apply_intensity(volume: VoxelVolume, scale: float, shift: float) -> VoxelVolume:
    data = np.asarray(volume.data, dtype=np.float32)
    return volume.with_data(np.clip(data * np.float32(scale) + np.float32(shift), 0, 1).astype(np.float32))


def apply_section_artifacts(volume: VoxelVolume, missing_p: float, noisy_p: float,
                            noise_sigma: float, rng: np.random.Generator) -> VoxelVolume:
    """Zero whole z-sections or add Gaussian noise to them; clamp to [0, 1]."""
    data = np.array(volume.data, dtype=np.float32)
    nz = data.shape[0]
    missing = rng.random(nz) < missing_p
    noisy = rng.random(nz) < noisy_p
    for z in range(nz):
        if missing[z]:
            data[z] = 0
        elif noisy[z]:
            data[z] += rng.normal(0.0, noise_sigma, size=data[z].shape).astype(np.float32)
    return volume.with_data(np.clip(data, 0, 1))


# -- losses -------------------------------------------------------------------

def class_balance_weights(labels: VoxelVolume) -> VoxelVolume:
    """Per-voxel weights giving both classes equal total mass ``N / 2``."""
    positive = np.asarray(labels.data) != 0
    n = positive.size
    p = int(positive.sum())
    if p == 0 or p == n:
        return labels.with_data(np.ones(labels.shape, dtype=np.float32))
    w_pos = n / (2.0 * p)
    w_neg = n / (2.0 * (n - p))
    return labels.with_data(np.where(positive, w_pos, w_neg).astype(np.float32))


def _values(v):
    return np.asarray(v.data if isinstance(v, VoxelVolume) else v, dtype=np.float64)


def balanced_l2_loss(pred, target, weights=None) -> float:
    """``sum(w * (pred - target)**2) / sum(w)``; uniform weights without ``weights``."""
    p, t = _values(pred), _values(target)
    if p.shape != t.shape:
        raise ValueError(f"pred {p.shape} and target {t.shape} differ")
    if weights is None:
        return float(np.mean((p - t) ** 2))
    w = _values(weights)
    if w.shape != p.shape:
        raise ValueError(f"weights {w.shape} and pred {p.shape} differ")
    return float(np.sum(w * (p - t) ** 2) / np.sum(w))


def combined_loss(cleft_term: float, aux_term: float) -> float:
    """Equal-weight combination of the cleft loss and the auxiliary boundary loss."""
    return 0.5 * (cleft_term + aux_term)


# -- sampling -----------------------------------------------------------------

def _accept(has_positive: bool, rng: np.random.Generator, reject_probability: float) -> bool:
    if has_positive:
        return True
    return rng.random() >= reject_probability


def sample_batch(raw: VoxelVolume, labels: VoxelVolume, output_shape, context=(0, 0, 0),
                 config: AugmentConfig = AugmentConfig(), rng_seed: int = 0,
                 aux_labels: Optional[VoxelVolume] = None) -> Batch:
    """Draw one augmented training batch.

    A labels region of ``output_shape`` is placed uniformly at random such
    that the raw region (grown by ``context``) lies inside ``raw``. Draws
    without positive labels are rejected with ``config.reject_probability``.
    Augmentations run in the order transpose, elastic, intensity, section
    artifacts; labels follow the geometric ones only.
    """
    output_shape = tuple(int(s) for s in output_shape)
    context = tuple(int(c) for c in context)
    rng = np.random.default_rng(rng_seed)
    raw_shape = tuple(s + 2 * c for s, c in zip(output_shape, context))
    span = [r - s for r, s in zip(raw.shape, raw_shape)]
    if min(span) < 0:
        raise SamplingError(f"raw {raw.shape} too small for request {raw_shape}")
    label_sets = [labels] + ([aux_labels] if aux_labels is not None else [])

    for attempt in range(1, config.max_retries + 1):
        raw_offset = tuple(o + int(rng.integers(0, s + 1)) for o, s in zip(raw.roi.offset, span))
        raw_roi = Roi(raw_offset, raw_shape)
        label_roi = Roi(tuple(o + c for o, c in zip(raw_offset, context)), output_shape)
        cleft = read_region(labels, label_roi)
        if _accept(bool(np.any(cleft.data)), rng, config.reject_probability):
            break
    else:
        raise SamplingError(f"no batch accepted after {config.max_retries} draws")

    raw_vol = read_region(raw, raw_roi)
    raw_vol = raw_vol.with_data(_normalize(raw_vol.data))
    # labels are carried on the raw frame so geometric warps stay aligned
    lab_vols = [read_region(l, raw_roi) for l in label_sets]

    square = raw_shape[1] == raw_shape[2] and context[1] == context[2]
    if rng.random() < config.transpose_xy and square:
        raw_vol = transpose_xy(raw_vol)
        lab_vols = [transpose_xy(l) for l in lab_vols]

    displacement = _draw_displacement(raw_vol.shape[1:], config.control_spacing, config.jitter_sigma,
                                      config.rotation, rng)
    if displacement is not None:
        raw_vol = warp(raw_vol, displacement, order=1)
        lab_vols = [warp(l, displacement, order=0) for l in lab_vols]

    scale = rng.uniform(*config.intensity_scale)
    shift = rng.uniform(*config.intensity_shift)
    raw_vol = apply_intensity(raw_vol, scale, shift)
    raw_vol = apply_section_artifacts(raw_vol, config.missing_section, config.noisy_section,
                                      config.noise_sigma, rng)

    inner = Roi(tuple(o + c for o, c in zip(raw_vol.roi.offset, context)),
                tuple(s - 2 * c for s, c in zip(raw_vol.shape, context)))
    lab_vols = [read_region(l, inner) for l in lab_vols]
    return Batch(raw=raw_vol, labels=lab_vols[0], aux_labels=lab_vols[1] if aux_labels is not None else None,
                 rng_seed=rng_seed, attempts=attempt)


def _normalize(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    if data.dtype.kind in "ui":
        return (data.astype(np.float32) / np.float32(np.iinfo(data.dtype).max))
    return np.clip(data.astype(np.float32), 0, 1)
