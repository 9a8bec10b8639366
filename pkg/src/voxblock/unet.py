"""Shape arithmetic for valid-convolution U-Nets.

An :class:`ArchSpec` lists the encoder levels from finest to coarsest. Every
level but the last ends in a pooling step with per-axis ``down`` factors; the
decoder mirrors the encoder, upsampling by the same factors and applying
``decoder_convs`` (by default the encoder kernels of that level).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .volume import VoxelSize

Triple = Tuple[int, int, int]


class ShapeError(ValueError):
    """Input shape cannot pass through the network."""


class AsymmetricContextError(ValueError):
    """Input and output shapes differ by an odd number of voxels."""


def _t(values) -> Triple:
    values = tuple(int(v) for v in values)
    if len(values) != 3:
        raise ValueError(f"expected 3 values (z, y, x), got {values}")
    return values


@dataclass(frozen=True)
class Level:
    convs: Tuple[Triple, ...]
    down: Optional[Triple] = None
    decoder_convs: Optional[Tuple[Triple, ...]] = None
    features: Optional[int] = None  # metadata only

    def __post_init__(self):
        object.__setattr__(self, "convs", tuple(_t(k) for k in self.convs))
        if self.down is not None:
            object.__setattr__(self, "down", _t(self.down))
        if self.decoder_convs is not None:
            object.__setattr__(self, "decoder_convs", tuple(_t(k) for k in self.decoder_convs))
        for k in self.convs + (self.decoder_convs or ()):
            if min(k) < 1:
                raise ValueError(f"kernel extents must be >= 1, got {k}")
        if self.down is not None and min(self.down) < 1:
            raise ValueError(f"down factors must be >= 1, got {self.down}")

    @property
    def up_convs(self) -> Tuple[Triple, ...]:
        return self.convs if self.decoder_convs is None else self.decoder_convs


@dataclass(frozen=True)
class ArchSpec:
    levels: Tuple[Level, ...]
    name: str = ""

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        for i, level in enumerate(levels):
            last = i == len(levels) - 1
            if last and level.down is not None:
                raise ValueError("the bottom level cannot have a down factor")
            if not last and level.down is None:
                raise ValueError(f"level {i} needs a down factor")

    @classmethod
    def from_json(cls, data: dict) -> "ArchSpec":
        levels = []
        for entry in data["levels"]:
            levels.append(Level(
                convs=entry.get("convs", []),
                down=entry.get("down"),
                decoder_convs=entry.get("decoder_convs"),
                features=entry.get("features"),
            ))
        return cls(tuple(levels), data.get("name", ""))

    @classmethod
    def load(cls, path) -> "ArchSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        levels = []
        for level in self.levels:
            entry = {"convs": [list(k) for k in level.convs]}
            if level.down is not None:
                entry["down"] = list(level.down)
            if level.decoder_convs is not None:
                entry["decoder_convs"] = [list(k) for k in level.decoder_convs]
            if level.features is not None:
                entry["features"] = level.features
            levels.append(entry)
        return {"name": self.name, "levels": levels}

    def layers(self) -> List[Tuple[str, str, Triple]]:
        """Flattened layer sequence: (kind, label, kernel-or-factor)."""
        out = []
        last = len(self.levels) - 1
        for i, level in enumerate(self.levels):
            side = "bottom" if i == last else "enc"
            for j, k in enumerate(level.convs):
                out.append(("conv", f"{side}{i}.conv{j}", k))
            if i != last:
                out.append(("pool", f"enc{i}.pool", level.down))
        for i in range(last - 1, -1, -1):
            level = self.levels[i]
            out.append(("up", f"dec{i}.up", level.down))
            for j, k in enumerate(level.up_convs):
                out.append(("conv", f"dec{i}.conv{j}", k))
        return out


PRESETS = ("dtu1-like", "dtu2-like")


def load_preset(name: str) -> ArchSpec:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("voxblock.presets").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return ArchSpec.from_json(json.loads(text))


def load_arch(spec: str) -> ArchSpec:
    """Preset name or path to a JSON file."""
    return load_preset(spec) if spec in PRESETS else ArchSpec.load(spec)


def valid_output_shape(arch: ArchSpec, input_shape) -> Triple:
    shape = np.array(_t(input_shape))
    if np.any(shape < 1):
        raise ShapeError(f"input shape {tuple(shape)} must be positive")
    for kind, label, k in arch.layers():
        if kind == "conv":
            shape = shape - (np.array(k) - 1)
        elif kind == "pool":
            bad = np.nonzero(shape % np.array(k))[0]
            if bad.size:
                axis = "zyx"[bad[0]]
                raise ShapeError(f"{label}: size {shape[bad[0]]} along {axis} not divisible by {k[bad[0]]}")
            shape = shape // np.array(k)
        else:
            shape = shape * np.array(k)
        bad = np.nonzero(shape < 1)[0]
        if bad.size:
            raise ShapeError(f"{label}: size along {'zyx'[bad[0]]} drops to {shape[bad[0]]}")
    return tuple(int(s) for s in shape)


def required_input_shape(arch: ArchSpec, output_shape) -> Triple:
    """Smallest admissible input whose valid output covers ``output_shape``."""
    shape = np.maximum(np.array(_t(output_shape)), 1)
    for kind, _label, k in reversed(arch.layers()):
        k = np.array(k)
        if kind == "conv":
            shape = shape + (k - 1)
        elif kind == "up":
            shape = -(-shape // k)
        else:
            shape = shape * k
    return tuple(int(s) for s in shape)


def context_per_side(arch: ArchSpec, output_shape) -> Triple:
    """Voxels of input needed on each side of an output block."""
    output_shape = _t(output_shape)
    diff = np.array(required_input_shape(arch, output_shape)) - np.array(output_shape)
    if np.any(diff % 2):
        raise AsymmetricContextError(
            f"input/output difference {tuple(int(d) for d in diff)} is odd for output {output_shape}"
        )
    return tuple(int(d) // 2 for d in diff)


@dataclass(frozen=True)
class LayerFov:
    label: str
    voxel_fov: Triple
    physical_nm: Tuple[float, float, float]
    isotropy: float


@dataclass(frozen=True)
class FovReport:
    layers: Tuple[LayerFov, ...] = field(default_factory=tuple)

    def ratios(self) -> List[float]:
        return [l.isotropy for l in self.layers]

    def to_json(self) -> list:
        return [
            {"layer": l.label, "voxel_fov": list(l.voxel_fov),
             "physical_nm": list(l.physical_nm), "isotropy": l.isotropy}
            for l in self.layers
        ]


def _receptive_widths(arch: ArchSpec, axis: int) -> List[int]:
    """Largest input extent seen by one voxel of each conv layer along ``axis``.

    Tracks the input interval ``[lo, hi]`` of every voxel through the layers;
    after upsampling the extent depends on alignment, hence the maximum.
    """
    period = int(np.prod([l.down[axis] for l in arch.levels if l.down is not None]))
    out_len = 2 * period + 1
    n = required_input_shape(arch, (out_len,) * 3)[axis]
    lo = np.arange(n)
    hi = np.arange(n)
    widths = []
    for kind, _label, k in arch.layers():
        k = k[axis]
        if kind == "conv":
            lo, hi = lo[: lo.size - k + 1], hi[k - 1:]
            widths.append(int((hi - lo).max()) + 1)
        elif kind == "pool":
            m = lo.size // k
            lo, hi = lo[0: m * k: k], hi[k - 1: m * k: k]
        else:
            lo, hi = np.repeat(lo, k), np.repeat(hi, k)
    return widths


def physical_fov(arch: ArchSpec, voxel_size=VoxelSize()) -> FovReport:
    """Receptive field after every convolution, in voxels and nanometers.

    In the encoder a convolution adds ``(k - 1) * step`` input voxels and a
    pooling window adds ``(f - 1) * step`` before multiplying the step by
    ``f``. Decoder layers report the widest field over all voxel alignments.
    """
    vs = VoxelSize.of(voxel_size).as_array()
    labels = [label for kind, label, _k in arch.layers() if kind == "conv"]
    per_axis = [_receptive_widths(arch, axis) for axis in range(3)]
    layers = []
    for i, label in enumerate(labels):
        fov = np.array([per_axis[a][i] for a in range(3)])
        phys = fov * vs
        layers.append(LayerFov(label, tuple(int(f) for f in fov), tuple(float(p) for p in phys),
                               float(phys.max() / phys.min())))
    return FovReport(tuple(layers))
