"""Blockwise prediction toolkit for large anisotropic 3D microscopy volumes."""

from .volume import Roi, VoxelSize, VoxelVolume, read_region, roi_grow, roi_intersect
from .n5 import CodecError, DatasetAttributes, N5Container, N5Dataset, decode_chunk, encode_chunk
from .sdt import EmptyClassError, sedt, stdt, threshold_to_labels
from .metrics import CleftScore, cleft_score, psf_density
from .unet import (ArchSpec, context_per_side, load_preset, physical_fov, required_input_shape,
                   valid_output_shape)
from .engine import BlockPlan, RunReport, eta, plan_blocks, run
from .pyramid import build_mask, build_pyramid, downscale

__version__ = "0.1.0"
