"""
Masked prediction on a synthetic brain
======================================

A coarse pyramid level is enough to tell tissue from background. Only output
blocks touching the mask are predicted, which here saves over half the work.
"""

import tempfile
from pathlib import Path

import numpy as np

from voxblock import (
    N5Container, VoxelVolume, build_mask, build_pyramid, cleft_score, plan_blocks, psf_density, run,
    threshold_to_labels,
)
from voxblock.engine import OraclePredictor

rng = np.random.default_rng(1)
shape = (96, 96, 96)
z, y, x = np.ogrid[:96, :96, :96]
tissue = (z - 48) ** 2 + (y - 48) ** 2 + (x - 48) ** 2 <= 34 ** 2
raw = np.clip(np.where(tissue, rng.normal(170, 15, shape), rng.normal(25, 8, shape)), 0, 255).astype(np.uint8)
labels = np.zeros(shape, np.uint8)
for cz, cy, cx in rng.integers(36, 60, (8, 3)):
    labels[cz:cz + 2, cy - 5:cy + 5, cx - 3:cx + 3] = 1

container = N5Container(Path(tempfile.mkdtemp()) / "brain.n5")
container.create_dataset("raw", shape, chunk_size=(32, 32, 32)).write_roi(VoxelVolume.from_array(raw))
truth = container.create_dataset("labels", shape, chunk_size=(32, 32, 32))
truth.write_roi(VoxelVolume.from_array(labels))

levels = build_pyramid(container, "raw", [(2, 2, 2), (2, 2, 2)])
coarse = levels[-1].dataset
mask = build_mask(coarse.read_roi(coarse.roi), 100, 255)
print(f"tissue fraction {tissue.mean():.3f}, mask fraction {mask.data.mean():.3f}")

###############################################################################
# The oracle predictor stands in for a trained network: it emits the distance
# target of the ground truth, so a perfect score checks the plumbing.
predictor = OraclePredictor(truth, context=(2, 8, 8))
plans = plan_blocks(truth.roi, (16, 32, 32), predictor.context, mask=mask, mask_factors=levels[-1].factors)
out = container.create_dataset("pred", shape, chunk_size=(16, 32, 32), element_type="f32")
report = run(plans, predictor, container["raw"], out, n_workers=4)
print(f"{report.blocks_done} of {len(plans)} blocks predicted, {report.blocks_skipped} skipped")

pred = threshold_to_labels(out.read_roi(out.roi))
print(cleft_score(pred, truth.read_roi(truth.roi)).to_json())

###############################################################################
# A wide anisotropic blur turns detections into a density map
density = psf_density(pred, sigma_nm=(160, 64, 64), output_voxel_size=(160, 64, 64))
print("density map", density.shape, "peak", float(density.data.max()))
