"""
Distance targets and the cleft score
====================================

Clefts are thin sheets, a couple of sections thick. Regressing a squashed
signed distance instead of the raw labels gives the network a smooth target,
and thresholding at zero gives the labels back.
"""

import numpy as np

from voxblock import VoxelVolume, cleft_score, sedt, stdt, threshold_to_labels

# a two-section-thick cleft in a 40 x 4 x 4 nm volume
labels = np.zeros((6, 24, 24), np.uint8)
labels[2:4, 8:16, 4:20] = 1
volume = VoxelVolume.from_array(labels, voxel_size=(40, 4, 4))

distance = sedt(volume)
print("distance range (nm):", distance.data.min(), "to", distance.data.max())

# Along x the distance grows by 4 nm per voxel, along z by 40 nm
print("row through the cleft:", distance.data[2, 12, :8])

###############################################################################
# The tanh squashes distances to (-1, 1); its scale only sets how quickly
# the target saturates, the sign never changes.
for s in (1, 50, 500):
    target = stdt(distance, s)
    back = threshold_to_labels(target, 0)
    print(f"s={s:>3}: target at the cleft center {target.data[2, 12, 12]:.3f}, "
          f"labels recovered: {np.array_equal(back.data, labels)}")

###############################################################################
# Scoring a prediction that is shifted by one voxel in x
shifted = np.roll(labels, 1, axis=2)
score = cleft_score(VoxelVolume.from_array(shifted, voxel_size=(40, 4, 4)), volume)
print(score.to_json())
