"""
Field of view of two U-Net layouts
==================================

With 40 nm sections and 4 nm pixels a 3x3x3 kernel already spans ten times
more tissue in z than in-plane. Replacing the fine-level kernels by 1x3x3
keeps the receptive field closer to a cube.
"""

from voxblock import context_per_side, load_preset, physical_fov, required_input_shape, valid_output_shape

for name in ("dtu1-like", "dtu2-like"):
    arch = load_preset(name)
    print(f"\n{name}")
    print(f"{'layer':<16}{'voxels':>18}{'nm':>24}{'ratio':>8}")
    for layer in physical_fov(arch, (40, 4, 4)).layers:
        nm = "x".join(f"{v:.0f}" for v in layer.physical_nm)
        vox = "x".join(str(v) for v in layer.voxel_fov)
        print(f"{layer.label:<16}{vox:>18}{nm:>24}{layer.isotropy:>8.2f}")

###############################################################################
# Block sizes. The input must be padded by the context on every side.
dtu2 = load_preset("dtu2-like")
for out in [(23, 218, 218), (71, 650, 650)]:
    need = required_input_shape(dtu2, out)
    print(f"output {out} needs input {need}, context {context_per_side(dtu2, out)}, "
          f"round trip {valid_output_shape(dtu2, need)}")
