"""Divergence-free potential of a compactly supported field, on three grids."""

import numpy as np

from vecpot.generators import poly_bump_grad
from vecpot.grid_fields import GridSpec, VectorField
from vecpot.vector_potential import construct


def curl_field(n, dim=2):
    # v = scurl of a bump in the (1, 2) plane, so v has a real curl
    grid = GridSpec.box(n, -1.0, 1.0, dim)
    gb = poly_bump_grad(grid.coords(), np.zeros(dim), 0.46, 8)
    data = np.zeros((dim, *grid.shape))
    data[0], data[1] = 2.0 * gb[1], -2.0 * gb[0]
    return VectorField(grid, data)


for n in (16, 32, 64):
    d = construct(curl_field(n))
    print(f"n={n:3d}  div w {d.div_w_rel:.2e}  curl defect {d.curl_defect_rel:.1e}  "
          f"harmonic {d.harmonic_residual_rel:.2e}  |w|/|v| {d.norm_ratio:.3f}")

d = construct(curl_field(32), method="spectral")
print(f"spectral n=32  div w {d.div_w_rel:.1e}")
