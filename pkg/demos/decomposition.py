"""Split a zero-trace field into a divergence-free part plus a gradient."""

import numpy as np

from vecpot.decomposition import ZeroTraceError, decompose_zero_trace
from vecpot.generators import poly_bump_grad
from vecpot.grid_fields import GridSpec, VectorField

grid = GridSpec.box(96, -1.0, 1.0, 2)
x = grid.coords()
grad = poly_bump_grad(x, np.zeros(2), 0.9, 4)
swirl = np.stack([-x[1], x[0]]) * (1 - x[0] ** 2) ** 4 * (1 - x[1] ** 2) ** 4

for name, data in (("gradient", grad), ("gradient + swirl", grad + swirl)):
    r = decompose_zero_trace(VectorField(grid, data))
    print(f"{name:18s} |w| {np.sqrt((r.w.data ** 2).mean()):.2e}  recon {r.recon_rel:.1e}  "
          f"div w {r.div_w_rel:.1e}  leak {r.boundary_leak:.1e}")

try:
    decompose_zero_trace(VectorField(grid, np.ones((2, *grid.shape))))
except ZeroTraceError as exc:
    print("constant field rejected:", exc)
