"""Traces of a smooth function on the unit square are compatible; a perturbed set is not."""

import numpy as np

from vecpot.trace import BoundaryField, check_compatibility, gamma, square_charts

charts = square_charts(9)
phi = lambda x: x[0] ** 3 * x[1] + x[1] ** 2
traces = [[gamma(phi, c, q) for q in range(3)] for c in charts]
rep = check_compatibility(traces, charts, 3)
print("smooth:", rep.verdict, f"max defect {rep.max_defect:.1e}", "shared nodes", rep.overlap_nodes)

bumped = np.array(traces[1][2].values)
bumped[-3:] += 1.0
traces[1][2] = BoundaryField(charts[1], 0, bumped)
rep = check_compatibility(traces, charts, 3)
print("perturbed:", rep.verdict, {q: f"{v:.2f}" for q, v in rep.overlap_defects.items()})
