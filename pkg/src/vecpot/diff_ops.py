"""Central-difference vector calculus in N dimensions.

Every first derivative is the same one-dimensional operator ``D_k`` applied
along axis ``k``: ``(f[i+1] - f[i-1]) / 2h`` in the interior and either
wrap-around (``"periodic"``) or second-order one-sided stencils
(``"one_sided_edges"``) at the ends.  Because ``D_i`` and ``D_j`` act on
different axes they commute exactly, so

* ``curl(grad f) == 0``,
* ``div(scurl A) == 0``,
* ``-laplacian_wide(v) == -grad(div v) + scurl(curl v)``

hold to rounding error on any grid, and ``inner(curl g, A) == inner(g,
scurl A)`` holds to rounding error whenever the supports stay two cells away
from non-periodic edges (summation by parts for an antisymmetric ``D_k``).
"""

from __future__ import annotations

import numpy as np

from .grid_fields import (
    AntisymField,
    Field,
    ScalarField,
    VectorField,
    pair_index,
    upper_pairs,
)

__all__ = [
    "MODES",
    "partial",
    "second_partial",
    "grad",
    "div",
    "curl",
    "scurl",
    "laplacian_wide",
    "laplacian_compact",
    "inner",
    "gamma_t_pointwise",
]

MODES = ("periodic", "one_sided_edges")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown stencil mode {mode!r}; expected one of {MODES}")


def _sl(ndim: int, axis: int, s) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def partial(arr: np.ndarray, axis: int, h: float, mode: str = "one_sided_edges") -> np.ndarray:
    """Central first difference of ``arr`` along ``axis``."""
    _check_mode(mode)
    if mode == "periodic":
        return (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2.0 * h)
    nd = arr.ndim
    out = np.empty_like(arr, dtype=np.float64)
    out[_sl(nd, axis, slice(1, -1))] = (
        arr[_sl(nd, axis, slice(2, None))] - arr[_sl(nd, axis, slice(None, -2))]
    ) / (2.0 * h)
    a0, a1, a2 = (arr[_sl(nd, axis, k)] for k in (0, 1, 2))
    out[_sl(nd, axis, 0)] = (-3.0 * a0 + 4.0 * a1 - a2) / (2.0 * h)
    b0, b1, b2 = (arr[_sl(nd, axis, k)] for k in (-1, -2, -3))
    out[_sl(nd, axis, -1)] = (3.0 * b0 - 4.0 * b1 + b2) / (2.0 * h)
    return out


def second_partial(arr: np.ndarray, axis: int, h: float, mode: str = "one_sided_edges") -> np.ndarray:
    """Compact three-point second difference along ``axis``."""
    _check_mode(mode)
    h2 = h * h
    if mode == "periodic":
        return (np.roll(arr, -1, axis) - 2.0 * arr + np.roll(arr, 1, axis)) / h2
    nd = arr.ndim
    n = arr.shape[axis]
    out = np.empty_like(arr, dtype=np.float64)
    out[_sl(nd, axis, slice(1, -1))] = (
        arr[_sl(nd, axis, slice(2, None))]
        - 2.0 * arr[_sl(nd, axis, slice(1, -1))]
        + arr[_sl(nd, axis, slice(None, -2))]
    ) / h2
    if n >= 4:
        # second-order one-sided: (2, -5, 4, -1) / h^2
        for sign, ks in ((1, (0, 1, 2, 3)), (-1, (-1, -2, -3, -4))):
            c = [arr[_sl(nd, axis, k)] for k in ks]
            out[_sl(nd, axis, ks[0])] = (2.0 * c[0] - 5.0 * c[1] + 4.0 * c[2] - c[3]) / h2
    else:
        out[_sl(nd, axis, 0)] = out[_sl(nd, axis, 1)]
        out[_sl(nd, axis, -1)] = out[_sl(nd, axis, 1)]
    return out


def grad(f: ScalarField, mode: str = "one_sided_edges") -> VectorField:
    g = f.grid
    return VectorField(g, np.stack([partial(f.data, k, g.spacing[k], mode) for k in range(g.dim)]))


def div(v: VectorField, mode: str = "one_sided_edges") -> ScalarField:
    g = v.grid
    out = np.zeros(g.shape)
    for k in range(g.dim):
        out += partial(v.data[k], k, g.spacing[k], mode)
    return ScalarField(g, out)


def curl(v: VectorField, mode: str = "one_sided_edges") -> AntisymField:
    """``A_ij = (D_i v_j - D_j v_i) / 2`` for ``i < j``."""
    g = v.grid
    d = {}
    out = []
    for i, j in upper_pairs(g.dim):
        if (i, j) not in d:
            d[i, j] = partial(v.data[j], i, g.spacing[i], mode)
        if (j, i) not in d:
            d[j, i] = partial(v.data[i], j, g.spacing[j], mode)
        out.append(0.5 * (d[i, j] - d[j, i]))
    if not out:
        return AntisymField(g, np.zeros((0, *g.shape)))
    return AntisymField(g, np.stack(out))


def scurl(A: AntisymField, mode: str = "one_sided_edges", factor: float = 2.0) -> VectorField:
    """``f_i = sum_j factor * D_j A_ij`` (``factor`` is 2 outside of defect tests)."""
    g = A.grid
    n = g.dim
    out = np.zeros((n, *g.shape))
    for i, j in upper_pairs(n):
        a = A.data[pair_index(i, j, n)]
        out[i] += partial(a, j, g.spacing[j], mode)
        out[j] -= partial(a, i, g.spacing[i], mode)
    return VectorField(g, factor * out)


def _apply_scalarwise(f: Field, op) -> Field:
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, op(f.data, 0))
    return type(f)(f.grid, np.stack([op(c, 1) for c in f.data]) if len(f.data) else f.data)


def laplacian_wide(f: Field, mode: str = "one_sided_edges") -> Field:
    """``sum_k D_k D_k``: reach 2h per axis, the composition of the first differences."""
    g = f.grid

    def op(arr, lead):
        out = np.zeros(arr.shape)
        for k in range(g.dim):
            out += partial(partial(arr, k, g.spacing[k], mode), k, g.spacing[k], mode)
        return out

    return _apply_scalarwise(f, op)


def laplacian_compact(f: Field, mode: str = "one_sided_edges") -> Field:
    """Standard ``2N+1``-point Laplacian."""
    g = f.grid

    def op(arr, lead):
        out = np.zeros(arr.shape)
        for k in range(g.dim):
            out += second_partial(arr, k, g.spacing[k], mode)
        return out

    return _apply_scalarwise(f, op)


def inner(a: Field, b: Field) -> float:
    """Quadrature of the pointwise pairing; antisymmetric fields carry ``2 A_ij B_ij``."""
    if type(a) is not type(b):
        raise TypeError(f"cannot pair {a.kind} with {b.kind}")
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    weight = 4.0 if isinstance(a, AntisymField) else 1.0
    return weight * a.grid.cell_volume * float(np.sum(a.data * b.data))


def gamma_t_pointwise(f, n) -> np.ndarray:
    """Tangential trace matrix with entries ``(f_j n_i - f_i n_j) / 2``."""
    f = np.asarray(f, dtype=float)
    n = np.asarray(n, dtype=float)
    if f.shape != n.shape or f.ndim != 1:
        raise ValueError("f and n must be vectors of equal length")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValueError(f"normal is not a unit vector (|n| = {np.linalg.norm(n)!r})")
    return 0.5 * (np.outer(n, f) - np.outer(f, n))
