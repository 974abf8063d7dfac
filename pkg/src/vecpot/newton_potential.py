"""Free-space Newton potentials of compactly supported grid densities.

The potential ``phi(x) = sum_y rho(y) lam(x - y) dV`` uses the Laplace
fundamental solution ``lam`` off the diagonal and, for the self cell, the
exact integral of ``lam`` over the ball whose volume equals one grid cell.
Both the ``O(M^2)`` direct sum and the FFT path use the same kernel table, so
they differ only by transform rounding.

The result may be evaluated on the density grid extended by ``pad`` nodes per
side.  Differencing a potential on such a halo and cropping afterwards gives
exactly the lattice (infinite-grid) central differences on the original
nodes, which is how :mod:`vecpot.vector_potential` keeps ``D_k`` commuting
with the convolution.
"""

from __future__ import annotations

import functools
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid_fields import (
    AntisymField,
    Field,
    GridSpec,
    NormSpec,
    ScalarField,
    VectorField,
    discrete_norm,
)

__all__ = [
    "KernelSpec",
    "MarginWarning",
    "unit_ball_volume",
    "kernel_eval",
    "self_cell_value",
    "newton_direct",
    "newton_fast",
    "vector_potential_of",
    "support_box",
    "dilate_box",
    "estimate_ratios",
]


class MarginWarning(UserWarning):
    """Density support comes closer to the grid edge than the method assumes."""


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class KernelSpec:
    """Fundamental solution of ``-Laplace`` in ``dim`` dimensions."""

    dim: int
    self_rule: bool = True

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"kernel dimension must be an integer >= 2, got {self.dim}")

    @property
    def unit_ball_volume(self) -> float:
        return unit_ball_volume(self.dim)


def kernel_eval(spec: KernelSpec, r):
    """``-log(r)/(2 pi)`` for N=2, ``r**(2-N) / (N (N-2) V_N)`` otherwise."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("kernel radius must be positive")
    n = spec.dim
    if n == 2:
        out = -np.log(r) / (2.0 * math.pi)
    else:
        out = r ** (2 - n) / (n * (n - 2) * spec.unit_ball_volume)
    return out if out.ndim else float(out)


def self_cell_value(spec: KernelSpec, cell_volume: float) -> float:
    """Integral of the kernel over the ball of volume ``cell_volume`` centred at 0."""
    n = spec.dim
    rc = (cell_volume / spec.unit_ball_volume) ** (1.0 / n)
    if n == 2:
        return rc * rc * (1.0 - 2.0 * math.log(rc)) / 4.0
    return rc * rc / (2.0 * (n - 2))


def _workers() -> int | None:
    env = os.environ.get("VECPOT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return None


def _check_margin(density: ScalarField, margin: int = 2) -> None:
    data = density.data
    for axis, n in enumerate(data.shape):
        moved = np.moveaxis(data, axis, 0)
        if np.any(moved[:margin] != 0) or np.any(moved[n - margin:] != 0):
            warnings.warn(
                f"density is nonzero within {margin} cells of the grid edge (axis {axis}); "
                "the result is the potential of the truncated density",
                MarginWarning,
                stacklevel=3,
            )
            return


def _kernel_table(spec: KernelSpec, grid: GridSpec, pad: int) -> np.ndarray:
    """Kernel at every lattice offset reachable from density to padded output."""
    ext = [n - 1 + pad for n in grid.shape]
    axes = [h * np.arange(-e, e + 1) for e, h in zip(ext, grid.spacing)]
    r2 = np.zeros([2 * e + 1 for e in ext])
    for k, a in enumerate(axes):
        shape = [1] * grid.dim
        shape[k] = -1
        r2 = r2 + (a**2).reshape(shape)
    centre = tuple(ext)
    r2[centre] = 1.0
    table = kernel_eval(spec, np.sqrt(r2))
    table[centre] = self_cell_value(spec, grid.cell_volume) / grid.cell_volume
    return table


@functools.lru_cache(maxsize=16)
def _kernel_spectrum(shape, spacing, pad):
    grid = GridSpec(shape, spacing)
    table = _kernel_table(KernelSpec(len(shape)), grid, pad)
    fshape = tuple(scipy.fft.next_fast_len(s, real=True) for s in table.shape)
    return fshape, scipy.fft.rfftn(table, fshape, workers=_workers())


def newton_fast(density: ScalarField, pad: int = 0) -> ScalarField:
    """FFT evaluation of the Newton potential on ``density.grid.padded(pad)``.

    The transform length per axis is at least the kernel-table length, which
    keeps circular wrap-around out of the retained window, so the result is
    the linear convolution.
    """
    grid = density.grid
    _check_margin(density)
    out_grid = grid.padded(pad) if pad else grid
    if not np.any(density.data):
        return ScalarField(out_grid, np.zeros(out_grid.shape))
    fshape, kspec = _kernel_spectrum(grid.shape, grid.spacing, pad)
    w = _workers()
    full = scipy.fft.irfftn(scipy.fft.rfftn(density.data, fshape, workers=w) * kspec, fshape, workers=w)
    window = tuple(slice(n - 1, 2 * n - 1 + 2 * pad) for n in grid.shape)
    return ScalarField(out_grid, grid.cell_volume * full[window])


def newton_direct(density: ScalarField, pad: int = 0, chunk: int = 2048) -> ScalarField:
    """Direct ``O(M^2)`` summation of the Newton potential (reference path)."""
    grid = density.grid
    _check_margin(density)
    spec = KernelSpec(grid.dim)
    out_grid = grid.padded(pad) if pad else grid
    src = np.argwhere(density.data != 0)
    out = np.zeros(out_grid.size)
    if len(src) == 0:
        return ScalarField(out_grid, out.reshape(out_grid.shape))
    h = np.asarray(grid.spacing)
    rho = density.data[tuple(src.T)]
    self_val = self_cell_value(spec, grid.cell_volume)
    vol = grid.cell_volume
    # offsets are computed from integer indices so coincident nodes are exact zeros
    src_idx = src + pad
    out_idx = np.argwhere(np.ones(out_grid.shape, dtype=bool))
    for start in range(0, len(out_idx), chunk):
        oi = out_idx[start:start + chunk]
        diff = (oi[:, None, :] - src_idx[None, :, :]) * h
        r = np.sqrt(np.sum(diff**2, axis=-1))
        same = r == 0
        r[same] = 1.0
        k = kernel_eval(spec, r)
        k[same] = self_val / vol
        out[start:start + chunk] = vol * (k @ rho)
    return ScalarField(out_grid, out.reshape(out_grid.shape))


def vector_potential_of(density: Field, pad: int = 0, method: str = "fast") -> Field:
    """Componentwise Newton potential of a scalar, vector or antisymmetric field."""
    op = {"fast": newton_fast, "direct": newton_direct}[method]
    if isinstance(density, ScalarField):
        return op(density, pad)
    parts = [op(ScalarField(density.grid, c), pad) for c in density.data]
    out_grid = parts[0].grid
    return type(density)(out_grid, np.stack([p.data for p in parts]))


# --- estimate diagnostics -----------------------------------------------------


def support_box(field: Field, rel_tol: float = 0.0) -> tuple[tuple[int, int], ...]:
    """Smallest node box holding every node where ``|field| > rel_tol * max|field|``."""
    mag = np.abs(field.data)
    if mag.ndim > field.grid.dim:
        mag = mag.max(axis=0)
    peak = mag.max()
    if peak == 0:
        return tuple((0, n) for n in field.grid.shape)
    idx = np.argwhere(mag > rel_tol * peak)
    return tuple((int(lo), int(hi) + 1) for lo, hi in zip(idx.min(axis=0), idx.max(axis=0)))


def dilate_box(box, shape, factor: float = 0.25) -> tuple[tuple[int, int], ...]:
    """Grow a node box by ``factor`` of its width on each axis, clipped to the grid."""
    out = []
    for (a, b), n in zip(box, shape):
        grow = int(math.ceil(0.5 * factor * (b - a)))
        out.append((max(0, a - grow), min(n, b + grow)))
    return tuple(out)


def estimate_ratios(density: ScalarField, potential: ScalarField, p: float = 2.0) -> dict:
    """Finite ratios standing in for the interior and Calderon-Zygmund constants.

    ``interior``: ``||phi||_{W^{2,p}(box)} / (||phi||_{L^p(box~)} + ||rho||_{L^p(box~)})``
    with ``box`` the density support and ``box~`` its 25% dilation.
    ``calderon_zygmund``: ``max_ij ||D_i D_j phi||_{L^p} / ||rho||_{L^p}`` over the grid.
    """
    from .diff_ops import partial

    if potential.grid != density.grid:
        raise ValueError("density and potential must share a grid")
    grid = density.grid
    box = support_box(density)
    wide = dilate_box(box, grid.shape)
    lp = NormSpec(p, 0)
    rho_norm = discrete_norm(density, lp)
    if rho_norm == 0:
        return {"interior": 0.0, "calderon_zygmund": 0.0, "box": box, "box_dilated": wide}
    num = discrete_norm(potential, NormSpec(p, 2), region=box)
    den = discrete_norm(potential, lp, region=wide) + discrete_norm(density, lp, region=wide)
    cz = 0.0
    for i in range(grid.dim):
        di = partial(potential.data, i, grid.spacing[i])
        for j in range(i, grid.dim):
            dij = ScalarField(grid, partial(di, j, grid.spacing[j]))
            cz = max(cz, discrete_norm(dij, lp) / rho_norm)
    return {"interior": num / den, "calderon_zygmund": cz, "box": box, "box_dilated": wide}
