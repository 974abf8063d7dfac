"""Divergence-free vector potential of a compactly supported field.

Given ``v`` with compact support the pipeline builds

1. ``g = N[v]`` (componentwise Newton potential), ``eta = div g`` and
   ``w = v + grad eta``.  ``w - v`` is a discrete gradient, so
   ``curl w == curl v`` to rounding error; ``div w`` vanishes up to the
   consistency error of the Poisson solve.
2. ``H = N[curl v]`` and ``w1 = scurl H`` (``scurl`` is the adjoint of
   ``curl`` under the factor-2 pairing, playing the role of ``curl*``).
3. ``w2 = w - w1``, which must be harmonic; its discrete Laplacian is
   measured away from the grid edge.
4. Finite-resolution ratios standing in for the a-priori estimate.

Potentials are evaluated on a two-node halo around the grid and differenced
there, so ``eta`` and ``w1`` on the grid are built from lattice central
differences that commute with the convolution.  ``method="spectral"`` instead
treats the grid as periodic and inverts the Fourier symbol of the wide
Laplacian, which makes ``div w`` vanish to rounding error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import diff_ops as ops
from .grid_fields import (
    AntisymField,
    NormSpec,
    ScalarField,
    VectorField,
    discrete_norm,
)
from .newton_potential import MarginWarning, dilate_box, support_box, vector_potential_of

__all__ = [
    "PotentialDiagnostics",
    "HALO",
    "step1_correct",
    "step2_w1",
    "step3_harmonic_check",
    "construct",
    "periodic_poisson",
]

HALO = 2
INTERIOR_MARGIN = 4
METHODS = ("fd", "spectral")


@dataclass(frozen=True, eq=False)
class PotentialDiagnostics:
    eta: ScalarField
    w: VectorField
    w1: VectorField
    w2: VectorField
    div_w_rel: float
    curl_defect_rel: float
    harmonic_residual_rel: float
    norm_ratio: float
    extras: dict

    def summary(self) -> dict:
        """JSON-ready scalar diagnostics."""
        out = {
            "div_w_rel": self.div_w_rel,
            "curl_defect_rel": self.curl_defect_rel,
            "harmonic_residual_rel": self.harmonic_residual_rel,
            "norm_ratio": self.norm_ratio,
            "norms": {
                "v_l2": self.extras["v_l2"],
                "w_l2": _l2(self.w),
                "w1_l2": _l2(self.w1),
                "w2_l2": _l2(self.w2),
                "eta_l2": _l2(self.eta),
            },
        }
        for key in ("method", "mean_removed", "omega", "omega_dilated", "w2_interior_ratio"):
            if key in self.extras:
                out[key] = self.extras[key]
        return out


def _l2(f) -> float:
    return discrete_norm(f, NormSpec(2.0, 0))


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _check_margin(v, margin: int = INTERIOR_MARGIN) -> None:
    data = np.abs(v.data).max(axis=0) if v.data.ndim > v.grid.dim else np.abs(v.data)
    for axis, n in enumerate(data.shape):
        moved = np.moveaxis(data, axis, 0)
        if np.any(moved[:margin]) or np.any(moved[n - margin:]):
            warnings.warn(
                f"input is nonzero within {margin} cells of the grid edge; "
                "the free-space construction assumes compact support well inside the grid",
                MarginWarning,
                stacklevel=3,
            )
            return


def _crop(field, pad: int, grid):
    """Drop ``pad`` halo nodes, re-attaching the exact original ``grid``."""
    sl = tuple(slice(pad, n - pad) for n in field.grid.shape)
    lead = () if isinstance(field, ScalarField) else (slice(None),)
    return type(field)(grid, field.data[lead + sl])


# --- periodic (spectral) machinery -------------------------------------------


def _symbols(grid):
    """Fourier symbols ``sin(theta_k)/h_k`` of the periodic central difference."""
    out = []
    for k, (n, h) in enumerate(zip(grid.shape, grid.spacing)):
        theta = 2.0 * np.pi * np.fft.fftfreq(n)
        shape = [1] * grid.dim
        shape[k] = n
        out.append((np.sin(theta) / h).reshape(shape))
    return out


def periodic_poisson(arr: np.ndarray, grid) -> np.ndarray:
    """Solve ``-laplacian_wide u = arr`` on the periodic grid.

    Modes where the wide-Laplacian symbol vanishes (the mean and the
    Nyquist checkerboards) are dropped from the solution.
    """
    s2 = sum(s**2 for s in _symbols(grid))
    null = s2 < 1e-12 * s2.max()
    inv = np.where(null, 0.0, 1.0 / np.where(null, 1.0, s2))
    axes = tuple(range(-grid.dim, 0))
    return np.real(scipy.fft.ifftn(scipy.fft.fftn(arr, axes=axes) * inv, axes=axes))


# --- pipeline -----------------------------------------------------------------


def step1_correct(v: VectorField, method: str = "fd", variant: str = "div_of_potential"):
    """Return ``(eta, w)`` with ``w = v + grad eta``.

    ``variant="div_of_potential"`` takes ``eta = div N[v]``; the alternative
    ``"potential_of_div"`` takes ``eta = N[div v]`` (needs a differentiable
    ``v``).  Both agree to ``O(h^2)`` on smooth input.
    """
    _check_method(method)
    if variant not in ("div_of_potential", "potential_of_div"):
        raise ValueError(f"unknown variant {variant!r}")
    grid = v.grid
    if method == "spectral":
        g = VectorField(grid, periodic_poisson(v.data, grid))
        eta = ops.div(g, "periodic") if variant == "div_of_potential" else ScalarField(
            grid, periodic_poisson(ops.div(v, "periodic").data, grid))
        return eta, v + ops.grad(eta, "periodic")
    _check_margin(v)
    if variant == "div_of_potential":
        g = vector_potential_of(v, pad=HALO)
        eta_halo = ops.div(g)
    else:
        eta_halo = vector_potential_of(ops.div(v), pad=HALO)
    eta = _crop(eta_halo, HALO, grid)
    # grad on the grid itself: curl(grad eta) then vanishes identically with the
    # same one-sided edge stencils used by diff_ops.curl
    return eta, v + ops.grad(eta)


def step2_w1(v: VectorField, method: str = "fd") -> VectorField:
    """``w1 = scurl N[curl v]``."""
    _check_method(method)
    grid = v.grid
    if method == "spectral":
        cv = ops.curl(v, "periodic")
        H = AntisymField(grid, periodic_poisson(cv.data, grid))
        return ops.scurl(H, "periodic")
    _check_margin(v)
    H = vector_potential_of(ops.curl(v), pad=HALO)
    return _crop(ops.scurl(H), HALO, grid)


def _interior(grid, margin: int = INTERIOR_MARGIN):
    if any(n <= 2 * margin for n in grid.shape):
        raise ValueError(f"grid too small for a {margin}-cell interior")
    return (Ellipsis, *(slice(margin, n - margin) for n in grid.shape))


def step3_harmonic_check(w: VectorField, w1: VectorField, mode: str = "one_sided_edges"):
    """Return ``(w2, residual)`` with ``w2 = w - w1``.

    ``residual = ||lap w2|| / max(||lap w||, ||lap w1||)`` with the wide
    Laplacian and L2 norms taken at least four cells inside the grid; a zero
    numerator reports 0.
    """
    w2 = w - w1
    sel = _interior(w.grid)
    lap = [ops.laplacian_wide(f, mode).data[sel] for f in (w2, w, w1)]
    num, *dens = (float(np.sqrt(np.sum(a**2))) for a in lap)
    return w2, _ratio(num, max(dens))


def construct(v: VectorField, method: str = "fd", p: float = 2.0,
              variant: str = "div_of_potential") -> PotentialDiagnostics:
    """Run the three construction steps and the estimate report on ``v``."""
    _check_method(method)
    mode = "periodic" if method == "spectral" else "one_sided_edges"
    grid = v.grid
    eta, w = step1_correct(v, method, variant)
    w1 = step2_w1(v, method)
    w2, residual = step3_harmonic_check(w, w1, mode)

    cv = ops.curl(v, mode)
    curl_defect = _ratio(_l2(ops.curl(w, mode) - cv), _l2(cv))
    v_l2 = _l2(v)
    div_rel = _ratio(_l2(ops.div(w, mode)), v_l2)

    lp = NormSpec(p, 0)
    omega = support_box(v)
    omega_t = dilate_box(omega, grid.shape)
    norm_ratio = _ratio(
        discrete_norm(w, NormSpec(p, 1), mode, region=omega),
        discrete_norm(v, lp, mode) + discrete_norm(cv, lp, mode),
    )
    w2_ratio = _ratio(
        discrete_norm(w2, NormSpec(p, 1), mode, region=omega),
        discrete_norm(w2, lp, mode, region=omega_t),
    )
    extras = {
        "method": method,
        "v_l2": v_l2,
        "omega": [list(b) for b in omega],
        "omega_dilated": [list(b) for b in omega_t],
        "w2_interior_ratio": w2_ratio,
    }
    if method == "spectral":
        axes = tuple(range(1, grid.dim + 1))
        extras["mean_removed"] = [float(m) for m in v.data.mean(axis=axes)]
    return PotentialDiagnostics(eta, w, w1, w2, div_rel, curl_defect, residual, norm_ratio, extras)
