"""Zero-trace splitting ``v = w + grad eta`` on a box.

``v`` lives on the nodes of a box ``Omega`` and vanishes on its boundary.  It
is extended by zero into a larger ambient box, pushed through
:func:`vecpot.vector_potential.construct`, and the curl-free remainder
``v~ - w~`` is integrated back to a potential ``eta``.  The checkable content
of the zero-trace theorem is that ``w~ + grad eta`` vanishes outside
``Omega``; that quantity is reported as ``boundary_leak``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import diff_ops as ops
from .grid_fields import GridSpec, NormSpec, ScalarField, VectorField, discrete_norm
from .vector_potential import METHODS, construct

__all__ = [
    "DecompositionResult",
    "NotAGradientError",
    "ZeroTraceError",
    "zero_extend",
    "gradient_recover",
    "gradient_residual",
    "decompose_zero_trace",
]

CURL_TOL = 0.1


class ZeroTraceError(ValueError):
    """Input does not vanish on the boundary of its box."""


class NotAGradientError(ValueError):
    """Input to gradient recovery has a curl that is not small."""


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    w: VectorField
    eta: ScalarField
    recon_rel: float
    div_w_rel: float
    boundary_leak: float
    extras: dict

    def summary(self) -> dict:
        out = {
            "recon_rel": self.recon_rel,
            "div_w_rel": self.div_w_rel,
            "boundary_leak": self.boundary_leak,
        }
        out.update(self.extras)
        return out


def _l2(f, region=None) -> float:
    return discrete_norm(f, NormSpec(2.0, 0), region=region)


def _offset(inner: GridSpec, outer: GridSpec) -> tuple[int, ...]:
    if not np.allclose(inner.spacing, outer.spacing, rtol=1e-12, atol=0):
        raise ValueError("subgrid spacing differs from the ambient grid")
    off = []
    for a, b, h, n, m in zip(inner.origin, outer.origin, inner.spacing, inner.shape, outer.shape):
        k = (a - b) / h
        r = round(k)
        if abs(k - r) > 1e-6 or r < 0 or r + n > m:
            raise ValueError("subgrid does not sit on the ambient lattice")
        off.append(int(r))
    return tuple(off)


def _boundary_max(data: np.ndarray, dim: int) -> float:
    mag = np.abs(data).max(axis=0)
    worst = 0.0
    for axis in range(dim):
        moved = np.moveaxis(mag, axis, 0)
        worst = max(worst, float(moved[0].max()), float(moved[-1].max()))
    return worst


def zero_extend(v: VectorField, box: GridSpec, tol: float = 1e-10, margin: int = 4) -> VectorField:
    """Copy ``v`` into ``box`` (zero elsewhere); ``v`` must vanish on its boundary nodes."""
    if v.grid.dim != box.dim:
        raise ValueError("dimension mismatch between field and ambient box")
    worst = _boundary_max(v.data, v.grid.dim)
    if worst > tol:
        raise ZeroTraceError(f"boundary values reach {worst:.3g} > {tol:g}; input is not zero-trace")
    off = _offset(v.grid, box)
    for o, n, m in zip(off, v.grid.shape, box.shape):
        if o < margin or m - (o + n) < margin:
            raise ValueError(f"subgrid must sit at least {margin} cells inside the ambient box")
    out = np.zeros((box.dim, *box.shape))
    out[(slice(None), *(slice(o, o + n) for o, n in zip(off, v.grid.shape)))] = v.data
    return VectorField(box, out)


def _curl_ratio(u: VectorField, mode: str) -> float:
    cu = discrete_norm(ops.curl(u, mode), NormSpec(2.0, 0))
    g = u.grid
    du = math.sqrt(sum(
        discrete_norm(VectorField(g, np.stack([ops.partial(c, k, g.spacing[k], mode) for c in u.data])),
                      NormSpec(2.0, 0)) ** 2
        for k in range(g.dim)
    ))
    return 0.0 if du == 0 else cu / du


def _edge_values(c: np.ndarray) -> np.ndarray:
    """Fourth-order midpoint interpolation along axis 0 (cubic one-sided at the ends)."""
    e = 0.5 * (c[1:] + c[:-1])
    if len(c) < 4:
        return e
    e[1:-1] = (9.0 * (c[1:-2] + c[2:-1]) - (c[:-3] + c[3:])) / 16.0
    e[0] = (5.0 * c[0] + 15.0 * c[1] - 5.0 * c[2] + c[3]) / 16.0
    e[-1] = (5.0 * c[-1] + 15.0 * c[-2] - 5.0 * c[-3] + c[-4]) / 16.0
    return e


def _recover_neumann(u: VectorField) -> np.ndarray:
    # least squares: forward differences of eta against midpoint values of u,
    # solved exactly in the cosine basis of the Neumann graph Laplacian
    g = u.grid
    b = np.zeros(g.shape)
    lam = np.zeros(g.shape)
    for k, (n, h) in enumerate(zip(g.shape, g.spacing)):
        c = np.moveaxis(u.data[k], k, 0)
        e = _edge_values(c)
        rhs = np.zeros_like(c)
        rhs[:-1] -= e / h
        rhs[1:] += e / h
        b += np.moveaxis(rhs, 0, k)
        shape = [1] * g.dim
        shape[k] = n
        lam = lam + (4.0 * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2 / h**2).reshape(shape)
    bh = scipy.fft.dctn(b, type=2, norm="ortho")
    lam.flat[0] = 1.0
    bh = bh / lam
    bh.flat[0] = 0.0
    return scipy.fft.idctn(bh, type=2, norm="ortho")


def _recover_periodic(u: VectorField) -> np.ndarray:
    g = u.grid
    axes = tuple(range(g.dim))
    num = np.zeros(g.shape, dtype=complex)
    den = np.zeros(g.shape)
    for k, (n, h) in enumerate(zip(g.shape, g.spacing)):
        shape = [1] * g.dim
        shape[k] = n
        s = (np.sin(2.0 * np.pi * np.fft.fftfreq(n)) / h).reshape(shape)
        num = num - 1j * s * scipy.fft.fftn(u.data[k], axes=axes)
        den = den + s**2
    null = den < 1e-12 * den.max()
    eh = np.where(null, 0.0, num / np.where(null, 1.0, den))
    return np.real(scipy.fft.ifftn(eh, axes=axes))


def gradient_recover(u: VectorField, mode: str = "one_sided_edges", tol: float = CURL_TOL) -> ScalarField:
    """Zero-mean ``eta`` with ``grad eta ~ u`` on a box.

    ``mode="one_sided_edges"`` solves the compact-stencil Neumann Poisson
    problem that is the least-squares fit of forward differences;
    ``"periodic"`` inverts the central-difference gradient in Fourier space.
    Raises :class:`NotAGradientError` when ``||curl u||`` exceeds ``tol``
    times ``||D u||``.
    """
    ops._check_mode(mode)
    if not np.any(u.data):
        return ScalarField(u.grid, np.zeros(u.grid.shape))
    ratio = _curl_ratio(u, mode)
    if ratio > tol:
        raise NotAGradientError(f"relative curl {ratio:.3g} exceeds {tol:g}; input is not a gradient")
    eta = _recover_neumann(u) if mode == "one_sided_edges" else _recover_periodic(u)
    return ScalarField(u.grid, eta - eta.mean())


def gradient_residual(u: VectorField, eta: ScalarField, mode: str = "one_sided_edges") -> float:
    """``||grad eta - u|| / ||u||`` in L2 (0 when ``u`` is zero)."""
    un = _l2(u)
    return 0.0 if un == 0 else _l2(ops.grad(eta, mode) - u) / un


def decompose_zero_trace(v: VectorField, ambient: GridSpec | None = None, method: str = "fd",
                         tol: float = 1e-10) -> DecompositionResult:
    """Split zero-trace ``v`` on its box into ``w`` (divergence-free) plus ``grad eta``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    grid = v.grid
    if ambient is None:
        ambient = grid.padded(max(4, max(grid.shape) // 4))
    vt = zero_extend(v, ambient, tol)
    mode = "periodic" if method == "spectral" else "one_sided_edges"
    diag = construct(vt, method)
    wt = diag.w
    eta_t = gradient_recover(vt - wt, mode, tol=max(CURL_TOL, 1e3 * diag.curl_defect_rel))

    off = _offset(grid, ambient)
    inside = tuple(slice(o, o + n) for o, n in zip(off, grid.shape))
    mask = np.zeros(ambient.shape, dtype=bool)
    mask[inside] = True

    grad_eta = ops.grad(eta_t, mode)
    recon = vt - wt - grad_eta
    v_l2 = _l2(vt)
    zero = v_l2 == 0
    recon_rel = 0.0 if zero else _l2(recon, region=tuple((o, o + n) for o, n in zip(off, grid.shape))) / v_l2
    div_w = ops.div(wt, mode)
    div_rel = 0.0 if zero else float(np.sqrt(np.sum(div_w.data[inside] ** 2) * ambient.cell_volume)) / v_l2
    leak_field = np.abs(wt.data + grad_eta.data).max(axis=0)
    vmax = float(np.abs(vt.data).max())
    leak = 0.0 if zero else float(leak_field[~mask].max()) / vmax

    w = VectorField(grid, wt.data[(slice(None), *inside)])
    eta = eta_t.data[inside]
    eta = ScalarField(grid, eta - eta.mean())
    extras = {
        "method": method,
        "ambient_shape": list(ambient.shape),
        "offset": list(off),
        "pipeline_div_w_rel": diag.div_w_rel,
        "curl_defect_rel": diag.curl_defect_rel,
    }
    return DecompositionResult(w, eta, recon_rel, div_rel, leak, extras)
