"""Deterministic smooth test fields.

Random fields are finite Fourier sums with a fixed spectrum: every wave vector
``k`` with integer entries in ``[-K, K]`` and ``0 < |k|_inf`` contributes
``a_k cos(2 pi k.x / L) + b_k sin(2 pi k.x / L)`` with ``a_k, b_k`` standard
normal scaled by ``1 / (1 + |k|^2)``.  ``L`` is the periodic length
``n * h`` of each axis.  The coefficients are drawn from
``numpy.random.default_rng(seed)`` in lexicographic order of ``k`` (cosine
then sine), one scalar component at a time, so a run is reproducible from
``(grid shape, seed)`` alone.  ``K = 2`` up to three dimensions and ``K = 1``
above, which keeps the mode count manageable in 4-D and 5-D.

For non-periodic use the sum is multiplied by :func:`box_window`, whose
support ends ``margin`` cells before each edge.
"""

from __future__ import annotations

import itertools

import numpy as np

from .grid_fields import AntisymField, GridSpec, ScalarField, VectorField

__all__ = [
    "poly_bump",
    "poly_bump_grad",
    "box_window",
    "random_scalar",
    "random_vector",
    "random_antisym",
]

BUMP_POWER = 8


def poly_bump(x: np.ndarray, center, radius: float, power: int = BUMP_POWER) -> np.ndarray:
    """``(1 - |x-c|^2/R^2)^power`` inside the ball, 0 outside (``C^{power-1}``)."""
    c = np.asarray(center, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    t = 1.0 - np.sum((x - c) ** 2, axis=0) / radius**2
    return np.where(t > 0, np.maximum(t, 0.0) ** power, 0.0)


def poly_bump_grad(x: np.ndarray, center, radius: float, power: int = BUMP_POWER) -> np.ndarray:
    """Exact gradient of :func:`poly_bump`, shape ``(N, *x.shape[1:])``."""
    c = np.asarray(center, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    t = 1.0 - np.sum((x - c) ** 2, axis=0) / radius**2
    inner = np.where(t > 0, power * np.maximum(t, 0.0) ** (power - 1), 0.0)
    return inner * (-2.0 * (x - c) / radius**2)


def box_window(grid: GridSpec, margin: int = 2) -> np.ndarray:
    """Product of 1-D polynomial bumps vanishing ``margin`` cells from each edge."""
    out = np.ones(grid.shape)
    for k, (n, h, o) in enumerate(zip(grid.shape, grid.spacing, grid.origin)):
        a = o + margin * h
        b = o + (n - 1 - margin) * h
        s = o + h * np.arange(n)
        t = np.clip((s - a) * (b - s) / (0.5 * (b - a)) ** 2, 0.0, None)
        shape = [1] * grid.dim
        shape[k] = n
        out = out * (t**4).reshape(shape)
    return out


def _wave_vectors(dim: int):
    kmax = 2 if dim <= 3 else 1
    for k in itertools.product(range(-kmax, kmax + 1), repeat=dim):
        if any(k):
            yield np.array(k)


def _fourier_sum(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    x = grid.coords()
    lengths = np.array([n * h for n, h in zip(grid.shape, grid.spacing)])
    out = np.zeros(grid.shape)
    for k in _wave_vectors(grid.dim):
        scale = 1.0 / (1.0 + float(k @ k))
        a, b = rng.standard_normal(2) * scale
        phase = 2.0 * np.pi * np.tensordot(k / lengths, x - np.reshape(grid.origin, (-1,) + (1,) * grid.dim), 1)
        out += a * np.cos(phase) + b * np.sin(phase)
    return out


def _components(grid: GridSpec, ncomp: int, seed: int, mode: str, margin: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    window = None if mode == "periodic" else box_window(grid, margin)
    comps = []
    for _ in range(ncomp):
        c = _fourier_sum(grid, rng)
        comps.append(c if window is None else c * window)
    return np.stack(comps)


def random_scalar(grid: GridSpec, seed: int, mode: str = "periodic", margin: int = 2) -> ScalarField:
    return ScalarField(grid, _components(grid, 1, seed, mode, margin)[0])


def random_vector(grid: GridSpec, seed: int, mode: str = "periodic", margin: int = 2) -> VectorField:
    return VectorField(grid, _components(grid, grid.dim, seed, mode, margin))


def random_antisym(grid: GridSpec, seed: int, mode: str = "periodic", margin: int = 2) -> AntisymField:
    n = grid.dim
    return AntisymField(grid, _components(grid, n * (n - 1) // 2, seed, mode, margin))
