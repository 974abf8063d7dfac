"""Exact and brute-force references for the numerical operators.

Polynomials carry :class:`fractions.Fraction` coefficients, so symbolic
identities are checked by equality rather than by tolerance.  Exponents are
capped at :data:`EXP_CAP` per variable.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from .grid_fields import AntisymField, GridSpec, ScalarField, VectorField, pair_index, upper_pairs

__all__ = [
    "EXP_CAP",
    "Poly",
    "PolyField",
    "poly_grad",
    "poly_div",
    "poly_curl",
    "poly_scurl",
    "poly_laplacian",
    "random_poly",
    "random_poly_field",
    "sample_poly",
    "radial_potential",
    "gaussian",
    "gaussian_laplacian",
    "gaussian_w1p_norm",
    "observed_order",
]

EXP_CAP = 6


class Poly:
    """Polynomial in ``dim`` variables: ``{exponent tuple: Fraction}``."""

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        self.dim = int(dim)
        clean = {}
        for exp, c in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.dim or min(exp) < 0:
                raise ValueError(f"bad exponent {exp} for dimension {self.dim}")
            if max(exp) > EXP_CAP:
                raise ValueError(f"exponent {max(exp)} exceeds the cap {EXP_CAP}")
            c = Fraction(c)
            if c:
                clean[exp] = clean.get(exp, Fraction(0)) + c
        self.terms = {e: c for e, c in clean.items() if c}

    @classmethod
    def monomial(cls, exp, coeff=1) -> "Poly":
        return cls(len(exp), {tuple(exp): coeff})

    @classmethod
    def zero(cls, dim: int) -> "Poly":
        return cls(dim)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return Poly(self.dim, out)

    def __neg__(self) -> "Poly":
        return Poly(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            out = {}
            for (e1, c1), (e2, c2) in itertools.product(self.terms.items(), other.terms.items()):
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
            return Poly(self.dim, out)
        k = Fraction(other)
        return Poly(self.dim, {e: k * c for e, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.dim == other.dim and self.terms == other.terms

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(f"x{k + 1}^{p}" if p > 1 else f"x{k + 1}" for k, p in enumerate(e) if p)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def diff(self, k: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[k]:
                d = list(e)
                d[k] -= 1
                out[tuple(d)] = c * e[k]
        return Poly(self.dim, out)

    def __call__(self, x):
        """Evaluate at points ``x`` of shape ``(dim, ...)``; works for numpy and jax arrays."""
        if isinstance(x, (np.ndarray, np.generic, list, tuple, float)):
            xp = np
            x = np.asarray(x, dtype=float)
        else:
            import jax.numpy as xp
        if not self.terms:
            return 0.0 * x[0]
        exps = np.array(list(self.terms), dtype=int)
        coef = np.array([float(c) for c in self.terms.values()])
        mono = None
        for k in range(self.dim):
            # powers by repeated multiplication keep derivatives finite at x = 0
            powers = [1.0 + 0.0 * x[k]]
            for _ in range(int(exps[:, k].max())):
                powers.append(powers[-1] * x[k])
            col = xp.stack(powers)[exps[:, k]]
            mono = col if mono is None else mono * col
        return xp.tensordot(coef, mono, axes=1)


@dataclass(frozen=True, eq=True)
class PolyField:
    """Polynomial scalar, vector or antisymmetric-matrix field (upper entries stored)."""

    dim: int
    kind: str
    comps: tuple

    def __post_init__(self):
        n = self.dim
        expected = {"scalar": 1, "vector": n, "antisym": n * (n - 1) // 2}.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown kind {self.kind!r}")
        if len(self.comps) != expected or any(p.dim != n for p in self.comps):
            raise ValueError(f"{self.kind} field in dimension {n} needs {expected} components")

    @classmethod
    def scalar(cls, p: Poly) -> "PolyField":
        return cls(p.dim, "scalar", (p,))

    def __add__(self, other):
        self._same(other)
        return PolyField(self.dim, self.kind, tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __sub__(self, other):
        self._same(other)
        return PolyField(self.dim, self.kind, tuple(a - b for a, b in zip(self.comps, other.comps)))

    def __neg__(self):
        return PolyField(self.dim, self.kind, tuple(-a for a in self.comps))

    def __mul__(self, k):
        return PolyField(self.dim, self.kind, tuple(a * Fraction(k) for a in self.comps))

    __rmul__ = __mul__

    def _same(self, other):
        if not isinstance(other, PolyField) or (other.dim, other.kind) != (self.dim, self.kind):
            raise TypeError("polynomial fields of different kind or dimension")

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.comps)

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.comps)

    def entry(self, i: int, j: int) -> Poly:
        if self.kind != "antisym":
            raise TypeError("entry() needs an antisymmetric field")
        if i == j:
            return Poly.zero(self.dim)
        p = self.comps[pair_index(min(i, j), max(i, j), self.dim)]
        return p if i < j else -p

    def __call__(self, x):
        return self.comps[0](x) if self.kind == "scalar" else [p(x) for p in self.comps]


def _need(f: PolyField, kind: str):
    if f.kind != kind:
        raise TypeError(f"expected a {kind} polynomial field, got {f.kind}")


def poly_grad(f: PolyField) -> PolyField:
    _need(f, "scalar")
    p = f.comps[0]
    return PolyField(f.dim, "vector", tuple(p.diff(k) for k in range(f.dim)))


def poly_div(f: PolyField) -> PolyField:
    _need(f, "vector")
    total = Poly.zero(f.dim)
    for k, p in enumerate(f.comps):
        total = total + p.diff(k)
    return PolyField.scalar(total)


def poly_curl(f: PolyField) -> PolyField:
    """``A_ij = (d_i f_j - d_j f_i) / 2``."""
    _need(f, "vector")
    half = Fraction(1, 2)
    return PolyField(f.dim, "antisym", tuple(
        (f.comps[j].diff(i) - f.comps[i].diff(j)) * half for i, j in upper_pairs(f.dim)))


def poly_scurl(a: PolyField) -> PolyField:
    """``f_i = sum_j 2 d_j A_ij``."""
    _need(a, "antisym")
    n = a.dim
    out = []
    for i in range(n):
        total = Poly.zero(n)
        for j in range(n):
            if j != i:
                total = total + a.entry(i, j).diff(j) * 2
        out.append(total)
    return PolyField(n, "vector", tuple(out))


def poly_laplacian(f: PolyField) -> PolyField:
    out = []
    for p in f.comps:
        total = Poly.zero(f.dim)
        for k in range(f.dim):
            total = total + p.diff(k).diff(k)
        out.append(total)
    return PolyField(f.dim, f.kind, tuple(out))


def random_poly(dim: int, degree: int, seed, max_num: int = 9, den: int = 4) -> Poly:
    """Random polynomial of total degree ``<= degree`` with small rational coefficients."""
    if degree > EXP_CAP:
        raise ValueError(f"degree {degree} exceeds the cap {EXP_CAP}")
    rng = np.random.default_rng(seed)
    terms = {}
    for e in itertools.product(range(degree + 1), repeat=dim):
        if sum(e) <= degree:
            terms[e] = Fraction(int(rng.integers(-max_num, max_num + 1)), int(rng.integers(1, den + 1)))
    return Poly(dim, terms)


def random_poly_field(dim: int, kind: str, degree: int, seed) -> PolyField:
    count = {"scalar": 1, "vector": dim, "antisym": dim * (dim - 1) // 2}[kind]
    ss = np.random.SeedSequence(seed)
    return PolyField(dim, kind, tuple(random_poly(dim, degree, s) for s in ss.spawn(count)))


def sample_poly(f: PolyField, grid: GridSpec):
    """Sample a polynomial field on ``grid`` as the matching field type."""
    x = grid.coords()
    data = np.stack([p(x) for p in f.comps])
    if f.kind == "scalar":
        return ScalarField(grid, data[0])
    return (VectorField if f.kind == "vector" else AntisymField)(grid, data)


# --- analytic references ----------------------------------------------------


def radial_potential(profile, dim: int, r_eval: float, support: float, tol: float = 1e-12) -> float:
    """Newton potential at radius ``r_eval`` of the radial density ``profile(s)``, ``s <= support``.

    By the shell theorem the potential reduces to
    ``int_0^R rho(s) s^(N-1) max(r, s)^(2-N) / (N-2) ds`` (``N >= 3``) or
    ``-int_0^R rho(s) s log max(r, s) ds`` (``N = 2``).
    """
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    if not support > 0 or r_eval < 0:
        raise ValueError("support must be positive and r_eval non-negative")
    r = float(r_eval)

    def shell(s):
        m = max(r, s)
        if dim == 2:
            return -profile(s) * s * math.log(m) if m > 0 else 0.0
        return profile(s) * s ** (dim - 1) * m ** (2 - dim) / (dim - 2)

    breaks = [b for b in (r,) if 0 < b < support]
    total, err = 0.0, 0.0
    edges = [0.0, *breaks, support]
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            # quad reports divergence and roundoff trouble as warnings only
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, e = integrate.quad(shell, a, b, epsabs=tol / 10, epsrel=1e-14, limit=200)
            except integrate.IntegrationWarning as exc:
                raise ArithmeticError(f"radial quadrature did not converge: {exc}") from None
        total += val
        err += e
    if err > tol:
        raise ArithmeticError(f"radial quadrature did not converge (error estimate {err:.3g})")
    return total


def gaussian(x, sigma: float):
    return np.exp(-np.sum(x**2, axis=0) / (2.0 * sigma**2))


def gaussian_laplacian(x, sigma: float):
    r2 = np.sum(x**2, axis=0)
    n = x.shape[0]
    return (r2 / sigma**4 - n / sigma**2) * np.exp(-r2 / (2.0 * sigma**2))


def gaussian_w1p_norm(sigma: float, dim: int, p: float = 2.0) -> float:
    """``(||g||_p^p + sum_k ||d_k g||_p^p)^(1/p)`` over ``R^N`` for ``g = exp(-|x|^2 / 2 sigma^2)``."""
    # ||g||_p^p = (2 pi sigma^2 / p)^(N/2); each partial factorizes into a 1-D moment
    base = (2.0 * math.pi * sigma**2 / p) ** (dim / 2)
    one_d = (2.0 * math.pi * sigma**2 / p) ** 0.5
    a = p / (2.0 * sigma**2)
    moment = math.gamma((p + 1) / 2) / a ** ((p + 1) / 2) / sigma ** (2 * p)
    deriv = dim * moment * base / one_d
    return (base + deriv) ** (1.0 / p)


def observed_order(errors) -> float:
    """Least-squares slope of ``log e`` against ``log h`` for pairs ``(h, e)``."""
    pairs = [(float(h), float(e)) for h, e in errors]
    if len(pairs) < 2:
        raise ValueError("need at least two grid levels")
    if any(not (h > 0 and e > 0) or not (math.isfinite(h) and math.isfinite(e)) for h, e in pairs):
        raise ValueError("step sizes and errors must be positive and finite")
    hs = np.log([h for h, _ in pairs])
    if np.ptp(hs) == 0:
        raise ValueError("grid levels must have distinct step sizes")
    es = np.log([e for _, e in pairs])
    return float(np.polyfit(hs, es, 1)[0])
