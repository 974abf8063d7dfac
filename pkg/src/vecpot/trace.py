"""Traces on Lipschitz graph charts and the higher-order compatibility tensors.

A chart describes a piece of the boundary as the graph ``x_a = phi(y)`` over
the remaining ``N - 1`` coordinates ``y`` (``a`` is ``normal_axis``).  With
``orientation = +1`` the domain lies on the side ``x_a > phi(y)``; the unit
outward normal then points towards ``x_a < phi(y)``.  ``-1`` flips the side.

Given boundary data ``phi_0, ..., phi_{m-1}`` (the would-be normal
derivatives of some volume function) the chain

    S_0 = phi_0,
    S_q = grad_G S_{q-1}
          + sum_{k=1}^{q-1} sum_i (n^k) (x) tau_i (x) [d_tau_i S_{q-1} . (n^k)]
          + (n^q) phi_q,

with ``grad_G u = sum_i tau_i (x) d_tau_i u`` and ``. (n^k)`` contracting the
last ``k`` indices with the normal, reproduces the ``q``-th derivative tensor
of the volume function when the data are traces of one.  ``S_1`` is the
vector usually written ``s`` and ``S_2`` the matrix ``S``.

Two derivative paths exist.  If a chart carries an analytic graph
(``graph_fn``) and the data carry analytic callables, every tangential
derivative is taken exactly with ``jax``; otherwise central differences on the
chart grid are used (second-order one-sided at the chart edges).

On a single smooth chart ``S_q`` comes out symmetric for *any* data, so
symmetry alone never flags inconsistent traces there.  Incompatibility shows
up where charts meet at a corner: both charts must produce the same ``S_q``
at shared points.  :func:`check_compatibility` therefore rejects when either
a symmetry defect or an overlap defect exceeds the tolerance.
"""

from __future__ import annotations

import base64
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
from scipy.spatial import cKDTree

from .grid_fields import ScalarField, read_samples, write_samples

jax.config.update("jax_enable_x64", True)

__all__ = [
    "ParamGrid",
    "BoundaryChart",
    "Frame",
    "BoundaryField",
    "CompatibilityReport",
    "FrameError",
    "build_frame",
    "square_charts",
    "frames",
    "gamma",
    "gamma0",
    "gamma1",
    "gamma2",
    "surface_gradient",
    "build_s",
    "build_S",
    "build_S_chain",
    "lemma43_rows",
    "symmetry_defect",
    "check_compatibility",
    "read_boundary",
    "write_boundary",
    "read_traces",
    "write_traces",
    "MAX_ORDER",
]

MAX_ORDER = 4
PIVOT_TOL = 1e-12


class FrameError(ValueError):
    """Gram-Schmidt pivot fell below tolerance."""


# --- chart geometry -------------------------------------------------------------


@dataclass(frozen=True)
class ParamGrid:
    """Uniform grid over the chart parameters; unlike ``GridSpec`` it may be 1-D."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(o) for o in self.origin)
        if not shape or not (len(shape) == len(spacing) == len(origin)):
            raise ValueError("shape, spacing and origin must be non-empty and of equal length")
        if any(n < 3 for n in shape):
            raise ValueError(f"every parameter axis needs >= 3 nodes, got {shape}")
        if any(not (h > 0 and math.isfinite(h)) for h in spacing):
            raise ValueError("parameter spacing must be positive and finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def box(cls, n, lower, upper, dim: int = 1) -> "ParamGrid":
        shape = tuple(n) if isinstance(n, (tuple, list)) else (int(n),) * dim
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (len(shape),))
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (len(shape),))
        return cls(shape, tuple((hi - lo) / (np.asarray(shape) - 1)), tuple(lo))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def nodes(self) -> np.ndarray:
        """Parameter coordinates of every node, shape ``(size, dim)`` in C order."""
        axes = [o + h * np.arange(n) for n, h, o in zip(self.shape, self.spacing, self.origin)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)


@dataclass(frozen=True, eq=False)
class BoundaryChart:
    dim: int
    param_grid: ParamGrid
    graph: np.ndarray
    orientation: int = 1
    normal_axis: int | None = None
    graph_fn: object = None
    # graph is constant, so the frame is the same at every node
    planar: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("ambient dimension must be >= 2")
        if self.param_grid.dim != self.dim - 1:
            raise ValueError("parameter grid must have dimension N - 1")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        axis = self.dim - 1 if self.normal_axis is None else int(self.normal_axis)
        if not 0 <= axis < self.dim:
            raise ValueError("normal_axis out of range")
        object.__setattr__(self, "normal_axis", axis)
        g = np.array(self.graph, dtype=float).reshape(self.param_grid.shape)
        if not np.all(np.isfinite(g)):
            raise ValueError("graph values must be finite")
        g.flags.writeable = False
        object.__setattr__(self, "graph", g)

    @classmethod
    def from_function(cls, fn, param_grid: ParamGrid, orientation: int = 1, normal_axis=None,
                      planar: bool = False):
        """Chart of the graph of ``fn`` (a ``jax``-traceable map of ``y``, shape ``(N-1,)``)."""
        vals = np.asarray(jax.vmap(fn)(jnp.asarray(param_grid.nodes())))
        return cls(param_grid.dim + 1, param_grid, vals.reshape(param_grid.shape), orientation,
                   normal_axis, fn, planar)

    @classmethod
    def flat(cls, param_grid: ParamGrid, level: float = 0.0, orientation: int = 1, normal_axis=None):
        level = float(level)
        return cls.from_function(lambda y: level + 0.0 * y[0], param_grid, orientation, normal_axis,
                                 planar=True)

    @property
    def analytic(self) -> bool:
        return self.graph_fn is not None

    @property
    def param_axes(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.dim) if k != self.normal_axis)

    def embed(self, y, value):
        """Ambient point with parameters ``y`` and graph value ``value`` (numpy or jax)."""
        xp = jnp if isinstance(y, jax.Array) else np
        parts = [y[..., k] for k in range(self.dim - 1)]
        parts.insert(self.normal_axis, value)
        return xp.stack(parts, axis=-1)

    def points(self) -> np.ndarray:
        """Ambient coordinates of every chart node, shape ``(size, N)``."""
        return self.embed(self.param_grid.nodes(), self.graph.reshape(-1))

    def graph_gradient(self) -> np.ndarray:
        """``d phi / d y_k`` at every node, shape ``(size, N-1)``."""
        if self.analytic:
            return np.asarray(jax.vmap(jax.grad(self.graph_fn))(jnp.asarray(self.param_grid.nodes())))
        return np.stack(_fd_gradient(self.graph, self.param_grid), axis=-1).reshape(-1, self.dim - 1)

    def lipschitz_ratio(self) -> float:
        """Largest difference quotient of the sampled graph between neighbouring nodes."""
        worst = 0.0
        for k, h in enumerate(self.param_grid.spacing):
            worst = max(worst, float(np.abs(np.diff(self.graph, axis=k)).max()) / h)
        return worst


def _fd_gradient(arr: np.ndarray, grid: ParamGrid, lead: int = 0) -> list[np.ndarray]:
    """Per-axis derivatives on the chart grid (central, second-order one-sided at edges)."""
    out = []
    for k, h in enumerate(grid.spacing):
        out.append(np.gradient(arr, h, axis=lead + k, edge_order=2))
    return out


def _frame_point(chart: BoundaryChart, gphi):
    """Tangents ``(N-1, N)``, normal, tangent-derivative coefficients and pivots at one node."""
    n_dim = chart.dim
    eye = jnp.eye(n_dim)
    a = chart.normal_axis
    raw = jnp.stack([eye[p] + gphi[k] * eye[a] for k, p in enumerate(chart.param_axes)])
    taus, pivots = [], []
    for k in range(n_dim - 1):
        u = raw[k]
        for t in taus:
            u = u - jnp.dot(u, t) * t
        piv = jnp.linalg.norm(u)
        pivots.append(piv)
        taus.append(u / piv)
    T = jnp.stack(taus)
    nraw = sum(gphi[k] * eye[p] for k, p in enumerate(chart.param_axes)) - eye[a]
    n = chart.orientation * nraw / jnp.linalg.norm(nraw)
    det = _det(jnp.concatenate([T, n[None, :]]))
    T = T.at[-1].set(jnp.where(det < 0, -T[-1], T[-1]))
    # tau_i = sum_k C[i, k] dX/dy_k, so d_tau_i = sum_k C[i, k] d/dy_k
    C = (_inv(raw @ raw.T) @ (raw @ T.T)).T
    return T, n, C, jnp.stack(pivots)


def _frame_at(chart: BoundaryChart, y):
    """``_frame_point`` at parameter ``y``; a constant for planar charts."""
    if not chart.planar:
        return _frame_point(chart, jax.grad(chart.graph_fn)(y))
    cached = chart.__dict__.get("_const_frame")
    if cached is None:
        cached = tuple(np.asarray(a) for a in _frame_point(chart, jnp.zeros(chart.dim - 1)))
        object.__setattr__(chart, "_const_frame", cached)
    return tuple(jnp.asarray(a) for a in cached)


# closed forms for the small matrices above; they are differentiated many
# times over in nested derivative chains, where generic LU is slow
def _det(M):
    if M.shape[0] == 2:
        return M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if M.shape[0] == 3:
        return jnp.dot(jnp.cross(M[0], M[1]), M[2])
    return jnp.linalg.det(M)


def _inv(G):
    if G.shape[0] == 1:
        return 1.0 / G
    if G.shape[0] == 2:
        adj = jnp.array([[G[1, 1], -G[0, 1]], [-G[1, 0], G[0, 0]]])
        return adj / (G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0])
    return jnp.linalg.inv(G)


@dataclass(frozen=True)
class Frame:
    tangents: np.ndarray
    normal: np.ndarray


def _geometry(chart: BoundaryChart):
    """Frames at every node: ``(T, n, C)`` with leading node axis."""
    T, n, C, piv = jax.vmap(lambda g: _frame_point(chart, g))(jnp.asarray(chart.graph_gradient()))
    if float(jnp.min(piv)) < PIVOT_TOL:
        raise FrameError("degenerate frame: orthonormalization pivot below 1e-12")
    return T, n, C


def frames(chart: BoundaryChart) -> tuple[np.ndarray, np.ndarray]:
    """Tangents ``(size, N-1, N)`` and outward normals ``(size, N)`` at every node."""
    T, n, _ = _geometry(chart)
    return np.asarray(T), np.asarray(n)


def build_frame(chart: BoundaryChart, node) -> Frame:
    """Orthonormal positively oriented frame at the chart node with index ``node``."""
    flat = int(np.ravel_multi_index(tuple(np.atleast_1d(node)), chart.param_grid.shape))
    if chart.analytic:
        y = jnp.asarray(chart.param_grid.nodes()[flat])
        gphi = jax.grad(chart.graph_fn)(y)
    else:
        gphi = jnp.asarray(chart.graph_gradient()[flat])
    T, n, _, piv = _frame_point(chart, gphi)
    if float(jnp.min(piv)) < PIVOT_TOL:
        raise FrameError("degenerate frame: orthonormalization pivot below 1e-12")
    return Frame(np.asarray(T), np.asarray(n))


def square_charts(n: int, side: float = 1.0) -> list[BoundaryChart]:
    """The four edges of ``[0, side]^2`` as flat charts with ``n`` nodes each.

    Order: bottom, top, left, right.  Neighbouring edges share their corner
    nodes, which is where :func:`check_compatibility` compares them.
    """
    grid = ParamGrid.box(n, 0.0, side)
    return [
        BoundaryChart.flat(grid, 0.0, 1, normal_axis=1),
        BoundaryChart.flat(grid, side, -1, normal_axis=1),
        BoundaryChart.flat(grid, 0.0, 1, normal_axis=0),
        BoundaryChart.flat(grid, side, -1, normal_axis=0),
    ]


# --- boundary fields ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Order-``q`` tensor per chart node; ``fn`` is the optional exact ``y -> tensor`` map."""

    chart: BoundaryChart
    order: int
    values: np.ndarray
    fn: object = None

    def __post_init__(self):
        shape = self.chart.param_grid.shape + (self.chart.dim,) * self.order
        v = np.array(self.values, dtype=float).reshape(shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, chart: BoundaryChart, fn, order: int = 0) -> "BoundaryField":
        vals = np.asarray(jax.vmap(fn)(jnp.asarray(chart.param_grid.nodes())))
        return cls(chart, order, vals, fn if chart.analytic else None)

    @classmethod
    def zeros(cls, chart: BoundaryChart, order: int = 0) -> "BoundaryField":
        z = (chart.dim,) * order
        return cls.from_function(chart, lambda y: jnp.zeros(z) + 0.0 * y[0], order)

    @property
    def analytic(self) -> bool:
        return self.fn is not None and self.chart.analytic

    def flat_values(self) -> np.ndarray:
        return self.values.reshape((self.chart.param_grid.size,) + (self.chart.dim,) * self.order)


def _tangential_fd(u: BoundaryField, C) -> jnp.ndarray:
    """``d_tau_i u`` at every node, shape ``(size, N-1, *tensor)``."""
    grid = u.chart.param_grid
    dy = np.stack(_fd_gradient(u.values, grid), axis=grid.dim)
    dy = dy.reshape((grid.size, grid.dim) + (u.chart.dim,) * u.order)
    return jnp.einsum("mik,mk...->mi...", C, jnp.asarray(dy))


def _tangential_point(fn, y, C):
    jac = jax.jacfwd(fn)(y)  # (*tensor, N-1)
    return jnp.einsum("ik,...k->i...", C, jac)


def _combine(chart: BoundaryChart, order: int, formula, deriv=(), plain=()) -> BoundaryField:
    """Evaluate ``formula(T, n, dtaus, vals)`` node by node on one chart.

    ``deriv`` fields enter through their tangential derivatives, ``plain``
    fields through their values.  With an analytic chart and analytic inputs
    the output carries an exact callable so it can be differentiated again.
    """
    for f in (*deriv, *plain):
        if f.chart is not chart:
            raise ValueError("boundary fields live on different charts")
    nodes = jnp.asarray(chart.param_grid.nodes())
    if chart.analytic and all(f.analytic for f in (*deriv, *plain)):

        def fn(y):
            T, n, C, _ = _frame_at(chart, y)
            dts = [_tangential_point(f.fn, y, C) for f in deriv]
            return formula(T, n, dts, [f.fn(y) for f in plain])

        vals = np.asarray(jax.vmap(fn)(nodes))
        return BoundaryField(chart, order, vals, fn)
    T, n, C = _geometry(chart)
    dts = [_tangential_fd(f, C) for f in deriv]
    pv = [jnp.asarray(f.flat_values()) for f in plain]
    vals = jax.vmap(formula)(T, n, dts, pv)
    return BoundaryField(chart, order, np.asarray(vals))


def _outer_n(n, k):
    out = jnp.ones(())
    for _ in range(k):
        out = jnp.multiply.outer(out, n)
    return out


def _contract_last(t, n, k):
    for _ in range(k):
        t = t @ n
    return t


def _surface_grad_formula(T, n, dts, vals):
    return jnp.einsum("ia,i...->a...", T, dts[0])


def surface_gradient(u: BoundaryField, chart: BoundaryChart | None = None) -> BoundaryField:
    """``sum_i tau_i (x) d_tau_i u``: one order up, new index first."""
    if chart is not None and chart is not u.chart:
        raise ValueError("field does not live on this chart")
    return _combine(u.chart, u.order + 1, _surface_grad_formula, deriv=(u,))


def _chain_formula(q):
    def formula(T, n, dts, vals):
        dt = dts[0]
        out = jnp.einsum("ia,i...->a...", T, dt)
        for k in range(1, q):
            nk = _outer_n(n, k)
            for i in range(T.shape[0]):
                rest = _contract_last(dt[i], n, k)
                out = out + jnp.multiply.outer(nk, jnp.multiply.outer(T[i], rest))
        return out + _outer_n(n, q) * vals[0]

    return formula


def _chain_step(prev: BoundaryField, phi: BoundaryField, q: int) -> BoundaryField:
    if prev.order != q - 1 or phi.order != 0:
        raise ValueError(f"step {q} needs an order-{q - 1} tensor and a scalar trace")
    return _combine(prev.chart, q, _chain_formula(q), deriv=(prev,), plain=(phi,))


def build_s(phi0: BoundaryField, phi1: BoundaryField, chart: BoundaryChart | None = None) -> BoundaryField:
    """``s = grad_G phi0 + phi1 n``."""
    _same_chart(chart, phi0, phi1)
    return _chain_step(phi0, phi1, 1)


def build_S(s: BoundaryField, phi2: BoundaryField, chart: BoundaryChart | None = None) -> BoundaryField:
    """``S = grad_G s + sum_i (d_tau_i s . n) n (x) tau_i + phi2 n (x) n``."""
    _same_chart(chart, s, phi2)
    return _chain_step(s, phi2, 2)


def build_S_chain(traces, chart: BoundaryChart | None = None, m: int | None = None) -> list[BoundaryField]:
    """``[S_0, ..., S_{m-1}]`` from the traces ``phi_0, ..., phi_{m-1}``."""
    traces = list(traces)
    m = len(traces) if m is None else int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > MAX_ORDER:
        raise ValueError(f"m = {m} unsupported: tensor order is capped at {MAX_ORDER}")
    if len(traces) < m:
        raise ValueError(f"need {m} traces, got {len(traces)}")
    _same_chart(chart, *traces[:m])
    chain = [traces[0]]
    for q in range(1, m):
        chain.append(_chain_step(chain[-1], traces[q], q))
    return chain


def _same_chart(chart, *fields):
    ref = fields[0].chart if chart is None else chart
    for f in fields:
        if f.chart is not ref:
            raise ValueError("boundary fields live on different charts")


def lemma43_rows(s: BoundaryField, phi2: BoundaryField, chart: BoundaryChart | None = None, i: int = 1):
    """Row data ``(s.e_i, sum_j (d_tau_j s . n) tau_j.e_i + phi2 n.e_i)``; ``i`` is 1-based."""
    _same_chart(chart, s, phi2)
    n_dim = s.chart.dim
    if not 1 <= int(i) <= n_dim:
        raise ValueError(f"row index must be in 1..{n_dim}, got {i}")
    k = int(i) - 1

    def row0(T, n, dts, vals):
        return vals[0][k]

    def row1(T, n, dts, vals):
        return jnp.sum((dts[0] @ n) * T[:, k]) + vals[1] * n[k]

    return (_combine(s.chart, 0, row0, plain=(s,)),
            _combine(s.chart, 0, row1, deriv=(s,), plain=(s, phi2)))


# --- traces ---------------------------------------------------------------------


def gamma(phi, chart: BoundaryChart, q: int = 0) -> BoundaryField:
    """``q``-th normal derivative trace ``D^q phi (n, ..., n)`` on the chart.

    ``phi`` is either a ``jax``-traceable callable of the ambient point or a
    :class:`ScalarField` sampled on a grid the flat chart is aligned with.
    """
    if q < 0:
        raise ValueError("trace order must be >= 0")
    if isinstance(phi, ScalarField):
        return _volume_trace(phi, chart, q)
    deriv = phi
    for _ in range(q):
        deriv = jax.jacfwd(deriv)

    def along_n(x, n):
        return _contract_last(deriv(x), n, q)

    if chart.analytic:

        def fn(y):
            x = chart.embed(y, chart.graph_fn(y))
            if q == 0:
                return deriv(x)
            _, n, _, _ = _frame_at(chart, y)
            return along_n(x, n)

        return BoundaryField.from_function(chart, fn)
    _, n, _ = _geometry(chart)
    vals = jax.vmap(along_n)(jnp.asarray(chart.points()), n)
    return BoundaryField(chart, 0, np.asarray(vals))


def gamma0(phi, chart):
    return gamma(phi, chart, 0)


def gamma1(phi, chart):
    return gamma(phi, chart, 1)


def gamma2(phi, chart):
    return gamma(phi, chart, 2)


_ONE_SIDED = {
    1: (np.array([-3.0, 4.0, -1.0]) / 2.0, 1),
    2: (np.array([2.0, -5.0, 4.0, -1.0]), 2),
}


def _volume_trace(phi: ScalarField, chart: BoundaryChart, q: int) -> BoundaryField:
    grid = phi.grid
    if grid.dim != chart.dim:
        raise ValueError("volume field and chart dimensions differ")
    if np.ptp(chart.graph) != 0.0:
        raise ValueError("volume-field traces need a flat, grid-aligned chart")
    a = chart.normal_axis
    pax = chart.param_axes
    idx = []
    for k, p in enumerate(pax):
        h, o = grid.spacing[p], grid.origin[p]
        ph, po = chart.param_grid.spacing[k], chart.param_grid.origin[k]
        start = (po - o) / h
        step = ph / h
        if abs(start - round(start)) > 1e-9 or abs(step - round(step)) > 1e-9:
            raise ValueError("chart nodes do not coincide with grid nodes")
        sel = round(start) + round(step) * np.arange(chart.param_grid.shape[k])
        if sel.min() < 0 or sel.max() >= grid.shape[p]:
            raise ValueError("chart extends beyond the volume grid")
        idx.append(sel)
    level = (float(chart.graph.flat[0]) - grid.origin[a]) / grid.spacing[a]
    if abs(level - round(level)) > 1e-9:
        raise ValueError("chart level is not a grid plane")
    level = round(level)
    inward = chart.orientation  # +1: domain on increasing index side
    if q == 0:
        weights, power = np.array([1.0]), 0
    elif q in _ONE_SIDED:
        weights, power = _ONE_SIDED[q]
    else:
        raise ValueError(f"volume-field traces support orders 0..2, got {q}")
    rows = level + inward * np.arange(len(weights))
    if rows.min() < 0 or rows.max() >= grid.shape[a]:
        raise ValueError("insufficient stencil room normal to the chart")
    data = np.moveaxis(phi.data, [*pax, a], list(range(grid.dim)))
    data = data[np.ix_(*idx, rows)]
    deriv = np.tensordot(data, weights, axes=([-1], [0])) / grid.spacing[a] ** power
    # the stencil differentiates along the inward direction, n is outward
    sign = (-1.0) ** q
    return BoundaryField(chart, 0, sign * deriv)


# --- checking -------------------------------------------------------------------


def symmetry_defect(t: BoundaryField) -> float:
    """Largest index-swap difference, relative to the largest entry on the chart."""
    if t.order < 2:
        return 0.0
    v = t.values
    scale = float(np.abs(v).max())
    if scale == 0.0:
        return 0.0
    lead = t.chart.param_grid.dim
    worst = 0.0
    for i, j in itertools.combinations(range(t.order), 2):
        worst = max(worst, float(np.abs(v - np.swapaxes(v, lead + i, lead + j)).max()))
    return worst / scale


def _w1p(t: BoundaryField, p: float) -> float:
    grid = t.chart.param_grid
    vol = math.prod(grid.spacing)
    axes = tuple(range(grid.dim, t.values.ndim))
    mag = lambda a: np.sqrt(np.sum(a**2, axis=axes)) if axes else np.abs(a)
    total = np.sum(mag(t.values) ** p)
    for d in _fd_gradient(t.values, grid):
        total += np.sum(mag(d) ** p)
    return float((total * vol) ** (1.0 / p))


def slobodeckij(t: BoundaryField, p: float = 2.0, chunk: int = 512) -> float:
    """Double-sum proxy of the ``W^{1-1/p,p}`` seminorm over the chart parameters."""
    grid = t.chart.param_grid
    d = grid.dim
    s = 1.0 - 1.0 / p
    y = grid.nodes()
    u = t.flat_values().reshape(grid.size, -1)
    vol = math.prod(grid.spacing)
    total = 0.0
    for a in range(0, grid.size, chunk):
        dy = np.linalg.norm(y[a:a + chunk, None, :] - y[None, :, :], axis=-1)
        du = np.linalg.norm(u[a:a + chunk, None, :] - u[None, :, :], axis=-1)
        off = dy > 0
        total += float(np.sum(du[off] ** p / dy[off] ** (d + s * p)))
    return (total * vol * vol) ** (1.0 / p)


def _overlap_pairs(charts, tol_rel: float = 1e-9):
    pts = [c.points() for c in charts]
    scale = max(max(c.param_grid.spacing) for c in charts)
    trees = [cKDTree(p) for p in pts]
    for a, b in itertools.combinations(range(len(charts)), 2):
        hits = trees[a].query_ball_tree(trees[b], tol_rel * scale)
        pairs = [(i, j) for i, js in enumerate(hits) for j in js]
        if pairs:
            yield a, b, np.array(pairs)


@dataclass
class CompatibilityReport:
    m: int
    tol: float
    p: float
    symmetry_defects: dict
    overlap_defects: dict
    w1p_norms: list
    slobodeckij: list
    lipschitz: list
    overlap_nodes: int
    verdict: str
    per_chart_symmetry: list = field(default_factory=list)
    # S_0..S_{m-1} per chart, kept for callers that inspect them further
    chains: list = field(default_factory=list, repr=False, compare=False)

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"

    @property
    def max_defect(self) -> float:
        return max([0.0, *self.symmetry_defects.values(), *self.overlap_defects.values()])

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "tol": self.tol,
            "p": self.p,
            "verdict": self.verdict,
            "max_defect": self.max_defect,
            "symmetry_defects": {str(k): v for k, v in self.symmetry_defects.items()},
            "overlap_defects": {str(k): v for k, v in self.overlap_defects.items()},
            "overlap_nodes": self.overlap_nodes,
            "per_chart_symmetry": self.per_chart_symmetry,
            "w1p_norms": self.w1p_norms,
            "slobodeckij": self.slobodeckij,
            "lipschitz": self.lipschitz,
        }


def check_compatibility(traces, charts=None, m: int | None = None, tol: float = 1e-8,
                        p: float = 2.0) -> CompatibilityReport:
    """Build ``S_0..S_{m-1}`` on every chart and decide compatibility.

    ``traces`` is a list (one entry per chart) of trace lists
    ``[phi_0, ..., phi_{m-1}]``; a single trace list is accepted for one
    chart.  The verdict is ``accept`` iff every symmetry defect and every
    defect between charts at shared points is at most ``tol``.  ``W^{1,p}``
    norms of ``S_q`` (``q <= m-2``) and the fractional seminorm proxy of
    ``S_{m-1}`` are diagnostics only.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if traces and isinstance(traces[0], BoundaryField):
        traces = [traces]
    if charts is None:
        charts = [t[0].chart for t in traces]
    elif isinstance(charts, BoundaryChart):
        charts = [charts]
    if len(charts) != len(traces):
        raise ValueError("one trace list per chart is required")
    m = len(traces[0]) if m is None else int(m)
    chains = [build_S_chain(t, c, m) for t, c in zip(traces, charts)]

    per_chart = [{str(q): symmetry_defect(S) for q, S in enumerate(ch)} for ch in chains]
    sym = {q: max(pc[str(q)] for pc in per_chart) for q in range(m)}

    overlap = {q: 0.0 for q in range(m)}
    count = 0
    for a, b, pairs in _overlap_pairs(charts):
        count += len(pairs)
        for q in range(m):
            va = chains[a][q].flat_values()[pairs[:, 0]]
            vb = chains[b][q].flat_values()[pairs[:, 1]]
            scale = max(float(np.abs(chains[a][q].values).max()), float(np.abs(chains[b][q].values).max()))
            diff = float(np.abs(va - vb).max())
            overlap[q] = max(overlap[q], 0.0 if diff == 0.0 else diff / (scale or 1.0))

    w1p = [{str(q): _w1p(ch[q], p) for q in range(max(m - 1, 0))} for ch in chains]
    slob = [slobodeckij(ch[m - 1], p) for ch in chains]
    ok = all(v <= tol for v in sym.values()) and all(v <= tol for v in overlap.values())
    return CompatibilityReport(
        m=m, tol=tol, p=p, symmetry_defects=sym, overlap_defects=overlap, w1p_norms=w1p,
        slobodeckij=slob, lipschitz=[c.lipschitz_ratio() for c in charts], overlap_nodes=count,
        verdict="accept" if ok else "reject", per_chart_symmetry=per_chart, chains=chains,
    )


# --- files ----------------------------------------------------------------------


def write_boundary(path, charts, inline: bool = True) -> None:
    """Boundary mesh JSON; graph values inline (base64 f64le) or as side field files."""
    path = Path(path)
    out = []
    for k, c in enumerate(charts):
        g = c.param_grid
        entry = {
            "param_shape": list(g.shape),
            "param_spacing": list(g.spacing),
            "param_origin": list(g.origin),
            "orientation": c.orientation,
            "normal_axis": c.normal_axis,
        }
        if inline:
            entry["graph_values"] = base64.b64encode(
                np.ascontiguousarray(c.graph, dtype="<f8").tobytes()).decode("ascii")
        else:
            name = f"{path.stem}_chart{k}.ndf"
            write_samples(path.parent / name, g.shape, g.spacing, g.origin, "scalar", c.graph)
            entry["graph_values"] = name
        out.append(entry)
    doc = {"dim": charts[0].dim if charts else 0, "charts": out}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_boundary(path) -> list[BoundaryChart]:
    """Charts from a boundary mesh JSON (relative field-file paths resolve next to it)."""
    path = Path(path)
    doc = json.loads(path.read_text())
    try:
        dim = int(doc["dim"])
        raw = doc["charts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed boundary file: {exc}") from None
    charts = []
    for entry in raw:
        grid = ParamGrid(tuple(entry["param_shape"]), tuple(entry["param_spacing"]),
                         tuple(entry["param_origin"]))
        src = entry["graph_values"]
        target = path.parent / src
        if src.endswith(".ndf") or target.exists():
            _, vals = read_samples(target)
        else:
            buf = base64.b64decode(src.encode("ascii"), validate=True)
            vals = np.frombuffer(buf, dtype="<f8").astype(float)
            if vals.size != grid.size:
                raise ValueError("inline graph values do not match param_shape")
        charts.append(BoundaryChart(dim, grid, vals.reshape(grid.shape), int(entry["orientation"]),
                                    entry.get("normal_axis")))
    return charts


def write_traces(path, traces) -> None:
    """Trace data JSON ``{q: [field file per chart]}`` with the files beside it."""
    path = Path(path)
    doc = {}
    for k, tl in enumerate(traces):
        for q, t in enumerate(tl):
            g = t.chart.param_grid
            name = f"{path.stem}_q{q}_chart{k}.ndf"
            write_samples(path.parent / name, g.shape, g.spacing, g.origin, "scalar", t.values)
            doc.setdefault(str(q), []).append(name)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_traces(path, charts) -> list[list[BoundaryField]]:
    path = Path(path)
    doc = json.loads(path.read_text())
    orders = sorted(int(q) for q in doc)
    if orders != list(range(len(orders))):
        raise ValueError("trace orders must be 0..m-1")
    out = [[] for _ in charts]
    for q in orders:
        files = doc[str(q)]
        if len(files) != len(charts):
            raise ValueError(f"order {q}: expected {len(charts)} files, got {len(files)}")
        for k, name in enumerate(files):
            header, vals = read_samples(path.parent / name)
            if tuple(header["shape"]) != charts[k].param_grid.shape:
                raise ValueError(f"trace file {name} does not match chart {k}")
            out[k].append(BoundaryField(charts[k], 0, vals))
    return out
