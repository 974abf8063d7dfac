"""Sampled fields on uniform, node-centred Cartesian grids.

Three field kinds share one :class:`GridSpec`:

* :class:`ScalarField` -- one value per node,
* :class:`VectorField` -- ``N`` components,
* :class:`AntisymField` -- the ``N(N-1)/2`` strictly-upper entries of a
  skew-symmetric matrix field.  The lower triangle and the zero diagonal are
  implied, so every stored field is skew-symmetric by construction.

Arrays are stored component-major with the last grid axis fastest (C order),
which is also the on-disk payload order of :func:`write_field`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "AntisymField",
    "NormSpec",
    "Field",
    "pair_index",
    "upper_pairs",
    "sample",
    "sample_vector",
    "discrete_norm",
    "write_field",
    "read_field",
    "write_samples",
    "read_samples",
    "FieldFormatError",
    "MalformedHeaderError",
    "PayloadMismatchError",
    "UnsupportedKindError",
]

MAGIC = "NDFIELD1"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centred grid: node ``idx`` sits at ``origin + idx * spacing``."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        origin = (0.0,) * len(shape) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(shape) < 2:
            raise ValueError(f"grid dimension must be >= 2, got {len(shape)}")
        if not (len(spacing) == len(origin) == len(shape)):
            raise ValueError("shape, spacing and origin must have the same length")
        if any(n < 3 for n in shape):
            raise ValueError(f"every shape entry must be >= 3, got {shape}")
        if any(not (h > 0 and math.isfinite(h)) for h in spacing):
            raise ValueError(f"spacing entries must be positive and finite, got {spacing}")
        if any(not math.isfinite(o) for o in origin):
            raise ValueError("origin must be finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def box(cls, n: int | tuple[int, ...], lower, upper, dim: int | None = None) -> "GridSpec":
        """Grid of ``n`` nodes per axis spanning ``[lower, upper]`` (endpoints included)."""
        if dim is None:
            dim = len(n) if isinstance(n, tuple) else len(np.atleast_1d(lower))
        shape = tuple(n) if isinstance(n, tuple) else (int(n),) * dim
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (dim,))
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (dim,))
        spacing = tuple((hi - lo) / (np.asarray(shape) - 1))
        return cls(shape, spacing, tuple(lo))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(n) for n, h, o in zip(self.shape, self.spacing, self.origin)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(N, *shape)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def point(self, idx) -> np.ndarray:
        return np.array([o + i * h for i, h, o in zip(idx, self.spacing, self.origin)])

    def padded(self, pad: int) -> "GridSpec":
        """The same lattice extended by ``pad`` nodes on every side."""
        return GridSpec(
            tuple(n + 2 * pad for n in self.shape),
            self.spacing,
            tuple(o - pad * h for o, h in zip(self.origin, self.spacing)),
        )

    def subgrid(self, start, stop) -> "GridSpec":
        """Nodes ``start[k] <= idx[k] < stop[k]`` as a grid of their own."""
        return GridSpec(
            tuple(b - a for a, b in zip(start, stop)),
            self.spacing,
            tuple(o + a * h for o, a, h in zip(self.origin, start, self.spacing)),
        )

    def header(self) -> dict:
        return {"dim": self.dim, "shape": list(self.shape),
                "spacing": list(self.spacing), "origin": list(self.origin)}


def upper_pairs(dim: int) -> list[tuple[int, int]]:
    """Strictly-upper index pairs ``(i, j)``, ``i < j``, in storage order."""
    return list(itertools.combinations(range(dim), 2))


def pair_index(i: int, j: int, dim: int) -> int:
    """Storage slot of pair ``(i, j)`` with ``i < j``."""
    if not 0 <= i < j < dim:
        raise IndexError(f"need 0 <= i < j < {dim}, got ({i}, {j})")
    return i * dim - i * (i + 1) // 2 + (j - i - 1)


class _FieldBase:
    grid: GridSpec
    data: np.ndarray
    kind: str = ""

    def _check(self, ncomp: int | None):
        if not isinstance(self.grid, GridSpec):
            raise TypeError("grid must be a GridSpec")
        data = _frozen(self.data)
        expect = self.grid.shape if ncomp is None else (ncomp, *self.grid.shape)
        if data.shape != expect:
            raise ValueError(f"{self.kind} data has shape {data.shape}, expected {expect}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"{self.kind} field contains non-finite values")
        object.__setattr__(self, "data", data)

    def __neg__(self):
        return type(self)(self.grid, -self.data)

    def __add__(self, other):
        self._same(other)
        return type(self)(self.grid, self.data + other.data)

    def __sub__(self, other):
        self._same(other)
        return type(self)(self.grid, self.data - other.data)

    def __mul__(self, c: float):
        return type(self)(self.grid, float(c) * self.data)

    __rmul__ = __mul__

    def _same(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {self.kind} with {getattr(other, 'kind', type(other))}")
        if other.grid != self.grid:
            raise ValueError("grid mismatch")

    def zeros_like(self):
        return type(self)(self.grid, np.zeros_like(self.data))

    def restrict(self, start, stop):
        """Restriction to the node box ``start <= idx < stop``."""
        sl = tuple(slice(a, b) for a, b in zip(start, stop))
        lead = () if isinstance(self, ScalarField) else (slice(None),)
        return type(self)(self.grid.subgrid(start, stop), self.data[lead + sl])


@dataclass(frozen=True, eq=False)
class ScalarField(_FieldBase):
    grid: GridSpec
    data: np.ndarray
    kind = "scalar"

    def __post_init__(self):
        self._check(None)

    @property
    def values(self) -> np.ndarray:
        return self.data


@dataclass(frozen=True, eq=False)
class VectorField(_FieldBase):
    grid: GridSpec
    data: np.ndarray
    kind = "vector"

    def __post_init__(self):
        self._check(self.grid.dim)

    @classmethod
    def from_components(cls, comps) -> "VectorField":
        comps = list(comps)
        grid = comps[0].grid
        if any(c.grid != grid for c in comps):
            raise ValueError("components must share one grid")
        return cls(grid, np.stack([c.data for c in comps]))

    @property
    def components(self) -> list[ScalarField]:
        return [ScalarField(self.grid, c) for c in self.data]

    def __getitem__(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.data[k])


@dataclass(frozen=True, eq=False)
class AntisymField(_FieldBase):
    grid: GridSpec
    data: np.ndarray
    kind = "antisym"

    def __post_init__(self):
        n = self.grid.dim
        self._check(n * (n - 1) // 2)

    @classmethod
    def from_full(cls, grid: GridSpec, full: np.ndarray) -> "AntisymField":
        """Keep the strictly-upper part of an ``(N, N, *shape)`` array."""
        return cls(grid, np.stack([full[i, j] for i, j in upper_pairs(grid.dim)]))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return upper_pairs(self.grid.dim)

    @property
    def upper(self) -> dict[tuple[int, int], ScalarField]:
        return {p: ScalarField(self.grid, self.data[k]) for k, p in enumerate(self.pairs)}

    def entry(self, i: int, j: int) -> np.ndarray:
        """``A_ij`` as an array, using ``A_ji = -A_ij`` and ``A_ii = 0``."""
        if i == j:
            return np.zeros(self.grid.shape)
        if i < j:
            return self.data[pair_index(i, j, self.grid.dim)]
        return -self.data[pair_index(j, i, self.grid.dim)]

    def full(self) -> np.ndarray:
        n = self.grid.dim
        out = np.zeros((n, n, *self.grid.shape))
        for k, (i, j) in enumerate(self.pairs):
            out[i, j] = self.data[k]
            out[j, i] = -self.data[k]
        return out


Field = Union[ScalarField, VectorField, AntisymField]
_KINDS = {"scalar": ScalarField, "vector": VectorField, "antisym": AntisymField}


@dataclass(frozen=True)
class NormSpec:
    """Sobolev exponent ``p`` in (1, inf) and derivative order ``m >= 0``."""

    p: float = 2.0
    m: int = 0

    def __post_init__(self):
        if not (self.p > 1 and math.isfinite(self.p)):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a nonnegative integer, got {self.m}")


def sample(grid: GridSpec, f: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
    """Evaluate ``f`` at every node.

    ``f`` receives the coordinate array of shape ``(N, *shape)`` and must
    return values of shape ``grid.shape`` (plain elementwise arithmetic on
    ``x[0], x[1], ...`` does this automatically).
    """
    x = grid.coords()
    values = np.broadcast_to(np.asarray(f(x), dtype=np.float64), grid.shape)
    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        raise ValueError(f"non-finite sample at index {idx} (x = {grid.point(idx).tolist()})")
    return ScalarField(grid, values)


def sample_vector(grid: GridSpec, fs) -> VectorField:
    """Sample one callable per component (see :func:`sample`)."""
    return VectorField.from_components([sample(grid, f) for f in fs])


def _pointwise_abs(field: Field, arr: np.ndarray) -> np.ndarray:
    # arr has the field's component layout; returns |.| per node
    if isinstance(field, ScalarField):
        return np.abs(arr)
    if isinstance(field, VectorField):
        return np.sqrt(np.sum(arr**2, axis=0))
    return np.sqrt(4.0 * np.sum(arr**2, axis=0))


def discrete_norm(
    field: Field,
    spec: NormSpec = NormSpec(),
    mode: str = "one_sided_edges",
    region=None,
) -> float:
    """Riemann-sum ``W^{m,p}`` norm with full cell weights.

    All multi-indices of order ``<= m`` contribute; derivatives are the
    central differences of :mod:`vecpot.diff_ops`.  Antisymmetric fields use
    the pointwise magnitude ``sqrt(2 * sum_ij A_ij**2)``.  ``region`` is an
    optional node box ``((start, stop), ...)``: derivatives are still taken
    on the whole grid, only the sum is restricted.
    """
    from .diff_ops import partial

    p, m = spec.p, spec.m
    sel = (Ellipsis,) if region is None else (Ellipsis, *(slice(a, b) for a, b in region))
    vol = field.grid.cell_volume
    scalar = isinstance(field, ScalarField)
    mags = []
    # derivatives by multi-index, reusing lower orders
    level = {(): field.data}
    for order in range(m + 1):
        for alpha, arr in level.items():
            mags.append(_pointwise_abs(field, arr)[sel])
        if order == m:
            break
        nxt = {}
        for alpha, arr in level.items():
            start = alpha[-1] if alpha else 0
            for k in range(start, field.grid.dim):
                axis = k if scalar else k + 1
                nxt[alpha + (k,)] = partial(arr, axis, field.grid.spacing[k], mode)
        level = nxt
    # scale by the peak so large p neither underflows nor overflows
    peak = max(float(a.max()) if a.size else 0.0 for a in mags)
    if peak == 0.0:
        return 0.0
    total = sum(float(np.sum((a / peak) ** p)) for a in mags)
    return peak * (vol * total) ** (1.0 / p)


# --- serialization -----------------------------------------------------------


class FieldFormatError(ValueError):
    """Base class for field-file errors; ``code`` names the failure."""

    code = "format"


class MalformedHeaderError(FieldFormatError):
    code = "malformed-header"


class PayloadMismatchError(FieldFormatError):
    code = "payload-mismatch"


class UnsupportedKindError(FieldFormatError):
    code = "unsupported-kind"


def _ncomp(kind: str, dim: int) -> int:
    return {"scalar": 1, "vector": dim, "antisym": dim * (dim - 1) // 2}[kind]


def write_samples(path, shape, spacing, origin, kind: str, data: np.ndarray) -> None:
    """Write raw samples in field-file format; ``dim`` may be any value >= 1."""
    if kind not in _KINDS:
        raise UnsupportedKindError(f"unsupported kind {kind!r}")
    header = {
        "magic": MAGIC,
        "dim": len(shape),
        "shape": [int(n) for n in shape],
        "spacing": [float(h) for h in spacing],
        "origin": [float(o) for o in origin],
        "kind": kind,
        "encoding": "f64le",
    }
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        fh.write(payload)


def read_samples(path) -> tuple[dict, np.ndarray]:
    """Read a field file without grid validation; returns ``(header, data)``."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise MalformedHeaderError("missing header terminator")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"header is not JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("magic") != MAGIC:
        raise MalformedHeaderError("bad magic")
    try:
        dim = int(header["dim"])
        shape = [int(n) for n in header["shape"]]
        spacing = [float(h) for h in header["spacing"]]
        origin = [float(o) for o in header["origin"]]
        kind = header["kind"]
        encoding = header["encoding"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"bad header field: {exc}") from None
    if dim < 1 or not (len(shape) == len(spacing) == len(origin) == dim):
        raise MalformedHeaderError("dim does not match shape/spacing/origin lengths")
    if encoding != "f64le":
        raise MalformedHeaderError(f"unsupported encoding {encoding!r}")
    if kind not in _KINDS:
        raise UnsupportedKindError(f"unsupported kind {kind!r}")
    ncomp = _ncomp(kind, dim)
    count = ncomp * math.prod(shape)
    payload = raw[nl + 1:]
    if len(payload) != 8 * count:
        raise PayloadMismatchError(f"payload holds {len(payload)} bytes, header implies {8 * count}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    data = data.reshape(shape if kind == "scalar" else [ncomp, *shape])
    return header, data


def write_field(field: Field, path) -> None:
    g = field.grid
    write_samples(path, g.shape, g.spacing, g.origin, field.kind, field.data)


def read_field(path) -> Field:
    header, data = read_samples(path)
    try:
        grid = GridSpec(tuple(header["shape"]), tuple(header["spacing"]), tuple(header["origin"]))
    except ValueError as exc:
        raise MalformedHeaderError(str(exc)) from None
    return _KINDS[header["kind"]](grid, data)
