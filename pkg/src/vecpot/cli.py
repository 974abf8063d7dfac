"""Command-line entry point.

Exit codes: 0 success or accept, 1 mathematical failure or reject, 2 usage
error, 3 input/output error.  Reports are JSON with sorted keys, so repeated
runs with the same configuration write identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import diff_ops as ops
from .generators import poly_bump_grad, random_antisym, random_scalar, random_vector
from .grid_fields import (
    FieldFormatError,
    GridSpec,
    ScalarField,
    VectorField,
    read_field,
    write_field,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
IDENTITY_TOL = 1e-12
ORDER_MIN = 1.8


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# --- helpers -------------------------------------------------------------------


def _norm(a) -> float:
    return float(np.sqrt(np.sum(np.asarray(a, dtype=float) ** 2)))


def _rel(num: float, den: float) -> float:
    return 0.0 if num == 0.0 else num / den if den else float("inf")


def _write_report(path, doc) -> None:
    if path is None:
        return
    try:
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from None


def _read_vector(path) -> VectorField:
    try:
        f = read_field(path)
    except (OSError, FieldFormatError) as exc:
        raise DataError(f"cannot read field {path}: {exc}") from None
    if not isinstance(f, VectorField):
        raise DataError(f"{path} holds a {f.kind} field, a vector field is required")
    return f


def _write(field, path) -> None:
    if path is None:
        return
    try:
        write_field(field, path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


# --- verify-identities -----------------------------------------------------------


def identity_suite(dim: int, n: int, seed: int, mode: str = "periodic", scurl_factor: float = 2.0) -> dict:
    """Relative residuals of the four discrete identities on seeded fields."""
    grid = GridSpec.box(n, 0.0, 1.0, dim)
    if mode == "periodic":
        grid = GridSpec((n,) * dim, (1.0 / n,) * dim)
    f = random_scalar(grid, seed, mode)
    g = random_vector(grid, seed + 1, mode)
    A = random_antisym(grid, seed + 2, mode)
    scurl = lambda a: ops.scurl(a, mode, factor=scurl_factor)

    gf = ops.grad(f, mode)
    cg = ops.curl(gf, mode)
    halves = [0.5 * ops.partial(gf.data[j], i, grid.spacing[i], mode) for i, j in _pairs(dim)]
    r1 = _rel(_norm(cg.data), _norm(halves))

    sA = scurl(A)
    parts = [ops.partial(sA.data[k], k, grid.spacing[k], mode) for k in range(dim)]
    r2 = _rel(_norm(ops.div(sA, mode).data), _norm(parts))

    lhs, rhs = ops.inner(ops.curl(g, mode), A), ops.inner(g, scurl(A))
    r3 = _rel(abs(lhs - rhs), max(abs(lhs), abs(rhs), 1e-300))

    lap = ops.laplacian_wide(g, mode)
    split = -ops.grad(ops.div(g, mode), mode) + scurl(ops.curl(g, mode))
    r4 = _rel(_norm((-lap - split).data), _norm(lap.data))

    res = {"curl_grad": r1, "div_scurl": r2, "adjoint": r3, "laplacian_split": r4}
    return {"residuals": res, "passed": all(v <= IDENTITY_TOL for v in res.values())}


def _pairs(dim):
    return [(i, j) for i in range(dim) for j in range(i + 1, dim)]


def cmd_verify_identities(cfg) -> int:
    dim, n, seed = int(cfg["dim"]), int(cfg["grid"]), int(cfg["seed"])
    mode = {"periodic": "periodic", "edges": "one_sided_edges"}.get(cfg["mode"])
    if not 2 <= dim <= 5:
        raise UsageError("--dim must be in [2, 5]")
    if n < 8:
        raise UsageError("--grid must be >= 8")
    if mode is None:
        raise UsageError("--mode must be periodic or edges")
    out = identity_suite(dim, n, seed, mode, 1.0 if cfg.get("sabotage") else 2.0)
    out.update({"command": "verify-identities", "dim": dim, "grid": n, "seed": seed,
                "mode": cfg["mode"], "tol": IDENTITY_TOL})
    _write_report(cfg.get("report"), out)
    return EXIT_OK if out["passed"] else EXIT_FAIL


# --- potential -------------------------------------------------------------------


def cmd_potential(cfg) -> int:
    from .vector_potential import construct

    if cfg["method"] not in ("fd", "spectral"):
        raise UsageError("--method must be fd or spectral")
    if not cfg.get("input"):
        raise UsageError("--input is required")
    v = _read_vector(cfg["input"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        d = construct(v, cfg["method"])
    w, defect = d.w, d.curl_defect_rel
    if cfg.get("sabotage"):
        # test hook: a gradient stencil that does not match curl's edge stencils
        w = v + ops.grad(d.eta, "periodic")
        cv = ops.curl(v)
        defect = _rel(_norm((ops.curl(w) - cv).data), _norm(cv.data))
    _write(w, cfg.get("output"))
    diag = d.summary()
    diag["curl_defect_rel"] = defect
    rep = {"command": "potential", "diagnostics": diag,
           "warnings": sorted({str(w.message) for w in caught})}
    ok = defect <= IDENTITY_TOL
    rep["passed"] = ok
    _write_report(cfg.get("report"), rep)
    return EXIT_OK if ok else EXIT_FAIL


# --- decompose -------------------------------------------------------------------


def cmd_decompose(cfg) -> int:
    from .decomposition import NotAGradientError, ZeroTraceError, decompose_zero_trace

    if cfg["method"] not in ("fd", "spectral"):
        raise UsageError("--method must be fd or spectral")
    if not cfg.get("input"):
        raise UsageError("--input is required")
    v = _read_vector(cfg["input"])
    rt, lt = float(cfg["recon_tol"]), float(cfg["leak_tol"])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            r = decompose_zero_trace(v, method=cfg["method"])
    except (ZeroTraceError, NotAGradientError) as exc:
        _write_report(cfg.get("report"), {"command": "decompose", "passed": False, "reason": str(exc)})
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write(r.w, cfg.get("out_w"))
    _write(r.eta, cfg.get("out_eta"))
    ok = r.recon_rel <= rt and r.boundary_leak <= lt
    rep = {"command": "decompose", "diagnostics": r.summary(), "recon_tol": rt, "leak_tol": lt, "passed": ok,
           "w_l2": _norm(r.w.data) * float(np.sqrt(v.grid.cell_volume))}
    _write_report(cfg.get("report"), rep)
    return EXIT_OK if ok else EXIT_FAIL


# --- trace-check -----------------------------------------------------------------


def cmd_trace_check(cfg) -> int:
    from .trace import MAX_ORDER, check_compatibility, read_boundary, read_traces

    m = int(cfg["order"])
    tol = float(cfg["tol"])
    if not 1 <= m <= MAX_ORDER:
        raise UsageError(f"--order {m} unsupported: must be in 1..{MAX_ORDER}")
    if not tol > 0:
        raise UsageError("--tol must be positive")
    if not cfg.get("boundary") or not cfg.get("data"):
        raise UsageError("--boundary and --data are required")
    try:
        charts = read_boundary(cfg["boundary"])
        traces = read_traces(cfg["data"], charts)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read boundary data: {exc}") from None
    if any(len(t) < m for t in traces):
        raise UsageError(f"--order {m} needs traces 0..{m - 1}")
    rep = check_compatibility([t[:m] for t in traces], charts, m, tol)
    doc = {"command": "trace-check", **rep.to_dict()}
    _write_report(cfg.get("report"), doc)
    return EXIT_OK if rep.accepted else EXIT_FAIL


# --- convergence -----------------------------------------------------------------


def _bump_curl_field(n: int, dim: int, radius: float = 0.46, power: int = 8) -> VectorField:
    grid = GridSpec.box(n, -1.0, 1.0, dim)
    gb = poly_bump_grad(grid.coords(), np.zeros(dim), radius, power)
    data = np.zeros((dim, *grid.shape))
    data[0], data[1] = 2.0 * gb[1], -2.0 * gb[0]
    return VectorField(grid, data)


def _case_poisson(dim):
    def run(n):
        from .newton_potential import newton_fast
        from .oracle import gaussian

        grid = GridSpec.box(n, -1.0, 1.0, dim)
        rho = ScalarField(grid, gaussian(grid.coords(), 0.2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            phi = newton_fast(rho, pad=1)
        lap = ops.laplacian_compact(phi).data[tuple(slice(1, -1) for _ in range(dim))]
        return grid.spacing[0], _norm(-lap - rho.data) / _norm(rho.data)

    return run


def _case_pipeline(dim, key):
    def run(n):
        from .vector_potential import construct

        d = construct(_bump_curl_field(n, dim))
        return 2.0 / (n - 1), getattr(d, key)

    return run


def _case_decompose(dim, key):
    def run(n):
        from .decomposition import decompose_zero_trace

        grid = GridSpec.box(n, -1.0, 1.0, dim)
        v = VectorField(grid, poly_bump_grad(grid.coords(), np.zeros(dim), 0.9, 4))
        return grid.spacing[0], getattr(decompose_zero_trace(v), key)

    return run


def _case_fd_poly(dim):
    def run(n):
        from .oracle import poly_grad, random_poly_field, sample_poly

        grid = GridSpec.box(n, -1.0, 1.0, dim)
        f = random_poly_field(dim, "scalar", 4, 11)
        exact = sample_poly(poly_grad(f), grid).data
        fd = ops.grad(sample_poly(f, grid)).data
        return grid.spacing[0], _norm(fd - exact) / _norm(exact)

    return run


CASES = {
    "poisson-gaussian-2d": _case_poisson(2),
    "poisson-gaussian-3d": _case_poisson(3),
    "potential-div-2d": _case_pipeline(2, "div_w_rel"),
    "potential-div-3d": _case_pipeline(3, "div_w_rel"),
    "potential-harmonic-2d": _case_pipeline(2, "harmonic_residual_rel"),
    "potential-harmonic-3d": _case_pipeline(3, "harmonic_residual_rel"),
    "decompose-recon-2d": _case_decompose(2, "recon_rel"),
    "decompose-leak-2d": _case_decompose(2, "boundary_leak"),
    "fd-gradient-quartic-2d": _case_fd_poly(2),
}


def run_case(name: str, grids) -> dict:
    from .oracle import observed_order

    rows = [CASES[name](int(n)) for n in grids]
    slope = observed_order(rows)
    return {
        "case": name,
        "grids": [int(n) for n in grids],
        "h": [h for h, _ in rows],
        "errors": [e for _, e in rows],
        "slope": slope,
        "threshold": ORDER_MIN,
        "passed": slope >= ORDER_MIN,
    }


def _parse_grids(raw) -> list[int]:
    if isinstance(raw, (list, tuple)):
        items = raw
    else:
        items = [s for s in str(raw).split(",") if s.strip()]
    try:
        grids = [int(s) for s in items]
    except ValueError:
        raise UsageError(f"--grids must be a comma-separated list of integers, got {raw!r}") from None
    if len(grids) < 2:
        raise UsageError("--grids needs at least two levels")
    if len(set(grids)) != len(grids) or min(grids) < 8:
        raise UsageError("--grids must be distinct and each >= 8")
    return grids


def cmd_convergence(cfg) -> int:
    name = cfg.get("case")
    if name not in CASES:
        raise UsageError(f"unknown case {name!r}; known cases: {', '.join(sorted(CASES))}")
    grids = _parse_grids(cfg["grids"])
    out = run_case(name, grids)
    out["command"] = "convergence"
    _write_report(cfg.get("report"), out)
    return EXIT_OK if out["passed"] else EXIT_FAIL


# --- argument handling -------------------------------------------------------------


DEFAULTS = {
    "verify-identities": {"dim": 3, "grid": 16, "seed": 0, "mode": "periodic", "sabotage": False},
    "potential": {"method": "fd", "sabotage": False},
    "decompose": {"method": "fd", "recon_tol": 0.1, "leak_tol": 0.1},
    "trace-check": {"order": 3, "tol": 1e-8},
    "convergence": {"grids": "16,32,64"},
}

COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "potential": cmd_potential,
    "decompose": cmd_decompose,
    "trace-check": cmd_trace_check,
    "convergence": cmd_convergence,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    p = _Parser(prog="vecpot", description="Vector potentials, decompositions and trace checks on grids.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", default=sup, help="JSON file with default option values")
        sp.add_argument("--report", default=sup, help="write a JSON report here")

    s = sub.add_parser("verify-identities", help="check the four discrete vector-calculus identities")
    s.add_argument("--dim", type=int, default=sup)
    s.add_argument("--grid", type=int, default=sup)
    s.add_argument("--seed", type=int, default=sup)
    s.add_argument("--mode", choices=["periodic", "edges"], default=sup)
    s.add_argument("--sabotage", action="store_true", default=sup, help=sup)
    common(s)

    s = sub.add_parser("potential", help="divergence-free potential w with curl w = curl v")
    s.add_argument("--input", default=sup)
    s.add_argument("--output", default=sup)
    s.add_argument("--method", choices=["fd", "spectral"], default=sup)
    s.add_argument("--sabotage", action="store_true", default=sup, help=sup)
    common(s)

    s = sub.add_parser("decompose", help="zero-trace split v = w + grad eta")
    s.add_argument("--input", default=sup)
    s.add_argument("--out-w", dest="out_w", default=sup)
    s.add_argument("--out-eta", dest="out_eta", default=sup)
    s.add_argument("--method", choices=["fd", "spectral"], default=sup)
    s.add_argument("--recon-tol", dest="recon_tol", type=float, default=sup)
    s.add_argument("--leak-tol", dest="leak_tol", type=float, default=sup)
    common(s)

    s = sub.add_parser("trace-check", help="compatibility of boundary traces")
    s.add_argument("--order", type=int, default=sup)
    s.add_argument("--boundary", default=sup)
    s.add_argument("--data", default=sup)
    s.add_argument("--tol", type=float, default=sup)
    common(s)

    s = sub.add_parser("convergence", help="observed order of a named refinement study")
    s.add_argument("--case", default=sup)
    s.add_argument("--grids", default=sup)
    common(s)
    return p


def _load_config(path, command) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    section = doc.get(command, doc)
    if not isinstance(section, dict):
        raise UsageError(f"config section {command!r} must be an object")
    return {k.replace("-", "_"): v for k, v in section.items() if k != "config"}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    given = {k: v for k, v in vars(args).items() if k != "command"}
    cfg = dict(DEFAULTS[args.command])
    if "config" in given:
        cfg.update(_load_config(given.pop("config"), args.command))
    cfg.update(given)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required")
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TypeError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
