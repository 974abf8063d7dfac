"""One test per acceptance criterion; each collects its clauses and fails if any clause does."""

import subprocess
import time

import numpy as np
import pytest

from vecpot import diff_ops as ops
from vecpot.cli import identity_suite, run_case
from vecpot.decomposition import decompose_zero_trace
from vecpot.generators import random_scalar
from vecpot.grid_fields import GridSpec, ScalarField, VectorField
from vecpot.newton_potential import newton_direct, newton_fast
from vecpot.oracle import (
    Poly,
    observed_order,
    poly_curl,
    poly_div,
    poly_grad,
    poly_laplacian,
    poly_scurl,
    random_poly,
    random_poly_field,
    sample_poly,
)
from vecpot.trace import (
    BoundaryChart,
    BoundaryField,
    ParamGrid,
    build_s,
    build_S,
    build_S_chain,
    check_compatibility,
    frames,
    gamma,
    lemma43_rows,
    square_charts,
    symmetry_defect,
)
from vecpot.vector_potential import construct

from cli_scenario import RUNS, command, make_inputs
from conftest import curl_bump, grad_bump

pytestmark = pytest.mark.usefixtures("quiet_margin")


class Clauses:
    def __init__(self, name, budget):
        self.name, self.budget, self.rows, self.t0 = name, budget, [], time.perf_counter()

    def check(self, label, ok, detail=""):
        self.rows.append((label, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        if self.budget is not None:
            self.check("runtime", elapsed <= self.budget, f"{elapsed:.1f}s <= {self.budget}s")
        failed = [r for r in self.rows if not r[1]]
        for label, ok, detail in self.rows:
            print(f"{self.name} {'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert not failed, "; ".join(f"{label} ({detail})" for label, _, detail in failed)


def _order(hs, errs):
    return observed_order(zip(hs, errs))


def test_criterion_1_identity_suite():
    c = Clauses("C1", 60)
    for dim, n in ((2, 16), (3, 16), (4, 16), (5, 8)):
        for mode in ("periodic", "one_sided_edges"):
            res = identity_suite(dim, n, 7, mode)["residuals"]
            for key, val in res.items():
                c.check(f"N={dim} {mode} {key}", val <= 1e-12, f"{val:.2e}")
    c.finish()


def test_criterion_2_newton_potential():
    c = Clauses("C2", 120)
    g = GridSpec.box(16, -1.0, 1.0, 3)
    rho = random_scalar(g, 5, "one_sided_edges")
    fast, direct = newton_fast(rho), newton_direct(rho)
    rel = np.linalg.norm(fast.data - direct.data) / np.linalg.norm(direct.data)
    c.check("fast == direct on 16^3", rel <= 1e-10, f"{rel:.2e}")
    for dim in (2, 3):
        out = run_case(f"poisson-gaussian-{dim}d", [16, 32, 64])
        c.check(f"Gaussian residual order N={dim}", out["slope"] >= 1.8, f"{out['slope']:.3f}")
    R = 0.5
    for n in (17, 33, 65):
        g = GridSpec.box(n, -1.0, 1.0, 3)
        ball = ScalarField(g, (sum(x**2 for x in g.coords()) <= R**2).astype(float))
        m = n // 2
        err = abs(newton_fast(ball).data[m, m, m] - R**2 / 2)
        h = g.spacing[0]
        c.check(f"ball centre n={n}", err <= 3 * h * h, f"|err| {err:.2e} vs 3h^2 {3 * h * h:.2e}")
    c.finish()


def test_criterion_3_pipeline():
    c = Clauses("C3", 300)
    hs = [2.0 / (n - 1) for n in (16, 32, 64)]
    for dim in (2, 3):
        diags = [construct(curl_bump(n, dim)) for n in (16, 32, 64)]
        for n, d in zip((16, 32, 64), diags):
            c.check(f"N={dim} n={n} curl defect", d.curl_defect_rel <= 1e-12, f"{d.curl_defect_rel:.2e}")
        s = _order(hs, [d.div_w_rel for d in diags])
        c.check(f"N={dim} div_w order", s >= 1.8, f"{s:.3f}")
        s = _order(hs, [d.harmonic_residual_rel for d in diags])
        c.check(f"N={dim} harmonic residual order", s >= 1.8,
                f"{s:.3f} from {[f'{d.harmonic_residual_rel:.2e}' for d in diags]}")
        ratios = [d.norm_ratio for d in diags]
        spread = max(ratios) / min(ratios) - 1.0
        c.check(f"N={dim} norm_ratio spread", spread <= 0.05, f"{spread:.3%} over {[round(r, 4) for r in ratios]}")
    d = construct(curl_bump(32, 3), method="spectral")
    c.check("spectral div_w at 32^3", d.div_w_rel <= 1e-10, f"{d.div_w_rel:.2e}")
    c.finish()


def test_criterion_4_decomposition():
    c = Clauses("C4", 180)
    cases = [
        ("gradient N=2", lambda n: grad_bump(n, 2), (32, 64, 128)),
        ("gradient N=3", lambda n: grad_bump(n, 3), (24, 48, 96)),
        ("scurl N=2", lambda n: curl_bump(n, 2), (16, 32, 64)),
        ("scurl N=3", lambda n: curl_bump(n, 3), (16, 32, 64)),
    ]
    for label, make, grids in cases:
        res = [decompose_zero_trace(make(n)) for n in grids]
        hs = [2.0 / (n - 1) for n in grids]
        for key in ("recon_rel", "div_w_rel", "boundary_leak"):
            s = _order(hs, [getattr(r, key) for r in res])
            c.check(f"{label} {key} order (grids {grids})", s >= 1.8, f"{s:.3f}")
    a, b = grad_bump(32, 2), curl_bump(32, 2)
    ra, rb = decompose_zero_trace(a), decompose_zero_trace(b)
    rab = decompose_zero_trace(VectorField(a.grid, 1.7 * a.data + b.data))
    for part in ("w", "eta"):
        x, y, z = (getattr(r, part).data for r in (rab, ra, rb))
        gap = np.linalg.norm(x - 1.7 * y - z) / np.linalg.norm(x)
        c.check(f"linearity of {part}", gap <= 1e-10, f"{gap:.2e}")
    c.finish()


def _traces(phi, chart, m):
    return [gamma(phi, chart, q) for q in range(m)]


def _trace_clauses(c, label, chart, traces, chain):
    p0, p1, p2 = traces
    s = build_s(p0, p1)
    S = build_S(s, p2)
    _, n = frames(chart)
    Sv = S.flat_values()
    snn = np.einsum("mab,ma,mb->m", Sv, n, n)
    gap = float(np.abs(snn - p2.values.reshape(-1)).max())
    c.check(f"{label} S.n.n = phi2", gap <= 1e-14 * max(1.0, float(np.abs(Sv).max())), f"{gap:.1e}")
    worst = 0.0
    for i in range(1, chart.dim + 1):
        r0, r1 = lemma43_rows(s, p2, chart, i)
        worst = max(worst, float(np.abs(build_s(r0, r1).flat_values() - Sv[:, :, i - 1]).max()))
    c.check(f"{label} row identity", worst <= 1e-10, f"{worst:.1e}")
    same = np.array_equal(chain[1].values, s.values) and np.array_equal(chain[2].values, S.values)
    same = same and np.array_equal(build_S_chain([p0, p1], chart, 2)[1].values, s.values)
    c.check(f"{label} chain bitwise m=2,3", same)


def test_criterion_5_traces():
    c = Clauses("C5", 60)
    charts = square_charts(9)
    phis = {
        "x^2 y": lambda x: x[0] ** 2 * x[1],
        "x^3 y": lambda x: x[0] ** 3 * x[1],
        "xy + y^3": lambda x: x[0] * x[1] + x[1] ** 3,
        "random cubic": random_poly(2, 3, 2024),
    }
    for name, phi in phis.items():
        tr = [_traces(phi, ch, 3) for ch in charts]
        rep = check_compatibility(tr, charts, 3, 1e-8)
        c.check(f"square {name} accepted", rep.accepted, f"max defect {rep.max_defect:.1e}")
        _trace_clauses(c, f"square {name}", charts[1], tr[1], rep.chains[1])
        if name == "x^2 y":
            base = tr
    face = BoundaryChart.flat(ParamGrid.box(7, 0.0, 1.0, 2))
    curved = BoundaryChart.from_function(
        lambda y: 0.15 * y[0] ** 2 - 0.1 * y[0] * y[1] + 0.05 * y[1] ** 3,
        ParamGrid.box(7, -0.5, 0.5, 2))
    phi3 = random_poly(3, 3, 77)
    for label, chart in (("cube face", face), ("curved chart", curved)):
        tr = _traces(phi3, chart, 3)
        rep = check_compatibility(tr, chart, 3, 1e-8)
        c.check(f"{label} accepted", rep.accepted, f"symmetry {rep.symmetry_defects[2]:.1e}")
        _trace_clauses(c, label, chart, tr, rep.chains[0])

    tr = [list(t) for t in base]
    bumped = np.array(tr[1][2].values)
    bumped[-3:] += 1.0
    tr[1][2] = BoundaryField(charts[1], 0, bumped)
    rep = check_compatibility(tr, charts, 3, 1e-8)
    c.check("phi2 + 1 patch rejected", (not rep.accepted) and rep.max_defect >= 0.1, f"defect {rep.max_defect:.3f}")

    for label, chart in (("square", charts[1]), ("cube face", face)):
        phi = phis["x^3 y"] if chart.dim == 2 else (lambda x: x[0] ** 3 * x[1] + x[1] * x[2] ** 3)
        S3 = build_S_chain(_traces(phi, chart, 4), chart, 4)[3]
        d = symmetry_defect(S3)
        c.check(f"{label} S_3 symmetric at m=4", d <= 1e-8, f"{d:.1e}")
    c.finish()


def _is_zero(f):
    return all(p.is_zero() for p in f.comps)


def test_criterion_6_oracle():
    c = Clauses("C6", 60)
    for dim in (2, 3, 4, 5):
        deg = 3 if dim <= 3 else 2
        f = random_poly_field(dim, "scalar", deg, dim)
        v = random_poly_field(dim, "vector", deg, dim + 10)
        A = random_poly_field(dim, "antisym", deg, dim + 20)
        c.check(f"N={dim} curl grad == 0", _is_zero(poly_curl(poly_grad(f))))
        c.check(f"N={dim} div scurl == 0", _is_zero(poly_div(poly_scurl(A))))
        c.check(f"N={dim} Laplacian split", -poly_laplacian(v) == -poly_grad(poly_div(v)) + poly_scurl(poly_curl(v)))
        C, sA = poly_curl(v), poly_scurl(A)
        gap = Poly.zero(dim)
        for i in range(dim):
            gap = gap - v.comps[i] * sA.comps[i]
            flux = Poly.zero(dim)
            for j in range(dim):
                if j > i:
                    gap = gap + 4 * C.entry(i, j) * A.entry(i, j)
                flux = flux + 2 * v.comps[j] * A.entry(j, i)
            gap = gap + flux.diff(i)
        c.check(f"N={dim} adjointness (integrand is a divergence)", gap.is_zero())

    for dim in (2, 3):
        g = GridSpec.box(9, -1.0, 1.0, dim)
        for deg in (1, 2):
            f = random_poly_field(dim, "scalar", deg, deg)
            v = random_poly_field(dim, "vector", deg, deg + 1)
            A = random_poly_field(dim, "antisym", deg, deg + 2)
            for name, fd, exact in (
                ("grad", ops.grad(sample_poly(f, g)), poly_grad(f)),
                ("div", ops.div(sample_poly(v, g)), poly_div(v)),
                ("curl", ops.curl(sample_poly(v, g)), poly_curl(v)),
                ("scurl", ops.scurl(sample_poly(A, g)), poly_scurl(A)),
            ):
                e = sample_poly(exact, g).data
                gap = float(np.abs(fd.data - e).max()) / max(1.0, float(np.abs(e).max()))
                c.check(f"N={dim} degree {deg} {name} exact", gap <= 1e-12, f"{gap:.1e}")
        for deg in (3, 4, 5):
            f = random_poly_field(dim, "scalar", deg, 100 + deg)
            v = random_poly_field(dim, "vector", deg, 200 + deg)
            grids = (17, 33, 65) if dim == 2 else (9, 17, 33)
            for name, op, sym, src in (("grad", ops.grad, poly_grad, f), ("div", ops.div, poly_div, v),
                                       ("curl", ops.curl, poly_curl, v)):
                hs, errs = [], []
                for n in grids:
                    g = GridSpec.box(n, -1.0, 1.0, dim)
                    e = sample_poly(sym(src), g).data
                    hs.append(g.spacing[0])
                    errs.append(np.linalg.norm(op(sample_poly(src, g)).data - e) / np.linalg.norm(e))
                s = _order(hs, errs)
                c.check(f"N={dim} degree {deg} {name} order", s >= 1.8, f"{s:.3f}")
    c.finish()


def test_criterion_7_cli(tmp_path):
    c = Clauses("C7", None)
    make_inputs(tmp_path)
    for name, argv, code in RUNS:
        first = subprocess.run(command(argv, tmp_path / f"{name}.a.json"), cwd=tmp_path, capture_output=True)
        c.check(f"{name} exit {code}", first.returncode == code, f"got {first.returncode}")
        if code in (0, 1):
            subprocess.run(command(argv, tmp_path / f"{name}.b.json"), cwd=tmp_path, capture_output=True)
            a, b = (tmp_path / f"{name}.{k}.json" for k in "ab")
            c.check(f"{name} report byte-identical", a.read_bytes() == b.read_bytes())
    classes = {argv[0] for _, argv, _ in RUNS}
    failing = {argv[0] for _, argv, code in RUNS if code == 1}
    c.check("all five commands exercised", len(classes) == 5, str(sorted(classes)))
    c.check("a deliberate failure per command", failing == classes, str(sorted(failing)))
    c.finish()
