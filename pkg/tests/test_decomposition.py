import numpy as np
import pytest

from vecpot.decomposition import (
    NotAGradientError,
    ZeroTraceError,
    decompose_zero_trace,
    gradient_recover,
    gradient_residual,
    zero_extend,
)
from vecpot.generators import poly_bump, poly_bump_grad
from vecpot.grid_fields import GridSpec, ScalarField, VectorField

from conftest import curl_bump, grad_bump, order


def _bump_field(n, dim=2):
    g = GridSpec.box(n, -1.0, 1.0, dim)
    return VectorField(g, poly_bump_grad(g.coords(), np.zeros(dim), 0.6, 6))


def test_zero_extend_round_trip():
    v = _bump_field(12)
    box = v.grid.padded(5)
    ext = zero_extend(v, box)
    assert ext.grid == box
    assert np.array_equal(ext.data[:, 5:17, 5:17], v.data)
    outside = ext.data.copy()
    outside[:, 5:17, 5:17] = 0
    assert not np.any(outside)


def test_zero_extend_rejections():
    v = _bump_field(12)
    bad = v.data.copy()
    bad[0, 0, 6] = 0.5
    with pytest.raises(ZeroTraceError):
        zero_extend(VectorField(v.grid, bad), v.grid.padded(5))
    with pytest.raises(ValueError):
        zero_extend(v, v.grid.padded(2))
    shifted = GridSpec(v.grid.padded(5).shape, v.grid.spacing, (-2.0 + 0.01, -2.0))
    with pytest.raises(ValueError):
        zero_extend(v, shifted)


def test_recover_zero():
    g = GridSpec.box(10, 0.0, 1.0, 2)
    assert not np.any(gradient_recover(VectorField(g, np.zeros((2, *g.shape)))).data)


def test_recover_rejects_rotation():
    g = GridSpec.box(16, -1.0, 1.0, 2)
    x = g.coords()
    with pytest.raises(NotAGradientError):
        gradient_recover(VectorField(g, np.stack([-x[1], x[0]])))


@pytest.mark.parametrize("dim", [2, 3])
def test_recover_known_potential(dim):
    hs, res = [], []
    for n in (16, 32, 64):
        g = GridSpec.box(n, -1.0, 1.0, dim)
        u = VectorField(g, poly_bump_grad(g.coords(), np.zeros(dim), 0.7, 6))
        eta = gradient_recover(u)
        assert abs(eta.data.mean()) < 1e-12
        hs.append(g.spacing[0])
        res.append(gradient_residual(u, eta))
    assert order(hs, res) >= 1.8


def test_recover_values_match_potential():
    hs, errs = [], []
    for n in (32, 64, 128):
        g = GridSpec.box(n, -1.0, 1.0, 2)
        psi = poly_bump(g.coords(), np.zeros(2), 0.7, 6)
        psi = psi - psi.mean()
        eta = gradient_recover(VectorField(g, poly_bump_grad(g.coords(), np.zeros(2), 0.7, 6)))
        hs.append(g.spacing[0])
        errs.append(np.linalg.norm(eta.data - psi) / np.linalg.norm(psi))
    assert order(hs, errs) >= 1.8


def test_recover_periodic_is_exact_for_discrete_gradients():
    from vecpot import diff_ops as ops
    from vecpot.generators import random_scalar

    g = GridSpec((24, 24), (1 / 24, 1 / 24))
    f = random_scalar(g, 4)
    u = ops.grad(f, "periodic")
    eta = gradient_recover(u, "periodic")
    assert gradient_residual(u, eta, "periodic") <= 1e-12


def test_zero_input():
    g = GridSpec.box(16, -1.0, 1.0, 2)
    r = decompose_zero_trace(VectorField(g, np.zeros((2, *g.shape))))
    assert not np.any(r.w.data) and not np.any(r.eta.data)
    assert r.recon_rel == r.div_w_rel == r.boundary_leak == 0.0


@pytest.mark.parametrize("dim,grids", [(2, (32, 64, 128)), (3, (24, 48, 96))])
def test_gradient_input(dim, grids):
    hs, recon, div, leak, wsize = [], [], [], [], []
    for n in grids:
        v = grad_bump(n, dim)
        r = decompose_zero_trace(v)
        hs.append(v.grid.spacing[0])
        recon.append(r.recon_rel)
        div.append(r.div_w_rel)
        leak.append(r.boundary_leak)
        wsize.append(np.linalg.norm(r.w.data) / np.linalg.norm(v.data))
    for seq in (recon, div, leak):
        assert order(hs, seq) >= 1.8
    assert wsize[-1] < wsize[0] / 4


@pytest.mark.parametrize("dim", [2, 3])
def test_curl_input(dim):
    hs, recon, div, leak, etas = [], [], [], [], []
    for n in (16, 32, 64):
        v = curl_bump(n, dim)
        r = decompose_zero_trace(v)
        hs.append(v.grid.spacing[0])
        recon.append(r.recon_rel)
        div.append(r.div_w_rel)
        leak.append(r.boundary_leak)
        etas.append(np.abs(r.eta.data).max())
        s = r.summary()
        assert all(np.isfinite(s[k]) and s[k] >= 0 for k in ("recon_rel", "div_w_rel", "boundary_leak"))
    for seq in (recon, div, leak):
        assert order(hs, seq) >= 1.8
    assert etas[-1] < etas[0]


def test_spectral_reconstruction():
    r = decompose_zero_trace(grad_bump(32, 2), method="spectral")
    assert r.recon_rel <= 1e-10
    with pytest.raises(ValueError):
        decompose_zero_trace(grad_bump(32, 2), method="nope")


def test_linearity():
    a, b = grad_bump(24, 2), curl_bump(24, 2)
    ra, rb = decompose_zero_trace(a), decompose_zero_trace(b)
    rab = decompose_zero_trace(VectorField(a.grid, 2.5 * a.data + b.data))
    assert np.linalg.norm(rab.w.data - 2.5 * ra.w.data - rb.w.data) <= 1e-10 * np.linalg.norm(rab.w.data)
    assert np.linalg.norm(rab.eta.data - 2.5 * ra.eta.data - rb.eta.data) <= 1e-10 * np.linalg.norm(rab.eta.data)


def test_rejects_nonzero_trace():
    g = GridSpec.box(16, -1.0, 1.0, 2)
    with pytest.raises(ZeroTraceError):
        decompose_zero_trace(VectorField(g, np.ones((2, *g.shape))))


def test_explicit_ambient():
    v = grad_bump(16, 2)
    r = decompose_zero_trace(v, ambient=v.grid.padded(6))
    assert r.extras["ambient_shape"] == [28, 28]
    assert r.extras["offset"] == [6, 6]
    assert r.eta.grid == v.grid and isinstance(r.eta, ScalarField)
