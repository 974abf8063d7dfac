import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vecpot.grid_fields import (
    AntisymField,
    GridSpec,
    MalformedHeaderError,
    NormSpec,
    PayloadMismatchError,
    ScalarField,
    UnsupportedKindError,
    VectorField,
    discrete_norm,
    read_field,
    sample,
    write_field,
)
from vecpot.oracle import gaussian, gaussian_w1p_norm

from conftest import order


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec((8,), (0.1,))
    with pytest.raises(ValueError):
        GridSpec((8, 2), (0.1, 0.1))
    with pytest.raises(ValueError):
        GridSpec((8, 8), (0.1, 0.0))
    g = GridSpec((4, 5, 6), (0.1, 0.2, 0.3))
    assert g.size == 120
    assert g.dim == 3


def test_sample_zero_and_coordinate():
    g = GridSpec.box(3, 0.0, 1.0, 3)
    assert not np.any(sample(g, lambda x: 0.0 * x[0]).data)
    f = sample(g, lambda x: x[0])
    assert np.array_equal(f.data, g.coords()[0])


def test_sample_gaussian_matches_pointwise():
    g = GridSpec.box(33, -1.0, 1.0, 2)
    f = sample(g, lambda x: gaussian(x, 0.3))
    for idx in [(0, 0), (16, 16), (5, 30), (32, 1)]:
        x = g.point(idx).reshape(2, 1)
        assert f.data[idx] == gaussian(x, 0.3)[0]


def test_sample_reports_nonfinite_index():
    g = GridSpec.box(5, 0.0, 1.0, 2)
    with pytest.raises(ValueError, match=r"\(4, 4\)"), np.errstate(divide="ignore"):
        sample(g, lambda x: 1.0 / (1.0 - x[0] * x[1]))


def test_antisym_reconstruction_is_skew():
    rng = np.random.default_rng(0)
    g = GridSpec.box(4, 0.0, 1.0, 4)
    A = AntisymField(g, rng.standard_normal((6, *g.shape)))
    M = A.full()
    assert np.array_equal(M, -np.swapaxes(M, 0, 1))
    assert not np.any(M[np.arange(4), np.arange(4)])


def test_norm_constant_and_antisym_convention():
    g = GridSpec((10, 10), (0.1, 0.1))
    assert discrete_norm(ScalarField(g, np.ones(g.shape)), NormSpec(2.0, 0)) == pytest.approx(1.0, rel=1e-14)
    A = AntisymField(g, np.ones((1, *g.shape)))
    assert discrete_norm(A, NormSpec(2.0, 0)) ** 2 == pytest.approx(4.0, rel=1e-14)


def test_normspec_validation():
    with pytest.raises(ValueError):
        NormSpec(1.0, 0)
    with pytest.raises(ValueError):
        NormSpec(2.0, -1)


def test_gaussian_w12_norm_converges():
    exact = gaussian_w1p_norm(1.0, 3)
    hs, errs = [], []
    for n in (17, 33, 65):
        g = GridSpec.box(n, -4.0, 4.0, 3)
        f = ScalarField(g, gaussian(g.coords(), 1.0))
        hs.append(g.spacing[0])
        errs.append(abs(discrete_norm(f, NormSpec(2.0, 1)) - exact) / exact)
    assert order(hs, errs) >= 1.8


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-1e3, 1e3).filter(lambda c: c == 0 or abs(c) > 1e-100), p=st.floats(1.1, 6.0), m=st.integers(0, 2),
       seed=st.integers(0, 2**16))
def test_norm_homogeneous(c, p, m, seed):
    g = GridSpec.box(6, 0.0, 1.0, 2)
    f = VectorField(g, np.random.default_rng(seed).standard_normal((2, *g.shape)))
    spec = NormSpec(p, m)
    base = discrete_norm(f, spec)
    assert discrete_norm(f * c, spec) == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("dim", [2, 3, 4, 5])
@pytest.mark.parametrize("kind", [ScalarField, VectorField, AntisymField])
def test_roundtrip_bitwise(tmp_path, dim, kind):
    rng = np.random.default_rng(dim)
    g = GridSpec((3,) * dim, tuple(0.1 + 0.01 * k for k in range(dim)), tuple(-k * 0.5 for k in range(dim)))
    ncomp = {ScalarField: None, VectorField: dim, AntisymField: dim * (dim - 1) // 2}[kind]
    shape = g.shape if ncomp is None else (ncomp, *g.shape)
    f = kind(g, rng.standard_normal(shape))
    write_field(f, tmp_path / "f.ndf")
    back = read_field(tmp_path / "f.ndf")
    assert type(back) is kind and back.grid == g
    assert back.data.tobytes() == f.data.tobytes()


def test_roundtrip_random_8x8(tmp_path):
    g = GridSpec((8, 8), (0.125, 0.125))
    f = ScalarField(g, np.random.default_rng(3).standard_normal(g.shape))
    write_field(f, tmp_path / "s.ndf")
    assert read_field(tmp_path / "s.ndf").data.tobytes() == f.data.tobytes()


def _corrupt(path, header_edit=None, payload_cut=0):
    raw = path.read_bytes()
    nl = raw.index(b"\n")
    header, payload = raw[:nl], raw[nl + 1:]
    if header_edit:
        header = header_edit(header)
    if payload_cut:
        payload = payload[:-payload_cut]
    path.write_bytes(header + b"\n" + payload)


def test_read_errors_have_distinct_codes(tmp_path):
    g = GridSpec((4, 4), (0.25, 0.25))
    f = ScalarField(g, np.zeros(g.shape))
    codes = set()
    p = tmp_path / "a.ndf"
    write_field(f, p)
    _corrupt(p, payload_cut=8)
    with pytest.raises(PayloadMismatchError) as e:
        read_field(p)
    codes.add(e.value.code)
    write_field(f, p)
    _corrupt(p, header_edit=lambda h: h.replace(b'"shape":[4,4]', b'"shape":[4,5]'))
    with pytest.raises(PayloadMismatchError):
        read_field(p)
    write_field(f, p)
    _corrupt(p, header_edit=lambda h: h[:-3])
    with pytest.raises(MalformedHeaderError) as e:
        read_field(p)
    codes.add(e.value.code)
    write_field(f, p)
    _corrupt(p, header_edit=lambda h: h.replace(b'"scalar"', b'"tensor"'))
    with pytest.raises(UnsupportedKindError) as e:
        read_field(p)
    codes.add(e.value.code)
    assert len(codes) == 3
