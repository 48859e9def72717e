import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loglog_euler.experiments import rankine_velocity, rankine_vorticity
from loglog_euler.field_engine import (Grid2D, ScalarField, SupportError, VectorField,
                                       biot_savart_direct, biot_savart_fft, divergence,
                                       export_slice_csv, gradient, load_field, sample, save_field,
                                       velocity_gradient)


@pytest.fixture(scope="module")
def rankine():
    out = {}
    for n in (256, 512):
        grid = Grid2D(4.0, n)
        w = rankine_vorticity(grid)
        out[n] = (w, biot_savart_fft(w))
    return out


def _ring(rho, k=8):
    th = np.linspace(0.1, 6.0, k)
    return rho * np.column_stack([np.cos(th), np.sin(th)])


def _rankine_error(w, u, rho):
    pts = _ring(rho)
    ref = rankine_velocity(pts)
    return np.abs(sample(u, pts) - ref).max() / np.abs(ref).max()


def test_grid_geometry():
    g = Grid2D()
    assert g.h == pytest.approx(96 / 1024)
    assert g.contains(np.array([[0.0, 0.0], [47.9, -47.9]])).all()
    assert not g.contains(np.array([48.5, 0.0])).any()
    x1, x2 = g.axes()
    assert np.allclose(x1, -x1[::-1])
    with pytest.raises(ValueError):
        Grid2D(48.0, 1000)


def test_rankine_within_two_cells(rankine):
    w, u = rankine[512]
    for rho in (0.5, 2.0):
        assert _rankine_error(w, u, rho) <= 2 * w.grid.h


def test_rankine_refinement_order(rankine):
    errs = [max(_rankine_error(w, u, rho) for rho in (0.5, 2.0))
            for w, u in (rankine[256], rankine[512])]
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_even_input_gives_odd_output(rankine):
    w, u = rankine[256]
    assert u.odd
    assert u.symmetry_defect() <= 1e-12 * u.sup()


def test_divergence_free(rankine):
    for w, u in rankine.values():
        J = velocity_gradient(u)
        assert np.abs(divergence(u)).max() <= 1e-8 * np.abs(J).max()


def _gaussian(grid, c=(0.3, -0.2), s=0.5):
    xx, yy = grid.mesh()
    return ScalarField(grid, np.exp(-((xx - c[0]) ** 2 + (yy - c[1]) ** 2) / (2 * s * s)))


@pytest.mark.parametrize("fixture", ["rankine", "gaussian", "g0"])
def test_fft_matches_direct(fixture, rankine, request):
    if fixture == "rankine":
        w = rankine[256][0]
    elif fixture == "gaussian":
        w = _gaussian(Grid2D(8.0, 256))
    else:
        from loglog_euler.initial_data import build_g0
        w = build_g0(0.5, Grid2D(48.0, 256))
    u = biot_savart_fft(w)
    rng = np.random.default_rng(5)
    idx = rng.integers(8, w.grid.n - 8, (20, 2))
    pts = np.array([w.grid.node(i, j) for i, j in idx])
    ref = biot_savart_direct(w, pts)
    got = u.values[idx[:, 0], idx[:, 1]]
    assert np.abs(got - ref).max() <= max(1e-6 * np.abs(u.values).max(), 1e-12)


def test_direct_examples(rankine):
    grid = Grid2D(4.0, 64)
    zero = ScalarField(grid, np.zeros((64, 64)))
    assert np.all(biot_savart_direct(zero, np.array([[0.3, 0.1], [1.0, 2.0]])) == 0.0)
    w = rankine[512][0]
    u = biot_savart_direct(w, np.array([2.0, 0.0]))[0]
    assert u == pytest.approx([0.0, 0.25], abs=1e-4)


def _bump_at(grid, c, sign=1.0, radius=1.0):
    xx, yy = grid.mesh()
    q = ((xx - c[0]) ** 2 + (yy - c[1]) ** 2) / radius**2
    v = np.zeros_like(q)
    v[q < 1] = np.exp(-1.0 / (1.0 - q[q < 1]))
    return sign * v


def test_antisymmetric_bump_pair_superposition():
    grid = Grid2D(48.0, 512)
    single = ScalarField(grid, _bump_at(grid, (22.0, 22.0)))
    pair = ScalarField(grid, _bump_at(grid, (22.0, 22.0)) - _bump_at(grid, (-22.0, -22.0)))
    u1 = biot_savart_direct(single, np.zeros(2))[0]
    u2 = biot_savart_direct(pair, np.zeros(2))[0]
    assert np.hypot(*u2) > 0
    assert np.allclose(u2, 2 * u1, rtol=1e-12, atol=0)


def test_support_touching_margin_rejected():
    grid = Grid2D(4.0, 64)
    v = np.zeros((64, 64))
    v[1, 30] = 1.0
    with pytest.raises(SupportError):
        biot_savart_fft(ScalarField(grid, v))


def test_gradient_examples():
    grid = Grid2D(2.0, 64)
    xx, yy = grid.mesh()
    g = gradient(ScalarField(grid, xx))
    assert np.abs(g.values[..., 0] - 1).max() <= 1e-12
    assert np.abs(g.values[..., 1]).max() <= 1e-12
    assert np.all(gradient(ScalarField(grid, np.full((64, 64), 2.5))).values == 0)


def test_gradient_fourth_order_on_gaussian():
    errs = []
    for n in (64, 128):
        grid = Grid2D(4.0, n)
        f = _gaussian(grid, s=0.7)
        xx, yy = grid.mesh()
        exact = -np.stack([xx - 0.3, yy + 0.2], axis=-1) / 0.49 * f.values[..., None]
        errs.append(np.abs(gradient(f).values - exact)[4:-4, 4:-4].max())
    assert math.log2(errs[0] / errs[1]) >= 3.5


def test_sample_nodes_cubics_and_lines():
    grid = Grid2D(2.0, 32)
    xx, yy = grid.mesh()
    rng = np.random.default_rng(0)
    f = ScalarField(grid, rng.normal(size=(32, 32)))
    for i, j in [(0, 0), (5, 17), (31, 31), (16, 3)]:
        assert sample(f, grid.node(i, j)) == pytest.approx(f.values[i, j], abs=1e-14)
    cubic = ScalarField(grid, xx**3 - 2 * xx * yy**2 + yy)
    pts = rng.uniform(-1.9, 1.9, (50, 2))
    ref = pts[:, 0] ** 3 - 2 * pts[:, 0] * pts[:, 1] ** 2 + pts[:, 1]
    assert np.abs(sample(cubic, pts) - ref).max() <= 1e-12
    line = ScalarField(grid, 3 * xx - yy + 1)
    seg = np.column_stack([np.linspace(-1, 1, 11), np.linspace(0.5, -0.5, 11)])
    assert np.allclose(sample(line, seg), 3 * seg[:, 0] - seg[:, 1] + 1, atol=1e-13)
    with pytest.raises(ValueError):
        sample(f, np.array([3.0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.99, 1.99), st.floats(-1.99, 1.99))
def test_sample_reproduces_bicubics(x, y):
    grid = Grid2D(2.0, 16)
    xx, yy = grid.mesh()
    f = ScalarField(grid, (xx**3) * (yy**2) - xx * yy**3 + 0.5)
    assert sample(f, np.array([x, y])) == pytest.approx(x**3 * y**2 - x * y**3 + 0.5, abs=1e-11)


def test_vector_field_sampling_and_symmetry():
    grid = Grid2D(2.0, 32)
    xx, yy = grid.mesh()
    u = VectorField(grid, np.stack([xx, -yy], axis=-1), odd=True)
    assert u.symmetry_defect() == pytest.approx(0.0, abs=1e-15)
    assert sample(u, np.array([0.3, 0.2])) == pytest.approx([0.3, -0.2], abs=1e-13)


def test_serialization_roundtrip(tmp_path):
    grid = Grid2D(3.0, 32, (0.5, -0.25))
    rng = np.random.default_rng(1)
    f = ScalarField(grid, rng.normal(size=(32, 32)), even=False)
    u = VectorField(grid, rng.normal(size=(32, 32, 2)), odd=True)
    for obj, name in ((f, "f.bin"), (u, "u.bin")):
        path = save_field(obj, tmp_path / name)
        back = load_field(path)
        assert back.grid == grid
        assert np.array_equal(back.values, obj.values)
    head = (tmp_path / "f.bin").read_bytes()[:32]
    assert np.frombuffer(head[:8], "<i8")[0] == 32
    csv = export_slice_csv(f, tmp_path / "slice.csv", axis=1, coordinate=0.0)
    assert csv.read_text().splitlines()[0] == "x1,value"
