import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loglog_euler.field_engine import Grid2D, ScalarField
from loglog_euler.initial_data import build_g0
from loglog_euler.moc_norms import (ModulusDomainError, ModulusKind, PairSample, PreconditionError,
                                    forcing_ratio, moc_norm, moc_seminorm, moc_value,
                                    stratified_pairs, table1_field, table1_magnitude,
                                    vel_from_vor_ratio)
from loglog_euler.vortex_core import us_velocity

PHI = ModulusKind("phi_alpha", 0.5)


def test_closed_form_moduli():
    assert moc_value(PHI, math.exp(-4)) == pytest.approx(0.5, rel=1e-14)
    assert moc_value(ModulusKind("psi_alpha", 0.5), math.exp(-4)) == pytest.approx(
        2 * math.exp(-4), rel=1e-14)
    assert moc_value(ModulusKind("phi_beta", 2.0), math.exp(-10)) == pytest.approx(0.01, rel=1e-14)


def test_domain_cap_and_validation():
    for r in (0.0, -1e-3, math.exp(-1.0), 1.0):
        with pytest.raises(ModulusDomainError):
            moc_value(PHI, r)
    with pytest.raises(ValueError):
        ModulusKind("phi_alpha", 1.5)
    with pytest.raises(ValueError):
        ModulusKind("phi_beta", 0.5)
    with pytest.raises(ValueError):
        ModulusKind("nope", 0.5)


@pytest.mark.parametrize("kind", [PHI, ModulusKind("psi_alpha", 0.5), ModulusKind("phi_beta", 1.5),
                                  ModulusKind("log_lipschitz"), ModulusKind("loglog_lipschitz"),
                                  ModulusKind("holder", 0.3)])
def test_moduli_nondecreasing_and_vanishing(kind):
    r = np.geomspace(1e-300, kind.cap * (1 - 1e-9), 4000)
    mu = moc_value(kind, r)
    assert np.all(np.diff(mu) >= 0)
    # phi-type moduli vanish only logarithmically: (log 1e300)^-0.5 ~ 0.04
    assert mu[0] < 0.05


def test_small_r_limits():
    ll = ModulusKind("log_lipschitz")
    ratios = [moc_value(ll, r) / r for r in (1e-3, 1e-6, 1e-9)]
    assert ratios[0] < ratios[1] < ratios[2]
    vals = [moc_value(PHI, r) for r in (1e-3, 1e-6, 1e-9)]
    assert vals[0] > vals[1] > vals[2]


def test_constant_and_zero_fields():
    pairs = stratified_pairs(seed=1)
    three = lambda p: np.full(len(np.atleast_2d(p)), 3.0)  # noqa: E731
    zero = lambda p: np.zeros(len(np.atleast_2d(p)))  # noqa: E731
    assert moc_seminorm(three, pairs, PHI) == 0.0
    assert moc_norm(three, pairs, PHI) == 3.0
    assert moc_norm(zero, pairs, PHI) == 0.0


def _phi_radial(p):
    rho = np.hypot(*np.atleast_2d(p).T)
    out = np.zeros_like(rho)
    pos = rho > 0
    out[pos] = np.log(1.0 / rho[pos]) ** -0.5
    return out


def test_seminorm_on_ray_matches_dense_brute_force():
    cap = math.exp(-1.0)
    # dense 1-D oracle: ~1e6 pairs from 1000 log-spaced radii plus the origin
    t = np.concatenate([[0.0], np.geomspace(1e-14, cap * 0.999, 999)])
    f = _phi_radial(np.column_stack([t, np.zeros_like(t)]))
    i, j = np.triu_indices(t.size, k=1)
    d = t[j] - t[i]
    keep = (d > 0) & (d < cap)
    truth = np.max(np.abs(f[j] - f[i])[keep] / moc_value(PHI, d[keep]))
    rng = np.random.default_rng(0)
    a = np.concatenate([np.zeros(500), 10 ** rng.uniform(-14, math.log10(cap), 1500)])
    b = a + 10 ** rng.uniform(-14, math.log10(cap), 2000)
    ok = b - a < cap
    e = np.array([math.cos(0.3), math.sin(0.3)])
    pairs = PairSample(a[ok, None] * e, b[ok, None] * e)
    est = moc_seminorm(_phi_radial, pairs, PHI)
    assert 0.9 * truth <= est <= 1.1 * truth


def test_exhaustive_pairs_equal_brute_force():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.1, 0.1, (10, 2))
    vals = rng.normal(size=10)
    lookup = {tuple(p): v for p, v in zip(pts, vals)}
    f = lambda p: np.array([lookup[tuple(q)] for q in np.atleast_2d(p)])  # noqa: E731
    pairs = PairSample.all_pairs(pts)
    assert len(pairs) == 45
    brute = max(abs(vals[i] - vals[j]) / moc_value(PHI, np.hypot(*(pts[i] - pts[j])))
                for i in range(10) for j in range(i + 1, 10))
    assert moc_seminorm(f, pairs, PHI) == brute
    assert moc_norm(f, pairs, PHI) == np.abs(vals).max() + brute


def test_stratified_pair_bins():
    pairs = stratified_pairs(Grid2D(), seed=0)
    s, r = pairs.bin_counts()
    assert np.all(s >= 200) and np.all(r >= 200)
    assert np.all(pairs.separation > 0) and np.all(pairs.separation < math.exp(-1.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=60))
def test_seminorm_monotone_in_pair_set(seed, extra):
    rng = np.random.default_rng(seed)
    f = lambda p: np.sin(7 * np.atleast_2d(p)[:, 0]) + np.hypot(*np.atleast_2d(p).T) ** 0.3  # noqa: E731
    x = rng.uniform(-1, 1, (30 + extra, 2))
    y = x + 10 ** rng.uniform(-8, -0.5, (30 + extra, 1)) * rng.normal(size=(30 + extra, 2))
    full = PairSample(x, y)
    part = full.subset(np.arange(30 + extra) < 30)
    assert moc_seminorm(f, full, PHI) >= moc_seminorm(f, part, PHI)


def test_stronger_modulus_gives_larger_seminorm():
    pairs = stratified_pairs(seed=2)
    f = lambda p: np.cos(3 * np.atleast_2d(p)[:, 1]) * np.exp(-np.hypot(*np.atleast_2d(p).T))  # noqa: E731
    beta = ModulusKind("phi_beta", 1.5)
    assert moc_seminorm(f, pairs, beta) >= moc_seminorm(f, pairs, PHI)


def test_forcing_ratio_linear_and_vortex_velocity():
    pairs = stratified_pairs(seed=0, radius_range=(1e-8, 1.0))
    lin = forcing_ratio(lambda p: np.atleast_2d(p).copy(), pairs)
    assert np.isfinite(lin.value) and lin.value <= 10
    vs = forcing_ratio(us_velocity, pairs)
    assert np.isfinite(vs.value)


def test_forcing_ratio_rejects_nonvanishing_velocity():
    pairs = stratified_pairs(seed=0, radius_range=(1e-4, 1.0))
    with pytest.raises(PreconditionError):
        forcing_ratio(lambda p: np.ones((len(np.atleast_2d(p)), 2)), pairs)


def _bump(grid):
    xx, yy = grid.mesh()
    q = xx**2 + yy**2
    v = np.zeros_like(q)
    v[q < 1] = np.exp(-1.0 / (1.0 - q[q < 1]))
    return ScalarField(grid, v, even=True)


def test_vel_from_vor_ratio_bump_refinement():
    vals = []
    for n in (256, 512):
        grid = Grid2D(4.0, n)
        pairs = stratified_pairs(grid, seed=0, per_cell=10, focus_pairs=0, core_pairs=2000)
        vals.append(vel_from_vor_ratio(_bump(grid), pairs).value)
    assert all(np.isfinite(vals))
    assert abs(vals[1] - vals[0]) <= 0.2 * abs(vals[0])


def test_vel_from_vor_ratio_degenerate_and_g0():
    grid = Grid2D(48.0, 256)
    pairs = stratified_pairs(grid, seed=0, per_cell=5)
    assert vel_from_vor_ratio(ScalarField(grid, np.zeros((256, 256))), pairs).degenerate
    est = vel_from_vor_ratio(build_g0(0.5, grid), pairs)
    assert np.isfinite(est.value) and est.value > 0


def test_table1_rows():
    # on the diagonal: the m = 2 mode has nodal lines on the axes
    x = np.array([1e-4, 1e-4]) / math.sqrt(2)
    g = table1_field("iii")
    assert 1 / 50 <= table1_magnitude("iii", x, g) <= 50
    assert np.isfinite(table1_magnitude("i", x, table1_field("i")))
    assert table1_magnitude("iii", x, None) == 0.0
    with pytest.raises(ValueError):
        table1_field("vi")


def test_table1_normalized_magnitudes_bounded():
    for case in ("i", "ii", "iii", "iv", "v"):
        g = table1_field(case)
        vals = [table1_magnitude(case, (r / math.sqrt(2), r / math.sqrt(2)), g)
                for r in (1e-3, 1e-5, 1e-8)]
        assert all(0.02 <= v <= 50 for v in vals), (case, vals)
