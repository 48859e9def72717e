import math

import numpy as np
import pytest

from loglog_euler import _kernels as K
from loglog_euler.field_engine import Grid2D, ScalarField, biot_savart_direct, sample
from loglog_euler.initial_data import BlockPattern, build_g0
from loglog_euler.transport_solver import (RunRecord, SolverConfig, TransportError, affine_envelope,
                                           consistency_check, forcing, initial_state, picard_solve,
                                           solve, step, sup_norm_bound)
from loglog_euler.vortex_core import OUTER_CUTOFF, default_profile, ws_gradient


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(T=1.5)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        SolverConfig(mode="rk")
    cfg = SolverConfig(T=0.2, grid={"half_width": 48.0, "n": 256})
    assert SolverConfig(**cfg.to_dict()) == cfg


def test_forcing_zero_field(quick_grid):
    g = ScalarField(quick_grid, np.zeros((256, 256)), even=True)
    st = initial_state(g)
    pts = np.array([[1e-6, 0.0], [0.1, 0.2], [0.0, 0.3]])
    assert np.all(forcing(pts, st) == 0.0)


def test_forcing_near_origin_finite_and_support(quick_run):
    state = initial_state(quick_run.g_at(len(quick_run.times) - 1))
    tiny = np.array([[0.0, r] for r in (1e-2, 1e-4, 1e-6, 1e-8)])
    f = forcing(tiny, state)
    ug = biot_savart_direct(state.g, tiny)
    bound = np.hypot(*ug.T) * np.hypot(*ws_gradient(tiny).T)
    assert np.all(np.isfinite(f)) and np.all(np.abs(f) <= bound * (1 + 1e-12))
    assert np.all(np.abs(f) < 1.0)
    outside = np.array([[0.5, 0.0], [0.0, -1.0], [3.0, 4.0]])
    assert np.all(forcing(outside, state) == 0.0)
    assert forcing(np.zeros(2), state) == 0.0


def test_forcing_grid_vanishes_outside_support(quick_run):
    grid = quick_run.grid
    u = quick_run.ug_at(len(quick_run.times) - 1)
    x0, y0 = grid.origin
    f = K.forcing_grid(np.ascontiguousarray(u.values[..., 0]), np.ascontiguousarray(u.values[..., 1]),
                       x0, y0, grid.h, 0.0, 0.0, 0.0, 0.0, K.pack_vortex(default_profile()))
    xx, yy = grid.mesh()
    assert np.all(f[np.hypot(xx, yy) >= OUTER_CUTOFF] == 0.0)


def test_zero_data_stays_zero(zero_run):
    assert all(not np.any(s) for s in zero_run.snapshots)
    assert max(zero_run.g_sup) == 0.0


def test_pure_advection_conserves_sup():
    # eps = 0.9 spans ~2.4 cells at n = 256, so g0 is resolved and interpolation stays near-monotone
    grid = Grid2D(48.0, 256)
    g0 = build_g0(0.9, grid)
    run = solve(g0, SolverConfig(T=0.5, grid=grid, include_vortex=False, include_forcing=False))
    sups = np.array(run.g_sup)
    assert np.all(np.abs(sups - g0.sup()) <= 0.01 * g0.sup())


def test_quick_run_invariants(quick_run):
    assert max(quick_run.g_symmetry) <= 1e-8
    assert max(quick_run.u_symmetry) <= 1e-8
    assert max(quick_run.center_velocity) <= 1e-10
    ok, margin = sup_norm_bound(quick_run)
    assert ok, margin
    assert np.all(np.diff(quick_run.times) > 0)
    assert quick_run.times[-1] == pytest.approx(0.1)


def test_cfl_violation_rejected(quick_grid):
    st = initial_state(build_g0(0.5, quick_grid))
    with pytest.raises(TransportError):
        step(st, 10.0, SolverConfig(T=1.0, grid=quick_grid))


def test_moving_center_tracks_perturbation_velocity():
    grid = Grid2D(48.0, 256)
    g0 = build_g0(0.5, grid, BlockPattern.single())
    cfg = SolverConfig(T=0.04, grid=grid, symmetric=False)
    run = solve(g0, cfg)
    c = run.centers[-1]
    u0 = biot_savart_direct(g0, np.zeros((1, 2)))[0]
    assert np.hypot(*c) > 0
    # the block is far away, so u_g near the origin is nearly constant in time
    assert np.allclose(c, u0 * run.times[-1], rtol=2e-2, atol=0)


def test_symmetric_data_in_moving_mode_keeps_center():
    grid = Grid2D(48.0, 256)
    run = solve(build_g0(0.5, grid), SolverConfig(T=0.04, grid=grid, symmetric=False))
    assert np.hypot(*run.centers[-1]) <= 1e-12


def test_picard_trivial_and_contracting(quick_grid):
    zero = ScalarField(quick_grid, np.zeros((256, 256)), even=True)
    res = picard_solve(zero, 0.02, 1, SolverConfig(T=0.02, grid=quick_grid))
    assert np.all(res.iterates[0].values == 0.0)
    g0 = build_g0(0.5, quick_grid)
    res = picard_solve(g0, 0.1, 4, SolverConfig(T=0.1, grid=quick_grid))
    assert res.contracting(0.1)
    assert not res.warning
    assert res.limit_error() <= 5e-3
    assert res.find_T0((0.1, 0.05)) == 0.1
    with pytest.raises(ValueError):
        picard_solve(g0, 0.1, 0)


def test_consistency_series(zero_run, quick_run):
    zero = consistency_check(zero_run, 0.5)
    assert np.all(zero.series == 0.0) and zero.passed
    rep = consistency_check(quick_run, 0.5)
    assert rep.passed and math.isfinite(rep.b)
    rev = affine_envelope(rep.times[::-1], rep.series[::-1])
    assert not rev.times_increasing and not rev.passed


def test_affine_envelope_detects_superlinear_growth():
    t = np.linspace(0, 0.5, 51)
    rep = affine_envelope(t, 1 + np.exp(12 * t))
    assert not rep.passed and rep.violating_time() is not None


def test_run_save_load_roundtrip(tmp_path, quick_run):
    path = quick_run.save(tmp_path / "run")
    back = RunRecord.load(path)
    assert back.times == pytest.approx(quick_run.times)
    assert np.array_equal(back.snapshots[-1], quick_run.snapshots[-1])
    assert back.config == quick_run.config
    t = quick_run.truncated(0.05)
    assert t.horizon == pytest.approx(0.05)


def test_shared_run_symmetry(shared_run):
    early = shared_run.truncated(0.25)
    assert max(early.g_symmetry) <= 1e-8
    assert max(early.center_velocity) <= 1e-10
    assert sup_norm_bound(shared_run)[0]


@pytest.mark.slow
def test_refinement_1024_vs_2048(shared_run):
    fine_grid = Grid2D(48.0, 2048)
    fine = solve(build_g0(0.5, fine_grid), SolverConfig(T=0.25, grid=fine_grid))
    coarse = shared_run.g_at(shared_run.nearest_index(0.25))
    xx, yy = coarse.grid.mesh()
    mask = (np.abs(coarse.values) > 1e-6) & (np.hypot(xx, yy) < 40.0)
    pts = np.column_stack([xx[mask], yy[mask]])
    err = np.abs(sample(fine.g_at(len(fine.times) - 1), pts) - coarse.values[mask]).max()
    assert err <= 1e-2 * coarse.sup()
