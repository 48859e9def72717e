"""Forced transport of the perturbation g around the loglog vortex.

    g_t + u . grad g = -(u_g(x) - u_g(c)) . grad w_s(x - c),   u = u_s(x - c) + u_g,
    dc/dt = u_g(c),

with c held at the origin in symmetric mode.  Time stepping is semi-Lagrangian:
characteristics are backtraced with the midpoint rule under the half-step
velocity (u_s analytic, u_g extrapolated from the two previous levels), g is
interpolated at the departure point, and the forcing is added by midpoint
quadrature along the backtraced segment.
"""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .field_engine import (Grid2D, ScalarField, VectorField, biot_savart_direct,
                           biot_savart_fft, load_field, sample, save_field)
from .vortex_core import default_profile, ws_gradient

log = logging.getLogger(__name__)

PROBE_THRESHOLD = 1e-16  # cells below this fraction of max|g| are skipped in direct sums
FLUSH = 1e-30  # values below this fraction of max|g| are set to zero


class TransportError(RuntimeError):
    """Characteristic left the grid or the time step violates the CFL bound."""


@dataclass
class SolverConfig:
    T: float = 0.5
    dt: float | None = None
    dt_max: float = 2e-3
    mode: str = "semi_lagrangian"
    picard_iters: int = 6
    grid: Grid2D = field(default_factory=Grid2D)
    symmetric: bool = True
    snapshot_interval: float = 0.01
    include_vortex: bool = True
    include_forcing: bool = True
    workers: int | None = None

    def __post_init__(self):
        if isinstance(self.grid, dict):
            g = self.grid
            self.grid = Grid2D(g["half_width"], g["n"], tuple(g.get("center", (0.0, 0.0))))
        if not 0 < self.T <= 1.0:
            raise ValueError("T must lie in (0, 1]")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.mode not in ("semi_lagrangian", "picard"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.picard_iters < 1:
            raise ValueError("picard_iters must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        return d


@dataclass
class SolverState:
    t: float
    g: ScalarField
    u_g: VectorField
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    g_prev: ScalarField | None = None
    u_g_prev: VectorField | None = None
    steps: int = 0
    diagnostics: dict = field(default_factory=dict)


def initial_state(g0: ScalarField, config: SolverConfig | None = None) -> SolverState:
    workers = config.workers if config else None
    return SolverState(0.0, g0, biot_savart_fft(g0, workers=workers))


def _vp():
    return K.pack_vortex(default_profile())


def _extrapolate(cur, prev):
    if prev is None:
        return cur
    return 1.5 * cur - 0.5 * prev


def _probe_velocity(g: ScalarField, points) -> np.ndarray:
    return biot_savart_direct(g, points, rel_threshold=PROBE_THRESHOLD)


def forcing(x, state: SolverState, symmetric: bool = True, direct_radius: float | None = None):
    """Forcing -(u_g(x) - u_g(c)) . grad w_s(x - c) at points x; zero at x = c.

    Near the centre (within ``direct_radius``, default ten cells) u_g is taken
    from direct summation so that very small |x - c| stays accurate.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    grid = state.g.grid
    c = np.zeros(2) if symmetric else np.asarray(state.center, dtype=float)
    q = pts - c
    rho = np.hypot(q[:, 0], q[:, 1])
    out = np.zeros(pts.shape[0])
    active = (rho > 0) & (rho < default_profile().outer_cutoff)
    if not np.any(active):
        return out[0] if np.ndim(x) == 1 else out
    radius = 10 * grid.h if direct_radius is None else direct_radius
    near = active & (rho < radius)
    far = active & ~near
    ug = np.zeros((pts.shape[0], 2))
    if np.any(near):
        ug[near] = _probe_velocity(state.g, pts[near])
    if np.any(far):
        ug[far] = sample(state.u_g, pts[far])
    uc = np.zeros(2) if symmetric else _probe_velocity(state.g, c[None, :])[0]
    gw = ws_gradient(q[active])
    out[active] = -np.einsum("ij,ij->i", ug[active] - uc, gw)
    return out[0] if np.ndim(x) == 1 else out


def forcing_sup(state: SolverState, symmetric: bool = True) -> float:
    grid = state.g.grid
    x0, y0 = grid.origin
    c = (0.0, 0.0) if symmetric else tuple(state.center)
    uc = np.zeros(2) if symmetric else _probe_velocity(state.g, np.asarray(c)[None, :])[0]
    f = K.forcing_grid(np.ascontiguousarray(state.u_g.values[..., 0]),
                       np.ascontiguousarray(state.u_g.values[..., 1]),
                       x0, y0, grid.h, c[0], c[1], uc[0], uc[1], _vp())
    return float(np.max(np.abs(f)))


def max_speed(state: SolverState, include_vortex: bool = True) -> float:
    s = state.u_g.sup()
    if include_vortex:
        prof = default_profile()
        rho = np.geomspace(1e-6, prof.outer_cutoff, 400)
        s += float(np.max(prof.G(rho)))
    return s


def choose_dt(state: SolverState, config: SolverConfig) -> float:
    """dt = min(dt_max, 0.5 h / max|u|), shrunk so snapshots fall on step boundaries."""
    h = state.g.grid.h
    dt = min(config.dt_max, 0.5 * h / max(max_speed(state, config.include_vortex), 1e-300))
    if config.dt is not None:
        dt = config.dt
    k = max(1, math.ceil(config.snapshot_interval / dt - 1e-9))
    return config.snapshot_interval / k


@dataclass
class _HalfStep:
    xd: np.ndarray
    yd: np.ndarray
    center: np.ndarray
    center_velocity: np.ndarray
    new_center: np.ndarray


def _half_step(state: SolverState, dt: float, config: SolverConfig) -> _HalfStep:
    grid = state.g.grid
    x0, y0 = grid.origin
    ug = _extrapolate(state.u_g.values, None if state.u_g_prev is None else state.u_g_prev.values)
    if config.symmetric:
        c_half = np.zeros(2)
        uc = np.zeros(2)
        c_new = np.zeros(2)
    else:
        c = np.asarray(state.center, dtype=float)
        u_now = _probe_velocity(state.g, c[None, :])[0]
        c_half = c + 0.5 * dt * u_now

        def u_half(p):
            cur = _probe_velocity(state.g, p[None, :])[0]
            if state.g_prev is None:
                return cur
            return 1.5 * cur - 0.5 * _probe_velocity(state.g_prev, p[None, :])[0]

        uc = u_half(c_half)
        c_new = c + dt * uc
    xd, yd, bad = K.departure_points(np.ascontiguousarray(ug[..., 0]), np.ascontiguousarray(ug[..., 1]),
                                     x0, y0, grid.h, dt, c_half[0], c_half[1], _vp(),
                                     config.include_vortex)
    if bad:
        raise TransportError(f"{bad} characteristics left the domain; enlarge the grid")
    return _HalfStep(xd, yd, c_half, uc, c_new)


def _update(g: np.ndarray, hs: _HalfStep, ug_half: np.ndarray, grid: Grid2D, dt: float,
            with_forcing: bool) -> np.ndarray:
    x0, y0 = grid.origin
    out = K.transport_update(g, hs.xd, hs.yd, np.ascontiguousarray(ug_half[..., 0]),
                             np.ascontiguousarray(ug_half[..., 1]), x0, y0, grid.h, dt,
                             hs.center[0], hs.center[1], hs.center_velocity[0],
                             hs.center_velocity[1], _vp(), with_forcing)
    out[np.abs(out) < FLUSH * np.max(np.abs(out))] = 0.0
    return out


def step(state: SolverState, dt: float, config: SolverConfig) -> SolverState:
    """Advance one semi-Lagrangian step of size dt."""
    h = state.g.grid.h
    if dt * max_speed(state, config.include_vortex) / h > 2.0:
        raise TransportError("time step violates dt max|u| / h <= 2")
    hs = _half_step(state, dt, config)
    ug_half = _extrapolate(state.u_g.values, None if state.u_g_prev is None else state.u_g_prev.values)
    with_forcing = config.include_forcing and config.include_vortex
    g_new = ScalarField(state.g.grid, _update(state.g.values, hs, ug_half, state.g.grid, dt, with_forcing),
                        even=state.g.even and config.symmetric)
    u_new = biot_savart_fft(g_new, workers=config.workers)
    return SolverState(state.t + dt, g_new, u_new, hs.new_center, state.g, state.u_g,
                       state.steps + 1, {})


# --------------------------------------------------------------------------
# runs with snapshots
# --------------------------------------------------------------------------
@dataclass
class RunRecord:
    """Snapshots of g every ``snapshot_interval`` plus per-step diagnostics."""

    config: SolverConfig
    grid: Grid2D
    dt: float
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    centers: list = field(default_factory=list)
    g_sup: list = field(default_factory=list)
    forcing_sup: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    g_symmetry: list = field(default_factory=list)
    u_symmetry: list = field(default_factory=list)
    center_velocity: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _ug_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    @property
    def horizon(self) -> float:
        return self.times[-1]

    def g_at(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.snapshots[k], even=self.config.symmetric)

    def ug_at(self, k: int) -> VectorField:
        if k not in self._ug_cache:
            self._ug_cache[k] = biot_savart_fft(self.g_at(k), workers=self.config.workers)
            while len(self._ug_cache) > 6:
                self._ug_cache.popitem(last=False)
        return self._ug_cache[k]

    def nearest_index(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    def truncated(self, T: float) -> "RunRecord":
        """View restricted to snapshots with t <= T."""
        k = int(np.searchsorted(np.asarray(self.times), T + 1e-12, side="right"))
        m = int(np.searchsorted(np.asarray(self.step_times), T + 1e-12, side="right"))
        out = RunRecord(self.config, self.grid, self.dt, self.times[:k], self.snapshots[:k],
                        self.centers[:k], self.g_sup[:m], self.forcing_sup[:m], self.step_times[:m],
                        self.g_symmetry[:k], self.u_symmetry[:k], self.center_velocity[:k],
                        dict(self.meta))
        return out

    def manifest(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "dt": self.dt,
            "times": list(map(float, self.times)),
            "centers": [list(map(float, c)) for c in self.centers],
            "g_symmetry": list(map(float, self.g_symmetry)),
            "u_symmetry": list(map(float, self.u_symmetry)),
            "center_velocity": list(map(float, self.center_velocity)),
            "meta": self.meta,
        }

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        names = []
        for k in range(len(self.times)):
            name = f"g_{k:04d}.bin"
            save_field(self.g_at(k), d / name)
            names.append(name)
        man = self.manifest()
        man["snapshots"] = names
        man["step_diagnostics"] = {"t": list(map(float, self.step_times)),
                                   "g_sup": list(map(float, self.g_sup)),
                                   "forcing_sup": list(map(float, self.forcing_sup))}
        (d / "manifest.json").write_text(json.dumps(man, indent=2))
        return d

    @classmethod
    def load(cls, directory) -> "RunRecord":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        cfg = SolverConfig(**man["config"])
        snaps = [load_field(d / name).values for name in man["snapshots"]]
        sd = man["step_diagnostics"]
        return cls(cfg, cfg.grid, man["dt"], man["times"], snaps,
                   [np.asarray(c) for c in man["centers"]], sd["g_sup"], sd["forcing_sup"],
                   sd["t"], man["g_symmetry"], man["u_symmetry"], man["center_velocity"],
                   man.get("meta", {}))


def _record_snapshot(run: RunRecord, state: SolverState):
    run.times.append(state.t)
    run.snapshots.append(state.g.values)
    run.centers.append(np.array(state.center, dtype=float))
    scale = max(state.g.sup(), 1e-300)
    run.g_symmetry.append(state.g.symmetry_defect() / scale)
    run.u_symmetry.append(state.u_g.symmetry_defect() / max(state.u_g.sup(), 1e-300))
    run.center_velocity.append(float(np.hypot(*_probe_velocity(state.g, np.zeros((1, 2)))[0])))


def solve(g0: ScalarField, config: SolverConfig, progress=None) -> RunRecord:
    """Semi-Lagrangian run over [0, T] with snapshots every snapshot_interval."""
    state = initial_state(g0, config)
    dt = choose_dt(state, config)
    run = RunRecord(config, g0.grid, dt)
    per_snap = int(round(config.snapshot_interval / dt))
    nsteps = int(round(config.T / dt))
    _record_snapshot(run, state)
    for k in range(nsteps):
        run.step_times.append(state.t)
        run.g_sup.append(state.g.sup())
        run.forcing_sup.append(forcing_sup(state, config.symmetric)
                               if config.include_forcing and config.include_vortex else 0.0)
        state = step(state, dt, config)
        state.t = (k + 1) * dt
        if (k + 1) % per_snap == 0:
            _record_snapshot(run, state)
            if progress:
                progress(state.t)
    run.step_times.append(state.t)
    run.g_sup.append(state.g.sup())
    run.forcing_sup.append(forcing_sup(state, config.symmetric)
                           if config.include_forcing and config.include_vortex else 0.0)
    log.info("run finished: %d steps of dt=%.3g", nsteps, dt)
    return run


def sup_norm_bound(run: RunRecord, slack: float = 0.02) -> tuple:
    """Check ||g(t)|| <= ||g0|| + int_0^t ||F|| ds + slack * ||g0|| at every step."""
    t = np.asarray(run.step_times)
    f = np.asarray(run.forcing_sup)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))])
    g = np.asarray(run.g_sup)
    bound = g[0] + integral + slack * g[0]
    return bool(np.all(g <= bound)), float(np.max(g - bound))


# --------------------------------------------------------------------------
# Picard iteration
# --------------------------------------------------------------------------
@dataclass
class PicardResult:
    times: np.ndarray
    gap_history: np.ndarray          # [step, n] = ||g^(n+1)(t) - g^(n)(t)||_inf
    iterates: list                   # final-time fields g^(1..N)
    reference: ScalarField           # semi-Lagrangian solution at T
    g0_sup: float

    def gaps(self, T: float | None = None) -> np.ndarray:
        """d_n = sup over t <= T of ||g^(n+1) - g^(n)||_inf."""
        if T is None:
            return self.gap_history.max(axis=0)
        k = int(np.searchsorted(self.times, T + 1e-12, side="right"))
        return self.gap_history[:k].max(axis=0)

    def ratios(self, T: float | None = None) -> np.ndarray:
        d = self.gaps(T)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(d[:-1] > 0, d[1:] / d[:-1], 0.0)

    def contracting(self, T: float | None = None, factor: float = 0.9) -> bool:
        return bool(np.all(self.ratios(T) <= factor))

    @property
    def warning(self) -> bool:
        """Gaps fail to decrease over the full horizon."""
        return not self.contracting(None, 1.0)

    def limit_error(self) -> float:
        """||g^(N)(T) - g_SL(T)||_inf relative to ||g0||_inf."""
        if not self.iterates:
            return 0.0
        return float(np.max(np.abs(self.iterates[-1].values - self.reference.values))
                     / max(self.g0_sup, 1e-300))

    def find_T0(self, candidates=(0.25, 0.2, 0.15, 0.1, 0.05), factor: float = 0.9):
        for T in sorted(candidates, reverse=True):
            if T <= self.times[-1] + 1e-12 and self.contracting(T, factor):
                return T
        return None


def picard_solve(g0: ScalarField, T: float, iters: int, config: SolverConfig | None = None) -> PicardResult:
    """Iterates g^(n+1)_t + u . grad g^(n+1) = -u_{g^(n)} . grad w_s, g^(0) = g0.

    The transport velocity u is that of a reference semi-Lagrangian run
    advanced in lockstep, so every iterate shares its departure points.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    config = config or SolverConfig(T=T, grid=g0.grid)
    grid = g0.grid
    state = initial_state(g0, config)
    dt = choose_dt(state, config)
    nsteps = int(round(T / dt))
    u0 = state.u_g.values
    gs = [g0.values.copy() for _ in range(iters)]             # g^(1..N)
    us = [u0.copy() for _ in range(iters)]                    # velocity of g^(0..N-1)
    us_prev = [None] * iters
    times = [0.0]
    gaps = [np.zeros(iters)]
    with_forcing = config.include_forcing and config.include_vortex
    for k in range(nsteps):
        hs = _half_step(state, dt, config)
        ug_ref = _extrapolate(state.u_g.values, None if state.u_g_prev is None else state.u_g_prev.values)
        new = []
        for m in range(iters):
            # forcing of g^(m+1) uses the velocity of g^(m); g^(0) is frozen
            uh = us[m] if m == 0 else _extrapolate(us[m], us_prev[m])
            new.append(_update(gs[m], hs, uh, grid, dt, with_forcing))
        g_ref = _update(state.g.values, hs, ug_ref, grid, dt, with_forcing)
        gs = new
        for m in range(1, iters):
            us_prev[m] = us[m]
            us[m] = biot_savart_fft(ScalarField(grid, gs[m - 1]), workers=config.workers).values
        ref_field = ScalarField(grid, g_ref, even=g0.even)
        state = SolverState((k + 1) * dt, ref_field, biot_savart_fft(ref_field, workers=config.workers),
                            hs.new_center, state.g, state.u_g, k + 1)
        times.append(state.t)
        row = [np.max(np.abs(gs[0] - g0.values))]
        row += [np.max(np.abs(gs[m + 1] - gs[m])) for m in range(iters - 1)]
        gaps.append(np.asarray(row))
    return PicardResult(np.asarray(times), np.vstack(gaps),
                        [ScalarField(grid, a) for a in gs], state.g, g0.sup())


# --------------------------------------------------------------------------
# conservation series
# --------------------------------------------------------------------------
@dataclass
class ConsistencyReport:
    times: np.ndarray
    series: np.ndarray
    a: float
    b: float
    ratios: np.ndarray
    times_increasing: bool
    tolerance: float = 1.05

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0

    @property
    def passed(self) -> bool:
        return self.times_increasing and math.isfinite(self.b) and self.max_ratio <= self.tolerance

    def violating_time(self):
        bad = np.nonzero(self.ratios > self.tolerance)[0]
        return float(self.times[bad[0]]) if bad.size else None


def affine_envelope(times, series, tolerance: float = 1.05) -> ConsistencyReport:
    t = np.asarray(times, dtype=float)
    s = np.asarray(series, dtype=float)
    increasing = bool(np.all(np.diff(t) > 0))
    if np.all(s == 0):
        return ConsistencyReport(t, s, 0.0, 0.0, np.zeros_like(s), increasing, tolerance)
    A = np.column_stack([np.ones_like(t), t])
    (a, b), *_ = np.linalg.lstsq(A, s, rcond=None)
    env = a + b * t
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(env > 0, s / env, np.inf)
    return ConsistencyReport(t, s, float(a), float(b), ratios, increasing, tolerance)


def consistency_check(run: RunRecord, alpha: float = 0.5, pairs=None, T: float | None = None,
                      tolerance: float = 1.05) -> ConsistencyReport:
    """Estimated ||g(., t)||_{C^phi_alpha} per snapshot and its affine envelope."""
    from .moc_norms import ModulusKind, moc_norm, stratified_pairs

    kind = ModulusKind("phi_alpha", alpha)
    pairs = pairs if pairs is not None else stratified_pairs(run.grid, seed=0)
    times, series = [], []
    for k, t in enumerate(run.times):
        if T is not None and t > T + 1e-12:
            continue
        g = run.g_at(k)
        times.append(t)
        series.append(moc_norm(g, pairs, kind))
    return affine_envelope(times, series, tolerance)
