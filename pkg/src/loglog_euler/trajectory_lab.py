"""Particle trajectories near the vortex centre and the statistics built on them.

Near the origin the grid cannot resolve radii like 1e-8, so the perturbation
velocity at a probe is computed by direct Biot-Savart summation of each stored
snapshot of g and interpolated in time with cubic Hermite polynomials
(derivatives from central differences of the snapshot values).  Along a
trajectory that stays inside B(0, e^-2), g itself follows from

    g(phi_r(t), t) = int_0^t u_g(phi_r(s), s) . e_r / (|phi_r(s)| log(1/|phi_r(s)|)) ds,

which needs no grid resolution at radius r.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import _kernels as K
from .field_engine import active_cells, sample
from .transport_solver import PROBE_THRESHOLD, RunRecord
from .vortex_core import default_profile, us_gradient, us_velocity

INV_E2 = math.exp(-2.0)
COLLAPSE_RADIUS = 1e-14
KEY_WINDOW = 1e-2  # largest r treated as "small" by the short-time diagnostics


class HorizonError(ValueError):
    """Requested t_r exceeds the horizon covered by the run."""


class RegionError(ValueError):
    """Trajectory left the region where the trajectory formula applies."""


def breakdown_parameters(beta: float):
    """alpha = (5 - beta)/4 and epsilon = (beta - 1)/4."""
    if not 1.0 < beta < 2.0:
        raise ValueError("beta must lie in (1, 2)")
    return (5.0 - beta) / 4.0, (beta - 1.0) / 4.0


def t_r(r: float, alpha: float, epsilon: float) -> float:
    return math.log(1.0 / r) ** (-(1.0 - alpha + epsilon))


def minimal_feasible_radius(horizon: float, alpha: float, epsilon: float) -> float:
    """Largest r whose t_r fits in the horizon."""
    return math.exp(-horizon ** (-1.0 / (1.0 - alpha + epsilon)))


# --------------------------------------------------------------------------
# perturbation velocity along probes
# --------------------------------------------------------------------------
class ProbeVelocity:
    """u_g(x, t) from a run: direct sums near the origin, grid sampling elsewhere,
    cubic Hermite interpolation between snapshots."""

    def __init__(self, run: RunRecord, direct_radius: float | None = None, zero: bool = False):
        self.run = run
        self.times = np.asarray(run.times, dtype=float)
        self.direct_radius = 10 * run.grid.h if direct_radius is None else direct_radius
        self.zero = zero or all(not np.any(s) for s in run.snapshots)
        self._cells = {}
        self.evaluations = 0

    def _snapshot_value(self, k: int, x: np.ndarray) -> np.ndarray:
        if math.hypot(x[0], x[1]) < self.direct_radius:
            if k not in self._cells:
                self._cells[k] = active_cells(self.run.g_at(k), PROBE_THRESHOLD)
            sx, sy, w = self._cells[k]
            if w.size == 0:
                return np.zeros(2)
            self.evaluations += 1
            return K.direct_sum(np.array([x[0]]), np.array([x[1]]), sx, sy, w,
                                self.run.grid.h, K.MOMENTS)[0]
        return sample(self.run.ug_at(k), x)

    def __call__(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.zero:
            return np.zeros(2)
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise HorizonError(f"t = {t} outside the stored snapshots [0, {ts[-1]}]")
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 1))
        if abs(t - ts[k]) < 1e-13:
            return self._snapshot_value(k, x)
        if k == ts.size - 1:
            k -= 1
        if ts.size < 2:
            return self._snapshot_value(0, x)
        lo, hi = max(k - 1, 0), min(k + 2, ts.size - 1)
        f = {j: self._snapshot_value(j, x) for j in range(lo, hi + 1)}
        h = ts[k + 1] - ts[k]

        def slope(j):
            a, b = max(j - 1, lo), min(j + 1, hi)
            return (f[b] - f[a]) / (ts[b] - ts[a])

        s = (t - ts[k]) / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * f[k] + h10 * h * slope(k) + h01 * f[k + 1] + h11 * h * slope(k + 1)


def _total_velocity(x, t, probe: ProbeVelocity):
    return us_velocity(x) + probe(x, t)


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------
@dataclass
class TrajectoryRecord:
    r: float
    t: np.ndarray
    position: np.ndarray
    u_g: np.ndarray
    t_r: float
    status: str = "ok"
    forcing: np.ndarray = field(default=None)
    g: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.forcing is None:
            self.forcing = _integrand(self.position, self.u_g)

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.position[:, 0], self.position[:, 1])

    def rows(self):
        g = self.g if self.g is not None else np.full(self.t.size, np.nan)
        for k in range(self.t.size):
            yield (self.r, self.t[k], self.position[k, 0], self.position[k, 1], self.radius[k],
                   self.u_g[k, 0], self.u_g[k, 1], self.forcing[k], g[k])


CSV_HEADER = "r,t,x1,x2,radius,ug1,ug2,forcing,g"


def _integrand(pos, ug):
    rho = np.hypot(pos[:, 0], pos[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.einsum("ij,ij->i", ug, pos) / (rho * rho * np.log(1.0 / rho))
    out[(rho <= 0) | (rho >= 1.0)] = np.nan
    return out


def trace(r: float, T: float, run: RunRecord, dt: float | None = None, start=None,
          probe: ProbeVelocity | None = None) -> TrajectoryRecord:
    """Classical RK4 for d phi/dt = u_s(phi) + u_g(phi, t) from (0, r) (or ``start``)."""
    if start is None and not 0 < r < INV_E2:
        raise ValueError("r must lie in (0, e^-2)")
    if T > run.horizon + 1e-12:
        raise HorizonError(f"T = {T} exceeds the run horizon {run.horizon}")
    probe = probe or ProbeVelocity(run)
    if dt is None:
        dt = min(run.dt, T / 200.0)
    nsteps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / nsteps
    x = np.array([0.0, r]) if start is None else np.asarray(start, dtype=float).copy()
    ts = [0.0]
    xs = [x.copy()]
    ug0 = probe(x, 0.0)
    us = [ug0]
    status = "ok"
    k1g = ug0
    for k in range(nsteps):
        t = k * dt
        k1 = us_velocity(x) + k1g
        x2 = x + 0.5 * dt * k1
        k2 = _total_velocity(x2, t + 0.5 * dt, probe)
        x3 = x + 0.5 * dt * k2
        k3 = _total_velocity(x3, t + 0.5 * dt, probe)
        x4 = x + dt * k3
        k4 = _total_velocity(x4, t + dt, probe)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if math.hypot(*x) < COLLAPSE_RADIUS:
            status = "collapsed"
            break
        k1g = probe(x, (k + 1) * dt)
        ts.append((k + 1) * dt)
        xs.append(x.copy())
        us.append(k1g)
    return TrajectoryRecord(r, np.asarray(ts), np.asarray(xs), np.asarray(us), T, status)


def g_along_trajectory(record: TrajectoryRecord, run: RunRecord | None = None) -> np.ndarray:
    """Accumulated forcing integral (Simpson) = g(phi_r(t), t) for g_0 = 0 at phi_r(0)."""
    if record.r >= 20:
        raise ValueError("the formula assumes g_0 vanishes at the starting point")
    if np.any(record.radius >= INV_E2):
        raise RegionError("trajectory leaves B(0, e^-2)")
    f = record.forcing
    if record.t.size < 2:
        g = np.zeros(record.t.size)
    elif record.t.size == 2:
        g = np.array([0.0, 0.5 * (f[0] + f[1]) * (record.t[1] - record.t[0])])
    else:
        g = cumulative_simpson(f, x=record.t, initial=0.0)
    record.g = g
    return g


# --------------------------------------------------------------------------
# short-time diagnostics
# --------------------------------------------------------------------------
@dataclass
class BreakdownPoint:
    r: float
    alpha: float
    epsilon: float
    beta: float
    t_r: float
    statistic: float
    conservation_statistic: float
    g_value: float
    final_radius: float
    status: str = "ok"

    def to_dict(self):
        return asdict(self)


def breakdown_statistic(r: float, beta: float, run: RunRecord, record: TrajectoryRecord | None = None,
                        probe: ProbeVelocity | None = None) -> tuple:
    """Statistic (log 1/|phi_r(t_r)|)^beta |g(phi_r(t_r), t_r)|; returns (point, record)."""
    alpha, eps = breakdown_parameters(beta)
    tr = t_r(r, alpha, eps)
    if tr > run.horizon + 1e-12:
        rmin = minimal_feasible_radius(run.horizon, alpha, eps)
        raise HorizonError(f"t_r = {tr:.4g} exceeds the horizon {run.horizon:.4g}; "
                           f"use r <= {rmin:.3g}")
    if record is None or abs(record.t_r - tr) > 1e-12:
        record = trace(r, tr, run, probe=probe)
    g = g_along_trajectory(record, run)
    rho = float(record.radius[-1])
    L = math.log(1.0 / rho)
    gv = float(g[-1])
    point = BreakdownPoint(r, alpha, eps, beta, tr, L**beta * abs(gv), L**alpha * abs(gv),
                           gv, rho, record.status)
    return point, record


def slope_vs_loglog(points) -> float:
    """Least-squares slope of log(statistic) against log log(1/r)."""
    x = np.log(np.log(1.0 / np.array([p.r for p in points])))
    y = np.log(np.array([p.statistic for p in points]))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class KeyLemmaResult:
    r: float
    ratio: float
    t_r: float
    in_window: bool


def key_lemma_deviation(r: float, run: RunRecord, alpha: float, epsilon: float,
                        record: TrajectoryRecord | None = None, probe: ProbeVelocity | None = None,
                        window: float = KEY_WINDOW) -> KeyLemmaResult:
    """max_{t <= t_r} |u_g(phi_r(t), t) - u_g((0, r), 0)| / r."""
    tr = t_r(r, alpha, epsilon)
    in_window = r <= window and tr <= run.horizon + 1e-12
    horizon = min(tr, run.horizon)
    if record is None or record.t_r + 1e-12 < horizon:
        record = trace(r, horizon, run, probe=probe)
    mask = record.t <= horizon + 1e-12
    ref = record.u_g[0]
    dev = np.hypot(*(record.u_g[mask] - ref).T).max() / r
    return KeyLemmaResult(r, float(dev), tr, bool(in_window))


def stability_check(r: float, run: RunRecord, alpha: float, epsilon: float,
                    record: TrajectoryRecord | None = None, probe: ProbeVelocity | None = None):
    """(max |phi_r(t) - (0, r)|/r, max |phi_r/|phi_r| - (0, 1)|) over t <= t_r."""
    horizon = min(t_r(r, alpha, epsilon), run.horizon)
    if record is None or record.t_r + 1e-12 < horizon:
        record = trace(r, horizon, run, probe=probe)
    mask = record.t <= horizon + 1e-12
    pos = record.position[mask]
    e2 = np.array([0.0, r])
    drift = np.hypot(*(pos - e2).T).max() / r
    unit = pos / record.radius[mask][:, None]
    ddrift = np.hypot(*(unit - [0.0, 1.0]).T).max()
    return float(drift), float(ddrift)


def sandwich_exponent(record: TrajectoryRecord, alpha: float) -> np.ndarray:
    """|log(|phi_r(t)|/r)| / (t (log 1/r)^(1-alpha)) for t > 0: the M each sample needs."""
    L = math.log(1.0 / record.r)
    t = record.t[1:]
    return np.abs(np.log(record.radius[1:] / record.r)) / (t * L ** (1.0 - alpha))


def fit_sandwich_M(records, alpha: float, safety: float = 1.01) -> float:
    return safety * max(float(sandwich_exponent(rec, alpha).max()) for rec in records)


def sandwich_holds(record: TrajectoryRecord, M: float, alpha: float) -> bool:
    L = math.log(1.0 / record.r)
    t = record.t[1:]
    rho = record.radius[1:]
    lo = record.r * np.exp(-M * t * L ** (1 - alpha))
    hi = record.r * np.exp(M * t * L ** (1 - alpha))
    return bool(np.all((lo < rho) & (rho < hi)))


# --------------------------------------------------------------------------
# separation of nearby particles
# --------------------------------------------------------------------------
def loglip_constant(run: RunRecord, pairs, times=None, probe: ProbeVelocity | None = None) -> float:
    """Sampled N with |u(a,t) - u(b,t)| <= N |a-b| log(1/|a-b|)."""
    probe = probe or ProbeVelocity(run)
    times = run.times if times is None else times
    best = 0.0
    for t in times:
        for a, b in zip(pairs.x, pairs.y):
            d = math.hypot(*(a - b))
            if not 0 < d < math.exp(-1.0):
                continue
            du = _total_velocity(a, t, probe) - _total_velocity(b, t, probe)
            best = max(best, math.hypot(*du) / (d * math.log(1.0 / d)))
    return best


@dataclass
class SeparationResult:
    t: np.ndarray
    exponent: np.ndarray
    N: float | None

    def within_band(self, N: float | None = None) -> bool:
        N = self.N if N is None else N
        t = self.t[1:]
        e = self.exponent[1:]
        return bool(np.all((e >= np.exp(-N * t) * (1 - 1e-12)) & (e <= np.exp(N * t) * (1 + 1e-12))))


def separation_exponent(x, y, run: RunRecord, T: float, N: float | None = None,
                        probe: ProbeVelocity | None = None, dt: float | None = None) -> SeparationResult:
    """e(t) with |Phi(x,t) - Phi(y,t)| = |x - y|^e(t)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d0 = math.hypot(*(x - y))
    if d0 == 0:
        raise ValueError("points must be distinct")
    if d0 >= math.exp(-1.0):
        raise ValueError("separation must be below e^-1")
    probe = probe or ProbeVelocity(run)
    a = trace(0.0, T, run, dt=dt, start=x, probe=probe)
    b = trace(0.0, T, run, dt=dt, start=y, probe=probe)
    d = np.hypot(*(a.position - b.position).T)
    return SeparationResult(a.t, np.log(d) / math.log(d0), N)


# --------------------------------------------------------------------------
# velocity gradient
# --------------------------------------------------------------------------
@dataclass
class GradientDiagnostic:
    x: tuple
    t: float
    grad_norm: float
    bound: float

    @property
    def normalized(self) -> float:
        return self.grad_norm / self.bound


def grad_u_diagnostic(x, run: RunRecord, t: float, alpha: float, M: float = 1.0,
                      probe: ProbeVelocity | None = None) -> GradientDiagnostic:
    """|grad u(x, t)| (analytic u_s part plus centred differences of u_g) against
    loglog(1/|x|) + (log 1/|x|)^(1-alpha) t + exp(M t (log 1/|x|)^(1-alpha))."""
    x = np.asarray(x, dtype=float)
    rho = math.hypot(*x)
    probe = probe or ProbeVelocity(run)
    step = 1e-3 * rho
    J = us_gradient(x).copy()
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        J[:, j] += (probe(x + e, t) - probe(x - e, t)) / (2 * step)
    L = math.log(1.0 / rho)
    bound = math.log(L) + L ** (1 - alpha) * t + math.exp(M * t * L ** (1 - alpha))
    return GradientDiagnostic(tuple(x), t, float(np.linalg.norm(J, 2)), bound)


def axis_profile_ratio(x):
    """|grad u_s(x)| / loglog(1/|x|)."""
    x = np.asarray(x, dtype=float)
    rho = math.hypot(*x)
    return float(np.linalg.norm(us_gradient(x), 2) / math.log(math.log(1.0 / rho)))


__all__ = [
    "BreakdownPoint", "GradientDiagnostic", "HorizonError", "KeyLemmaResult", "ProbeVelocity",
    "RegionError", "SeparationResult", "TrajectoryRecord", "breakdown_parameters",
    "breakdown_statistic", "default_profile", "fit_sandwich_M", "g_along_trajectory",
    "grad_u_diagnostic", "key_lemma_deviation", "loglip_constant", "minimal_feasible_radius",
    "sandwich_exponent", "sandwich_holds", "separation_exponent", "slope_vs_loglog",
    "stability_check", "t_r", "trace",
]
