"""Experiment orchestration: configs, the two headline experiments and the oracle suite."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import vortex_core as vc
from .field_engine import (Grid2D, GreenTable, ScalarField, biot_savart_direct, biot_savart_fft,
                           divergence, green_table, sample, velocity_gradient)
from .initial_data import (HyperbolicityError, axis_velocity_profile, build_g0, default_radii,
                           fit_hyperbolicity)
from .moc_norms import ModulusKind, PairSample, moc_seminorm, stratified_pairs
from .trajectory_lab import (CSV_HEADER, HorizonError, ProbeVelocity, breakdown_parameters,
                             breakdown_statistic, fit_sandwich_M, g_along_trajectory,
                             key_lemma_deviation, loglip_constant, sandwich_holds,
                             separation_exponent, slope_vs_loglog, stability_check, t_r, trace)
from .transport_solver import RunRecord, SolverConfig, consistency_check, solve

SCENARIOS = ("conservation", "breakdown", "diagnostics", "oracle-suite")
OUTPUT_ENV = "LOGLOG_OUTPUT_DIR"
DEFAULT_R_LIST = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
QUICK_R_LIST = (1e-3, 1e-4, 1e-5)
SLOPE_TOLERANCE = 0.3  # relative, on the (beta - 1)/2 growth exponent

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "conservation"
    half_width: float = 48.0
    n: int = 1024
    epsilon: float = 0.5
    alpha: float = 0.5
    beta: float = 1.5
    r_list: tuple = DEFAULT_R_LIST
    T: float | None = None
    dt: float | None = None
    snapshot_interval: float = 0.01
    output_dir: str = "results"
    seed: int = 0
    amplitude: float = 1.0
    quick: bool = False

    def __post_init__(self):
        self.r_list = tuple(float(r) for r in self.r_list)
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 1.0 < self.beta < 2.0:
            raise ConfigError("beta must lie in (1, 2)")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.n < 16 or self.n & (self.n - 1) or self.half_width <= 0:
            raise ConfigError("grid needs n a power of two >= 16 and a positive half width")
        if any(not 0.0 < r < math.exp(-2.0) for r in self.r_list):
            raise ConfigError("every r must lie in (0, e^-2)")
        if self.T is not None and not 0.0 < self.T <= 1.0:
            raise ConfigError("T must lie in (0, 1]")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.half_width, self.n)

    @property
    def horizon(self) -> float:
        if self.T is not None:
            return self.T
        if self.scenario == "breakdown":
            return self.breakdown_horizon()
        return 0.1 if self.quick else 0.5

    def breakdown_horizon(self) -> float:
        """Smallest snapshot-aligned horizon covering t_r for every r in the list."""
        a, e = breakdown_parameters(self.beta)
        need = max(t_r(r, a, e) for r in self.r_list)
        return round(math.ceil(need / self.snapshot_interval - 1e-9) * self.snapshot_interval, 12)

    def with_quick(self) -> "ExperimentConfig":
        return replace(self, n=256, T=None if self.scenario == "breakdown" else 0.1,
                       r_list=QUICK_R_LIST, quick=True)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["r_list"] = list(self.r_list)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def solver_config(self, workers=None) -> SolverConfig:
        return SolverConfig(T=self.horizon, dt=self.dt, grid=self.grid,
                            snapshot_interval=self.snapshot_interval, workers=workers)

    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


@dataclass
class Report:
    scenario: str
    verdict: str
    exit_code: int
    summary: dict
    manifest: dict
    tables: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        return json.dumps({"scenario": self.scenario, "verdict": self.verdict,
                           "exit_code": self.exit_code, "summary": self.summary,
                           "manifest": self.manifest}, indent=2, sort_keys=True, default=_jsonable)

    def write(self, directory, plot_data: bool = False) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{self.scenario}_report.json").write_text(self.to_json())
        for name, (header, rows) in self.tables.items():
            write_csv(d / f"{name}.csv", header, rows)
            if plot_data:
                write_plot_data(d / f"{name}.dat", rows)
        return d


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: str, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header.split(","))
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_plot_data(path, rows) -> Path:
    """Two-column whitespace file (first two columns) for gnuplot."""
    path = Path(path)
    path.write_text("".join(f"{_fmt(r[0])} {_fmt(r[1])}\n" for r in rows))
    return path


# --------------------------------------------------------------------------
# shared pieces
# --------------------------------------------------------------------------
def initial_field(config: ExperimentConfig) -> ScalarField:
    if config.amplitude == 0:
        return ScalarField(config.grid, np.zeros((config.n, config.n)), even=True)
    return build_g0(config.epsilon, config.grid, amplitude=config.amplitude)


def hyperbolicity(g0: ScalarField):
    """K fit, or None when g0 has no hyperbolic axis profile (e.g. g0 = 0)."""
    if not np.any(g0.values):
        return None
    try:
        return fit_hyperbolicity(axis_velocity_profile(g0, default_radii()))
    except HyperbolicityError:
        return None


def manifest(config: ExperimentConfig, run: RunRecord | None = None, fit=None, **constants) -> dict:
    out = {"config": config.to_dict(), "config_hash": config.config_hash(),
           "K_fit": fit.to_dict() if fit is not None else None,
           "constants": {k: v for k, v in constants.items()}}
    if run is not None:
        out["run"] = {"dt": run.dt, "horizon": run.horizon, "snapshots": len(run.times),
                      "solver": run.config.to_dict(),
                      "max_g_symmetry": float(max(run.g_symmetry, default=0.0)),
                      "max_center_velocity": float(max(run.center_velocity, default=0.0))}
    return out


def make_run(config: ExperimentConfig, g0: ScalarField | None = None, workers=None,
             progress=None) -> RunRecord:
    g0 = g0 if g0 is not None else initial_field(config)
    return solve(g0, config.solver_config(workers), progress)


# --------------------------------------------------------------------------
# conservation
# --------------------------------------------------------------------------
def run_conservation(config: ExperimentConfig, run: RunRecord | None = None, workers=None) -> Report:
    g0 = initial_field(config)
    fit = hyperbolicity(g0)
    run = run if run is not None else make_run(config, g0, workers)
    pairs = stratified_pairs(run.grid, seed=config.seed)
    rep = consistency_check(run, config.alpha, pairs, config.horizon)
    env = rep.a + rep.b * rep.times
    rows = [(t, s, e, q) for t, s, e, q in zip(rep.times, rep.series, env, rep.ratios)]
    summary = {"alpha": config.alpha, "a": rep.a, "b": rep.b, "max_ratio": rep.max_ratio,
               "tolerance": rep.tolerance, "violating_time": rep.violating_time()}
    ok = rep.passed
    return Report("conservation", "PASS" if ok else "FAIL", EXIT_PASS if ok else EXIT_FAIL, summary,
                  manifest(config, run, fit, envelope_a=rep.a, envelope_b=rep.b),
                  {"conservation_series": ("t,norm,envelope,ratio", rows)})


# --------------------------------------------------------------------------
# breakdown
# --------------------------------------------------------------------------
def run_breakdown(config: ExperimentConfig, run: RunRecord | None = None, workers=None) -> Report:
    g0 = initial_field(config)
    fit = hyperbolicity(g0)
    run = run if run is not None else make_run(config, g0, workers)
    probe = ProbeVelocity(run)
    points, records, rows, traj_rows = [], [], [], []
    for r in config.r_list:
        p, rec = breakdown_statistic(r, config.beta, run, probe=probe)
        kl = key_lemma_deviation(r, run, p.alpha, p.epsilon, record=rec)
        drift, ddrift = stability_check(r, run, p.alpha, p.epsilon, record=rec)
        points.append(p)
        records.append(rec)
        rows.append((r, p.t_r, p.statistic, p.conservation_statistic, p.g_value, p.final_radius,
                     kl.ratio, drift, ddrift, rec.status))
        traj_rows.extend(rec.rows())
    stats = np.array([p.statistic for p in points])
    cons = np.array([p.conservation_statistic for p in points])
    degenerate = not np.any(stats)
    monotone = bool(np.all(np.diff(stats) > 0))
    offending = None if monotone else float(config.r_list[int(np.argmin(np.diff(stats) > 0)) + 1])
    target = (config.beta - 1.0) / 2.0
    slope = float("nan") if degenerate else slope_vs_loglog(points)
    slope_ok = abs(slope - target) <= SLOPE_TOLERANCE * target
    if degenerate or np.any(cons == 0):
        cons_slope = 0.0
    else:
        x = np.log(np.log(1.0 / np.asarray(config.r_list)))
        cons_slope = float(np.polyfit(x, np.log(cons), 1)[0])
    bounded = cons_slope <= 0.0
    M = fit_sandwich_M(records[: max(1, len(records) // 2)], 0.5) if not degenerate else 0.0
    sandwich = all(sandwich_holds(rec, M, 0.5) for rec in records) if not degenerate else True
    K = fit.K if fit is not None else None
    summary = {"beta": config.beta, "alpha": points[0].alpha, "epsilon": points[0].epsilon,
               "horizon": run.horizon, "statistics": stats.tolist(),
               "monotone": monotone, "offending_r": offending, "slope": slope,
               "target_slope": target, "slope_within_tolerance": bool(slope_ok),
               "conservation_slope": cons_slope, "conservation_bounded": bounded,
               "key_lemma": [row[6] for row in rows],
               "key_lemma_final_over_K": (rows[-1][6] / K) if K else None,
               "stability": [(row[7], row[8]) for row in rows],
               "sandwich_M": M, "sandwich_holds": sandwich}
    ok = not degenerate and monotone and slope_ok and bounded
    if degenerate:
        verdict = "DEGENERATE"
    else:
        verdict = "PASS" if ok else "FAIL"
    header = ("r,t_r,statistic,conservation_statistic,g,final_radius,key_lemma_ratio,"
              "position_drift,direction_drift,status")
    return Report("breakdown", verdict, EXIT_PASS if ok else EXIT_FAIL, summary,
                  manifest(config, run, fit, sandwich_M=M, slope=slope),
                  {"breakdown_points": (header, rows), "trajectories": (CSV_HEADER, traj_rows)})


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------
def run_diagnostics(config: ExperimentConfig, run: RunRecord | None = None, workers=None,
                    n_pairs: int = 20, separation_T: float = 0.1) -> Report:
    """Hyperbolicity fit, log-Lipschitz constant N and particle separation exponents."""
    from .trajectory_lab import grad_u_diagnostic

    g0 = initial_field(config)
    fit = hyperbolicity(g0)
    run = run if run is not None else make_run(config, g0, workers)
    probe = ProbeVelocity(run)
    rng = np.random.default_rng(config.seed)
    xs = rng.uniform(-0.3, 0.3, (n_pairs, 2))
    th = rng.uniform(0, 2 * np.pi, n_pairs)
    ys = xs + 1e-4 * np.column_stack([np.cos(th), np.sin(th)])
    T = min(separation_T, run.horizon)
    probe_pairs = _loglip_pairs(rng)
    N = loglip_constant(run, probe_pairs, run.times[:: max(1, len(run.times) // 5)], probe)
    sep_rows, inside = [], True
    for x, y in zip(xs, ys):
        res = separation_exponent(x, y, run, T, N=N, probe=probe)
        inside &= res.within_band()
        sep_rows.append((float(res.exponent.min()), float(res.exponent.max()), x[0], x[1]))
    t_grad = min(0.1, run.horizon)
    grad_rows = [(rho, d.grad_norm, d.normalized) for rho in (1e-3, 1e-4, 1e-5)
                 for d in [grad_u_diagnostic((0.0, rho), run, t_grad, config.alpha, probe=probe)]]
    summary = {"N": N, "separation_within_band": bool(inside), "separation_T": T,
               "grad_normalized_max": max(r[2] for r in grad_rows)}
    return Report("diagnostics", "PASS" if inside else "FAIL", EXIT_PASS if inside else EXIT_FAIL,
                  summary, manifest(config, run, fit, N=N),
                  {"separation": ("exponent_min,exponent_max,x1,x2", sep_rows),
                   "grad_u": ("radius,grad_norm,normalized", grad_rows)})


def _loglip_pairs(rng, n: int = 60) -> PairSample:
    """Pairs near the origin with log-uniform separations in [1e-6, 0.1]."""
    x = rng.uniform(-0.3, 0.3, (n, 2))
    d = 10.0 ** rng.uniform(-6, -1, n)
    th = rng.uniform(0, 2 * np.pi, n)
    return PairSample(x, x + d[:, None] * np.column_stack([np.cos(th), np.sin(th)]))


# --------------------------------------------------------------------------
# oracle suite
# --------------------------------------------------------------------------
@dataclass
class OracleResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.error) and self.error <= self.tolerance)


def _oracle_G() -> float:
    prof = vc.default_profile()
    err = 0.0
    for rho in (1e-9, 1e-6, 1e-3, 0.05, 0.12, 0.2, 0.3, 0.5):
        ref = quad(lambda s: s * prof.ws(s), 0.0, rho, points=[x for x in (prof.inner_cutoff,
                   prof.outer_cutoff) if x < rho] or None, epsabs=0, epsrel=1e-13, limit=400)[0] / rho
        err = max(err, abs(prof.G(rho) - ref) / abs(ref))
    return err


def _oracle_fd_gradient() -> float:
    err = 0.0
    for x in ([0.0, 1e-3], [2e-2, -5e-3], [0.2, 0.1], [-0.3, 0.25]):
        x = np.asarray(x)
        h = 1e-5 * np.hypot(*x)
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            J[:, j] = (vc.us_velocity(x + e) - vc.us_velocity(x - e)) / (2 * h)
        A = vc.us_gradient(x)
        err = max(err, np.abs(A - J).max() / np.abs(A).max())
    return err


def _oracle_pair_norms(seed: int) -> float:
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.3, 0.3, (25, 2))
    grid = Grid2D(1.0, 64)
    xx, yy = grid.mesh()
    field_ = ScalarField(grid, np.sin(3 * xx) * np.cos(2 * yy) + np.hypot(xx, yy))
    pairs = PairSample.all_pairs(pts)
    kind = ModulusKind("phi_alpha", 0.5)
    fast = moc_seminorm(field_, pairs, kind)
    f = sample(field_, pts)
    brute = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = math.hypot(*(pts[i] - pts[j]))
            if d < kind.cap:
                brute = max(brute, abs(f[i] - f[j]) / kind(d))
    return abs(fast - brute) / max(brute, 1e-300)


def _oracle_biot_savart(g0: ScalarField, table: GreenTable | None, seed: int) -> float:
    rng = np.random.default_rng(seed)
    u = biot_savart_fft(g0, table=table)
    idx = rng.integers(0, g0.grid.n, (20, 2))
    pts = np.array([g0.grid.node(i, j) for i, j in idx])
    ref = biot_savart_direct(g0, pts)
    got = u.values[idx[:, 0], idx[:, 1]]
    return float(np.abs(got - ref).max() / np.abs(u.values).max())


def rankine_vorticity(grid: Grid2D, radius: float = 1.0) -> ScalarField:
    """Exact cell averages of the indicator of the disk |x| < radius."""
    x1, x2 = grid.axes()
    h = grid.h
    xx, yy = grid.mesh()
    rr = np.hypot(xx, yy)
    v = (rr < radius).astype(float)

    def chord(x, b0, b1):
        if abs(x) >= radius:
            return 0.0
        s = math.sqrt(radius * radius - x * x)
        return max(0.0, min(b1, s) - max(b0, -s))

    for i, j in zip(*np.nonzero(np.abs(rr - radius) < h)):
        a0, a1 = x1[i] - h / 2, x1[i] + h / 2
        b0, b1 = x2[j] - h / 2, x2[j] + h / 2
        cuts = [s * math.sqrt(max(0.0, radius**2 - b * b)) for b in (b0, b1) for s in (-1, 1)]
        cuts = [c for c in cuts if a0 < c < a1]
        v[i, j] = quad(chord, a0, a1, args=(b0, b1), points=cuts or None, epsabs=1e-15,
                       limit=200)[0] / h**2
    return ScalarField(grid, v, even=True)


def rankine_velocity(points, radius: float = 1.0) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r2 = np.sum(pts**2, axis=1)
    factor = np.where(r2 < radius**2, 0.5, 0.5 * radius**2 / np.maximum(r2, 1e-300))
    return np.column_stack([-pts[:, 1], pts[:, 0]]) * factor[:, None]


def _oracle_rankine(n: int) -> float:
    """Rankine error in units of 2h, or the divergence defect in units of 1e-8, whichever is worse."""
    grid = Grid2D(4.0, n)
    w = rankine_vorticity(grid)
    u = biot_savart_fft(w)
    err = 0.0
    for rho in (0.5, 2.0):
        th = np.linspace(0.1, 6.0, 8)
        pts = rho * np.column_stack([np.cos(th), np.sin(th)])
        ref = rankine_velocity(pts)
        got = biot_savart_direct(w, pts)
        err = max(err, np.abs(got - ref).max() / np.abs(ref).max())
    # interior nodes only: the two outer rows use one-sided difference closures
    div = np.abs(divergence(u))[2:-2, 2:-2].max() / np.abs(velocity_gradient(u)).max()
    return max(err / (2 * grid.h), div / 1e-8)


def _oracle_rk4(run: RunRecord, quick: bool) -> float:
    r = 1e-4
    T = min(run.horizon, 0.1 if quick else 0.5)
    probe = ProbeVelocity(run)
    a = trace(r, T, run, probe=probe)
    b = trace(r, T, run, dt=a.t[1] / 2, probe=probe)
    return float(np.hypot(*(a.position[-1] - b.position[-1])) / r)


def _oracle_trajectory_g(run: RunRecord) -> float:
    T = min(0.1, run.horizon)
    rec = trace(1e-2, T, run)
    g = g_along_trajectory(rec)
    k = run.nearest_index(T)
    return abs(float(g[-1]) - float(sample(run.g_at(k), rec.position[-1])))


def run_oracles(config: ExperimentConfig, table: GreenTable | None = None, run: RunRecord | None = None,
                workers=None) -> Report:
    """Every cross-method oracle with its tolerance; fails if any mismatch exceeds it."""
    n = min(config.n, 256) if config.quick else config.n
    grid = Grid2D(config.half_width, n)
    g0 = build_g0(config.epsilon, grid, amplitude=config.amplitude) if config.amplitude else \
        ScalarField(grid, np.zeros((n, n)), even=True)
    if run is None:
        run = solve(g0, SolverConfig(T=0.1, grid=grid, snapshot_interval=config.snapshot_interval,
                                     workers=workers))
    started = time.time()
    results = [
        OracleResult("quadrature_G", _oracle_G(), 1e-10),
        OracleResult("fd_velocity_gradient", _oracle_fd_gradient(), 1e-6),
        OracleResult("brute_force_pair_norm", _oracle_pair_norms(config.seed), 1e-12),
        OracleResult("direct_vs_fft_biot_savart", _oracle_biot_savart(g0, table, config.seed), 1e-6),
        OracleResult("rankine_and_divergence", _oracle_rankine(n if config.quick else 512), 1.0),
        OracleResult("step_doubled_rk4", _oracle_rk4(run, config.quick), 1e-8),
        OracleResult("trajectory_vs_grid_g", _oracle_trajectory_g(run), 5e-3),
    ]
    ok = all(r.passed for r in results)
    rows = [(r.name, r.error, r.tolerance, "PASS" if r.passed else "FAIL") for r in results]
    summary = {"results": {r.name: {"error": r.error, "tolerance": r.tolerance, "passed": r.passed}
                           for r in results},
               "elapsed": time.time() - started}
    return Report("oracle-suite", "PASS" if ok else "FAIL", EXIT_PASS if ok else EXIT_ERROR, summary,
                  manifest(config, run, None), {"oracles": ("name,error,tolerance,verdict", rows)})


def corrupted_table(grid: Grid2D, scale: float = 1.01) -> GreenTable:
    """Green's table with one kernel spectrum perturbed, for fault-injection tests."""
    good = green_table(grid)
    return GreenTable(good.n, good.h, good.k1_hat * scale, good.k2_hat)


def format_matrix(report: Report) -> str:
    lines = []
    for name, res in report.summary["results"].items():
        flag = "PASS" if res["passed"] else "FAIL"
        lines.append(f"{flag}  {name:28s} error={res['error']:.3e}  tol={res['tolerance']:.1e}")
    return "\n".join(lines)


__all__ = [
    "ConfigError", "ExperimentConfig", "OracleResult", "Report", "SCENARIOS", "corrupted_table",
    "format_matrix", "initial_field", "rankine_velocity", "rankine_vorticity", "make_run", "run_breakdown", "run_conservation",
    "run_diagnostics", "run_oracles", "write_csv", "HorizonError",
]
