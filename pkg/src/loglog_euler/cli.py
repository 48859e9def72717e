"""Command-line entry point: ``loglog-euler <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .field_engine import export_slice_csv, save_field
from .initial_data import axis_velocity_profile, default_radii, fit_hyperbolicity
from .trajectory_lab import CSV_HEADER, g_along_trajectory, trace
from .transport_solver import RunRecord, sup_norm_bound

SUBCOMMAND_SCENARIO = {"build-data": "conservation", "solve": "conservation",
                       "conservation": "conservation", "breakdown": "breakdown",
                       "trace": "breakdown", "diagnostics": "diagnostics", "oracles": "oracle-suite"}


def _floats(text: str):
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config")
    common.add_argument("--quick", action="store_true", help="n = 256, T = 0.1, r in 1e-3..1e-5")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--plot-data", action="store_true", help="also write two-column .dat files")
    common.add_argument("--output-dir", help="output directory (env LOGLOG_OUTPUT_DIR wins)")
    common.add_argument("--run-dir", type=Path, help="reuse a run saved by `solve`")
    common.add_argument("--n", type=int)
    common.add_argument("--half-width", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--r-list", type=_floats, help="comma-separated radii")
    common.add_argument("--T", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--amplitude", type=float)

    p = argparse.ArgumentParser(prog="loglog-euler", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build-data", parents=[common], help="build g0 and certify the axis profile")
    sub.add_parser("solve", parents=[common], help="run the transport solver and save snapshots")
    sub.add_parser("conservation", parents=[common], help="phi_alpha norm series and envelope")
    sub.add_parser("breakdown", parents=[common], help="phi_beta breakdown statistic over r")
    sub.add_parser("diagnostics", parents=[common], help="separation exponents and grad u")
    t = sub.add_parser("trace", parents=[common], help="trace one probe trajectory")
    t.add_argument("--r", type=float, default=1e-4)
    sub.add_parser("oracles", parents=[common], help="cross-method oracle matrix")
    return p


def load_config(args) -> ex.ExperimentConfig:
    scenario = SUBCOMMAND_SCENARIO[args.command]
    if args.config is not None:
        d = json.loads(args.config.read_text())
        d.setdefault("scenario", scenario)
        cfg = ex.ExperimentConfig.from_dict(d)
    else:
        cfg = ex.ExperimentConfig(scenario=scenario)
    if args.quick:
        cfg = cfg.with_quick()
    overrides = {"n": args.n, "half_width": args.half_width, "epsilon": args.epsilon,
                 "alpha": args.alpha, "beta": args.beta, "r_list": args.r_list, "T": args.T,
                 "dt": args.dt, "seed": args.seed, "amplitude": args.amplitude,
                 "output_dir": args.output_dir}
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def set_threads(n: int | None):
    if n is None:
        return None
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    return n


def _run(args, cfg, workers):
    if args.run_dir is not None:
        run = RunRecord.load(args.run_dir)
        if run.horizon + 1e-12 < cfg.horizon:
            raise ex.HorizonError(f"saved run ends at {run.horizon}, need {cfg.horizon}")
        return run
    return ex.make_run(cfg, workers=workers)


def cmd_build_data(args, cfg, out, workers) -> int:
    g0 = ex.initial_field(cfg)
    save_field(g0, out / "g0.bin")
    export_slice_csv(g0, out / "g0_diagonal_slice.csv", axis=1, coordinate=22.0)
    prof = axis_velocity_profile(g0, default_radii())
    fit = fit_hyperbolicity(prof, cfg.epsilon)
    ex.write_csv(out / "axis_profile.csv", "r,u2", prof.pairs())
    if args.plot_data:
        ex.write_plot_data(out / "axis_profile.dat", prof.pairs())
    summary = {"hyperbolicity": fit.to_dict(), "manifest": ex.manifest(cfg, None, fit)}
    (out / "build_data.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"K = {fit.K:.6g}  delta = {fit.delta:.3g}  slope spread = {fit.slope_spread:.3g}")
    return ex.EXIT_PASS


def cmd_solve(args, cfg, out, workers) -> int:
    run = ex.make_run(cfg, workers=workers)
    run.save(out / "run")
    ok, margin = sup_norm_bound(run)
    print(f"solved to T = {run.horizon:g} with dt = {run.dt:g}; sup bound "
          f"{'holds' if ok else 'violated'} (margin {margin:.3g})")
    return ex.EXIT_PASS if ok else ex.EXIT_FAIL


def cmd_trace(args, cfg, out, workers) -> int:
    from .trajectory_lab import breakdown_parameters, t_r

    run = _run(args, cfg, workers)
    a, e = breakdown_parameters(cfg.beta)
    T = min(t_r(args.r, a, e), run.horizon)
    rec = trace(args.r, T, run)
    g_along_trajectory(rec)
    ex.write_csv(out / f"trajectory_r{args.r:g}.csv", CSV_HEADER, list(rec.rows()))
    if args.plot_data:
        ex.write_plot_data(out / f"trajectory_r{args.r:g}.dat",
                           [(t, g) for t, g in zip(rec.t, rec.g)])
    print(f"r = {args.r:g}: |phi(T)|/r = {rec.radius[-1] / args.r:.6f}, g = {rec.g[-1]:.4e}, "
          f"status {rec.status}")
    return ex.EXIT_PASS


def cmd_report(args, cfg, out, workers) -> int:
    fn = {"conservation": ex.run_conservation, "breakdown": ex.run_breakdown,
          "diagnostics": ex.run_diagnostics, "oracles": ex.run_oracles}[args.command]
    run = _run(args, cfg, workers) if args.run_dir is not None else None
    report = fn(cfg, run=run, workers=workers)
    report.write(out, args.plot_data)
    if args.command == "oracles":
        print(ex.format_matrix(report))
    else:
        print(json.dumps(report.summary, indent=2, default=ex._jsonable))
    print(f"{report.scenario}: {report.verdict}")
    return report.exit_code


COMMANDS = {"build-data": cmd_build_data, "solve": cmd_solve, "trace": cmd_trace}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        workers = set_threads(args.threads)
        out = cfg.output_path()
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.to_json())
        return COMMANDS.get(args.command, cmd_report)(args, cfg, out, workers)
    except (ex.ConfigError, ex.HorizonError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return ex.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
