"""Trace probe particles from (0, r) for shrinking r and score the breakdown statistic.

The statistic grows with log(1/r), but more slowly than the asymptotic rate
(log 1/r)^((beta - 1)/2). The second table shows why: within t_r every probe
turns by roughly 0.6 rad around the vortex, so the hyperbolic push along the
x2 axis is partly averaged out. That angle shrinks only like
loglog(1/r) (log 1/r)^(-1/4), which is still about 0.6 at r = 1e-300.

Run: python demos/breakdown_and_rotation.py [--run-dir DIR]
Without --run-dir this solves the n = 1024 problem to T = 0.62 (a few minutes).
"""

import argparse
import math

import numpy as np

from loglog_euler.initial_data import axis_velocity_profile, build_g0, default_radii, fit_hyperbolicity
from loglog_euler.trajectory_lab import (ProbeVelocity, breakdown_parameters, breakdown_statistic,
                                         key_lemma_deviation, slope_vs_loglog, t_r)
from loglog_euler.transport_solver import RunRecord, SolverConfig, solve

ap = argparse.ArgumentParser()
ap.add_argument("--run-dir")
args = ap.parse_args()

beta = 1.5
alpha, eps = breakdown_parameters(beta)
radii = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
g0 = build_g0(0.5)
K = fit_hyperbolicity(axis_velocity_profile(g0, default_radii())).K
if args.run_dir:
    run = RunRecord.load(args.run_dir)
else:
    run = solve(g0, SolverConfig(T=0.62))
probe = ProbeVelocity(run)

print(f"beta = {beta}: alpha = {alpha}, epsilon = {eps}, target slope {(beta - 1) / 2}")
print("\n   r      t_r     statistic   phi_alpha score   key-lemma ratio / K   angle (rad)")
points = []
for r in radii:
    p, rec = breakdown_statistic(r, beta, run, probe=probe)
    kl = key_lemma_deviation(r, run, alpha, eps, record=rec)
    angle = math.atan2(-rec.position[-1, 0], rec.position[-1, 1])
    points.append(p)
    print(f"{r:7.0e}  {p.t_r:.4f}  {p.statistic:.4e}  {p.conservation_statistic:.4e}"
          f"        {kl.ratio / K:.3f}                {angle:.3f}")
print(f"\nfitted slope of log(statistic) vs loglog(1/r): {slope_vs_loglog(points):.4f}")

print("\npredicted rotation angle ~ t_r loglog(1/r) / 2 far below desk-scale r:")
for L in (math.log(1e3), math.log(1e8), 100.0, 700.0):
    print(f"  log(1/r) = {L:6.1f}: {0.5 * math.log(L) * t_r(math.exp(-L), alpha, eps):.3f} rad")
