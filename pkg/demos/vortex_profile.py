"""Walk through the loglog vortex: vorticity, velocity and the near-origin limits.

Run: python demos/vortex_profile.py
"""

import math

import numpy as np

from loglog_euler.vortex_core import default_profile, us_gradient, us_velocity, ws_value

profile = default_profile()
print("cutoffs:", profile.inner_cutoff, profile.outer_cutoff)

print("\nvorticity grows like loglog(1/r) at the centre and vanishes beyond the outer cutoff")
for r in (1e-12, 1e-6, 1e-3, 0.1, 0.3, 0.5):
    print(f"  w_s({r:8.0e}) = {float(ws_value(r)):.6f}")

print("\nspeed over r loglog(1/r) tends to 1/2, which is why the flow is only log-Lipschitz")
for r in (1e-4, 1e-6, 1e-8, 1e-12):
    u = us_velocity(np.array([r, 0.0]))
    print(f"  r = {r:6.0e}: ratio {math.hypot(*u) / (r * math.log(math.log(1 / r))):.5f}")

print("\nthe velocity gradient is unbounded but only like loglog(1/r)")
for r in (1e-4, 1e-8, 1e-12):
    J = us_gradient(np.array([0.0, r]))
    print(f"  r = {r:6.0e}: |grad u_s| = {np.linalg.norm(J, 2):.4f}, "
          f"loglog(1/r) = {math.log(math.log(1 / r)):.4f}")
