"""The barrier construction: F_k below its dominating solution G_k.

The truncated cutoff field F_k = f_k eta_k(x) eta_k(v)^2 satisfies the
equation with sources S1 + div_v S2 minus a positive defect, so the
solution G_k of the inflow boundary-value problem with those sources and
the same starting slice dominates it pointwise.  The comparison minimum
below stays at roundoff-to-scheme scale.
"""

import numpy as np

from kfplab import PhaseField, PhaseGrid, WHOLE_SPACE, build_diffusion, \
    build_source, solve, solve_barrier_ibvp
from kfplab.degiorgi import build_barrier_sources
from kfplab.fields import Trajectory
from kfplab.geometry import DyadicLevel, dyadic_time
from kfplab.solver import comparison_check

grid = PhaseGrid(1, (-1.5, 0.0), 48, 1.5, 64, 1.5, 64)
rough = build_diffusion(1, 2.0, "cellwise_random", low=0.55, high=1.8,
                        cell=0.2, seed=3)
source = build_source(1, "bump", bound=0.5, amplitude=0.5,
                      x_radius=1.0, v_radius=1.0)
x = grid.x_centers[:, None]
v = grid.v_centers[None, :]
f0 = PhaseField(grid, -1.5, 1.1 * np.cos(np.pi * x / 1.5) * np.exp(-v**2 / 0.18))
traj = solve(f0, rough, source, 0.0, WHOLE_SPACE)

for k in (1, 2):
    rep = build_barrier_sources(traj, k, rough, source)
    level = DyadicLevel(k)
    eta_x = grid.expand_x(level.eta(grid.rho_x))
    eta_v = grid.expand_v(level.eta(grid.rho_v))
    fk = np.maximum(traj.values - level.truncation, 0.0) * eta_x * eta_v**2
    fk_traj = Trajectory(grid, traj.times.copy(), fk)
    i0 = fk_traj.slice_index(dyadic_time(k - 1))
    window = Trajectory(grid, fk_traj.times[i0:], fk_traj.values[i0:])

    barrier = solve_barrier_ibvp(rep.s1, rep.s2, rough, k,
                                 initial=window.field(0))
    print(f"level k = {k}")
    print(f"  ||S1||_L2 = {rep.s1_l2:.4f}  (ladder budget {rep.s1_bound:.4f})")
    print(f"  ||S2||_L2 = {rep.s2_l2:.4f}  (ladder budget {rep.s2_bound:.4f})")
    print(f"  ||F_k||_inf = {np.abs(window.values).max():.4f}, "
          f"||G_k||_inf = {np.abs(barrier.values).max():.4f}")
    print(f"  min(G_k - F_k) = {comparison_check(window, barrier):.2e}")
