"""A point mass spreading under (d_t + v d_x) f = d_v^2 f.

With the identity coefficient the second moments of the spreading cloud
are known in closed form: Var(v) = 2t, Cov(x, v) = t^2, Var(x) = 2t^3/3.
The hypoelliptic signature is the t^3 growth in x: position roughens
faster than pure diffusion even though no diffusion acts on x directly.
"""

import numpy as np

from kfplab import PhaseField, PhaseGrid, WHOLE_SPACE, build_diffusion, \
    build_source, solve
from kfplab.solver import second_moments

n = 95                       # odd, so a cell center sits exactly at the origin
grid = PhaseGrid(1, (0.0, 1.0), 96, 4.0, n, 7.0, n)
identity = build_diffusion(1, 2.0, "constant", value=1.0)
no_source = build_source(1, "zero")

values = np.zeros(grid.shape)
values[n // 2, n // 2] = 1.0 / grid.cell_volume
point_mass = PhaseField(grid, 0.0, values)

traj = solve(point_mass, identity, no_source, 1.0, WHOLE_SPACE,
             dt=1.0 / 96, interp="cubic")

print("time    Var(v)   exact    Cov(x,v)  exact    Var(x)    exact")
for t in (0.25, 0.5, 1.0):
    m = second_moments(traj.field(traj.slice_index(t)))
    print(f"{t:4.2f}   {m['vv']:7.4f}  {2 * t:7.4f}   {m['xv']:8.5f} "
          f"{t * t:8.5f}   {m['xx']:8.5f}  {2 * t**3 / 3:8.5f}")
print(f"\nmass drift over the run: {abs(traj.field(traj.n_slices - 1).mass() - 1.0):.2e}")
