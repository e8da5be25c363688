"""
Three views of the same limit
=============================

The susceptible fractions of the limit can be reached three ways:

1. by marching the integral equations forward (``solve_multipatch``);
2. by solving a backward linear system whose entries are discounted
   transition probabilities, then pairing it with the initial condition;
3. by sampling independent limit particles that move like susceptibles and
   get infected at the rate the limit prescribes.

The force of infection is also the fixed point of a mean-field map.  Here
all of these are computed on one config and compared.
"""

import numpy as np

from patchsir import presets
from patchsir.feynman_kac import adjoint_gap, s_representation_check, solve_backward
from patchsir.limit import solve_multipatch
from patchsir.mckv import fixed_point_m, sample_limit_particles

cfg = presets.acceptance_2x2(grid_step=1e-2)
sol = solve_multipatch(cfg)

# backward system for group 1, patch 2 at t = 6
b = solve_backward(sol.t, sol.Gamma[:, 0], cfg.mobility.schedule(0, "S"), 6.0, 1)
print("S(6) from the forward march :", sol.sample([6.0], "S")[0, 0, 1])
print("<S(0), u(0)> from backward  :", sol.S[0, 0] @ b.u[0])
print("gap                         :", adjoint_gap(sol, 0, b))

# Monte Carlo over susceptible paths, per group, patch and checkpoint
rows = s_representation_check(sol, cfg, 50_000, np.random.default_rng(0))
print("\n k  l     t   limit     paths     z")
for r in rows:
    print(f" {r.k + 1}  {r.l + 1}  {r.t:4.1f}  {r.deterministic:.5f}  {r.mc_estimate:.5f}  {r.zscore:+.2f}")

# limit particles: the fraction still susceptible in each patch
batch = sample_limit_particles(cfg, sol, 1, 50_000, np.random.default_rng(1), checkpoints=(5.0,))
est, se = batch.marginal(cfg.L)
print("\nparticles, group 2 at t = 5:", np.round(est[0], 4), "+/-", np.round(se[0], 4))
print("limit,     group 2 at t = 5:", np.round(sol.sample([5.0], "S")[0, 1], 4))

# the force of infection as a fixed point
fp = fixed_point_m(cfg)
print(f"\nPicard iterations {fp.iterations}, sup |m* - F| = {np.abs(fp.m - sol.F).max():.2e}")
print("update sizes:", " ".join(f"{x:.1e}" for x in fp.history[:8]), "...")
