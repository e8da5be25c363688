"""
Two groups in two patches
=========================

Group 1 has a plain infected period; group 2 first goes through a latent
phase.  Contacts are stronger within a patch, and people move between patches
at rates that change at t = 5.  We solve the limit, run one stochastic
realisation with N = 16000 and check the bounds the limit must satisfy.
"""

import numpy as np

from patchsir import presets
from patchsir.abm import simulate
from patchsir.limit import check_bounds, solve_multipatch

cfg = presets.two_by_two(grid_step=1e-2)
sol = solve_multipatch(cfg)

# per (group, patch) susceptible fraction at a few times
for t in (0.0, 2.5, 5.0, 10.0):
    S = sol.sample([t], "S")[0]
    print(f"t={t:4.1f}  S = {np.round(S.ravel(), 4)}")

rep = check_bounds(sol, cfg)
print("\n".join(rep.lines()))

traj = simulate(cfg, 1)
Sbar, Ibar, Rbar = traj.fractions()
print(f"\n{traj.meta['n_events']} events, {traj.meta['n_candidates']} infection candidates")
print("total mass at the end (must be 1):", (Sbar + Ibar + Rbar)[-1].sum())

# sup distance between the run and the limit, cell by cell
diff = np.abs(Sbar - sol.sample(traj.t, "S")).max(axis=0)
print("sup |S^N - S| per cell:\n", np.round(diff, 4))

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, axes = plt.subplots(2, 2, figsize=(8, 6), sharex=True)
    for k in range(2):
        for l in range(2):
            ax = axes[k, l]
            ax.plot(traj.t, Ibar[:, k, l], color="0.6", label="N = 16000")
            ax.plot(sol.t, sol.I[:, k, l], "k", label="limit")
            ax.set_title(f"infected, group {k + 1}, patch {l + 1}", fontsize=9)
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig("two_patches.svg")
    print("wrote two_patches.svg")
