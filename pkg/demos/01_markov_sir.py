"""
Markov SIR as a special case
============================

With a constant infectivity 0.5 over an exponential infected period of rate
0.25, the integral-equation limit collapses to the classical SIR ordinary
differential equations.  This script solves the limit, compares it with a
plain RK4 integration of the ODEs and overlays a few stochastic runs.
"""

import numpy as np

from patchsir import presets
from patchsir.abm import simulate_homogeneous
from patchsir.limit import solve_homogeneous_config

cfg = presets.markov_sir(N=5000, horizon=40.0, grid_step=1e-2)
sol = solve_homogeneous_config(cfg)

# the ODE the limit should reproduce, integrated independently
def rhs(y):
    s, i = y
    return np.array([-0.5 * s * i, 0.5 * s * i - 0.25 * i])

h = 1e-3
y = np.array([0.99, 0.01])
ode = [y]
for _ in range(int(40 / h)):
    k1 = rhs(y); k2 = rhs(y + h / 2 * k1); k3 = rhs(y + h / 2 * k2); k4 = rhs(y + h * k3)
    y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    ode.append(y)
ode = np.array(ode)[::10]

print("largest |S - S_ode| :", np.abs(sol.S[:, 0, 0] - ode[:, 0]).max())
print("largest |I - I_ode| :", np.abs(sol.I[:, 0, 0] - ode[:, 1]).max())
print("final size          :", 1 - sol.S[-1, 0, 0])

# five realisations with N = 5000
runs = [simulate_homogeneous(cfg, seed) for seed in range(5)]
for r, traj in enumerate(runs):
    print(f"run {r}: final susceptible fraction {traj.S[-1, 0, 0] / cfg.N:.4f}, "
          f"peak infected {traj.I[:, 0, 0].max() / cfg.N:.4f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for traj in runs:
        ax.plot(traj.t, traj.I[:, 0, 0] / cfg.N, color="0.7", lw=0.8)
    ax.plot(sol.t, sol.I[:, 0, 0], "k", label="limit I")
    ax.plot(sol.t, sol.S[:, 0, 0], "C0", label="limit S")
    ax.set_xlabel("t")
    ax.legend()
    fig.savefig("markov_sir.svg")
    print("wrote markov_sir.svg")
