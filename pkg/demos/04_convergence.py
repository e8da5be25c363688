"""
How fast does the stochastic model approach its limit?
======================================================

For each population size we run 20 replicas and measure the largest
distance to the limit over time, summed over cells and compartments.  The
mean error should fall like N^-1/2.  The coupling study pairs every
susceptible of a finite run with a limit particle that uses the same
randomness, and counts how often the two disagree on the infection time.

Pass ``--threads`` to spread replicas over processes; results do not depend
on it.
"""

import argparse

from patchsir import presets
from patchsir.harness import convergence_study, coupling_study
from patchsir.limit import solve_multipatch

parser = argparse.ArgumentParser()
parser.add_argument("--threads", type=int, default=1)
args = parser.parse_args()

cfg = presets.acceptance_2x2(grid_step=1e-2)
sol = solve_multipatch(cfg)
sizes = [250, 1000, 4000, 16000]

conv = convergence_study(cfg, sizes, replicas=20, sol=sol, threads=args.threads)
print("\n".join(conv.summary_lines()))

coup = coupling_study(cfg, sizes, replicas=20, sol=sol, threads=args.threads)
print()
print("\n".join(coup.summary_lines()))
