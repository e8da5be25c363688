"""Convergence and coupling studies over population sizes and replicas.

Replica ``r`` at size ``N`` draws from the substream
``SeedSequence([master, config hash, N, r])`` so any cell of a study can be
rerun on its own, and results are reduced in ``(N, replica)`` order whatever
the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .abm import AbmTrajectory, simulate
from .config import ModelConfig
from .errors import ConfigError, SolverError
from .limit import LimitSolution, b_floor, solve_multipatch
from .mckv import coupling_experiment

__all__ = [
    "error_metric",
    "replica_seed",
    "floor_constant",
    "ConvergenceReport",
    "convergence_study",
    "CouplingReport",
    "coupling_study",
    "fit_slope",
    "plot_convergence",
    "plot_coupling",
    "plot_compartments",
]

FIELDS = (("S", "S"), ("I", "I"), ("R", "R"))


def error_metric(traj: AbmTrajectory, sol: LimitSolution, grid=None):
    """Sum over cells of the sup over ``grid`` of ``|dS| + |dI| + |dR| + |dF|`` (fractions).

    ``grid`` defaults to the trajectory's output grid and must coincide with
    it; the limit is interpolated linearly onto it.
    """
    grid = traj.t if grid is None else np.asarray(grid, dtype=float)
    if grid.shape != traj.t.shape or np.max(np.abs(grid - traj.t), initial=0.0) > 1e-9:
        raise ValueError("grid does not match the trajectory's output grid")
    if grid[0] < sol.t[0] - 1e-12 or grid[-1] > sol.t[-1] + 1e-9:
        raise ValueError("grid extends beyond the limit solution")
    d = np.abs(traj.Fbar - sol.sample(grid, "F"))
    for a, b in FIELDS:
        d = d + np.abs(getattr(traj, a) / traj.N - sol.sample(grid, b))
    return float(d.max(axis=0).sum())


def replica_seed(master, digest, N, r):
    return np.random.SeedSequence([int(master), int(digest[:16], 16), int(N), int(r)])


def floor_constant(cfg: ModelConfig):
    """``C*_T``: half the smallest proven lower bound on ``Bbar`` at the horizon."""
    return float(0.5 * b_floor(cfg.B0, cfg.mobility.nu_bar(cfg.horizon), cfg.horizon).min())


def fit_slope(Ns, means, level=0.95):
    """Least-squares slope of ``log(mean)`` against ``log(N)`` with a t-interval."""
    x, y = np.log(np.asarray(Ns, dtype=float)), np.log(np.asarray(means, dtype=float))
    fit = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + level / 2, len(x) - 2)
    return float(fit.slope), (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr)), float(fit.intercept)


def _pool_map(fn, tasks, threads):
    if threads is None or threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _convergence_task(task):
    cfg, sol, N, r, ss = task
    try:
        traj = simulate(cfg, np.random.default_rng(ss), N=N)
    except Exception as exc:   # re-raised with the replica's coordinates
        raise SolverError(f"simulation failed at N={N}, replica {r}: {exc}") from exc
    minB = traj.min_B / traj.N
    return error_metric(traj, sol), float(minB.min()), bool(minB.min() < floor_constant(cfg)), \
        traj.meta["n_events"], float(traj.max_force)


@dataclass
class ConvergenceReport:
    config_digest: str
    Ns: list
    errors: np.ndarray            # (len(Ns), replicas)
    min_B: np.ndarray             # (len(Ns), replicas), smallest Bbar^N over time and cells
    floor_violations: np.ndarray  # (len(Ns),) replicas with min Bbar^N below C*_T
    floor: float
    slope: float
    slope_ci: tuple
    intercept: float
    master_seed: int
    extra: dict = field(default_factory=dict)

    @property
    def mean(self):
        return self.errors.mean(axis=1)

    @property
    def stderr(self):
        return self.errors.std(axis=1, ddof=1) / math.sqrt(self.errors.shape[1])

    def rows(self):
        for i, N in enumerate(self.Ns):
            for r in range(self.errors.shape[1]):
                yield (N, r, float(self.errors[i, r]), float(self.min_B[i, r]),
                       int(self.min_B[i, r] < self.floor))

    def summary_lines(self):
        out = [f"config {self.config_digest[:12]}  master seed {self.master_seed}  replicas {self.errors.shape[1]}"]
        for i, N in enumerate(self.Ns):
            out.append(f"N={N:>7d}  mean error {self.mean[i]:.5f}  se {self.stderr[i]:.5f}  "
                       f"floor violations {int(self.floor_violations[i])}")
        lo, hi = self.slope_ci
        out.append(f"slope {self.slope:.4f}  95% CI [{lo:.4f}, {hi:.4f}]")
        return out


def convergence_study(cfg: ModelConfig, Ns, replicas=20, sol=None, master_seed=None, threads=1) -> ConvergenceReport:
    """Simulation error against the limit for each ``N`` and replica, and the fitted rate.

    Parameters
    ----------
    Ns : sequence of int
        Ascending population sizes, at least four.
    replicas : int
        At least 10 per size.
    sol : LimitSolution, optional
        Limit of ``cfg``; solved on the config's grid if omitted.
    """
    Ns = [int(n) for n in Ns]
    if len(Ns) < 4 or any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ConfigError("Ns must be ascending with at least four values")
    if replicas < 10:
        raise ConfigError("replicas must be at least 10")
    master = cfg.seed if master_seed is None else int(master_seed)
    sol = sol if sol is not None else solve_multipatch(cfg)
    tasks = [(cfg, sol, N, r, replica_seed(master, cfg.digest, N, r)) for N in Ns for r in range(replicas)]
    out = _pool_map(_convergence_task, tasks, threads)
    err = np.array([o[0] for o in out]).reshape(len(Ns), replicas)
    minB = np.array([o[1] for o in out]).reshape(len(Ns), replicas)
    viol = np.array([o[2] for o in out]).reshape(len(Ns), replicas).sum(axis=1)
    slope, ci, icpt = fit_slope(Ns, err.mean(axis=1))
    floor = floor_constant(cfg)
    return ConvergenceReport(cfg.digest, Ns, err, minB, viol, floor, slope, ci, icpt, master,
                             {"max_force": max(o[4] for o in out), "events": [o[3] for o in out]})


def _coupling_task(task):
    cfg, sol, N, r, ss = task
    return coupling_experiment(cfg, N, seed=ss, sol=sol, replica=r)


@dataclass
class CouplingReport:
    config_digest: str
    Ns: list
    results: list                 # CouplingResult in (N, replica) order

    def mismatch(self):
        """``(len(Ns), replicas)`` mismatch fractions over all initially susceptible individuals."""
        reps = len(self.results) // len(self.Ns)
        frac = [float((r.tau_mismatch_fraction * r.n_susceptible).sum() / r.n_susceptible.sum())
                for r in self.results]
        return np.array(frac).reshape(len(self.Ns), reps)

    @property
    def mean(self):
        return self.mismatch().mean(axis=1)

    def rows(self):
        for res in self.results:
            yield from res.rows()

    def summary_lines(self):
        m = self.mean
        out = [f"N={N:>7d}  mean mismatch fraction {v:.6f}" for N, v in zip(self.Ns, m)]
        out.append(f"ratio first/last {m[0] / m[-1]:.3f}" if m[-1] > 0 else "ratio first/last inf")
        return out


def coupling_study(cfg: ModelConfig, Ns, replicas=20, sol=None, master_seed=None, threads=1) -> CouplingReport:
    """Coupled N-system / limit-particle mismatch for each ``N`` and replica."""
    Ns = [int(n) for n in Ns]
    master = cfg.seed if master_seed is None else int(master_seed)
    sol = sol if sol is not None else solve_multipatch(cfg)
    tasks = [(cfg, sol, N, r, replica_seed(master, cfg.digest, N, r)) for N in Ns for r in range(replicas)]
    return CouplingReport(cfg.digest, Ns, _pool_map(_coupling_task, tasks, threads))


def _svg_axes():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "patchsir"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def plot_convergence(csv_path, out_path):
    """Log-log plot of mean error against N, with the fitted line, from a convergence CSV."""
    from .io import read_csv
    _, rows = read_csv(csv_path)
    arr = np.array(rows)
    Ns = np.unique(arr[:, 0])
    means = np.array([arr[arr[:, 0] == n, 2].mean() for n in Ns])
    slope, _, icpt = fit_slope(Ns, means)
    plt = _svg_axes()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(arr[:, 0], arr[:, 2], ".", color="0.7", label="replicas")
    ax.loglog(Ns, means, "o", color="k", label="mean")
    ax.loglog(Ns, np.exp(icpt) * Ns ** slope, "-", color="C0", label=f"slope {slope:.3f}")
    ax.set_xlabel("N")
    ax.set_ylabel("sup error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_coupling(csv_path, out_path):
    """Mean mismatch fraction against N from a coupling CSV."""
    from .io import read_csv
    _, rows = read_csv(csv_path)
    arr = np.array(rows)
    plt = _svg_axes()
    fig, ax = plt.subplots(figsize=(5, 4))
    for k in np.unique(arr[:, 1]):
        sub = arr[arr[:, 1] == k]
        Ns = np.unique(sub[:, 0])
        ax.loglog(Ns, [sub[sub[:, 0] == n, 4].mean() for n in Ns], "o-", label=f"group {int(k)}")
    ax.set_xlabel("N")
    ax.set_ylabel("mismatch fraction")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_compartments(csv_path, out_path, columns=("S", "I", "R")):
    """Compartment curves per (k, l) from a trajectory or limit CSV."""
    from .io import read_csv
    header, rows = read_csv(csv_path)
    arr = np.array(rows)
    plt = _svg_axes()
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in np.unique(arr[:, 1]):
        for l in np.unique(arr[:, 2]):
            sub = arr[(arr[:, 1] == k) & (arr[:, 2] == l)]
            for c in columns:
                name = next(h for h in header if h.removesuffix("bar") == c)
                ax.plot(sub[:, 0], sub[:, header.index(name)], label=f"{c} k={int(k)} l={int(l)}")
    ax.set_xlabel("t")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
