"""Mean-field characterisation of the limit and the particle coupling.

The limit force of infection is the fixed point ``m* = G(m*)`` of the map
that takes a candidate force ``m``, infects susceptibles at the rate
``Gamma(m)`` it induces, and returns the force ``G(m)`` emitted by the
resulting infecteds.  Limit particles are i.i.d. susceptibles infected at
rate ``Gamma_bar`` read from a limit solution; the coupling experiment drives
them with the same randomness as the individuals of a finite simulation.

A note on the susceptible marginal: with ``P(X(0) = l) = Sbar^l(0)`` and the
remaining mass on the cemetery, the discounted occupation
``E[1{X(t)=l} exp(-int_0^t Gamma^{X(s)}(s) ds)]`` already equals
``Sbar^l(t)``.  Weighting it again by ``Sbar^{X(0)}(0)`` would count the
initial mass twice, so no such weight is applied here or in
:mod:`patchsir.feynman_kac`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .abm import _Engine, S_, MIGRATION, _PRM, AbmTrajectory
from .config import ModelConfig
from .errors import NonConvergenceError
from .infectivity import InfectivityPath
from .limit import LimitSolution, _Marcher, _default_grid, solve_multipatch
from .mobility import CEMETERY, PatchPath, sample_patch_path, sample_patch_paths

__all__ = [
    "FixedPointResult",
    "gbar_map",
    "fixed_point_m",
    "LimitParticle",
    "ParticleBatch",
    "sample_limit_particle",
    "sample_limit_particles",
    "infection_times_given_path",
    "CouplingResult",
    "coupling_experiment",
]


# -- fixed point ----------------------------------------------------------------

@dataclass
class FixedPointResult:
    t: np.ndarray
    m: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def gbar_map(cfg: ModelConfig, m, grid=None, marcher=None):
    """One application of ``m -> G(m)`` on the solver grid; ``m`` has shape ``(n + 1, K, L)``."""
    marcher = marcher or _Marcher(cfg, _default_grid(cfg, grid))
    return marcher.run(force=np.asarray(m, dtype=float), guess=np.asarray(m, dtype=float))["G"]


def fixed_point_m(cfg: ModelConfig, grid=None, tol=1e-10, max_iter=200, m0=None) -> FixedPointResult:
    """Plain Picard iteration of ``m -> G(m)`` started from ``m0`` (default zero).

    Stops when the sup-norm update falls below ``tol``.

    Raises
    ------
    NonConvergenceError
        After ``max_iter`` iterations, carrying the last update size.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = _default_grid(cfg, grid)
    marcher = _Marcher(cfg, grid)
    m = np.zeros((len(grid), cfg.K, cfg.L)) if m0 is None else np.array(m0, dtype=float)
    history = []
    for it in range(1, max_iter + 1):
        new = marcher.run(force=m, guess=m)["G"]
        res = float(np.max(np.abs(new - m)))
        history.append(res)
        m = new
        if res < tol:
            return FixedPointResult(grid, m, it, res, history)
    raise NonConvergenceError(f"Picard iteration did not reach {tol:g} in {max_iter} iterations "
                              f"(last update {res:.3e})", step=max_iter, residual=res)


# -- limit particles ------------------------------------------------------------

@dataclass
class LimitParticle:
    """One limit susceptible: patch path, infection time (``inf`` if none by the horizon)."""

    k: int
    path: PatchPath
    tau: float
    infectivity: InfectivityPath | None

    def A(self, t):
        return (np.asarray(t) >= self.tau).astype(int)


def _gamma_at(sol: LimitSolution, k, patches, times):
    """``Gamma_bar^{patch}_k(t)`` by linear interpolation; zero on the cemetery."""
    times = np.asarray(times, dtype=float)
    patches = np.asarray(patches, dtype=int)
    idx = np.clip(np.searchsorted(sol.t, times, side="right") - 1, 0, len(sol.t) - 2)
    w = (times - sol.t[idx]) / sol.h
    safe = np.where(patches == CEMETERY, 0, patches)
    g = sol.Gamma[idx, k, safe] * (1 - w) + sol.Gamma[idx + 1, k, safe] * w
    return np.where(patches == CEMETERY, 0.0, g)


def _start_law(sol: LimitSolution, k):
    p = np.clip(sol.S[0, k], 0.0, None)
    return np.append(p, max(0.0, 1.0 - p.sum()))


def _first_point(sol, k, path: PatchPath, times, marks):
    """Earliest candidate ``(s, u)`` with ``u < Gamma^{X(s)}(s)``; ``inf`` if none."""
    if len(times) == 0 or path.start_patch == CEMETERY:
        return math.inf
    pts = np.asarray(path.times)
    pats = np.asarray((path.start_patch,) + tuple(path.patches))
    where = pats[np.searchsorted(pts, times, side="right")]
    hit = np.flatnonzero(marks < _gamma_at(sol, k, where, times))
    return float(times[hit[0]]) if hit.size else math.inf


def _prm(rng, U, T):
    n = rng.poisson(U * T) if U > 0 else 0
    times = np.sort(rng.random(n) * T)
    return times, rng.random(n) * U


def sample_limit_particle(cfg: ModelConfig, sol: LimitSolution, k, rng) -> LimitParticle:
    """Sample one limit particle of group ``k``.

    The start is a patch with probability ``Sbar^l_k(0)`` and the cemetery
    otherwise; the path follows the susceptible movement rates and the
    infection time is the first point of a Poisson stream of rate ``U``
    (``U`` the largest ``Gamma_bar_k``) whose uniform mark falls below
    ``Gamma_bar^{X(s)}_k(s)``.
    """
    T = float(sol.t[-1])
    p = _start_law(sol, k)
    pick = int(rng.choice(len(p), p=p / p.sum()))
    start = CEMETERY if pick == cfg.L else pick
    path = sample_patch_path(cfg.mobility.schedule(k, "S"), start, 0.0, T, rng)
    U = float(sol.Gamma[:, k].max())
    times, marks = _prm(rng, U, T)
    tau = _first_point(sol, k, path, times, marks)
    lam = cfg.law_new[k].sample_path(rng) if math.isfinite(tau) else None
    return LimitParticle(k, path, tau, lam)


@dataclass
class ParticleBatch:
    """Many limit particles of one group: start patches, infection times, patches at ``checkpoints``."""

    k: int
    start: np.ndarray
    tau: np.ndarray
    checkpoints: np.ndarray
    patch_at: np.ndarray

    def marginal(self, L):
        """Fraction of particles still susceptible in each patch, shape ``(len(checkpoints), L)``, with standard errors."""
        n = len(self.tau)
        est = np.zeros((len(self.checkpoints), L))
        se = np.zeros_like(est)
        for i, t in enumerate(self.checkpoints):
            for l in range(L):
                x = ((self.patch_at[:, i] == l) & (self.tau > t)).astype(float)
                est[i, l] = x.mean()
                se[i, l] = x.std(ddof=1) / math.sqrt(n)
        return est, se


def sample_limit_particles(cfg: ModelConfig, sol: LimitSolution, k, n, rng, checkpoints=()) -> ParticleBatch:
    """Vectorised :func:`sample_limit_particle` without the infectivity draw."""
    T = float(sol.t[-1])
    p = _start_law(sol, k)
    picks = rng.choice(len(p), size=n, p=p / p.sum())
    start = np.where(picks == cfg.L, CEMETERY, picks)
    jt, jp = sample_patch_paths(cfg.mobility.schedule(k, "S"), start, T, rng)
    U = float(sol.Gamma[:, k].max())
    counts = rng.poisson(U * T, n) if U > 0 else np.zeros(n, dtype=int)
    owner = np.repeat(np.arange(n), counts)
    times = rng.random(owner.size) * T
    marks = rng.random(owner.size) * U
    where = np.empty(owner.size, dtype=int)
    checkpoints = np.asarray(checkpoints, dtype=float)
    patch_at = np.empty((n, len(checkpoints)), dtype=int)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    for j in range(n):
        pats = np.concatenate([[start[j]], jp[j]]).astype(int)
        a, b = offsets[j], offsets[j + 1]
        where[a:b] = pats[np.searchsorted(jt[j], times[a:b], side="right")]
        patch_at[j] = pats[np.searchsorted(jt[j], checkpoints, side="right")]
    hit = marks < _gamma_at(sol, k, where, times)
    tau = np.full(n, math.inf)
    np.minimum.at(tau, owner[hit], times[hit])
    return ParticleBatch(k, start, tau, checkpoints, patch_at)


def infection_times_given_path(sol: LimitSolution, k, path: PatchPath, n, rng):
    """``n`` independent infection times of a particle whose patch path is frozen to ``path``."""
    T = float(sol.t[-1])
    U = float(sol.Gamma[:, k].max())
    counts = rng.poisson(U * T, n) if U > 0 else np.zeros(n, dtype=int)
    owner = np.repeat(np.arange(n), counts)
    times = rng.random(owner.size) * T
    marks = rng.random(owner.size) * U
    pats = np.asarray((path.start_patch,) + tuple(path.patches), dtype=int)
    where = pats[np.searchsorted(np.asarray(path.times), times, side="right")]
    hit = marks < _gamma_at(sol, k, where, times)
    tau = np.full(n, math.inf)
    np.minimum.at(tau, owner[hit], times[hit])
    return tau


# -- coupling -----------------------------------------------------------------------

class _SharedRandomness:
    """Per-susceptible randomness shared by the N-system and the limit particles.

    Each initially susceptible individual gets its own substream, from which
    its patch path while susceptible, a Poisson stream on ``[0, T] x [0, U)``
    and its infectivity path are drawn once.  The N-system accepts a point
    ``(s, u)`` when ``u < Gamma^N`` of the individual's cell just before
    ``s``; the limit particle accepts it when ``u < Gamma_bar``.  If
    ``Gamma^N`` exceeds ``U`` the excess is generated by a separate stream
    that only the N-system sees.
    """

    def __init__(self, cfg, sol, ss, U, permutation=None):
        self.cfg, self.sol, self.ss, self.U = cfg, sol, ss, U
        self.permutation = permutation
        self.tau_limit = {}
        self.paths = {}
        self.prm = {}
        self.infectivity = {}
        self.overflow_used = 0

    def attach(self, eng):
        cfg, T, U = self.cfg, eng.T, self.U
        ids = [j for j in range(eng.N) if eng.comp[j] == S_]
        keys = ids if self.permutation is None else [int(self.permutation[j]) for j in ids]
        for j, key in zip(ids, keys):
            rng = np.random.default_rng(np.random.SeedSequence(self.ss.entropy, spawn_key=(*self.ss.spawn_key, key)))
            k = eng.group[j]
            path = sample_patch_path(cfg.mobility.schedule(k, "S"), eng.patch[j], 0.0, T, rng)
            times, marks = _prm(rng, U, T)
            self.paths[j] = path
            self.prm[j] = (times, marks)
            self.infectivity[j] = cfg.law_new[k].sample_path(rng)
            self.tau_limit[j] = _first_point(self.sol, k, path, times, marks)
            for t, dest in zip(path.times, path.patches):
                eng.push(t, MIGRATION, j, 0, dest)
            if len(times):
                eng.push(times[0], _PRM, j, 0, marks[0])

    def prm_point(self, eng, j, idx, mark, gam):
        if eng.comp[j] != S_:
            return False
        times, marks = self.prm[j]
        if mark < gam[eng.group[j] * eng.L + eng.patch[j]]:
            eng.infect(j, path=self.infectivity[j])
            return True
        if idx + 1 < len(times):
            eng.push(times[idx + 1], _PRM, j, idx + 1, marks[idx + 1])
        return False

    def overflow_candidate(self, eng, gam):
        excess = np.maximum(gam - self.U, 0.0)
        if not excess.any():
            return math.inf, 0.0, None
        w = eng.cnt[S_].ravel() * excess
        total = float(w.sum())
        if total <= 0:
            return math.inf, 0.0, None
        return eng.t + eng.rng.exponential(1.0 / total), 0.0, w

    def overflow_infect(self, eng, gam, weights):
        cum = np.cumsum(weights)
        cell = int(np.searchsorted(cum, eng.rng.random() * cum[-1], side="right"))
        k, l = divmod(cell, eng.L)
        lst = eng.slist[k][l]
        j = lst[int(eng.rng.random() * len(lst))]
        eng.infect(j, path=self.infectivity[j])
        self.overflow_used += 1
        return True


@dataclass
class CouplingResult:
    """Mismatch between ``A^N_j`` and the coupled limit particles ``A_j``, per group."""

    N: int
    replica: int
    mean_sup_mismatch: np.ndarray       # (K,) sum over group-k susceptibles of sup_t |A^N - A|, divided by N
    tau_mismatch_fraction: np.ndarray   # (K,) fraction of group-k susceptibles with tau^N ^ T != tau ^ T
    n_susceptible: np.ndarray
    U: float
    overflow: int
    trajectory: AbmTrajectory | None = None

    def rows(self):
        for k in range(len(self.mean_sup_mismatch)):
            yield (self.N, k + 1, self.replica, float(self.mean_sup_mismatch[k]), float(self.tau_mismatch_fraction[k]))


def coupling_experiment(cfg: ModelConfig, N, seed=0, sol=None, replica=0, permutation=None,
                        headroom=1.25, keep_trajectory=False) -> CouplingResult:
    """Run one coupled pair (N-system, limit particles) and report the mismatch.

    Parameters
    ----------
    seed : int or SeedSequence
        Root of the substreams; individual ``j`` uses child ``j`` and the
        N-system's own moves use a separate child.
    sol : LimitSolution, optional
        Limit solution of ``cfg``; solved here if omitted.
    permutation : array_like, optional
        Relabels which substream each individual receives.
    headroom : float
        ``U = headroom * max Gamma_bar``.
    """
    sol = sol if sol is not None else solve_multipatch(cfg)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    U = headroom * float(sol.Gamma.max())
    shared = _SharedRandomness(cfg, sol, np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 0)),
                               U, permutation)
    own = np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 1)))
    eng = _Engine(cfg.replace(horizon=float(sol.t[-1])), own, N=N, coupling=shared)
    traj = eng.run()
    T = eng.T
    tau_N = dict(zip(traj.infections["j"].tolist(), traj.infections["tau"].tolist()))
    K = cfg.K
    mism = np.zeros(K)
    n_s = np.zeros(K, dtype=int)
    for j, tl in shared.tau_limit.items():
        k = eng.group[j]
        n_s[k] += 1
        a = min(tau_N.get(j, math.inf), T)
        b = min(tl, T)
        if a != b:
            mism[k] += 1
    frac = np.divide(mism, n_s, out=np.zeros(K), where=n_s > 0)
    return CouplingResult(N, replica, mism / N, frac, n_s, U, shared.overflow_used,
                          traj if keep_trajectory else None)
