"""Exact event-driven simulation of the N-individual epidemic.

Every individual carries a group, a compartment and a patch.  Infected
individuals also carry a sampled infectivity path, evaluated at their
infection age.  Between events the per-susceptible infection rate of every
(group, patch) cell is constant, because paths are step functions whose
jumps are themselves events.  Infections are generated by thinning a
dominating stream of rate ``S_total * Lambda``, where ``Lambda`` is the
current largest per-susceptible rate over occupied cells; a candidate picks a
uniformly random susceptible and is accepted with probability
``Gamma_cell / Lambda``.

Migration is sampled lazily per individual from the schedule of its current
compartment.  A compartment change invalidates the pending jump through a
per-individual token.
"""

from __future__ import annotations

import heapq
import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig, allocate_counts
from .errors import ConfigError
from .infectivity import InfectivityPath
from .mobility import next_jump

__all__ = [
    "AbmTrajectory",
    "simulate",
    "simulate_homogeneous",
    "total_force",
    "gamma_bar",
    "INFECTION",
    "RECOVERY",
    "MIGRATION",
]

INFECTION, RECOVERY, MIGRATION = 0, 1, 2
_PATH, _BETA, _TICK, _PRM = 3, 4, 5, 6
S_, I_, R_ = 0, 1, 2


@dataclass
class AbmTrajectory:
    """Output of one stochastic run.

    Counts ``S``, ``I``, ``R`` and the normalised force ``Fbar`` and rate
    ``Gamma`` are sampled on the output grid ``t`` (value after all events at
    or before each grid time), with shape ``(len(t), K, L)``.  ``events`` is
    the full log of state changes.
    """

    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    Fbar: np.ndarray
    Gamma: np.ndarray
    N: int
    initial_counts: np.ndarray
    events: dict
    infections: dict
    min_B: np.ndarray
    max_force: float
    meta: dict = field(default_factory=dict)

    @property
    def B(self):
        return self.S + self.I + self.R

    @property
    def K(self):
        return self.S.shape[1]

    @property
    def L(self):
        return self.S.shape[2]

    def fractions(self):
        """``(Sbar, Ibar, Rbar)`` on the output grid."""
        return self.S / self.N, self.I / self.N, self.R / self.N

    def counts_after_events(self):
        """Counts after every logged event, shape ``(n_events + 1, 3, K, L)``; row 0 is the start."""
        ev = self.events
        n = len(ev["t"])
        delta = np.zeros((n + 1, 3, self.K, self.L), dtype=np.int64)
        rows = np.arange(1, n + 1)
        np.add.at(delta, (rows, ev["c_from"], ev["k"], ev["l_from"]), -1)
        np.add.at(delta, (rows, ev["c_to"], ev["k"], ev["l_to"]), 1)
        delta[0] = self.initial_counts
        return np.cumsum(delta, axis=0)

    def rows(self):
        """CSV rows ``(t, k, l, S, I, R, B, Fbar, Gammabar)`` with 1-based k and l."""
        B = self.B
        for i, ti in enumerate(self.t):
            for k in range(self.K):
                for l in range(self.L):
                    yield (ti, k + 1, l + 1, int(self.S[i, k, l]), int(self.I[i, k, l]), int(self.R[i, k, l]),
                           int(B[i, k, l]), self.Fbar[i, k, l], self.Gamma[i, k, l])


def total_force(paths, taus, groups, patches, t, K, L):
    """Force of infection per (group, patch) at time ``t`` from explicit records.

    ``paths[j]`` is the infectivity path of infected record ``j``, infected at
    ``taus[j]`` (0 for initially infected) and currently in ``patches[j]``.
    This direct sum is the reference against which the simulator's
    incremental bookkeeping is tested.
    """
    out = np.zeros((K, L))
    for p, tau, k, l in zip(paths, taus, groups, patches):
        out[k, l] += p.eval(t - tau)
    return out


def gamma_bar(beta_t, Fbar, Bbar, gamma):
    """Per-susceptible infection rate per cell; zero where the cell is empty."""
    drive = np.tensordot(beta_t, Fbar, axes=([2, 3], [0, 1]))
    if gamma == 0:
        return drive
    safe = np.where(Bbar > 0, Bbar, 1.0)
    return np.where(Bbar > 0, drive / safe ** gamma, 0.0)


def default_output_grid(horizon, step=0.05):
    n = int(round(horizon / step))
    return np.arange(n + 1) * (horizon / n)


class _Engine:
    def __init__(self, cfg: ModelConfig, rng, N=None, grid=None, scheme="exact", dt=None, coupling=None):
        if scheme not in ("exact", "euler"):
            raise ConfigError(f"unknown scheme {scheme!r}")
        if scheme == "euler" and not (dt and dt > 0):
            raise ConfigError("euler scheme needs dt > 0")
        self.cfg, self.rng = cfg, rng
        self.N = int(cfg.N if N is None else N)
        self.T = float(cfg.horizon)
        self.K, self.L = cfg.K, cfg.L
        self.gamma = cfg.gamma
        self.scheme, self.dt = scheme, dt
        self.coupling = coupling
        self.grid = default_output_grid(self.T) if grid is None else np.asarray(grid, dtype=float)
        K, L, N = self.K, self.L, self.N

        counts = allocate_counts(cfg, N)
        self.initial_counts = counts.copy()
        self.cnt = counts.astype(np.int64)
        group, comp, patch = [], [], []
        for k in range(K):
            for l in range(L):
                for c in range(3):
                    m = int(counts[c, k, l])
                    group += [k] * m
                    comp += [c] * m
                    patch += [l] * m
        self.group, self.comp, self.patch = group, comp, patch
        self.token = [0] * N
        self.curval = [0.0] * N
        self.path = [None] * N
        self.tau = [math.nan] * N
        self.Fsum = [[0.0] * L for _ in range(K)]
        self.slist = [[[] for _ in range(L)] for _ in range(K)]
        self.spos = [0] * N
        for j in range(N):
            if comp[j] == S_:
                lst = self.slist[group[j]][patch[j]]
                self.spos[j] = len(lst)
                lst.append(j)
        self.heap = []
        self.seq = 0
        self.t = 0.0
        self.log = []
        self.inf_log = []
        self.scheds = [[cfg.mobility.schedule(k, c) for c in "SIR"] for k in range(K)]
        self.beta_segments = [v.reshape(K * L, K * L) for v in cfg.beta.values]
        self.beta_idx = 0
        self.min_B = counts.sum(axis=0).astype(np.int64)
        self.max_force = 0.0
        self.n_candidates = 0
        self.n_events = 0

    # -- scheduling ---------------------------------------------------------
    def push(self, t, kind, j=-1, a=0, b=0.0):
        self.seq += 1
        heapq.heappush(self.heap, (t, self.seq, kind, j, a, b))

    def schedule_migration(self, j):
        c = self.comp[j]
        sched = self.scheds[self.group[j]][c]
        if sched.nu_star == 0.0:
            return
        if c == S_ and self.coupling is not None:
            return  # susceptible moves come from the presampled shared path
        nxt = next_jump(sched, self.patch[j], self.t, self.T, self.rng)
        if nxt is not None:
            self.push(nxt[0], MIGRATION, j, self.token[j], nxt[1])

    def start_path(self, j, path: InfectivityPath, t0):
        self.path[j] = path
        self.tau[j] = t0
        k, l = self.group[j], self.patch[j]
        changes = path.changes()
        for age, val in changes[:-1]:
            if age <= 0.0:
                self.Fsum[k][l] += val - self.curval[j]
                self.curval[j] = val
            elif t0 + age <= self.T:
                self.push(t0 + age, _PATH, j, self.token[j], val)
        rec = t0 + path.eta
        if rec <= self.T:
            self.push(rec, RECOVERY, j, self.token[j])

    # -- state changes ------------------------------------------------------
    def _remove_s(self, j):
        lst = self.slist[self.group[j]][self.patch[j]]
        pos = self.spos[j]
        last = lst.pop()
        if last != j:
            lst[pos] = last
            self.spos[last] = pos

    def _add_s(self, j):
        lst = self.slist[self.group[j]][self.patch[j]]
        self.spos[j] = len(lst)
        lst.append(j)

    def infect(self, j, path=None):
        k, l = self.group[j], self.patch[j]
        self._remove_s(j)
        self.comp[j] = I_
        self.cnt[S_, k, l] -= 1
        self.cnt[I_, k, l] += 1
        self.token[j] += 1
        self.log.append((self.t, INFECTION, k, S_, l, I_, l))
        self.inf_log.append((j, k, self.t, l))
        if path is None:
            path = self.cfg.law_new[k].sample_path(self.rng)
        self.start_path(j, path, self.t)
        self.schedule_migration(j)

    def recover(self, j):
        k, l = self.group[j], self.patch[j]
        self.Fsum[k][l] -= self.curval[j]
        self.curval[j] = 0.0
        self.comp[j] = R_
        self.cnt[I_, k, l] -= 1
        self.cnt[R_, k, l] += 1
        if self.cnt[I_, k, l] == 0:
            self.Fsum[k][l] = 0.0   # no rounding residue in an empty cell
        self.token[j] += 1
        self.log.append((self.t, RECOVERY, k, I_, l, R_, l))
        self.schedule_migration(j)

    def migrate(self, j, dest):
        k, c, l = self.group[j], self.comp[j], self.patch[j]
        if c == S_:
            self._remove_s(j)
        self.patch[j] = dest
        if c == S_:
            self._add_s(j)
        elif c == I_:
            v = self.curval[j]
            self.Fsum[k][l] -= v
            self.Fsum[k][dest] += v
            if self.cnt[I_, k, l] == 1:
                self.Fsum[k][l] = 0.0
        self.cnt[c, k, l] -= 1
        self.cnt[c, k, dest] += 1
        self.log.append((self.t, MIGRATION, k, c, l, c, dest))

    # -- rates ----------------------------------------------------------------
    def rates(self):
        """Per-cell per-susceptible infection rate, flat over (k, l)."""
        N = self.N
        F = np.array(self.Fsum).ravel() / N
        drive = self.beta_segments[self.beta_idx] @ F
        if self.gamma == 0:
            return drive
        B = self.cnt.sum(axis=0).ravel() / N
        return np.where(B > 0, drive / np.where(B > 0, B, 1.0) ** self.gamma, 0.0)

    def snapshot(self, gam):
        return (self.cnt.copy(), np.array(self.Fsum) / self.N, gam.reshape(self.K, self.L).copy())

    # -- main loop --------------------------------------------------------------
    def run(self):
        cfg, rng, T = self.cfg, self.rng, self.T
        wall0 = _time.perf_counter()
        for j in range(self.N):
            if self.comp[j] == I_:
                self.start_path(j, cfg.law_init[self.group[j]].sample_path(rng), 0.0)
        for j in range(self.N):
            self.schedule_migration(j)
        for b in cfg.beta.breakpoints[1:]:
            if b <= T:
                self.push(b, _BETA)
        if self.scheme == "euler":
            n_ticks = int(math.floor(T / self.dt + 1e-9))
            for i in range(n_ticks):
                self.push(i * self.dt, _TICK)
        if self.coupling is not None:
            self.coupling.attach(self)

        grid = self.grid
        gi = 0
        snaps = []
        gam = self.rates()
        self._observe()
        heap = self.heap
        while True:
            t_next = heap[0][0] if heap else math.inf
            t_cand = math.inf
            if self.scheme == "exact":
                t_cand, lam_max, weights = self._candidate(gam)
            t_ev = min(t_next, t_cand)
            if t_ev > T:
                break
            while gi < len(grid) and grid[gi] < t_ev:
                snaps.append(self.snapshot(gam))
                gi += 1
            self.t = t_ev
            if t_cand < t_next:
                self.n_candidates += 1
                if not self._try_candidate(gam, lam_max, weights):
                    continue
            else:
                if not self._dispatch(heapq.heappop(heap), gam):
                    continue
            self.n_events += 1
            gam = self.rates()
            self._observe()
        while gi < len(grid) and grid[gi] <= T + 1e-12:
            snaps.append(self.snapshot(gam))
            gi += 1
        return self._finish(snaps, _time.perf_counter() - wall0)

    def _observe(self):
        B = self.cnt.sum(axis=0)
        np.minimum(self.min_B, B, out=self.min_B)
        f = sum(map(sum, self.Fsum)) / self.N
        if f > self.max_force:
            self.max_force = f

    def _candidate(self, gam):
        """Next candidate time of the infection stream, with its bound and cell weights."""
        if self.coupling is not None:
            return self.coupling.overflow_candidate(self, gam)
        s_cells = self.cnt[S_].ravel()
        occupied = s_cells > 0
        if not occupied.any():
            return math.inf, 0.0, None
        lam_max = float(gam[occupied].max())
        total = float(s_cells.sum()) * lam_max
        if total <= 0:
            return math.inf, 0.0, None
        return self.t + self.rng.exponential(1.0 / total), lam_max, s_cells

    def _try_candidate(self, gam, lam_max, weights):
        if self.coupling is not None:
            return self.coupling.overflow_infect(self, gam, weights)
        rng = self.rng
        cum = np.cumsum(weights)
        cell = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        if rng.random() * lam_max >= gam[cell]:
            return False
        k, l = divmod(cell, self.L)
        lst = self.slist[k][l]
        self.infect(lst[int(rng.random() * len(lst))])
        return True

    def _dispatch(self, ev, gam):
        t, _, kind, j, a, b = ev
        if kind == MIGRATION:
            if a != self.token[j]:
                return False
            self.migrate(j, int(b))
            self.schedule_migration(j)
        elif kind == RECOVERY:
            if a != self.token[j]:
                return False
            self.recover(j)
        elif kind == _PATH:
            if a != self.token[j] or self.comp[j] != I_:
                return False
            k, l = self.group[j], self.patch[j]
            self.Fsum[k][l] += b - self.curval[j]
            self.curval[j] = b
        elif kind == _BETA:
            self.beta_idx = max(i for i, bp in enumerate(self.cfg.beta.breakpoints) if bp <= t)
        elif kind == _TICK:
            return self._euler_tick(gam)
        elif kind == _PRM:
            return self.coupling.prm_point(self, j, a, b, gam)
        return True

    def _euler_tick(self, gam):
        rng, dt = self.rng, self.dt
        infected = []
        for cell in range(self.K * self.L):
            k, l = divmod(cell, self.L)
            lst = self.slist[k][l]
            if not lst or gam[cell] <= 0:
                continue
            m = rng.binomial(len(lst), -math.expm1(-gam[cell] * dt))
            if m:
                picks = rng.choice(len(lst), size=m, replace=False)
                infected += [lst[p] for p in picks]
        for j in infected:
            self.infect(j)
        return bool(infected)

    def _finish(self, snaps, wall):
        K, L = self.K, self.L
        cnts = np.array([s[0] for s in snaps]).reshape(len(snaps), 3, K, L)
        Fb = np.array([s[1] for s in snaps]).reshape(len(snaps), K, L)
        Gm = np.array([s[2] for s in snaps]).reshape(len(snaps), K, L)
        events = _event_dict(np.array(self.log, dtype=float).reshape(-1, 7))
        inf = np.array(self.inf_log, dtype=float).reshape(-1, 4)
        infections = {"j": inf[:, 0].astype(np.int64), "k": inf[:, 1].astype(np.int64),
                      "tau": inf[:, 2], "patch": inf[:, 3].astype(np.int64)}
        return AbmTrajectory(
            t=self.grid[: len(snaps)], S=cnts[:, 0], I=cnts[:, 1], R=cnts[:, 2], Fbar=Fb, Gamma=Gm,
            N=self.N, initial_counts=self.initial_counts, events=events, infections=infections,
            min_B=self.min_B.copy(), max_force=self.max_force,
            meta={"scheme": self.scheme, "n_events": self.n_events, "n_candidates": self.n_candidates,
                  "wall_time": wall, "config_digest": self.cfg.digest},
        )


def simulate(cfg: ModelConfig, rng=None, N=None, grid=None, scheme="exact", dt=None) -> AbmTrajectory:
    """Simulate one realisation of the N-individual model.

    Parameters
    ----------
    cfg : ModelConfig
    rng : numpy Generator or int, optional
        Random stream; an int is used as a seed.  Defaults to ``cfg.seed``.
    N : int, optional
        Population size; defaults to ``cfg.N``.
    grid : array_like, optional
        Output times; default step 0.05 up to the horizon.
    scheme : {"exact", "euler"}
        ``"euler"`` replaces the infection stream by fixed steps of size
        ``dt`` (first-order bias); every other mechanism stays exact.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
    return _Engine(cfg, rng, N, grid, scheme, dt).run()


def simulate_homogeneous(cfg: ModelConfig, rng=None, N=None, grid=None) -> AbmTrajectory:
    """Single-population simulator (``K = L = 1``) with an independent code path.

    The per-susceptible rate is ``beta * Fbar`` with ``beta`` the constant
    contact rate divided by ``B(0)**gamma`` (the population never moves).
    Infection candidates come from a dominating stream of rate
    ``S * beta * (sum of path maxima of active infecteds) / N`` and are
    accepted with the ratio of the current force to that sum.  After every
    event the infected count is checked against its decomposition into
    surviving initial infecteds plus infections minus later recoveries; the
    interval form (active infection intervals counted on the grid) is stored
    in ``meta`` for comparison.
    """
    if cfg.K != 1 or cfg.L != 1:
        raise ConfigError("simulate_homogeneous needs K = L = 1")
    if len(cfg.beta.breakpoints) != 1:
        raise ConfigError("simulate_homogeneous needs a constant contact rate")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
    wall0 = _time.perf_counter()
    N = int(cfg.N if N is None else N)
    T = float(cfg.horizon)
    grid = default_output_grid(T) if grid is None else np.asarray(grid, dtype=float)
    beta = float(cfg.beta.values[0, 0, 0, 0, 0]) / float(cfg.B0[0, 0]) ** cfg.gamma
    counts = allocate_counts(cfg, N)
    S0, I0, R0 = (int(counts[c, 0, 0]) for c in range(3))
    law0, law = cfg.law_init[0], cfg.law_new[0]

    heap = []             # (time, seq, who, new_value, is_end)
    cur, peaks = {}, {}
    st = {"force": 0.0, "peak_sum": 0.0, "S": S0, "I": I0, "R": R0, "rec_init": 0, "rec_new": 0, "seq": 0}
    log = []

    def add_path(who, p, t0):
        peaks[who] = p.peak
        cur[who] = 0.0
        st["peak_sum"] += p.peak
        ch = p.changes()
        if not ch:
            ch = [(0.0, 0.0)]
        for n, (age, val) in enumerate(ch):
            st["seq"] += 1
            heapq.heappush(heap, (t0 + age, st["seq"], who, val, n == len(ch) - 1))

    def apply(t, who, val, end):
        st["force"] += val - cur[who]
        cur[who] = val
        if end:
            st["peak_sum"] -= peaks.pop(who)
            del cur[who]
            st["I"] -= 1
            st["R"] += 1
            st["rec_init" if who < I0 else "rec_new"] += 1
            log.append((t, RECOVERY, 0, I_, 0, R_, 0))
            if st["I"] == 0:
                st["force"] = st["peak_sum"] = 0.0

    eta0 = np.empty(I0)
    for i in range(I0):
        p = law0.sample_path(rng)
        eta0[i] = p.eta
        add_path(i, p, 0.0)
    taus, etas = [], []
    snaps = []
    gi = 0
    t = 0.0
    n_cand = 0
    while True:
        while heap and heap[0][0] <= t:
            ev = heapq.heappop(heap)
            apply(ev[0], ev[2], ev[3], ev[4])
        S, I = st["S"], st["I"]
        if I != (I0 - st["rec_init"]) + len(taus) - st["rec_new"] or S + I + st["R"] != N:
            raise AssertionError(f"infected count decomposition broken at t={t}")
        bound = S * beta * st["peak_sum"] / N
        t_cand = t + rng.exponential(1.0 / bound) if bound > 0 else math.inf
        t_next = heap[0][0] if heap else math.inf
        t_ev = min(t_cand, t_next)
        if t_ev > T:
            break
        while gi < len(grid) and grid[gi] < t_ev:
            snaps.append((S, I, st["R"], st["force"] / N))
            gi += 1
        t = t_ev
        if t_cand < t_next:
            n_cand += 1
            if rng.random() * st["peak_sum"] >= st["force"]:
                continue
            p = law.sample_path(rng)
            who = I0 + len(taus)
            taus.append(t)
            etas.append(p.eta)
            st["S"] -= 1
            st["I"] += 1
            log.append((t, INFECTION, 0, S_, 0, I_, 0))
            add_path(who, p, t)
    while gi < len(grid) and grid[gi] <= T + 1e-12:
        snaps.append((st["S"], st["I"], st["R"], st["force"] / N))
        gi += 1

    arr = np.array(snaps, dtype=float)
    m = len(arr)
    taus_a, etas_a = np.array(taus), np.array(etas)
    tg = grid[:m, None]
    I_int = (eta0[None, :] > tg).sum(1) + ((taus_a[None, :] <= tg) & (tg < taus_a + etas_a)).sum(1)
    R_int = R0 + (eta0[None, :] <= tg).sum(1) + (taus_a + etas_a <= tg).sum(1)
    logarr = np.array(log, dtype=float).reshape(-1, 7)
    col = lambda a: a.reshape(m, 1, 1)
    return AbmTrajectory(
        t=grid[:m], S=col(arr[:, 0].astype(np.int64)), I=col(arr[:, 1].astype(np.int64)),
        R=col(arr[:, 2].astype(np.int64)), Fbar=col(arr[:, 3]), Gamma=col(beta * arr[:, 3]), N=N,
        initial_counts=counts, events=_event_dict(logarr),
        infections={"j": np.arange(I0, I0 + len(taus)), "k": np.zeros(len(taus), dtype=np.int64),
                    "tau": taus_a, "patch": np.zeros(len(taus), dtype=np.int64)},
        min_B=np.array([[N]]), max_force=float(np.max(arr[:, 3], initial=0.0)),
        meta={"scheme": "homogeneous", "n_candidates": n_cand, "n_events": len(log),
              "wall_time": _time.perf_counter() - wall0, "config_digest": cfg.digest,
              "I_interval": I_int, "R_interval": R_int},
    )


def _event_dict(log):
    ints = lambda a: a.astype(np.int64)
    return {"t": log[:, 0], "kind": log[:, 1].astype(np.int8), "k": ints(log[:, 2]),
            "c_from": ints(log[:, 3]), "l_from": ints(log[:, 4]), "c_to": ints(log[:, 5]), "l_to": ints(log[:, 6])}
