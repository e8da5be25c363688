"""Deterministic large-population limit of the epidemic.

The limit is a system of Volterra integral equations in the susceptible,
infected and recovered proportions and the total force of infection, per
group ``k`` and patch ``l``.  All solvers here march forward on a uniform
grid ``t_n = n h``.

Discretisation (shared by every solver so that reductions agree to rounding):

* New infections over ``[t_{n-1}, t_n]`` have mass ``J_n``.  Half of it is
  booked as infected at ``t_{n-1}`` and half at ``t_n`` (trapezoid rule on
  the cumulative infection measure).  The resulting cohorts are transported
  between patches with the infected-mobility step propagator, which gives the
  force of infection and the infected proportions by exact transport.
* Susceptibles follow ``dS/dt = (Q_S^T - diag(Gamma)) S`` with an
  exponential integrator over each step; ``J_n`` is the difference between
  migrating without infection and migrating with it, moved back by half a
  step of susceptible migration so that it is located where the infections
  happened.
* Recovered follow the Crank-Nicolson rule for their migration with the
  recovery flux from the cohorts added.
* Each step is implicit in ``Gamma(t_n)``; it is resolved by fixed-point
  sweeps to a sup change below ``1e-12``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .config import ModelConfig
from .errors import SolverError
from .infectivity import mean_curves
from .mobility import COMPARTMENTS, default_step, transition_matrix

__all__ = [
    "Curves",
    "StepOperators",
    "LimitSolution",
    "make_grid",
    "group_curves",
    "step_operators",
    "solve_homogeneous",
    "solve_homogeneous_config",
    "solve_multipatch",
    "solve_multipatch_gamma0",
    "check_bounds",
    "gamma_from_force",
]

SWEEP_TOL = 1e-12
MAX_SWEEPS = 50


def make_grid(horizon, h):
    """Uniform grid ``0, h, ..., n h`` with ``n = round(horizon / h)``."""
    if not h > 0:
        raise ValueError(f"grid step must be positive, got {h}")
    n = int(round(horizon / h))
    if n < 1 or abs(n * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of step {h}")
    return np.arange(n + 1) * h


def _grid_step(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or grid[0] != 0:
        raise ValueError("grid must be a 1-d array starting at 0")
    h = grid[1] - grid[0]
    if h <= 0 or np.max(np.abs(np.diff(grid) - h)) > 1e-9 * h:
        raise ValueError("grid must be uniform and ascending")
    return float(h), len(grid) - 1


@dataclass
class Curves:
    """Mean infectivity and infected-period CDFs on the lag grid ``j h``.

    Arrays have shape ``(K, n + 1)``.
    """

    lam: np.ndarray
    F: np.ndarray
    lam0: np.ndarray
    F0: np.ndarray
    methods: tuple = ()


def group_curves(cfg: ModelConfig, grid, mc_samples=None) -> Curves:
    """``mean_curves`` for every group's new and initial laws.

    Monte Carlo laws use a sub-seed derived from the config seed, group and
    law role, so the limit is a deterministic function of the config.
    """
    grid = np.asarray(grid, dtype=float)
    out = {"lam": [], "F": [], "lam0": [], "F0": []}
    methods = []
    for k in range(cfg.K):
        for role, law, lk, fk in ((0, cfg.law_new[k], "lam", "F"), (1, cfg.law_init[k], "lam0", "F0")):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919, k, role]))
            mc = mean_curves(law, grid, mc_samples=mc_samples, rng=rng)
            out[lk].append(mc.lam_bar)
            out[fk].append(mc.F)
            methods.append(mc.method)
    return Curves(*(np.array(out[key]) for key in ("lam", "F", "lam0", "F0")), methods=tuple(methods))


@dataclass
class StepOperators:
    """Per-step matrices on a uniform grid; index ``n`` refers to ``[t_{n-1}, t_n]``.

    Attributes
    ----------
    Q : dict
        Step-averaged generators per compartment, shape ``(n+1, K, L, L)``.
    P_I : ndarray
        Infected-mobility transition matrices over each step.
    mig_S : ndarray
        ``expm(h Q_S^T)``, migration-only propagator for susceptibles.
    beta : ndarray
        Contact rates at ``t_n``, shape ``(n+1, K, L, K, L)``.
    """

    h: float
    n: int
    Q: dict
    P_I: np.ndarray
    mig_S: np.ndarray
    beta: np.ndarray
    S_static: np.ndarray
    I_static: bool
    R_static: np.ndarray


def _step_key(sched, a, b):
    pieces = sched.pieces(a, b)
    return pieces[0][2] if len(pieces) == 1 else None


def step_operators(cfg: ModelConfig, grid) -> StepOperators:
    h, n = _grid_step(grid)
    t = np.asarray(grid, dtype=float)
    K, L = cfg.K, cfg.L
    Q = {c: np.zeros((n + 1, K, L, L)) for c in COMPARTMENTS}
    P_I = np.broadcast_to(np.eye(L), (n + 1, K, L, L)).copy()
    mig_S = P_I.copy()
    for k in range(K):
        for c in COMPARTMENTS:
            sched = cfg.mobility.schedule(k, c)
            if sched.is_zero:
                continue
            cache = {}
            for i in range(1, n + 1):
                key = _step_key(sched, t[i - 1], t[i])
                if key is not None and key in cache:
                    Q[c][i, k], extra = cache[key]
                else:
                    q = sched.average_generator(t[i - 1], t[i]) if key is None else sched.generators[key]
                    if c == "I":
                        extra = (transition_matrix(sched, t[i - 1], t[i]) if key is None
                                 else _exact_step(q, h, default_step(sched.nu_star)))
                    elif c == "S":
                        extra = expm(h * q.T)
                    else:
                        extra = None
                    Q[c][i, k] = q
                    if key is not None:
                        cache[key] = (q, extra)
                if c == "I":
                    P_I[i, k] = extra
                elif c == "S":
                    mig_S[i, k] = extra
    beta = np.stack([cfg.beta.at(ti) for ti in t])
    S_static = np.array([cfg.mobility.schedule(k, "S").is_zero for k in range(K)])
    I_static = all(cfg.mobility.schedule(k, "I").is_zero for k in range(K))
    R_static = np.array([cfg.mobility.schedule(k, "R").is_zero for k in range(K)])
    return StepOperators(h, n, Q, P_I, mig_S, beta, S_static, I_static, R_static)


def _exact_step(q, h, sub):
    # constant generator over the whole step: the RK4 polynomial on sub-steps of
    # at most ``sub``, identical to mobility.transition_matrix for this case
    L = len(q)
    m = max(int(math.ceil(h / sub - 1e-9)), 1)
    A = (h / m) * q
    A2 = A @ A
    step = np.eye(L) + A + A2 / 2 + A2 @ A / 6 + A2 @ A2 / 24
    return np.linalg.matrix_power(step, m)


def gamma_from_force(beta_t, force, B, gamma):
    """Per-susceptible infection rate ``B^-gamma * sum beta * force``; 0 where ``B == 0``."""
    drive = np.tensordot(beta_t, force, axes=([2, 3], [0, 1]))
    if gamma == 0:
        return drive
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(B > 0, drive / np.where(B > 0, B, 1.0) ** gamma, 0.0)
    return out


@dataclass
class LimitSolution:
    """Grid functions of the limit system, each of shape ``(n + 1, K, L)``."""

    t: np.ndarray
    S: np.ndarray
    F: np.ndarray
    I: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def B(self):
        return self.S + self.I + self.R

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    @property
    def K(self):
        return self.S.shape[1]

    @property
    def L(self):
        return self.S.shape[2]

    def sample(self, times, name):
        """Linear interpolation of one field at ``times``; shape ``(len(times), K, L)``."""
        arr = getattr(self, name)
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.searchsorted(self.t, times, side="right") - 1, 0, len(self.t) - 2)
        w = ((times - self.t[idx]) / self.h)[:, None, None]
        return arr[idx] * (1 - w) + arr[idx + 1] * w

    def on_grid(self, times):
        """Restriction to a coarser grid whose points are solver grid points."""
        times = np.asarray(times, dtype=float)
        idx = np.rint(times / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= len(self.t)) or np.max(np.abs(self.t[idx] - times), initial=0) > 1e-9:
            raise ValueError("output grid is not a subset of the solver grid")
        return LimitSolution(self.t[idx], self.S[idx], self.F[idx], self.I[idx], self.R[idx],
                             self.Gamma[idx], dict(self.meta))

    def rows(self):
        """CSV rows ``(t, k, l, Sbar, Fbar, Ibar, Rbar, Bbar, Gammabar)``, 1-based k and l."""
        B = self.B
        for i, ti in enumerate(self.t):
            for k in range(self.K):
                for l in range(self.L):
                    yield (ti, k + 1, l + 1, self.S[i, k, l], self.F[i, k, l], self.I[i, k, l],
                           self.R[i, k, l], B[i, k, l], self.Gamma[i, k, l])


def _floor(cfg, t):
    nu_bar = cfg.mobility.nu_bar(cfg.horizon)
    return cfg.B0 * np.exp(-nu_bar * t)


def _s_step(S_prev, avg, ops, i, h):
    """Exponential-integrator step for susceptibles; returns ``(S_i, J_i)``."""
    S_new = np.empty_like(S_prev)
    J = np.empty_like(S_prev)
    for k in range(S_prev.shape[0]):
        if ops.S_static[k]:
            S_new[k] = S_prev[k] * np.exp(-h * avg[k])
            J[k] = S_prev[k] - S_new[k]
        else:
            E = expm(h * (ops.Q["S"][i, k].T - np.diag(avg[k])))
            S_new[k] = E @ S_prev[k]
            y = ops.mig_S[i, k] @ S_prev[k] - S_new[k]
            # y sits where the infected would be at t_i had they kept moving as
            # susceptibles; undo the mean half step of that movement
            J[k] = y - 0.5 * h * (ops.Q["S"][i, k].T @ y)
    return S_new, J


def _r_step(R_prev, rec, ops, i, h):
    """Crank-Nicolson step for recovered with inflow ``rec``."""
    out = R_prev + rec
    for k in range(R_prev.shape[0]):
        if not ops.R_static[k]:
            A = 0.5 * h * ops.Q["R"][i, k].T
            eye = np.eye(len(A))
            out[k] = np.linalg.solve(eye - A, (eye + A) @ R_prev[k] + rec[k])
    return out


class _Marcher:
    """Forward march of the full system, optionally with a prescribed force.

    With ``force`` given, ``Gamma`` is computed from it instead of from the
    transported cohorts, and the cohort force is returned as ``G``.  This is
    the map whose fixed point the McKean-Vlasov module looks for.
    """

    def __init__(self, cfg, grid, curves=None, ops=None):
        self.cfg = cfg
        self.grid = np.asarray(grid, dtype=float)
        self.h, self.n = _grid_step(self.grid)
        self.curves = curves if curves is not None else group_curves(cfg, self.grid)
        self.ops = ops if ops is not None else step_operators(cfg, self.grid)

    def run(self, force=None, guess=None):
        cfg, ops, c = self.cfg, self.ops, self.curves
        K, L, n, h, gam = cfg.K, cfg.L, self.n, self.h, cfg.gamma
        S = np.zeros((n + 1, K, L))
        I, R, F, G, Gam, J = (np.zeros_like(S) for _ in range(6))
        S[0], I[0], R[0] = cfg.S0, cfg.I0, cfg.R0
        G[0] = c.lam0[:, 0:1] * cfg.I0
        F[0] = G[0] if force is None else force[0]
        Gam[0] = gamma_from_force(ops.beta[0], F[0], S[0] + I[0] + R[0], gam)
        lam, Fcdf = c.lam, c.F
        Fc, Fc0, dF = 1.0 - c.F, 1.0 - c.F0, np.diff(c.F, axis=1)
        coh = np.zeros((K, n + 1, L))   # cohort m = mass booked at t_m, located at the current time
        p0 = np.array(cfg.I0, dtype=float)
        floor = 0.5 * _floor(cfg, self.grid[:, None, None])
        sweeps_used = 0
        for i in range(1, n + 1):
            P = ops.P_I[i]
            lag_dF = dF[:, i - 1::-1]                       # cohorts 0..i-1 age by one step
            rec = 0.5 * np.einsum("km,kml->kl", lag_dF, coh[:, :i])
            if not ops.I_static:
                coh[:, :i] = coh[:, :i] @ P
                p0_new = np.einsum("kl,klj->kj", p0, P)
            else:
                p0_new = p0
            rec += 0.5 * np.einsum("km,kml->kl", lag_dF, coh[:, :i])
            F0_prev = c.F0[:, i - 1:i] if i > 1 else 0.0
            rec += 0.5 * (p0 + p0_new) * (c.F0[:, i:i + 1] - F0_prev)
            p0 = p0_new
            G_base = np.einsum("km,kml->kl", lam[:, i:0:-1], coh[:, :i]) + c.lam0[:, i:i + 1] * p0
            I_base = np.einsum("km,kml->kl", Fc[:, i:0:-1], coh[:, :i]) + Fc0[:, i:i + 1] * p0

            beta_i = ops.beta[i]
            if guess is None:
                Gam_i = Gam[i - 1]
            else:
                Gam_i = gamma_from_force(beta_i, guess[i], S[i - 1] + I[i - 1] + R[i - 1], gam)
            G_prev = None
            for sweep in range(MAX_SWEEPS):
                S_i, J_i = _s_step(S[i - 1], 0.5 * (Gam[i - 1] + Gam_i), ops, i, h)
                JP = J_i if ops.I_static else np.einsum("kl,klj->kj", J_i, P)
                G_i = G_base + 0.5 * (lam[:, 1:2] * JP + lam[:, 0:1] * J_i)
                I_i = I_base + 0.5 * (Fc[:, 1:2] * JP + Fc[:, 0:1] * J_i)
                rec_i = rec + Fcdf[:, 0:1] * J_i + 0.25 * dF[:, 0:1] * (J_i + JP)
                R_i = _r_step(R[i - 1], rec_i, ops, i, h)
                B_i = S_i + I_i + R_i
                new = gamma_from_force(beta_i, G_i if force is None else force[i], B_i, gam)
                change = np.max(np.abs(new - Gam_i))
                if G_prev is not None:
                    change = max(change, np.max(np.abs(G_i - G_prev)))
                Gam_i, G_prev = new, G_i
                if change < SWEEP_TOL and sweep > 0:
                    break
            else:
                raise SolverError(f"step {i} (t={self.grid[i]:.6g}) did not converge in "
                                  f"{MAX_SWEEPS} sweeps", step=i, residual=float(change))
            sweeps_used = max(sweeps_used, sweep + 1)
            if np.any(B_i < floor[i]):
                k, l = np.unravel_index(np.argmin(B_i - floor[i]), B_i.shape)
                raise SolverError(f"Bbar[{k + 1},{l + 1}] = {B_i[k, l]:.3e} crossed the lower bound "
                                  f"at step {i}", step=i, residual=float(floor[i][k, l] - B_i[k, l]))
            S[i], I[i], R[i], G[i], J[i], Gam[i] = S_i, I_i, R_i, G_i, J_i, Gam_i
            F[i] = G_i if force is None else force[i]
            coh[:, i - 1] += 0.5 * JP
            coh[:, i] = 0.5 * J_i
        return dict(S=S, I=I, R=R, F=F, G=G, Gamma=Gam, J=J, sweeps=sweeps_used)


def _default_grid(cfg, grid):
    return make_grid(cfg.horizon, cfg.grid_step) if grid is None else np.asarray(grid, dtype=float)


def solve_multipatch(cfg: ModelConfig, grid=None, curves=None, initial_force=None) -> LimitSolution:
    """Solve the full limit system on ``grid`` (default: ``cfg.grid_step`` up to ``cfg.horizon``).

    ``initial_force`` seeds each step's fixed-point sweep; the converged
    result does not depend on it beyond the sweep tolerance.
    """
    grid = _default_grid(cfg, grid)
    m = _Marcher(cfg, grid, curves)
    out = m.run(guess=initial_force)
    return LimitSolution(grid, out["S"], out["F"], out["I"], out["R"], out["Gamma"],
                         {"solver": "multipatch", "h": m.h, "max_sweeps": out["sweeps"],
                          "curves": m.curves.methods})


def solve_multipatch_gamma0(cfg: ModelConfig, grid=None, curves=None) -> LimitSolution:
    """Solver for ``gamma = 0``, where susceptibles and force form a closed system.

    The pair ``(S, F)`` is marched on its own; infected and recovered
    proportions are reconstructed afterwards from the infection flux.
    """
    if cfg.gamma != 0:
        raise ValueError(f"solve_multipatch_gamma0 needs gamma = 0, got {cfg.gamma}")
    grid = _default_grid(cfg, grid)
    h, n = _grid_step(grid)
    c = group_curves(cfg, grid) if curves is None else curves
    ops = step_operators(cfg, grid)
    K, L = cfg.K, cfg.L
    S = np.zeros((n + 1, K, L))
    F = np.zeros_like(S)
    J = np.zeros_like(S)
    S[0] = cfg.S0
    F[0] = c.lam0[:, :1] * cfg.I0
    drive = lambda i, f: np.tensordot(ops.beta[i], f, axes=([2, 3], [0, 1]))
    where = np.zeros((K, n + 1, L))      # half-cohorts, transported to the current time
    init_loc = np.array(cfg.I0, dtype=float)
    for i in range(1, n + 1):
        for k in range(K):
            P = ops.P_I[i, k]
            where[k, :i] = where[k, :i] @ P
            init_loc[k] = init_loc[k] @ P
        hist = np.array([c.lam[k, i:0:-1] @ where[k, :i] for k in range(K)]) + c.lam0[:, i:i + 1] * init_loc
        f = F[i - 1].copy()
        g_prev = drive(i - 1, F[i - 1])
        for sweep in range(MAX_SWEEPS):
            rate = 0.5 * (g_prev + drive(i, f))
            s_new = np.empty((K, L))
            flux = np.empty((K, L))
            for k in range(K):
                if ops.S_static[k]:
                    s_new[k] = S[i - 1, k] * np.exp(-h * rate[k])
                    flux[k] = S[i - 1, k] - s_new[k]
                else:
                    s_new[k] = expm(h * (ops.Q["S"][i, k].T - np.diag(rate[k]))) @ S[i - 1, k]
                    y = ops.mig_S[i, k] @ S[i - 1, k] - s_new[k]
                    flux[k] = y - 0.5 * h * (ops.Q["S"][i, k].T @ y)
            moved = np.array([flux[k] @ ops.P_I[i, k] for k in range(K)])
            f_new = hist + 0.5 * (c.lam[:, 1:2] * moved + c.lam[:, 0:1] * flux)
            change = np.max(np.abs(f_new - f))
            f = f_new
            if change < SWEEP_TOL:
                break
        else:
            raise SolverError(f"gamma0 step {i} did not converge", step=i, residual=float(change))
        S[i], F[i], J[i] = s_new, f, flux
        for k in range(K):
            where[k, i - 1] += 0.5 * moved[k]
            where[k, i] = 0.5 * flux[k]
    I, R = _reconstruct_IR(cfg, c, ops, J, h, n)
    Gam = np.stack([drive(i, F[i]) for i in range(n + 1)])
    return LimitSolution(grid, S, F, I, R, Gam, {"solver": "gamma0", "h": h})


def _reconstruct_IR(cfg, c, ops, J, h, n):
    """Infected and recovered proportions from the infection flux ``J``."""
    K, L = cfg.K, cfg.L
    I = np.zeros((n + 1, K, L))
    R = np.zeros_like(I)
    I[0], R[0] = cfg.I0, cfg.R0
    for k in range(K):
        cohorts = np.zeros((n + 1, L))
        init_loc = np.array(cfg.I0[k], dtype=float)
        for i in range(1, n + 1):
            P = ops.P_I[i, k]
            before = cohorts[:i].copy()
            cohorts[:i] = cohorts[:i] @ P
            loc_new = init_loc @ P
            dF_lag = c.F[k, i:0:-1] - c.F[k, i - 1::-1]
            rec = 0.5 * dF_lag @ (before + cohorts[:i])
            F0_prev = c.F0[k, i - 1] if i > 1 else 0.0
            rec += 0.5 * (init_loc + loc_new) * (c.F0[k, i] - F0_prev)
            init_loc = loc_new
            moved = J[i, k] @ P
            rec += c.F[k, 0] * J[i, k] + 0.25 * (c.F[k, 1] - c.F[k, 0]) * (J[i, k] + moved)
            cohorts[i - 1] += 0.5 * moved
            cohorts[i] = 0.5 * J[i, k]
            I[i, k] = (1.0 - c.F[k, i::-1]) @ cohorts[:i + 1] + (1.0 - c.F0[k, i]) * init_loc
            if ops.R_static[k]:
                R[i, k] = R[i - 1, k] + rec
            else:
                A = 0.5 * h * ops.Q["R"][i, k].T
                eye = np.eye(L)
                R[i, k] = np.linalg.solve(eye - A, (eye + A) @ R[i - 1, k] + rec)
    return I, R


def solve_homogeneous(lam, F, lam0, F0, S0, I0, R0=0.0, h=1e-3, beta=1.0):
    """Single-population limit with per-susceptible infection rate ``beta * F``.

    Parameters
    ----------
    lam, F, lam0, F0 : ndarray
        Mean infectivity and infected-period CDF of new and initial infecteds
        on the lag grid ``j h``, ``j = 0..n``.
    S0, I0, R0 : float
        Initial proportions.
    h : float
        Grid step.

    Returns
    -------
    LimitSolution
        With ``K = L = 1``.
    """
    if not h > 0:
        raise ValueError(f"grid step must be positive, got {h}")
    lam, F, lam0, F0 = (np.asarray(a, dtype=float) for a in (lam, F, lam0, F0))
    n = len(lam) - 1
    w_lam = 0.5 * (lam[1:] + lam[:-1])
    S = np.zeros(n + 1)
    Fo = np.zeros(n + 1)
    J = np.zeros(n + 1)
    S[0], Fo[0] = S0, I0 * lam0[0]
    sweeps_used = 0
    for i in range(1, n + 1):
        base = I0 * lam0[i] + (J[1:i] @ w_lam[i - 1:0:-1] if i > 1 else 0.0)
        f = Fo[i - 1]
        for sweep in range(MAX_SWEEPS):
            s = S[i - 1] * np.exp(-h * 0.5 * (beta * Fo[i - 1] + beta * f))
            j = S[i - 1] - s
            f_new = base + j * w_lam[0]
            change = abs(f_new - f)
            f = f_new
            if change < SWEEP_TOL and sweep > 0:
                break
        else:
            raise SolverError(f"step {i} did not converge", step=i, residual=float(change))
        sweeps_used = max(sweeps_used, sweep + 1)
        S[i], Fo[i], J[i] = s, f, j
    wFc = 0.5 * ((1 - F[1:]) + (1 - F[:-1]))
    wF = 0.5 * (F[1:] + F[:-1])
    conv_c = np.convolve(J[1:], wFc)[:n]
    conv_f = np.convolve(J[1:], wF)[:n]
    I = np.empty(n + 1)
    R = np.empty(n + 1)
    I[0], R[0] = I0, R0
    I[1:] = I0 * (1 - F0[1:]) + conv_c
    R[1:] = R0 + I0 * F0[1:] + conv_f
    t = np.arange(n + 1) * h
    res = _homogeneous_residual(t, S, Fo, lam, lam0, S0, I0, beta)
    shape = lambda a: a.reshape(n + 1, 1, 1)
    return LimitSolution(t, shape(S), shape(Fo), shape(I), shape(R), shape(beta * Fo),
                         {"solver": "homogeneous", "h": h, "max_sweeps": sweeps_used, "residual": res})


def _homogeneous_residual(t, S, Fo, lam, lam0, S0, I0, beta):
    """Sup residual of the two integral equations under independent trapezoid quadrature."""
    h = t[1] - t[0]
    flux = beta * S * Fo
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (flux[1:] + flux[:-1]))])
    res_S = np.max(np.abs(S - (S0 - cum)))
    conv = np.convolve(flux, lam)[:len(t)] * h - 0.5 * h * (lam[: len(t)] * flux[0] + lam[0] * flux)
    res_F = np.max(np.abs(Fo - I0 * lam0 - conv))
    return {"S": float(res_S), "F": float(res_F)}


def solve_homogeneous_config(cfg: ModelConfig, grid=None, curves=None) -> LimitSolution:
    """:func:`solve_homogeneous` for a ``K = L = 1`` config with constant contact rate."""
    if cfg.K != 1 or cfg.L != 1:
        raise ValueError("homogeneous solver needs K = L = 1")
    if len(cfg.beta.breakpoints) != 1:
        raise ValueError("homogeneous solver needs a constant contact rate")
    grid = _default_grid(cfg, grid)
    h, n = _grid_step(grid)
    c = group_curves(cfg, grid) if curves is None else curves
    beta = float(cfg.beta.values[0, 0, 0, 0, 0]) / float(cfg.B0[0, 0]) ** cfg.gamma
    return solve_homogeneous(c.lam[0], c.F[0], c.lam0[0], c.F0[0], float(cfg.S0[0, 0]),
                             float(cfg.I0[0, 0]), float(cfg.R0[0, 0]), h, beta)


@dataclass
class BoundsReport:
    """Worst margins of the analytic bounds; negative margins are violations."""

    force_margin: float
    floor_margin: float
    floor_ct: float
    mass_error: float
    tol: float = 1e-9

    @property
    def force_ok(self):
        return self.force_margin >= -self.tol

    @property
    def floor_ok(self):
        return self.floor_margin >= -self.tol

    @property
    def ok(self):
        return self.force_ok and self.floor_ok and self.mass_error <= self.tol

    def lines(self):
        return [f"force bound margin {self.force_margin:.6g} ({'ok' if self.force_ok else 'VIOLATED'})",
                f"B floor margin {self.floor_margin:.6g} ({'ok' if self.floor_ok else 'VIOLATED'})",
                f"C*_T {self.floor_ct:.6g}",
                f"mass error {self.mass_error:.3e}"]


def force_bound(lambda_star, beta_star, K, L, t):
    """Upper bound on the total limit force at time ``t``."""
    return lambda_star * L * K * np.exp(lambda_star * beta_star * L * K * np.asarray(t, dtype=float))


def b_floor(B0, nu_bar, t):
    """Lower bound ``B0 exp(-nu_bar t)`` on each group-patch population."""
    return np.asarray(B0) * np.exp(-np.asarray(nu_bar) * t)


def check_bounds(sol: LimitSolution, cfg: ModelConfig, tol=1e-9) -> BoundsReport:
    """Check the force growth bound and the population floor pointwise."""
    total = sol.F.sum(axis=(1, 2))
    fb = force_bound(cfg.lambda_star, cfg.beta.beta_star, cfg.K, cfg.L, sol.t)
    nu_bar = cfg.mobility.nu_bar(cfg.horizon)
    floor = b_floor(cfg.B0, nu_bar, sol.t[:, None, None])
    ct = 0.5 * float(np.min(b_floor(cfg.B0, nu_bar, cfg.horizon)))
    mass = float(np.max(np.abs(sol.B.sum(axis=(1, 2)) - 1.0)))
    return BoundsReport(float(np.min(fb - total)), float(np.min(sol.B - floor)), ct, mass, tol)
