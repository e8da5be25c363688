"""Backward equation and path representation of the susceptible fractions.

For a group ``k``, terminal time ``t`` and patch ``l`` the vector
``u(s) = u_{k,t,l}(s)`` solves ``du/ds = D(s) u - Q(s) u`` on ``[0, t]``
with ``u(t) = e_l``, where ``D`` is the diagonal of ``Gamma_bar_k`` and ``Q``
the susceptible movement generator.  Its entries are discounted transition
probabilities ``E[1{X(t)=l} exp(-int_s^t Gamma^{X(r)}(r) dr) | X(s)=l']``
and, since the forward susceptible equation is ``dS/ds = (Q^T - D) S``,
``<S(s), u(s)>`` is constant in ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .limit import LimitSolution
from .mobility import CEMETERY, RateSchedule, sample_patch_paths

__all__ = [
    "BackwardSolution",
    "solve_backward",
    "duality_residual",
    "adjoint_gap",
    "fk_estimate",
    "RepresentationRow",
    "s_representation_check",
]


@dataclass
class BackwardSolution:
    """``u[i, l']`` on the grid ``s[i]`` from 0 to ``t``."""

    k: int
    t: float
    l: int
    s: np.ndarray
    u: np.ndarray


def _gamma_interp(times, gamma):
    """Linear interpolant of ``gamma`` (shape ``(n + 1, L)``) on ``times``."""
    h = times[1] - times[0]
    n = len(times) - 1

    def at(s):
        i = min(max(int(math.floor(s / h + 1e-12)), 0), n - 1)
        w = (s - times[i]) / h
        return gamma[i] * (1 - w) + gamma[i + 1] * w

    return at


def solve_backward(times, gamma_k, sched: RateSchedule, t, l, step=None) -> BackwardSolution:
    """Integrate the backward system from ``u(t) = e_l`` down to 0 with classical RK4.

    Parameters
    ----------
    times, gamma_k : array_like
        Uniform grid and ``Gamma_bar_k`` on it, shape ``(n + 1, L)``; linearly
        interpolated in between.
    sched : RateSchedule
        Susceptible movement rates of group ``k``.
    t : float
        Terminal time, ``0 < t <= times[-1]``.
    step : float, optional
        Integration step; defaults to the grid step.  The returned grid has
        step ``t / ceil(t / step)``.
    """
    times = np.asarray(times, dtype=float)
    gamma_k = np.asarray(gamma_k, dtype=float)
    step = float(times[1] - times[0]) if step is None else float(step)
    if step <= 0:
        raise ValueError("step must be positive")
    if not 0 < t <= times[-1] + 1e-12:
        raise ValueError(f"terminal time {t} outside (0, {times[-1]}]")
    n = max(1, int(math.ceil(t / step - 1e-9)))
    h = t / n
    s = np.linspace(0.0, t, n + 1)
    L = gamma_k.shape[1]
    g = _gamma_interp(times, gamma_k)
    # right-continuous generator, evaluated just left of the stage time when
    # the stage sits on a breakpoint approached from above
    eps = 1e-12 * max(1.0, t)

    def rhs(r, u, side):
        Q = sched.generator(max(r - eps, 0.0) if side < 0 else r)
        return g(r) * u - Q @ u

    u = np.zeros((n + 1, L))
    u[n, l] = 1.0
    cur = u[n].copy()
    for i in range(n, 0, -1):
        r = s[i]
        # stepping backwards: ds = -h; stages lie in (s[i-1], s[i])
        k1 = rhs(r, cur, -1)
        k2 = rhs(r - h / 2, cur - h / 2 * k1, 0)
        k3 = rhs(r - h / 2, cur - h / 2 * k2, 0)
        k4 = rhs(s[i - 1], cur - h * k3, 1)
        cur = cur - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        u[i - 1] = cur
    return BackwardSolution(-1, float(t), int(l), s, u)


def duality_residual(S_k, backward: BackwardSolution, times=None):
    """Largest discrete derivative of ``<S_k(s), u(s)>`` along the backward grid.

    ``S_k`` has shape ``(m, L)`` on ``times`` (defaults to the backward grid);
    the backward grid must be the leading part of ``times``.
    """
    S_k = np.asarray(S_k, dtype=float)
    s = backward.s
    if times is None:
        times = s
    times = np.asarray(times, dtype=float)
    if len(times) < len(s) or np.max(np.abs(times[: len(s)] - s)) > 1e-9 or S_k.shape[1] != backward.u.shape[1]:
        raise ValueError("S grid does not match the backward grid")
    inner = np.einsum("il,il->i", S_k[: len(s)], backward.u)
    return float(np.max(np.abs(np.diff(inner)) / np.diff(s)))


def adjoint_gap(sol: LimitSolution, k, backward: BackwardSolution):
    """``<S_k(0), u(0)> - S^l_k(t)``."""
    i = int(round(backward.t / sol.h))
    return float(sol.S[0, k] @ backward.u[0] - sol.S[i, k, backward.l])


def _cum_gamma(sol: LimitSolution, k):
    """Exact integral of the linear interpolant of ``Gamma_bar_k`` from 0, as a vectorised function of (patch, t)."""
    G = sol.Gamma[:, k, :]
    h = sol.h
    C = np.vstack([np.zeros((1, G.shape[1])), np.cumsum(0.5 * h * (G[1:] + G[:-1]), axis=0)])
    n = len(sol.t) - 1

    def at(patch, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.floor(t / h + 1e-12).astype(int), 0, n - 1)
        w = (t - sol.t[i]) / h
        g0, g1 = G[i, patch], G[i + 1, patch]
        return C[i, patch] + h * (g0 * w + 0.5 * (g1 - g0) * w * w)

    return at


def _segments(start, jt, jp, T):
    """Flatten per-path jump lists into ``(owner, a, b, patch)`` arrays."""
    owners, a, b, p = [], [], [], []
    for j, (times, pats) in enumerate(zip(jt, jp)):
        edges = np.concatenate([[0.0], times, [T]])
        pp = np.concatenate([[start[j]], pats]).astype(int)
        owners.append(np.full(len(pp), j))
        a.append(edges[:-1])
        b.append(edges[1:])
        p.append(pp)
    return np.concatenate(owners), np.concatenate(a), np.concatenate(b), np.concatenate(p)


def _discounted(sol, k, start, jt, jp, checkpoints):
    """Per-path ``(patch at t, exp(-int_0^t Gamma))`` for each checkpoint ``t``."""
    n = len(start)
    T = float(sol.t[-1])
    own, a, b, p = _segments(start, jt, jp, T)
    live = p != CEMETERY
    cum = _cum_gamma(sol, k)
    pos, disc = [], []
    for t in checkpoints:
        lo, hi = np.minimum(a, t), np.minimum(b, t)
        integ = np.zeros(n)
        m = live & (hi > lo)
        np.add.at(integ, own[m], cum(p[m], hi[m]) - cum(p[m], lo[m]))
        at_t = (a <= t) & ((b > t) | (b >= T))
        where = np.full(n, CEMETERY)
        where[own[at_t]] = p[at_t]
        pos.append(where)
        disc.append(np.exp(-integ))
    return np.array(pos), np.array(disc)


def fk_estimate(sol: LimitSolution, sched: RateSchedule, k, t, l, start, n, rng):
    """Monte Carlo estimate of ``u_{k,t,l}(0)[start]`` from ``n`` paths started in ``start``.

    Returns ``(mean, standard error)``.
    """
    jt, jp = sample_patch_paths(sched, np.full(n, start), float(sol.t[-1]), rng)
    pos, disc = _discounted(sol, k, np.full(n, start), jt, jp, [t])
    x = np.where(pos[0] == l, disc[0], 0.0)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n))


@dataclass
class RepresentationRow:
    k: int
    l: int
    t: float
    deterministic: float
    mc_estimate: float
    stderr: float

    @property
    def zscore(self):
        d = self.mc_estimate - self.deterministic
        return d / self.stderr if self.stderr > 0 else (0.0 if d == 0 else math.copysign(math.inf, d))

    def row(self):
        return (self.k + 1, self.l + 1, self.t, self.deterministic, self.mc_estimate, self.stderr, self.zscore)


def s_representation_check(sol: LimitSolution, cfg: ModelConfig, mc_paths=100_000, rng=None,
                           times=(2.0, 5.0, 10.0), initial_weight=False):
    """Compare ``Sbar^l_k(t)`` with its path representation, per (k, l, t).

    Paths start in patch ``l`` with probability ``Sbar^l_k(0)`` and in the
    cemetery otherwise, move with the susceptible rates, and contribute
    ``1{X(t)=l} exp(-int_0^t Gamma^{X(s)}_k(s) ds)``.  With
    ``initial_weight=True`` each path is further weighted by
    ``Sbar^{X(0)}_k(0)``; that variant is biased and is kept only as a
    negative control.
    """
    if mc_paths < 10_000:
        raise ValueError("mc_paths must be at least 1e4")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
    times = [float(t) for t in times if t <= sol.t[-1] + 1e-12]
    rows = []
    for k in range(cfg.K):
        p = np.append(np.clip(sol.S[0, k], 0, None), 0.0)
        p[-1] = max(0.0, 1.0 - p[:-1].sum())
        picks = rng.choice(len(p), size=mc_paths, p=p / p.sum())
        start = np.where(picks == cfg.L, CEMETERY, picks)
        jt, jp = sample_patch_paths(cfg.mobility.schedule(k, "S"), start, float(sol.t[-1]), rng)
        pos, disc = _discounted(sol, k, start, jt, jp, times)
        w = np.where(start == CEMETERY, 0.0, sol.S[0, k][np.where(start == CEMETERY, 0, start)]) \
            if initial_weight else 1.0
        det = sol.sample(times, "S")[:, k, :]
        for i, t in enumerate(times):
            for l in range(cfg.L):
                x = np.where(pos[i] == l, disc[i], 0.0) * w
                rows.append(RepresentationRow(k, l, t, float(det[i, l]), float(x.mean()),
                                              float(x.std(ddof=1) / math.sqrt(mc_paths))))
    return rows
