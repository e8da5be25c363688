"""Time-inhomogeneous patch migration.

Each ``(group, compartment)`` pair has a :class:`RateSchedule`: off-diagonal
migration rates that are piecewise constant in time.  Patches are indexed
``0..L-1`` internally; the absorbing cemetery state used by the path
constructions is represented by the sentinel :data:`CEMETERY` (``-1``).
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyWarning, ConfigError

__all__ = [
    "CEMETERY",
    "COMPARTMENTS",
    "RateSchedule",
    "Mobility",
    "PatchPath",
    "generator_at",
    "transition_matrix",
    "default_step",
    "sample_patch_path",
    "sample_patch_paths",
]

CEMETERY = -1
COMPARTMENTS = ("S", "I", "R")


@dataclass(frozen=True)
class RateSchedule:
    """Piecewise-constant migration rates for one group and compartment.

    Parameters
    ----------
    breakpoints : sequence of float
        Segment start times, ascending, first entry 0.  Segment ``i`` covers
        ``[breakpoints[i], breakpoints[i+1])``; the last one extends forever.
    rates : array_like, shape (n_segments, L, L)
        Migration rates; the diagonal is ignored and replaced by minus the
        row sum of the off-diagonal entries.
    """

    breakpoints: tuple
    rates: np.ndarray
    generators: np.ndarray = field(init=False, repr=False, compare=False)
    nu_star: float = field(init=False)

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        r = np.array(self.rates, dtype=float)
        if r.ndim == 2:
            r = r[None]
        if r.ndim != 3 or r.shape[1] != r.shape[2]:
            raise ConfigError("rates must have shape (segments, L, L)")
        if len(b) != r.shape[0]:
            raise ConfigError(f"{len(b)} breakpoints for {r.shape[0]} rate matrices")
        if not b or b[0] != 0 or any(y <= x for x, y in zip(b, b[1:])):
            raise ConfigError("breakpoints must start at 0 and increase strictly")
        off = ~np.eye(r.shape[1], dtype=bool)
        if not np.all(np.isfinite(r)) or np.any(r[:, off] < 0):
            raise ConfigError("migration rates must be finite and nonnegative")
        r[:, ~off] = 0.0
        q = r.copy()
        idx = np.arange(r.shape[1])
        q[:, idx, idx] = -r.sum(axis=2)
        r.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "generators", q)
        object.__setattr__(self, "nu_star", float(r.sum(axis=2).max(initial=0.0)))

    @classmethod
    def constant(cls, rates):
        return cls((0.0,), np.asarray(rates, dtype=float)[None])

    @classmethod
    def zero(cls, L):
        return cls((0.0,), np.zeros((1, L, L)))

    @property
    def L(self):
        return self.rates.shape[1]

    @property
    def is_zero(self):
        return self.nu_star == 0.0

    def segment(self, t):
        return max(bisect.bisect_right(self.breakpoints, t) - 1, 0)

    def generator(self, t):
        """Generator at ``t`` (right-continuous; the last segment extends past the horizon)."""
        return self.generators[self.segment(t)]

    def outflow(self, t):
        return -np.diag(self.generators[self.segment(t)])

    def average_generator(self, s, t):
        """``(1/(t-s)) * integral of Q over [s, t]``."""
        if t <= s:
            return self.generator(s)
        acc = np.zeros((self.L, self.L))
        for a, b, i in self.pieces(s, t):
            acc += (b - a) * self.generators[i]
        return acc / (t - s)

    def pieces(self, s, t):
        """``(start, end, segment)`` triples covering ``[s, t]``."""
        out = []
        i = self.segment(s)
        a = s
        while a < t:
            b = self.breakpoints[i + 1] if i + 1 < len(self.breakpoints) else math.inf
            end = min(b, t)
            out.append((a, end, i))
            a = end
            i += 1
        return out

    def outflow_bound(self, T):
        """Largest diagonal outflow per patch over ``[0, T]``."""
        segs = [i for i in range(len(self.breakpoints)) if self.breakpoints[i] <= T]
        return self.rates[segs].sum(axis=2).max(axis=0)

    def to_dict(self):
        return {"breakpoints": list(self.breakpoints), "matrices": self.rates.tolist()}


@dataclass(frozen=True)
class Mobility:
    """Rate schedules indexed by compartment then group."""

    S: tuple
    I: tuple
    R: tuple

    @classmethod
    def uniform(cls, sched_S, sched_I=None, sched_R=None, K=1):
        sched_I = sched_S if sched_I is None else sched_I
        sched_R = sched_S if sched_R is None else sched_R
        return cls((sched_S,) * K, (sched_I,) * K, (sched_R,) * K)

    @classmethod
    def none(cls, K, L):
        z = RateSchedule.zero(L)
        return cls((z,) * K, (z,) * K, (z,) * K)

    def schedule(self, k, compartment):
        return getattr(self, compartment)[k]

    @property
    def nu_star(self):
        return max(s.nu_star for c in COMPARTMENTS for s in getattr(self, c))

    @property
    def breakpoints(self):
        pts = set()
        for c in COMPARTMENTS:
            for s in getattr(self, c):
                pts.update(s.breakpoints)
        return sorted(pts)

    def nu_bar(self, T):
        """Per (k, l): largest diagonal outflow over S/I/R schedules on ``[0, T]``."""
        return np.array([
            np.max([getattr(self, c)[k].outflow_bound(T) for c in COMPARTMENTS], axis=0)
            for k in range(len(self.S))
        ])


def generator_at(mobility: Mobility, k, compartment, t):
    """Generator matrix of group ``k``, ``compartment`` at time ``t``."""
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    return mobility.schedule(k, compartment).generator(t)


def _rk4_constant(Q, dt, nsteps, M):
    # dM/dt = M Q with Q constant: one RK4 step multiplies by a fixed polynomial
    A = dt * Q
    A2 = A @ A
    step = np.eye(len(Q)) + A + A2 / 2 + A2 @ A / 6 + A2 @ A2 / 24
    for _ in range(nsteps):
        M = M @ step
    return M


def default_step(nu):
    """RK4 step for a generator with largest outflow ``nu``: ``min(1e-2, 0.02 / nu)``.

    Keeps ``step * nu <= 0.02`` so the local error stays far below 1e-8 even
    for fast movement.
    """
    return 1e-2 if nu <= 2.0 else 0.02 / nu


def transition_matrix(sched: RateSchedule, s, t, step=None):
    """Transition matrix ``q(s, t)`` of the chain with schedule ``sched``.

    Solves ``dM/dt = M Q(t)`` from ``M(s) = I`` with the classical
    fourth-order Runge-Kutta method.  Steps never straddle a breakpoint; the
    default step is ``min(segment length, default_step(nu_star))``.
    """
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if step is not None and step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    L = sched.L
    M = np.eye(L)
    if s == t or sched.is_zero:
        return M
    for a, b, i in sched.pieces(s, t):
        length = b - a
        h = min(length, default_step(sched.nu_star) if step is None else step)
        n = max(int(math.ceil(length / h - 1e-9)), 1)
        M = _rk4_constant(sched.generators[i], length / n, n, M)
    drift = np.abs(M.sum(axis=1) - 1.0).max()
    if drift > 1e-12:
        warnings.warn(f"transition matrix row sums drifted by {drift:.2e}; renormalised",
                      AccuracyWarning, stacklevel=2)
        M = M / M.sum(axis=1, keepdims=True)
    return np.clip(M, 0.0, 1.0)


@dataclass(frozen=True)
class PatchPath:
    """A right-continuous patch trajectory started at time ``start``."""

    start: float
    start_patch: int
    times: tuple = ()
    patches: tuple = ()

    def at(self, t):
        i = bisect.bisect_right(self.times, t)
        return self.start_patch if i == 0 else self.patches[i - 1]

    def segments(self, horizon):
        """``(a, b, patch)`` triples covering ``[start, horizon]``."""
        edges = (self.start,) + self.times + (horizon,)
        pats = (self.start_patch,) + self.patches
        return [(edges[i], edges[i + 1], pats[i]) for i in range(len(pats)) if edges[i + 1] > edges[i]]


def next_jump(sched: RateSchedule, patch, t, horizon, rng):
    """Time and destination of the next jump after ``t`` by thinning, or ``None``."""
    nu = sched.nu_star
    if nu == 0.0 or patch == CEMETERY:
        return None
    while True:
        t += rng.exponential(1.0 / nu)
        if t >= horizon:
            return None
        rates = sched.rates[sched.segment(t), patch]
        out = rates.sum()
        if out > 0 and rng.random() * nu < out:
            dest = int(np.searchsorted(np.cumsum(rates), rng.random() * out, side="right"))
            return t, min(dest, sched.L - 1)


def sample_patch_path(sched: RateSchedule, start_patch, s, horizon, rng) -> PatchPath:
    """Exact sample of the chain on ``[s, horizon]`` by thinning at rate ``nu_star``."""
    if horizon < s:
        raise ValueError("horizon must be >= s")
    times, patches = [], []
    patch, t = int(start_patch), s
    while True:
        nxt = next_jump(sched, patch, t, horizon, rng)
        if nxt is None:
            break
        t, patch = nxt
        times.append(t)
        patches.append(patch)
    return PatchPath(s, int(start_patch), tuple(times), tuple(patches))


def sample_patch_paths(sched: RateSchedule, start_patches, horizon, rng):
    """Vectorised thinning for many independent paths started at time 0.

    Returns ``(times, patches)`` as lists of arrays, one pair per path.  Used
    by Monte Carlo checks where ``sample_patch_path`` in a Python loop would
    dominate the run time.
    """
    start = np.asarray(start_patches, dtype=int)
    n = len(start)
    nu = sched.nu_star
    times = [[] for _ in range(n)]
    pats = [[] for _ in range(n)]
    if nu == 0.0:
        return [np.empty(0)] * n, [np.empty(0, int)] * n
    cur = start.copy()
    t = np.zeros(n)
    alive = np.flatnonzero(cur != CEMETERY)
    cum = np.cumsum(sched.rates, axis=2)
    bps = np.asarray(sched.breakpoints)
    while alive.size:
        t[alive] += rng.exponential(1.0 / nu, alive.size)
        alive = alive[t[alive] < horizon]
        if not alive.size:
            break
        seg = np.searchsorted(bps, t[alive], side="right") - 1
        rows = cum[seg, cur[alive]]
        out = rows[:, -1]
        u = rng.random(alive.size) * nu
        acc = u < out
        # reuse the uniform below the outflow to choose the destination
        dest = (rows > u[:, None]).argmax(axis=1)
        for j, d in zip(alive[acc], dest[acc]):
            times[j].append(t[j])
            pats[j].append(int(d))
        cur[alive[acc]] = dest[acc]
    return ([np.asarray(x) for x in times], [np.asarray(x, dtype=int) for x in pats])
