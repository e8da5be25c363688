"""Random infection-age dependent infectivity functions.

An infected individual carries a random step function ``lambda(a)`` of its
infection age ``a``, bounded by a cap ``lambda_star`` and vanishing for
``a < 0`` and after its infected period ``eta``.  Paths are stored by their
breakpoints, so evaluating one at an arbitrary age costs ``O(log m)``.

The limit equations only need two deterministic summaries of a law: the
mean infectivity ``lam_bar(a) = E[lambda(a)]`` and the distribution function
``F(a) = P(eta <= a)``.  :func:`mean_curves` returns both, in closed form when
the law allows it and by Monte Carlo otherwise.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ConfigError

__all__ = [
    "Duration",
    "InfectivityPath",
    "InfectivityLaw",
    "ConstantPlateau",
    "DelayedPlateau",
    "PiecewiseTable",
    "DeterministicLaw",
    "MeanCurves",
    "sample_path",
    "mean_curves",
    "law_from_dict",
]

DEFAULT_MC_SAMPLES = 100_000


@dataclass(frozen=True)
class Duration:
    """A nonnegative random variable used for durations and segment values.

    ``kind`` is one of ``"exponential"`` (``rate``), ``"gamma"`` (``shape``,
    ``scale``), ``"deterministic"`` (``value``) or ``"uniform"`` (``low``,
    ``high``).
    """

    kind: str
    params: tuple = ()

    _NAMES = {
        "exponential": ("rate",),
        "gamma": ("shape", "scale"),
        "deterministic": ("value",),
        "uniform": ("low", "high"),
    }

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (float(rate),))

    @classmethod
    def gamma(cls, shape, scale):
        return cls("gamma", (float(shape), float(scale)))

    @classmethod
    def deterministic(cls, value):
        return cls("deterministic", (float(value),))

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", (float(low), float(high)))

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self, where="duration"):
        if self.kind not in self._NAMES:
            return [f"{where}: unknown distribution {self.kind!r}"]
        names = self._NAMES[self.kind]
        if len(self.params) != len(names):
            return [f"{where}: {self.kind} expects parameters {names}"]
        p = self.params
        if not all(math.isfinite(x) for x in p):
            return [f"{where}: parameters must be finite"]
        bad = []
        if self.kind == "exponential" and p[0] <= 0:
            bad.append(f"{where}: exponential rate must be positive, got {p[0]}")
        elif self.kind == "gamma" and (p[0] <= 0 or p[1] <= 0):
            bad.append(f"{where}: gamma shape and scale must be positive, got {p}")
        elif self.kind == "deterministic" and p[0] < 0:
            bad.append(f"{where}: deterministic value must be nonnegative, got {p[0]}")
        elif self.kind == "uniform" and not (0 <= p[0] <= p[1]):
            bad.append(f"{where}: uniform needs 0 <= low <= high, got {p}")
        return bad

    @property
    def bounded(self):
        return self.kind in ("deterministic", "uniform")

    @property
    def upper(self):
        if self.kind == "deterministic":
            return self.params[0]
        if self.kind == "uniform":
            return self.params[1]
        return math.inf

    @property
    def mean(self):
        p = self.params
        if self.kind == "exponential":
            return 1.0 / p[0]
        if self.kind == "gamma":
            return p[0] * p[1]
        if self.kind == "deterministic":
            return p[0]
        return 0.5 * (p[0] + p[1])

    @property
    def prob_zero(self):
        if self.kind == "deterministic":
            return 1.0 if self.params[0] == 0 else 0.0
        if self.kind == "uniform" and self.params[1] == 0:
            return 1.0
        return 0.0

    def sample(self, rng):
        p = self.params
        if self.kind == "exponential":
            return rng.exponential(1.0 / p[0])
        if self.kind == "gamma":
            return rng.gamma(p[0], p[1])
        if self.kind == "deterministic":
            return p[0]
        return rng.uniform(p[0], p[1])

    def cdf(self, t):
        """``P(X <= t)``, vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "exponential":
            return np.where(t < 0, 0.0, -np.expm1(-p[0] * np.maximum(t, 0.0)))
        if self.kind == "gamma":
            return _gamma_cdf(t, p[0], p[1])
        if self.kind == "deterministic":
            return (t >= p[0]).astype(float)
        lo, hi = p
        if hi == lo:
            return (t >= lo).astype(float)
        return np.clip((t - lo) / (hi - lo), 0.0, 1.0)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "exponential":
            return np.where(t < 0, 0.0, p[0] * np.exp(-p[0] * np.maximum(t, 0.0)))
        if self.kind == "gamma":
            x = np.maximum(t, 0.0) / p[1]
            return np.where(t < 0, 0.0, np.exp(special.xlogy(p[0] - 1, x) - x - special.gammaln(p[0])) / p[1])
        if self.kind == "uniform" and p[1] > p[0]:
            return np.where((t >= p[0]) & (t <= p[1]), 1.0 / (p[1] - p[0]), 0.0)
        raise ValueError(f"{self.kind} duration has no density")

    def to_dict(self):
        return {"dist": self.kind, "params": dict(zip(self._NAMES[self.kind], self.params))}

    @classmethod
    def from_dict(cls, doc, where="duration"):
        if not isinstance(doc, dict) or "dist" not in doc:
            raise ConfigError(f"{where}: expected {{dist, params}} record")
        kind = doc["dist"]
        if kind not in cls._NAMES:
            raise ConfigError(f"{where}: unknown distribution {kind!r}")
        params = doc.get("params", {})
        if isinstance(params, dict):
            missing = [n for n in cls._NAMES[kind] if n not in params]
            if missing:
                raise ConfigError(f"{where}: missing parameters {missing}")
            params = [params[n] for n in cls._NAMES[kind]]
        try:
            values = tuple(float(x) for x in params)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: parameters must be numbers") from None
        obj = object.__new__(cls)
        object.__setattr__(obj, "kind", kind)
        object.__setattr__(obj, "params", values)
        errors = obj.problems(where)
        if errors:
            raise ConfigError(errors)
        return obj


def _gamma_cdf(t, shape, scale):
    # special.gammainc directly: scipy.stats adds per-call overhead that
    # dominates inside the quadrature below
    return np.where(t <= 0, 0.0, special.gammainc(shape, np.maximum(t, 0.0) / scale))


def _sum_cdf(a: Duration, b: Duration, t):
    """``P(A + B <= t)`` for independent durations."""
    t = np.asarray(t, dtype=float)
    if a.kind == "deterministic":
        return b.cdf(t - a.params[0])
    if b.kind == "deterministic":
        return a.cdf(t - b.params[0])
    ga = _as_gamma(a)
    gb = _as_gamma(b)
    if ga and gb and math.isclose(ga[1], gb[1]):
        return _gamma_cdf(t, ga[0] + gb[0], ga[1])
    if b.kind == "uniform" or a.kind == "uniform":
        a, b = (a, b) if b.kind == "uniform" else (b, a)
        lo, hi = b.params
        return np.clip((_partial_mean(a, t - lo) - _partial_mean(a, t - hi)) / (hi - lo), 0.0, 1.0)
    if a.kind == "exponential" and b.kind == "exponential":
        # hypoexponential law
        ra, rb = a.params[0], b.params[0]
        tp = np.maximum(t, 0.0)
        surv = (rb * np.exp(-ra * tp) - ra * np.exp(-rb * tp)) / (rb - ra)
        return np.where(t <= 0, 0.0, np.clip(1.0 - surv, 0.0, 1.0))
    out = np.zeros_like(t)
    for i, ti in enumerate(t.ravel()):
        if ti <= 0:
            continue
        lo, hi = 0.0, ti
        if a.kind == "uniform":
            lo, hi = a.params[0], min(ti, a.params[1])
            if hi <= lo:
                continue
        val, _ = integrate.quad(lambda z: float(b.cdf(ti - z)) * float(a.pdf(z)), lo, hi, limit=200)
        out.flat[i] = val
    return np.clip(out, 0.0, 1.0)


def _partial_mean(d: Duration, x):
    """``E[(x - X)^+]``, the antiderivative of the CDF of ``X``."""
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    p = d.params
    if d.kind == "exponential":
        return xp + np.expm1(-p[0] * xp) / p[0]
    if d.kind == "gamma":
        return xp * _gamma_cdf(xp, p[0], p[1]) - p[0] * p[1] * _gamma_cdf(xp, p[0] + 1.0, p[1])
    if d.kind == "deterministic" or p[0] == p[1]:
        return np.maximum(x - p[0], 0.0)
    lo, hi = p
    mid = (np.clip(x, lo, hi) - lo) ** 2 / (2 * (hi - lo))
    return mid + np.maximum(x - hi, 0.0)


def _as_gamma(d: Duration):
    if d.kind == "exponential":
        return (1.0, 1.0 / d.params[0])
    if d.kind == "gamma":
        return d.params
    return None


@dataclass(frozen=True)
class InfectivityPath:
    """One realised infectivity function of infection age.

    ``values[i]`` applies on ``[breakpoints[i], breakpoints[i+1])``.  The path
    is zero before the first breakpoint, after the last one, and for negative
    ages.  ``eta`` is the end of the support and ``zeta`` the first age with
    positive infectivity (``inf`` for the zero path).
    """

    breakpoints: tuple
    values: tuple
    eta: float = field(init=False)
    zeta: float = field(init=False)

    def __post_init__(self):
        b = [float(x) for x in self.breakpoints]
        v = [float(x) for x in self.values]
        if b and len(b) != len(v) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if any(x < 0 for x in v):
            raise ValueError("infectivity values must be nonnegative")
        if any(y < x for x, y in zip(b, b[1:])):
            raise ValueError("breakpoints must be ascending")
        # drop empty segments and anything outside the support
        segs = [(lo, hi, val) for lo, hi, val in zip(b, b[1:], v) if hi > lo]
        while segs and segs[-1][2] == 0:
            segs.pop()
        while segs and segs[0][2] == 0:
            segs.pop(0)
        if segs:
            nb = tuple([s[0] for s in segs] + [segs[-1][1]])
            nv = tuple(s[2] for s in segs)
            # merge contiguous equal values; gaps become explicit zeros
            mb, mv = [nb[0]], []
            for (lo, hi, val) in segs:
                if lo > mb[-1]:
                    mv.append(0.0)
                    mb.append(lo)
                if mv and mv[-1] == val:
                    mb[-1] = hi
                else:
                    mv.append(val)
                    mb.append(hi)
            nb, nv = tuple(mb), tuple(mv)
            eta, zeta = nb[-1], nb[0]
        else:
            nb, nv, eta, zeta = (), (), 0.0, math.inf
        object.__setattr__(self, "breakpoints", nb)
        object.__setattr__(self, "values", nv)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "zeta", zeta)

    @classmethod
    def zero(cls):
        return cls((), ())

    @classmethod
    def plateau(cls, rate, start, end):
        return cls((start, end), (rate,))

    @property
    def peak(self):
        return max(self.values, default=0.0)

    def eval(self, t):
        """Infectivity at infection age ``t`` (scalar)."""
        b = self.breakpoints
        if not b or t < b[0] or t >= b[-1]:
            return 0.0
        return self.values[bisect.bisect_right(b, t) - 1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not self.breakpoints:
            return np.zeros_like(t)
        b = np.asarray(self.breakpoints)
        v = np.concatenate([[0.0], self.values, [0.0]])
        return v[np.searchsorted(b, t, side="right")]

    def changes(self):
        """``(age, new_value)`` pairs at which the path jumps, in age order."""
        out = []
        prev = 0.0
        for age, val in zip(self.breakpoints, self.values + (0.0,)):
            if val != prev:
                out.append((age, val))
                prev = val
        return out


class InfectivityLaw:
    """Base class: a law of random infectivity paths with cap ``cap``."""

    family = "abstract"
    cap: float

    def sample_path(self, rng) -> InfectivityPath:
        raise NotImplementedError

    def closed_form(self, t):
        """``(lam_bar, F)`` on ``t`` or ``None`` when no closed form exists."""
        return None

    def problems(self, where="law"):
        return []

    def to_dict(self):
        raise NotImplementedError


def _check_cap(cap, where):
    if not (isinstance(cap, (int, float)) and math.isfinite(cap) and cap > 0):
        return [f"{where}: cap must be a positive finite number, got {cap!r}"]
    return []


class ConstantPlateau(InfectivityLaw):
    """Infectivity ``rate`` from infection until a random duration ends."""

    family = "constant_plateau"

    def __init__(self, rate, duration: Duration, cap=None):
        self.rate = float(rate)
        self.duration = duration
        self.cap = float((self.rate or 1.0) if cap is None else cap)   # a zero law still needs a positive cap
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self, where="law"):
        errors = _check_cap(self.cap, where)
        if not (0 <= self.rate <= self.cap):
            errors.append(f"{where}: rate {self.rate} outside [0, cap={self.cap}]")
        return errors

    def sample_path(self, rng):
        eta = self.duration.sample(rng)
        if self.rate == 0 or eta <= 0:
            return InfectivityPath.zero()
        return InfectivityPath((0.0, eta), (self.rate,))

    def closed_form(self, t):
        t = np.asarray(t, dtype=float)
        F = np.where(t < 0, 0.0, self.duration.cdf(t))
        if self.rate == 0:
            return np.zeros_like(t), np.where(t < 0, 0.0, 1.0)
        return np.where(t < 0, 0.0, self.rate * (1.0 - F)), F

    def to_dict(self):
        return {"family": self.family, "rate": self.rate, "cap": self.cap,
                "duration": self.duration.to_dict()}

    def __repr__(self):
        return f"ConstantPlateau(rate={self.rate}, duration={self.duration}, cap={self.cap})"


class DelayedPlateau(InfectivityLaw):
    """Zero during a random latency, then ``rate`` for a random plateau."""

    family = "delayed_plateau"

    def __init__(self, latency: Duration, rate, plateau: Duration, cap=None):
        self.latency = latency
        self.rate = float(rate)
        self.plateau = plateau
        self.cap = float((self.rate or 1.0) if cap is None else cap)   # a zero law still needs a positive cap
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self, where="law"):
        errors = _check_cap(self.cap, where)
        if not (0 <= self.rate <= self.cap):
            errors.append(f"{where}: rate {self.rate} outside [0, cap={self.cap}]")
        return errors

    def sample_path(self, rng):
        zeta = self.latency.sample(rng)
        p = self.plateau.sample(rng)
        return InfectivityPath((zeta, zeta + p), (self.rate,))

    def closed_form(self, t):
        t = np.asarray(t, dtype=float)
        if self.rate == 0 or self.plateau.prob_zero == 1.0:
            return np.zeros_like(t), (t >= 0).astype(float)
        started = self.latency.cdf(t)
        ended = _sum_cdf(self.latency, self.plateau, t)
        lam = np.where(t < 0, 0.0, self.rate * np.clip(started - ended, 0.0, 1.0))
        return lam, np.where(t < 0, 0.0, ended)

    def to_dict(self):
        return {"family": self.family, "rate": self.rate, "cap": self.cap,
                "latency": self.latency.to_dict(), "duration": self.plateau.to_dict()}

    def __repr__(self):
        return (f"DelayedPlateau(latency={self.latency}, rate={self.rate}, "
                f"plateau={self.plateau}, cap={self.cap})")


class PiecewiseTable(InfectivityLaw):
    """Fixed age breakpoints with an independent random value per segment.

    Segment values must be bounded (deterministic or uniform) so the cap holds.
    """

    family = "piecewise_table"

    def __init__(self, breakpoints, values, cap):
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.values = tuple(values)
        self.cap = float(cap)
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self, where="law"):
        errors = _check_cap(self.cap, where)
        b = self.breakpoints
        if len(b) < 2 or len(b) != len(self.values) + 1:
            errors.append(f"{where}: need n+1 breakpoints for n segment values")
        elif b[0] != 0 or any(y <= x for x, y in zip(b, b[1:])):
            errors.append(f"{where}: breakpoints must start at 0 and increase strictly")
        for i, d in enumerate(self.values):
            if not d.bounded:
                errors.append(f"{where}: segment {i} value must be deterministic or uniform")
            elif d.upper > self.cap:
                errors.append(f"{where}: segment {i} value exceeds cap {self.cap}")
        return errors

    def sample_path(self, rng):
        vals = [d.sample(rng) for d in self.values]
        return InfectivityPath(self.breakpoints, vals)

    def closed_form(self, t):
        t = np.asarray(t, dtype=float)
        b = np.asarray(self.breakpoints)
        means = np.array([0.0] + [d.mean for d in self.values] + [0.0])
        lam = means[np.searchsorted(b, t, side="right")]
        # eta <= b[j] iff every segment from j on is zero
        pz = np.array([d.prob_zero for d in self.values])
        tail = np.append(np.cumprod(pz[::-1])[::-1], 1.0)
        idx = np.searchsorted(b, t, side="right") - 1
        F = np.where(idx < 0, 0.0, tail[np.clip(idx, 0, len(tail) - 1)])
        return lam, F

    def to_dict(self):
        return {"family": self.family, "cap": self.cap, "breakpoints": list(self.breakpoints),
                "values": [d.to_dict() for d in self.values]}


class DeterministicLaw(InfectivityLaw):
    """Every individual gets the same path."""

    family = "deterministic"

    def __init__(self, path: InfectivityPath, cap=None):
        self.path = path
        self.cap = float(path.peak if cap is None else cap)
        if self.cap == 0:
            self.cap = 1.0
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self, where="law"):
        errors = _check_cap(self.cap, where)
        if self.path.peak > self.cap:
            errors.append(f"{where}: path value {self.path.peak} exceeds cap {self.cap}")
        return errors

    def sample_path(self, rng):
        return self.path

    def closed_form(self, t):
        t = np.asarray(t, dtype=float)
        return self.path(t), ((t >= self.path.eta) & (t >= 0)).astype(float)

    def to_dict(self):
        return {"family": self.family, "cap": self.cap,
                "breakpoints": list(self.path.breakpoints), "values": list(self.path.values)}


def sample_path(law: InfectivityLaw, rng) -> InfectivityPath:
    """Draw one path from ``law`` using the generator ``rng``."""
    return law.sample_path(rng)


@dataclass
class MeanCurves:
    """``lam_bar`` and ``F`` on ``grid``; standard errors are zero for closed forms."""

    grid: np.ndarray
    lam_bar: np.ndarray
    F: np.ndarray
    lam_se: np.ndarray
    F_se: np.ndarray
    method: str
    samples: int = 0


def mean_curves(law: InfectivityLaw, grid, mc_samples=None, rng=None, method="auto") -> MeanCurves:
    """Mean infectivity and infected-period CDF of ``law`` on ``grid``.

    With ``method="auto"`` the closed form is used when the law has one and
    Monte Carlo with ``mc_samples`` (default 1e5) otherwise; ``method="mc"``
    forces Monte Carlo.  ``rng`` may be a generator or a seed; it defaults to
    seed 0 so the result is reproducible.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ConfigError("mean_curves: grid must be a 1-d ascending array")
    if method not in ("auto", "closed", "mc"):
        raise ConfigError(f"mean_curves: unknown method {method!r}")
    if method != "mc":
        cf = law.closed_form(grid)
        if cf is not None:
            lam, F = cf
            z = np.zeros_like(grid)
            return MeanCurves(grid, np.asarray(lam, float), np.asarray(F, float), z, z.copy(), "closed")
        if method == "closed":
            raise ConfigError(f"mean_curves: {law.family} has no closed form")
    n = DEFAULT_MC_SAMPLES if mc_samples is None else int(mc_samples)
    if n < 1000:
        raise ConfigError(f"mean_curves: Monte Carlo needs mc_samples >= 1000, got {n}")
    rng = np.random.default_rng(0 if rng is None else rng)

    m = len(grid)
    s1 = np.zeros(m + 1)
    s2 = np.zeros(m + 1)
    etas = np.empty(n)
    lo, hi, val = [], [], []
    for i in range(n):
        p = law.sample_path(rng)
        etas[i] = p.eta
        b = p.breakpoints
        for j, v in enumerate(p.values):
            if v:
                lo.append(b[j])
                hi.append(b[j + 1])
                val.append(v)
    if val:
        val = np.asarray(val)
        ia = np.searchsorted(grid, lo, side="left")
        ib = np.searchsorted(grid, hi, side="left")
        np.add.at(s1, ia, val)
        np.add.at(s1, ib, -val)
        np.add.at(s2, ia, val * val)
        np.add.at(s2, ib, -val * val)
    mean = np.cumsum(s1)[:m] / n
    second = np.cumsum(s2)[:m] / n
    lam_se = np.sqrt(np.maximum(second - mean**2, 0.0) / (n - 1))
    etas.sort()
    F = np.searchsorted(etas, grid, side="right") / n
    F = np.where(grid < 0, 0.0, F)
    F_se = np.sqrt(F * (1 - F) / n)
    return MeanCurves(grid, mean, F, lam_se, F_se, "mc", n)


_FAMILIES = {
    "constant_plateau": ConstantPlateau,
    "delayed_plateau": DelayedPlateau,
    "piecewise_table": PiecewiseTable,
    "deterministic": DeterministicLaw,
}


def law_from_dict(doc, where="law") -> InfectivityLaw:
    """Build a law from its config record; errors name the field path."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a record")
    family = doc.get("family")
    if family not in _FAMILIES:
        raise ConfigError(f"{where}.family: unknown family {family!r}, expected one of {sorted(_FAMILIES)}")
    errors = []

    def num(key, default=None):
        if key not in doc:
            if default is None:
                errors.append(f"{where}.{key}: missing")
            return default
        try:
            return float(doc[key])
        except (TypeError, ValueError):
            errors.append(f"{where}.{key}: must be a number")
            return default

    def dur(key):
        if key not in doc:
            errors.append(f"{where}.{key}: missing")
            return None
        try:
            return Duration.from_dict(doc[key], f"{where}.{key}")
        except ConfigError as exc:
            errors.extend(exc.errors)
            return None

    if family == "constant_plateau":
        rate, d = num("rate"), dur("duration")
        cap = num("cap", rate if rate is not None else 1.0)
        if errors:
            raise ConfigError(errors)
        law = object.__new__(ConstantPlateau)
        law.rate, law.duration, law.cap = rate, d, cap
    elif family == "delayed_plateau":
        rate, lat, d = num("rate"), dur("latency"), dur("duration")
        cap = num("cap", rate if rate is not None else 1.0)
        if errors:
            raise ConfigError(errors)
        law = object.__new__(DelayedPlateau)
        law.latency, law.rate, law.plateau, law.cap = lat, rate, d, cap
    elif family == "piecewise_table":
        cap = num("cap")
        vals = []
        for i, rec in enumerate(doc.get("values", [])):
            try:
                vals.append(Duration.from_dict(rec, f"{where}.values[{i}]"))
            except ConfigError as exc:
                errors.extend(exc.errors)
        if errors:
            raise ConfigError(errors)
        law = object.__new__(PiecewiseTable)
        law.breakpoints = tuple(float(b) for b in doc.get("breakpoints", []))
        law.values, law.cap = tuple(vals), cap
    else:
        try:
            path = InfectivityPath(doc.get("breakpoints", []), doc.get("values", []))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        cap = num("cap", path.peak or 1.0)
        if errors:
            raise ConfigError(errors)
        law = object.__new__(DeterministicLaw)
        law.path, law.cap = path, cap
    errors = law.problems(where)
    if errors:
        raise ConfigError(errors)
    return law
