"""Model configuration: parsing, validation and derived quantities.

The configuration document is JSON.  Group and patch indices in error
messages are 1-based, matching how users number them in the document.

Example document::

    {
      "K": 1, "L": 2, "gamma": 1.0, "N": 10000, "horizon": 10, "seed": 1,
      "beta": {"beta_star": 1.0, "breakpoints": [0], "values": [0.5]},
      "mobility": {"S": {"breakpoints": [0], "matrices": [[[0, 0.1], [0.1, 0]]]}},
      "infectivity": [{"new": {...}, "initial": {...}}],
      "initial": {"S": [[0.49, 0.49]], "I": [[0.01, 0.01]], "R": [[0, 0]]}
    }
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .infectivity import InfectivityLaw, law_from_dict
from .mobility import COMPARTMENTS, Mobility, RateSchedule

__all__ = [
    "ContactSchedule",
    "ModelConfig",
    "load_config",
    "parse_config",
    "config_digest",
    "allocate_counts",
]


@dataclass(frozen=True)
class ContactSchedule:
    """Piecewise-constant contact rates ``beta[k, l, k', l']``.

    ``values[i]`` applies on ``[breakpoints[i], breakpoints[i+1])`` and the
    last segment extends past the horizon.
    """

    breakpoints: tuple
    values: np.ndarray
    beta_star: float

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        v = np.array(self.values, dtype=float)
        if v.ndim != 5 or v.shape[1] != v.shape[3] or v.shape[2] != v.shape[4]:
            raise ConfigError("beta values must have shape (segments, K, L, K, L)")
        if len(b) != v.shape[0]:
            raise ConfigError(f"{len(b)} beta breakpoints for {v.shape[0]} matrices")
        v.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "beta_star", float(self.beta_star))

    @classmethod
    def constant(cls, K, L, value, beta_star=None):
        v = np.broadcast_to(np.asarray(value, dtype=float), (K, L, K, L))[None]
        return cls((0.0,), v.copy(), float(v.max()) if beta_star is None else beta_star)

    def at(self, t):
        i = max(bisect.bisect_right(self.breakpoints, t) - 1, 0)
        return self.values[i]

    @property
    def is_zero(self):
        return not np.any(self.values)

    def to_dict(self):
        return {"beta_star": self.beta_star, "breakpoints": list(self.breakpoints),
                "values": self.values.tolist()}


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to simulate or solve one model instance.

    Arrays ``S0``, ``I0``, ``R0`` have shape ``(K, L)`` and hold initial
    proportions of the whole population.
    """

    K: int
    L: int
    gamma: float
    beta: ContactSchedule
    mobility: Mobility
    law_new: tuple
    law_init: tuple
    S0: np.ndarray
    I0: np.ndarray
    R0: np.ndarray
    N: int = 10_000
    horizon: float = 10.0
    seed: int = 0
    grid_step: float = 1e-3
    doc: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("S0", "I0", "R0"):
            a = np.array(getattr(self, name), dtype=float).reshape(self.K, self.L)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        object.__setattr__(self, "law_new", tuple(self.law_new))
        object.__setattr__(self, "law_init", tuple(self.law_init))
        errors = validate(self)
        if errors:
            raise ConfigError(errors)
        if self.doc is None:
            object.__setattr__(self, "doc", to_document(self))

    @property
    def B0(self):
        return self.S0 + self.I0 + self.R0

    @property
    def lambda_star(self):
        return max(law.cap for law in self.law_new + self.law_init)

    @property
    def digest(self):
        return config_digest(self.doc)

    def replace(self, **changes):
        """Copy with some fields changed; the document is rebuilt."""
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "doc"}
        fields.update(changes)
        return ModelConfig(**fields)


def validate(cfg: ModelConfig):
    """List every violated invariant; empty when the config is valid."""
    errors = []
    K, L = cfg.K, cfg.L
    if not (isinstance(K, int) and K >= 1):
        errors.append(f"K must be a positive integer, got {K!r}")
    if not (isinstance(L, int) and L >= 1):
        errors.append(f"L must be a positive integer, got {L!r}")
    if errors:
        return errors
    if not (0.0 <= cfg.gamma <= 1.0):
        errors.append(f"gamma = {cfg.gamma} outside [0, 1]")
    if not (isinstance(cfg.N, (int, np.integer)) and cfg.N >= 1):
        errors.append(f"N must be a positive integer, got {cfg.N!r}")
    if not (cfg.horizon > 0 and math.isfinite(cfg.horizon)):
        errors.append(f"horizon must be positive and finite, got {cfg.horizon}")
    if not cfg.grid_step > 0:
        errors.append(f"grid_step must be positive, got {cfg.grid_step}")

    beta = cfg.beta
    if beta.values.shape[1:] != (K, L, K, L):
        errors.append(f"beta matrices have shape {beta.values.shape[1:]}, expected {(K, L, K, L)}")
    else:
        if not beta.beta_star > 0:
            errors.append(f"beta_star must be positive, got {beta.beta_star}")
        if np.any(beta.values < 0):
            errors.append("beta entries must be nonnegative")
        for idx in zip(*np.nonzero(beta.values > beta.beta_star)):
            seg, k, l, k2, l2 = (int(i) for i in idx)
            errors.append(f"beta[{seg + 1}][{k + 1},{l + 1},{k2 + 1},{l2 + 1}] = "
                          f"{beta.values[idx]:g} exceeds beta_star {beta.beta_star:g}")
    if not beta.breakpoints or beta.breakpoints[0] != 0 or any(
            y <= x for x, y in zip(beta.breakpoints, beta.breakpoints[1:])):
        errors.append("beta breakpoints must start at 0 and increase strictly")

    for c in COMPARTMENTS:
        scheds = getattr(cfg.mobility, c)
        if len(scheds) != K:
            errors.append(f"mobility.{c}: {len(scheds)} schedules for K={K} groups")
        for k, s in enumerate(scheds):
            if s.L != L:
                errors.append(f"mobility.{c}[{k + 1}]: {s.L} patches, expected {L}")

    for name, laws in (("new", cfg.law_new), ("initial", cfg.law_init)):
        if len(laws) < K:
            for k in range(len(laws), K):
                errors.append(f"infectivity[{k + 1}] missing")
        elif len(laws) > K:
            errors.append(f"infectivity: {len(laws)} {name} laws for K={K} groups")
        for k, law in enumerate(laws):
            if not isinstance(law, InfectivityLaw):
                errors.append(f"infectivity[{k + 1}].{name}: not an infectivity law")

    total = 0.0
    for name in ("S0", "I0", "R0"):
        a = getattr(cfg, name)
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            errors.append(f"initial {name[0]} fractions must be finite and nonnegative")
        total += float(np.sum(a))
    if abs(total - 1.0) > 1e-9:
        errors.append(f"initial fractions sum {total:.6g} != 1")
    B0 = cfg.S0 + cfg.I0 + cfg.R0
    for k, l in zip(*np.nonzero(B0 <= 0)):
        errors.append(f"initial population of group {k + 1}, patch {l + 1} must be positive")
    return errors


def to_document(cfg: ModelConfig):
    """Canonical JSON-compatible record of ``cfg``."""
    doc = {
        "K": cfg.K, "L": cfg.L, "gamma": cfg.gamma, "N": int(cfg.N),
        "horizon": cfg.horizon, "seed": int(cfg.seed), "grid_step": cfg.grid_step,
        "beta": cfg.beta.to_dict(),
        "mobility": {c: [s.to_dict() for s in getattr(cfg.mobility, c)] for c in COMPARTMENTS},
        "infectivity": [{"new": n.to_dict(), "initial": i.to_dict()}
                        for n, i in zip(cfg.law_new, cfg.law_init)],
        "initial": {"S": cfg.S0.tolist(), "I": cfg.I0.tolist(), "R": cfg.R0.tolist()},
    }
    return doc


def config_digest(doc) -> str:
    """SHA-256 of the canonical serialisation; stable under key reordering."""
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> ModelConfig:
    """Read and validate a JSON config file.

    Raises :class:`ConfigError`; a syntax error names the line and column,
    and semantic errors are all collected before raising.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc)


def _array(value, shape, where, errors):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{where}: expected numbers")
        return None
    try:
        return np.broadcast_to(a, shape).copy()
    except ValueError:
        errors.append(f"{where}: shape {a.shape} does not fit {shape}")
        return None


def _schedule(doc, L, where, errors):
    if doc is None:
        return RateSchedule.zero(L)
    if not isinstance(doc, dict):
        errors.append(f"{where}: expected {{breakpoints, matrices}}")
        return RateSchedule.zero(L)
    bps = doc.get("breakpoints", [0.0])
    mats = _array(doc.get("matrices", []), (len(bps), L, L), f"{where}.matrices", errors)
    if mats is None:
        return RateSchedule.zero(L)
    try:
        return RateSchedule(tuple(bps), mats)
    except ConfigError as exc:
        errors.extend(f"{where}: {e}" for e in exc.errors)
        return RateSchedule.zero(L)


def parse_config(doc) -> ModelConfig:
    """Build a :class:`ModelConfig` from a parsed document."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    errors = []
    for key in ("K", "L", "beta", "infectivity", "initial"):
        if key not in doc:
            errors.append(f"{key} missing")
    if errors:
        raise ConfigError(errors)
    K, L = doc["K"], doc["L"]
    if not (isinstance(K, int) and K >= 1 and isinstance(L, int) and L >= 1):
        raise ConfigError(f"K and L must be positive integers, got K={K!r}, L={L!r}")

    bdoc = doc["beta"]
    beta = None
    if not isinstance(bdoc, dict) or "beta_star" not in bdoc:
        errors.append("beta: expected {beta_star, breakpoints, values}")
    else:
        bps = bdoc.get("breakpoints", [0.0])
        raw = bdoc.get("values", [])
        if len(raw) != len(bps):
            errors.append(f"beta: {len(bps)} breakpoints for {len(raw)} values")
        else:
            mats = [_array(v, (K, L, K, L), f"beta.values[{i + 1}]", errors) for i, v in enumerate(raw)]
            if all(m is not None for m in mats):
                try:
                    beta = ContactSchedule(tuple(bps), np.stack(mats), float(bdoc["beta_star"]))
                except (ConfigError, TypeError, ValueError) as exc:
                    errors.append(f"beta: {exc}")

    mdoc = doc.get("mobility", {}) or {}
    scheds = {}
    for c in COMPARTMENTS:
        entry = mdoc.get(c)
        if isinstance(entry, list):
            if len(entry) != K:
                errors.append(f"mobility.{c}: {len(entry)} schedules for K={K} groups")
            scheds[c] = tuple(_schedule(e, L, f"mobility.{c}[{i + 1}]", errors) for i, e in enumerate(entry))
        else:
            s = _schedule(entry, L, f"mobility.{c}", errors)
            scheds[c] = (s,) * K
    mobility = Mobility(scheds["S"], scheds["I"], scheds["R"])

    laws_new, laws_init = [], []
    inf = doc["infectivity"]
    if not isinstance(inf, list):
        errors.append("infectivity: expected a list with one record per group")
        inf = []
    for k in range(K):
        if k >= len(inf) or inf[k] is None:
            errors.append(f"infectivity[{k + 1}] missing")
            continue
        rec = inf[k]
        if not isinstance(rec, dict) or "new" not in rec:
            errors.append(f"infectivity[{k + 1}].new missing")
            continue
        for key, bucket in (("new", laws_new), ("initial", laws_init)):
            try:
                bucket.append(law_from_dict(rec.get(key, rec["new"]), f"infectivity[{k + 1}].{key}"))
            except ConfigError as exc:
                errors.extend(exc.errors)
    if len(inf) > K:
        errors.append(f"infectivity: {len(inf)} records for K={K} groups")

    init = doc["initial"]
    arrays = {}
    for c in COMPARTMENTS:
        if not isinstance(init, dict) or c not in init:
            if c == "R":
                arrays[c] = np.zeros((K, L))
            else:
                errors.append(f"initial.{c} missing")
            continue
        arrays[c] = _array(init[c], (K, L), f"initial.{c}", errors)

    scalars = {}
    for key, kind, default in (("gamma", float, 1.0), ("N", int, 10_000), ("horizon", float, 10.0),
                               ("seed", int, 0), ("grid_step", float, 1e-3)):
        v = doc.get(key, default)
        try:
            if kind is int and (isinstance(v, bool) or float(v) != int(v)):
                raise ValueError
            scalars[key] = kind(v)
        except (TypeError, ValueError):
            errors.append(f"{key}: expected {kind.__name__}, got {v!r}")
    if errors:
        raise ConfigError(errors)
    return ModelConfig(K=K, L=L, beta=beta, mobility=mobility, law_new=laws_new, law_init=laws_init,
                       S0=arrays["S"], I0=arrays["I"], R0=arrays["R"], doc=doc, **scalars)


def allocate_counts(cfg: ModelConfig, N=None):
    """Integer initial counts, shape ``(3, K, L)`` for S, I, R, summing to ``N``.

    Largest-remainder rounding; ties go to the earlier cell in (group, patch,
    compartment) order.
    """
    N = cfg.N if N is None else int(N)
    fr = np.stack([cfg.S0, cfg.I0, cfg.R0])            # (3, K, L)
    ideal = np.transpose(fr, (1, 2, 0)).ravel() * N     # order (k, l, c)
    base = np.floor(ideal).astype(np.int64)
    short = N - int(base.sum())
    rem = ideal - base
    order = np.lexsort((np.arange(rem.size), -rem))
    base[order[:short]] += 1
    return np.transpose(base.reshape(cfg.K, cfg.L, 3), (2, 0, 1)).copy()
