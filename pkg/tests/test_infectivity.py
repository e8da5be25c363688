import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from patchsir.errors import ConfigError
from patchsir.infectivity import (
    ConstantPlateau,
    DelayedPlateau,
    DeterministicLaw,
    Duration,
    InfectivityPath,
    PiecewiseTable,
    law_from_dict,
    mean_curves,
    sample_path,
)

durations = st.one_of(
    st.floats(0.1, 5.0).map(Duration.exponential),
    st.tuples(st.floats(0.5, 6.0), st.floats(0.1, 2.0)).map(lambda a: Duration.gamma(*a)),
    st.floats(0.0, 6.0).map(Duration.deterministic),
    st.tuples(st.floats(0.0, 3.0), st.floats(0.1, 3.0)).map(lambda a: Duration.uniform(a[0], a[0] + a[1])),
)
bounded = st.one_of(
    st.floats(0.0, 2.0).map(Duration.deterministic),
    st.tuples(st.floats(0.0, 1.0), st.floats(0.1, 1.0)).map(lambda a: Duration.uniform(a[0], a[0] + a[1])),
)


@st.composite
def laws(draw):
    kind = draw(st.sampled_from(["constant", "delayed", "table"]))
    if kind == "constant":
        return ConstantPlateau(draw(st.floats(0.0, 2.0)), draw(durations))
    if kind == "delayed":
        return DelayedPlateau(draw(durations), draw(st.floats(0.0, 2.0)), draw(durations))
    n = draw(st.integers(1, 4))
    gaps = draw(st.lists(st.floats(0.2, 3.0), min_size=n, max_size=n))
    bps = np.concatenate([[0.0], np.cumsum(gaps)])
    vals = draw(st.lists(bounded, min_size=n, max_size=n))
    return PiecewiseTable(bps, vals, cap=2.0)


# -- sample_path ------------------------------------------------------------------

def test_constant_plateau_path_is_single_segment():
    law = ConstantPlateau(0.5, Duration.exponential(0.25))
    p = sample_path(law, np.random.default_rng(7))
    eta = Duration.exponential(0.25).sample(np.random.default_rng(7))
    assert p.values == (0.5,)
    assert p.zeta == 0.0
    assert p.eta == pytest.approx(eta)


def test_zero_path_conventions():
    p = DeterministicLaw(InfectivityPath.zero()).sample_path(np.random.default_rng(0))
    assert p.eta == 0.0
    assert p.zeta == math.inf
    assert np.all(p(np.linspace(-1, 10, 50)) == 0.0)


def test_delayed_plateau_with_deterministic_parts():
    law = DelayedPlateau(Duration.deterministic(2.0), 1.0, Duration.deterministic(3.0))
    p = law.sample_path(np.random.default_rng(0))
    assert (p.zeta, p.eta) == (2.0, 5.0)
    assert p.eval(1.0) == 0.0
    assert p.eval(2.0) == 1.0
    assert p.eval(4.999) == 1.0
    assert p.eval(5.0) == 0.0


def test_eval_examples():
    p = InfectivityPath.plateau(0.5, 0.0, 4.0)
    assert p.eval(-1.0) == 0.0
    assert p.eval(2.0) == 0.5
    assert p.eval(4.0) == 0.0


def test_invalid_parameters_raise_config_error():
    with pytest.raises(ConfigError):
        ConstantPlateau(0.5, Duration.exponential(-1.0))
    with pytest.raises(ConfigError):
        ConstantPlateau(2.0, Duration.exponential(1.0), cap=1.0)


@given(laws(), st.integers(0, 2**32 - 1))
def test_sampled_paths_satisfy_invariants(law, seed):
    p = law.sample_path(np.random.default_rng(seed))
    t = np.linspace(-1.0, p.eta + 2.0, 301)
    v = p(t)
    assert np.all(v >= 0) and np.all(v <= law.cap)
    assert np.all(v[t < 0] == 0)
    assert np.all(v[t >= p.eta] == 0)
    if p.values:
        assert 0.0 <= p.zeta <= p.eta
        assert p.eval(p.zeta) > 0
        # not eventually zero before eta: the last segment carries a positive value
        assert p.eval(0.5 * (p.breakpoints[-2] + p.eta)) > 0
    else:
        assert p.zeta == math.inf and p.eta == 0.0


@given(laws(), st.integers(0, 2**32 - 1))
def test_equal_seeds_give_equal_paths(law, seed):
    a = law.sample_path(np.random.default_rng(seed))
    b = law.sample_path(np.random.default_rng(seed))
    assert a == b


@given(st.lists(st.tuples(st.floats(0.01, 2.0), st.floats(0.0, 1.0)), min_size=1, max_size=6))
def test_path_normalisation_keeps_values(segments):
    bps = np.concatenate([[0.0], np.cumsum([s[0] for s in segments])])
    vals = [s[1] for s in segments]
    p = InfectivityPath(bps, vals)
    mids = 0.5 * (bps[1:] + bps[:-1])
    assert np.allclose(p(mids), vals)
    ch = p.changes()
    assert all(a < b for (a, _), (b, _) in zip(ch, ch[1:]))


# -- mean_curves -----------------------------------------------------------------

def test_mean_curves_constant_plateau_closed_form():
    # lam_bar(t) = c P(eta > t), F(t) = P(eta <= t); values checked by Monte Carlo below
    mc = mean_curves(ConstantPlateau(0.5, Duration.exponential(0.25)), np.array([2.0]))
    assert mc.method == "closed"
    assert mc.lam_bar[0] == pytest.approx(0.30327, abs=5e-6)
    assert mc.F[0] == pytest.approx(0.39347, abs=5e-6)


def test_mean_curves_constant_plateau_monte_carlo_oracle():
    law = ConstantPlateau(0.5, Duration.exponential(0.25))
    mc = mean_curves(law, np.array([2.0]), mc_samples=10**6, rng=3, method="mc")
    assert abs(mc.lam_bar[0] - 0.5 * math.exp(-0.5)) < 4 * mc.lam_se[0]
    assert abs(mc.F[0] - (1 - math.exp(-0.5))) < 4 * mc.F_se[0]


def test_mean_curves_latency_gives_zero_at_origin():
    law = DelayedPlateau(Duration.gamma(2.0, 0.5), 1.0, Duration.exponential(1.0))
    assert mean_curves(law, np.array([0.0])).lam_bar[0] == 0.0


def test_mean_curves_deterministic_plateau():
    law = DeterministicLaw(InfectivityPath.plateau(1.0, 0.0, 3.0))
    t = np.array([0.0, 2.9, 3.0, 4.0])
    mc = mean_curves(law, t)
    assert mc.lam_bar.tolist() == [1.0, 1.0, 0.0, 0.0]
    assert mc.F.tolist() == [0.0, 0.0, 1.0, 1.0]


def test_mean_curves_rejects_tiny_monte_carlo():
    with pytest.raises(ConfigError):
        mean_curves(ConstantPlateau(0.5, Duration.exponential(1.0)), np.array([1.0]), mc_samples=0, method="mc")


@pytest.mark.parametrize("law", [
    ConstantPlateau(0.8, Duration.gamma(3.0, 0.5)),
    DelayedPlateau(Duration.exponential(2.0), 0.7, Duration.exponential(0.4)),
    DelayedPlateau(Duration.exponential(1.0), 0.7, Duration.exponential(1.0)),
    DelayedPlateau(Duration.gamma(8.0, 0.125), 0.8, Duration.gamma(16.0, 0.125)),
    DelayedPlateau(Duration.deterministic(1.0), 1.0, Duration.uniform(1.0, 3.0)),
    DelayedPlateau(Duration.uniform(0.0, 1.0), 1.0, Duration.gamma(2.0, 1.0)),
    PiecewiseTable([0.0, 1.0, 2.5], [Duration.uniform(0.0, 1.0), Duration.deterministic(0.5)], cap=1.0),
])
def test_monte_carlo_agrees_with_closed_form(law):
    grid = np.linspace(0.0, 8.0, 81)
    exact = mean_curves(law, grid)
    assert exact.method == "closed"
    mc = mean_curves(law, grid, mc_samples=10**5, rng=11, method="mc")
    # empirical se is 0 where no sample has reached a rare event yet; fall back to
    # the variance bound from the exact mean (values lie in [0, cap])
    n = mc.samples
    tol_lam = 4 * np.maximum(mc.lam_se, np.sqrt(law.cap * exact.lam_bar / n)) + 1e-9
    tol_F = 4 * np.maximum(mc.F_se, np.sqrt(exact.F * (1 - exact.F) / n)) + 1e-9
    assert np.all(np.abs(mc.lam_bar - exact.lam_bar) <= tol_lam)
    assert np.all(np.abs(mc.F - exact.F) <= tol_F)


@given(laws())
def test_mean_curves_bounds(law):
    grid = np.linspace(0.0, 10.0, 101)
    mc = mean_curves(law, grid)
    assert np.all(mc.lam_bar >= -1e-12) and np.all(mc.lam_bar <= law.cap + 1e-12)
    assert np.all(np.diff(mc.F) >= -1e-12)
    assert np.all((mc.F >= -1e-12) & (mc.F <= 1 + 1e-12))


def test_law_round_trip_through_dict():
    for law in [ConstantPlateau(0.5, Duration.exponential(0.25), cap=1.0),
                DelayedPlateau(Duration.gamma(2.0, 0.5), 0.8, Duration.uniform(1.0, 2.0)),
                PiecewiseTable([0.0, 1.0], [Duration.deterministic(0.3)], cap=0.5),
                DeterministicLaw(InfectivityPath([0.0, 1.0, 2.0], [0.2, 0.4]))]:
        again = law_from_dict(law.to_dict())
        assert again.to_dict() == law.to_dict()


def test_law_from_dict_reports_field_path():
    with pytest.raises(ConfigError, match=r"infectivity\[1\]"):
        law_from_dict({"family": "constant_plateau", "rate": 0.5,
                       "duration": {"dist": "exponential", "params": {"rate": -1}}}, where="infectivity[1]")
