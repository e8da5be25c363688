import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchsir import limit, presets
from patchsir.config import ContactSchedule, ModelConfig
from patchsir.errors import SolverError
from patchsir.infectivity import ConstantPlateau, DelayedPlateau, Duration
from patchsir.limit import (
    b_floor,
    check_bounds,
    force_bound,
    group_curves,
    make_grid,
    solve_homogeneous,
    solve_homogeneous_config,
    solve_multipatch,
    solve_multipatch_gamma0,
)
from patchsir.mobility import Mobility, RateSchedule, transition_matrix

from oracles import sir_ode_rk4

FIELDS = ("S", "F", "I", "R", "Gamma")


def sup_diff(a, b, fields=FIELDS):
    return max(float(np.max(np.abs(getattr(a, f) - getattr(b, f)))) for f in fields)


@pytest.fixture(scope="module")
def ode_oracle():
    return sir_ode_rk4(0.5, 0.25, 0.99, 0.01, 20.0, h=1e-4)


# -- homogeneous ------------------------------------------------------------------

def test_markov_sir_matches_ode_oracle(ode_oracle):
    t, y = ode_oracle
    sol = solve_homogeneous_config(presets.markov_sir(horizon=20.0, grid_step=1e-3))
    S = sol.S[:, 0, 0]
    I = sol.F[:, 0, 0] / 0.5          # force = c * I for a constant plateau
    assert np.max(np.abs(S - y[::10, 0])) <= 1e-5
    assert np.max(np.abs(I - y[::10, 1])) <= 1e-5
    assert np.max(np.abs(sol.I[:, 0, 0] - y[::10, 1])) <= 1e-5


def test_homogeneous_integral_residual_is_second_order():
    for h in (1e-2, 1e-3):
        sol = solve_homogeneous_config(presets.markov_sir(horizon=20.0, grid_step=h))
        res = sol.meta["residual"]
        assert res["S"] <= 10 * h * h and res["F"] <= 10 * h * h


def test_no_initial_infecteds_means_no_epidemic():
    sol = solve_homogeneous_config(presets.markov_sir(I0=0.0, horizon=5.0, grid_step=1e-2).replace(
        S0=[[0.9]], R0=[[0.1]]))
    assert np.all(sol.F == 0) and np.all(sol.I == 0)
    assert np.all(sol.S == 0.9) and np.all(sol.R == 0.1)


def test_zero_infectivity_only_recovers_initial_infecteds():
    n, h = 500, 1e-2
    t = np.arange(n + 1) * h
    F0 = 1 - np.exp(-0.5 * t)
    zero = np.zeros(n + 1)
    sol = solve_homogeneous(zero, F0, zero, F0, 0.95, 0.05, 0.0, h)
    assert np.all(sol.S == 0.95) and np.all(sol.F == 0)
    assert np.allclose(sol.I[:, 0, 0], 0.05 * (1 - F0), atol=1e-15)
    assert np.allclose(sol.R[:, 0, 0], 0.05 * F0, atol=1e-15)


def test_nonpositive_step_raises():
    with pytest.raises(ValueError):
        solve_homogeneous(np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), 1.0, 0.0, h=0.0)
    with pytest.raises(ValueError):
        make_grid(1.0, -0.1)
    with pytest.raises(ValueError):
        make_grid(1.0, 0.3)


# -- multipatch ----------------------------------------------------------------------

def test_single_cell_reduces_to_homogeneous():
    cfg = presets.markov_sir(horizon=10.0, grid_step=1e-2, gamma=1.0)
    assert sup_diff(solve_multipatch(cfg), solve_homogeneous_config(cfg)) <= 1e-12


def test_single_cell_reduction_with_latency():
    law = DelayedPlateau(Duration.gamma(4.0, 2.0), 0.9, Duration.uniform(1.0, 4.0))
    cfg = presets.markov_sir(horizon=10.0, grid_step=1e-2).replace(law_new=[law], law_init=[law], gamma=1.0)
    assert sup_diff(solve_multipatch(cfg), solve_homogeneous_config(cfg)) <= 1e-12


def test_gamma_zero_paths_agree(acc_cfg_coarse):
    cfg = acc_cfg_coarse.replace(gamma=0.0)
    assert sup_diff(solve_multipatch(cfg), solve_multipatch_gamma0(cfg)) <= 1e-10


def test_gamma_zero_solver_rejects_other_gamma(acc_cfg_coarse):
    with pytest.raises(ValueError):
        solve_multipatch_gamma0(acc_cfg_coarse)


def test_no_contacts_gives_pure_migration(acc_cfg_coarse):
    beta = ContactSchedule.constant(2, 2, 0.0, beta_star=1.0)
    cfg = acc_cfg_coarse.replace(beta=beta)
    sol = solve_multipatch(cfg)
    assert np.all(sol.Gamma == 0)
    assert np.allclose(sol.S.sum(axis=2), cfg.S0.sum(axis=1), atol=1e-13)
    c = group_curves(cfg, sol.t)
    for i in (100, 500, 1000):
        t = sol.t[i]
        for k in range(2):
            qS = transition_matrix(cfg.mobility.schedule(k, "S"), 0.0, t)
            qI = transition_matrix(cfg.mobility.schedule(k, "I"), 0.0, t)
            assert np.allclose(sol.S[i, k], cfg.S0[k] @ qS, atol=1e-9)
            # force is the initial-infected term only, transported with infected mobility
            assert np.allclose(sol.F[i, k], c.lam0[k, i] * (cfg.I0[k] @ qI), atol=1e-9)
    rep = check_bounds(sol, cfg)
    assert rep.ok and rep.force_margin > 1.0


def test_injected_force_reproduces_solution(acc_cfg_coarse, acc_sol_coarse):
    again = solve_multipatch(acc_cfg_coarse, initial_force=acc_sol_coarse.F)
    assert sup_diff(again, acc_sol_coarse) <= 1e-12


def test_acceptance_solution_invariants(acc_cfg, acc_sol):
    sol = acc_sol
    assert np.max(np.abs(sol.B.sum(axis=(1, 2)) - 1.0)) <= 1e-9
    assert np.all(sol.S > 0) and np.all(sol.I >= 0) and np.all(sol.R >= 0)
    rep = check_bounds(sol, acc_cfg)
    assert rep.ok
    assert rep.force_margin > 0 and rep.floor_margin >= -1e-12


def test_refinement_is_second_order():
    hs = (0.02, 0.01, 0.005)
    coarse = np.arange(501) * 0.02
    sols = [solve_multipatch(presets.acceptance_2x2(grid_step=h)).on_grid(coarse) for h in hs]
    for f in ("S", "F", "I", "R"):
        d1 = np.max(np.abs(getattr(sols[0], f) - getattr(sols[1], f)))
        d2 = np.max(np.abs(getattr(sols[1], f) - getattr(sols[2], f)))
        assert math.log2(d1 / d2) >= 1.8


def test_exhausted_sweep_budget_raises_solver_error(monkeypatch, acc_cfg_coarse):
    monkeypatch.setattr(limit, "MAX_SWEEPS", 1)
    with pytest.raises(SolverError) as info:
        solve_multipatch(acc_cfg_coarse)
    assert info.value.step == 1 and info.value.residual > 0


# -- analytic bounds ------------------------------------------------------------------

def test_force_bound_value():
    assert force_bound(1.0, 1.0, 2, 2, 1.0) == pytest.approx(4 * math.exp(4), rel=1e-12)
    assert force_bound(1.0, 1.0, 2, 2, 1.0) == pytest.approx(218.393, abs=1e-3)


def test_floor_value():
    assert b_floor(0.25, 0.5, 2.0) == pytest.approx(0.25 * math.exp(-1), rel=1e-12)
    assert b_floor(0.25, 0.5, 2.0) == pytest.approx(0.09197, abs=1e-5)


# -- random small configurations -------------------------------------------------------

@st.composite
def small_configs(draw):
    K = draw(st.integers(1, 2))
    L = draw(st.integers(1, 2))
    rate = lambda: st.floats(0.0, 0.5)
    mats = lambda: np.array([[draw(rate()) for _ in range(L)] for _ in range(L)])
    mob = Mobility(tuple(RateSchedule.constant(mats()) for _ in range(K)),
                   tuple(RateSchedule.constant(mats()) for _ in range(K)),
                   tuple(RateSchedule.constant(mats()) for _ in range(K)))
    beta = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=(K * L) ** 2, max_size=(K * L) ** 2)))
    laws = [ConstantPlateau(draw(st.floats(0.1, 1.0)), Duration.exponential(draw(st.floats(0.2, 2.0))), cap=1.0)
            for _ in range(K)]
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=K * L, max_size=K * L)))
    w = (w / w.sum()).reshape(K, L)
    inf = draw(st.floats(0.0, 0.2))
    return ModelConfig(K=K, L=L, gamma=draw(st.floats(0.0, 1.0)),
                       beta=ContactSchedule((0.0,), beta.reshape(1, K, L, K, L), 1.0), mobility=mob,
                       law_new=laws, law_init=laws, S0=w * (1 - inf), I0=w * inf, R0=np.zeros((K, L)),
                       horizon=4.0, grid_step=0.05)


@settings(max_examples=25, deadline=None)
@given(small_configs())
def test_random_configs_keep_invariants(cfg):
    sol = solve_multipatch(cfg)
    assert np.max(np.abs(sol.B.sum(axis=(1, 2)) - 1.0)) <= 1e-9
    assert np.all(sol.S > 0)
    assert np.all(sol.I >= -1e-15) and np.all(sol.R >= -1e-15)
    assert np.all(np.diff(sol.S.sum(axis=2), axis=0) <= 1e-15)    # infection only removes susceptibles
    assert check_bounds(sol, cfg).ok
