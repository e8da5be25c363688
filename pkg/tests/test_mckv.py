import math

import numpy as np
import pytest

from patchsir import presets
from patchsir.config import ContactSchedule
from patchsir.errors import NonConvergenceError
from patchsir.limit import solve_multipatch
from patchsir.mckv import (
    coupling_experiment,
    fixed_point_m,
    gbar_map,
    infection_times_given_path,
    sample_limit_particle,
    sample_limit_particles,
)
from patchsir.mobility import CEMETERY, PatchPath


# -- fixed point ------------------------------------------------------------------

def test_no_initial_infecteds_gives_zero_after_one_iteration():
    cfg = presets.acceptance_2x2(grid_step=1e-2).replace(
        I0=np.zeros((2, 2)), S0=[[0.31, 0.2], [0.255, 0.235]])
    fp = fixed_point_m(cfg)
    assert fp.iterations == 1
    assert np.all(fp.m == 0)


def test_fixed_point_matches_homogeneous_limit():
    cfg = presets.markov_sir(grid_step=1e-2)
    fp = fixed_point_m(cfg)
    sol = solve_multipatch(cfg)
    assert np.max(np.abs(fp.m - sol.F)) <= 1e-8
    # Picard updates shrink geometrically once the iteration has settled
    h = fp.history
    assert h[-1] < 1e-10 and h[-1] < h[-2] < h[-3]


def test_fixed_point_matches_multipatch_limit(acc_cfg_coarse, acc_sol_coarse):
    fp = fixed_point_m(acc_cfg_coarse)
    assert np.max(np.abs(fp.m - acc_sol_coarse.F)) <= 1e-8


def test_limit_force_is_a_fixed_point_of_the_map(acc_cfg_coarse, acc_sol_coarse):
    G = gbar_map(acc_cfg_coarse, acc_sol_coarse.F)
    assert np.max(np.abs(G - acc_sol_coarse.F)) <= 1e-10
    # and a different force is moved
    assert np.max(np.abs(gbar_map(acc_cfg_coarse, 2 * acc_sol_coarse.F) - 2 * acc_sol_coarse.F)) > 1e-3


def test_budget_exhaustion_reports_last_update(acc_cfg_coarse):
    with pytest.raises(NonConvergenceError) as info:
        fixed_point_m(acc_cfg_coarse, max_iter=3)
    assert info.value.step == 3 and info.value.residual > 1e-10
    with pytest.raises(ValueError):
        fixed_point_m(acc_cfg_coarse, tol=0.0)


# -- limit particles ----------------------------------------------------------------

def test_cemetery_particle_is_never_infected(acc_cfg_coarse, acc_sol_coarse):
    rng = np.random.default_rng(0)
    seen = 0
    for _ in range(400):
        p = sample_limit_particle(acc_cfg_coarse, acc_sol_coarse, 0, rng)
        assert np.all(np.diff(p.A(np.linspace(0, 10, 50))) >= 0)
        if p.path.start_patch == CEMETERY:
            seen += 1
            assert p.tau == math.inf and p.infectivity is None
            assert np.all(p.A(np.linspace(0, 10, 50)) == 0)
    # group 0 holds 0.5 of the susceptible mass, so about half the starts are the cemetery
    assert 150 < seen < 250


def test_no_rate_means_no_infection(acc_cfg_coarse):
    cfg = acc_cfg_coarse.replace(beta=ContactSchedule.constant(2, 2, 0.0, beta_star=1.0))
    sol = solve_multipatch(cfg)
    batch = sample_limit_particles(cfg, sol, 1, 5000, np.random.default_rng(1))
    assert np.all(batch.tau == math.inf)


def test_conditional_survival_given_path(acc_sol_coarse):
    sol = acc_sol_coarse
    path = PatchPath(0.0, 0, (2.0, 6.5), (1, 0))
    n = 100_000
    tau = infection_times_given_path(sol, 1, path, n, np.random.default_rng(2))
    G = sol.Gamma[:, 1]
    h = sol.h
    for t in (1.0, 4.0, 8.0, 10.0):
        # Gamma is linear between grid points and the jumps sit on grid points, so the
        # trapezoid rule on each constant-patch piece is exact
        integral = 0.0
        for a, b, l in ((0.0, 2.0, 0), (2.0, 6.5, 1), (6.5, 10.0, 0)):
            lo, hi = int(round(a / h)), int(round(min(b, t) / h))
            if hi > lo:
                seg = G[lo:hi + 1, l]
                integral += h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
        p = math.exp(-integral)
        est = np.mean(tau > t)
        assert abs(est - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_particle_marginal_matches_susceptible_fraction(acc_cfg_coarse, acc_sol_coarse):
    sol = acc_sol_coarse
    for k in range(2):
        batch = sample_limit_particles(acc_cfg_coarse, sol, k, 100_000, np.random.default_rng(10 + k),
                                       checkpoints=(2.0, 5.0, 10.0))
        est, se = batch.marginal(2)
        det = sol.sample([2.0, 5.0, 10.0], "S")[:, k, :]
        assert np.all(np.abs(est - det) <= 4 * se)
        # weighting again by the initial fraction of the start patch counts the initial mass twice
        w = np.where(batch.start == CEMETERY, 0.0, sol.S[0, k][np.where(batch.start == CEMETERY, 0, batch.start)])
        x = ((batch.patch_at[:, 2] == 0) & (batch.tau > 10.0)) * w
        assert abs(x.mean() - det[2, 0]) > 10 * x.std(ddof=1) / math.sqrt(len(x))


def test_particle_sampling_is_reproducible(acc_cfg_coarse, acc_sol_coarse):
    a = sample_limit_particles(acc_cfg_coarse, acc_sol_coarse, 0, 2000, np.random.default_rng(4), (5.0,))
    b = sample_limit_particles(acc_cfg_coarse, acc_sol_coarse, 0, 2000, np.random.default_rng(4), (5.0,))
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.patch_at, b.patch_at)


# -- coupling ------------------------------------------------------------------------

def test_coupling_without_contacts_has_no_mismatch(acc_cfg_coarse):
    cfg = acc_cfg_coarse.replace(beta=ContactSchedule.constant(2, 2, 0.0, beta_star=1.0))
    res = coupling_experiment(cfg, 1000, seed=3)
    assert np.all(res.mean_sup_mismatch == 0) and np.all(res.tau_mismatch_fraction == 0)
    assert res.n_susceptible.tolist() == [500, 480]    # S0 rows sum to 0.5 and 0.48


def test_coupling_report_fields(acc_cfg_coarse, acc_sol_coarse):
    res = coupling_experiment(acc_cfg_coarse, 1000, seed=7, sol=acc_sol_coarse, keep_trajectory=True)
    assert res.U == pytest.approx(1.25 * acc_sol_coarse.Gamma.max())
    assert np.all((res.tau_mismatch_fraction >= 0) & (res.tau_mismatch_fraction <= 1))
    # mean_sup_mismatch divides the mismatch count by N, the fraction by the group's susceptibles
    assert np.allclose(res.mean_sup_mismatch * 1000, res.tau_mismatch_fraction * res.n_susceptible)
    assert len(list(res.rows())) == 2
    counts = res.trajectory.counts_after_events()
    assert np.all(counts.sum(axis=(1, 2, 3)) == 1000)
    again = coupling_experiment(acc_cfg_coarse, 1000, seed=7, sol=acc_sol_coarse)
    assert np.array_equal(again.tau_mismatch_fraction, res.tau_mismatch_fraction)


def test_coupling_mismatch_shrinks_with_N(acc_cfg_coarse, acc_sol_coarse):
    def mean_frac(N):
        fr = [coupling_experiment(acc_cfg_coarse, N, seed=[N, r], sol=acc_sol_coarse) for r in range(6)]
        return np.mean([(x.tau_mismatch_fraction * x.n_susceptible).sum() / x.n_susceptible.sum() for x in fr])
    assert mean_frac(4000) < mean_frac(250)


def test_coupling_is_exchangeable_under_relabelling(acc_cfg_coarse, acc_sol_coarse):
    # permuting which substream each individual receives leaves the mismatch distribution unchanged
    N, reps = 500, 12
    plain, perm = [], []
    for r in range(reps):
        plain.append(coupling_experiment(acc_cfg_coarse, N, seed=[1, r], sol=acc_sol_coarse))
        pi = np.random.default_rng([2, r]).permutation(N)
        perm.append(coupling_experiment(acc_cfg_coarse, N, seed=[1, r], sol=acc_sol_coarse, permutation=pi))
    a = np.array([x.tau_mismatch_fraction.mean() for x in plain])
    b = np.array([x.tau_mismatch_fraction.mean() for x in perm])
    se = math.sqrt(a.var(ddof=1) / reps + b.var(ddof=1) / reps)
    assert abs(a.mean() - b.mean()) <= 4 * se
    assert not np.array_equal(a, b)
