"""Ready-made configurations used by the demos, the CLI tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .config import ContactSchedule, ModelConfig
from .infectivity import ConstantPlateau, DelayedPlateau, Duration
from .mobility import Mobility, RateSchedule

__all__ = ["markov_sir", "two_by_two", "acceptance_2x2"]


def markov_sir(N=10_000, horizon=20.0, rate=0.5, recovery=0.25, I0=0.01, grid_step=1e-3, seed=0, gamma=1.0):
    """Single population with constant infectivity and exponential infected period.

    The limit is the classical SIR ODE ``S' = -rate S I``, ``I' = rate S I - recovery I``.
    """
    law = ConstantPlateau(rate, Duration.exponential(recovery))
    return ModelConfig(
        K=1, L=1, gamma=gamma, beta=ContactSchedule.constant(1, 1, 1.0), mobility=Mobility.none(1, 1),
        law_new=[law], law_init=[law], S0=[[1.0 - I0]], I0=[[I0]], R0=[[0.0]],
        N=N, horizon=horizon, seed=seed, grid_step=grid_step,
    )


def _two_by_two_beta():
    # beta[k, l, k', l']: strong contacts inside a patch, weak across patches
    b = np.zeros((2, 2, 2, 2))
    for k in range(2):
        for l in range(2):
            for k2 in range(2):
                for l2 in range(2):
                    within = 2.0 if k == k2 else 1.2
                    b[k, l, k2, l2] = within if l == l2 else 0.2
    return b


def two_by_two(gamma=0.5, N=16_000, horizon=10.0, grid_step=1e-3, seed=0):
    """Two groups in two patches.

    Group 1 is infectious from infection on; group 2 has an exposed period.
    Susceptible movement slows down at ``t = 5``.
    """
    law1 = ConstantPlateau(0.6, Duration.exponential(0.3), cap=1.0)
    law2 = DelayedPlateau(Duration.exponential(2.0), 0.8, Duration.exponential(0.4), cap=1.0)
    law2_init = ConstantPlateau(0.8, Duration.exponential(0.5), cap=1.0)
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    s_move = RateSchedule((0.0, 5.0), np.stack([0.05 * off, 0.01 * off]))
    i_move = RateSchedule.constant(0.02 * off)
    r_move = RateSchedule.constant(0.05 * off)
    mob = Mobility.uniform(s_move, i_move, r_move, K=2)
    beta = ContactSchedule((0.0,), _two_by_two_beta()[None], beta_star=2.5)
    return ModelConfig(
        K=2, L=2, gamma=gamma, beta=beta, mobility=mob,
        law_new=[law1, law2], law_init=[law1, law2_init],
        S0=[[0.30, 0.20], [0.25, 0.23]], I0=[[0.01, 0.0], [0.005, 0.005]], R0=[[0.0, 0.0], [0.0, 0.0]],
        N=N, horizon=horizon, seed=seed, grid_step=grid_step,
    )


def acceptance_2x2(gamma=0.5, N=16_000, horizon=10.0, grid_step=1e-3, seed=0):
    """Two groups in two patches with a modest outbreak and low-variance infected periods.

    Used by the acceptance suite.  Infected periods are gamma distributed
    (coefficient of variation 1/4 or about 1/3), contacts are weaker than in
    :func:`two_by_two` and movement is slow, so the N-dependence of the
    simulation error is dominated by infection noise rather than by the
    spread of recovery times.  Infecteds peak near ``t = 3``.
    """
    G = Duration.gamma
    law1 = ConstantPlateau(0.6, G(16.0, 0.25), cap=1.0)
    law2 = DelayedPlateau(G(8.0, 0.125), 0.8, G(16.0, 0.125), cap=1.0)
    law2_init = ConstantPlateau(0.8, G(8.0, 0.125), cap=1.0)
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    s_move = RateSchedule((0.0, 5.0), np.stack([0.01 * off, 0.002 * off]))
    mob = Mobility.uniform(s_move, RateSchedule.constant(0.004 * off), RateSchedule.constant(0.01 * off), K=2)
    b = np.zeros((2, 2, 2, 2))
    for k in range(2):
        for l in range(2):
            for k2 in range(2):
                for l2 in range(2):
                    b[k, l, k2, l2] = (0.45 if k == k2 else 0.27) if l == l2 else 0.045
    return ModelConfig(
        K=2, L=2, gamma=gamma, beta=ContactSchedule((0.0,), b[None], beta_star=1.0), mobility=mob,
        law_new=[law1, law2], law_init=[law1, law2_init],
        S0=[[0.30, 0.20], [0.25, 0.23]], I0=[[0.01, 0.0], [0.005, 0.005]], R0=[[0.0, 0.0], [0.0, 0.0]],
        N=N, horizon=horizon, seed=seed, grid_step=grid_step,
    )
