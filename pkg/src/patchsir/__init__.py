"""SIR epidemics over patches and population groups, with random infectivity paths.

Exact stochastic simulation lives in :mod:`patchsir.abm` and the deterministic
limit in :mod:`patchsir.limit`.  The limit is cross-checked against a
backward-equation representation (:mod:`patchsir.feynman_kac`) and a
mean-field fixed point with particle coupling (:mod:`patchsir.mckv`);
:mod:`patchsir.harness` runs convergence studies over population sizes.
"""

__version__ = "0.1.0"

from .config import ModelConfig, ContactSchedule, load_config, parse_config  # noqa: E402
from .errors import ConfigError, NonConvergenceError, PatchSIRError, SolverError  # noqa: E402
from .infectivity import (ConstantPlateau, DelayedPlateau, DeterministicLaw, Duration,  # noqa: E402
                          InfectivityPath, PiecewiseTable)
from .mobility import Mobility, RateSchedule  # noqa: E402

__all__ = [
    "ModelConfig", "ContactSchedule", "load_config", "parse_config",
    "ConfigError", "NonConvergenceError", "PatchSIRError", "SolverError",
    "ConstantPlateau", "DelayedPlateau", "DeterministicLaw", "Duration", "InfectivityPath", "PiecewiseTable",
    "Mobility", "RateSchedule",
]
