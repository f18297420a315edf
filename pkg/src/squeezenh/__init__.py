"""Conditional spin squeezing of a collective spin under non-Hermitian
one-axis twisting.

The package simulates N two-level atoms in the symmetric (Dicke) sector
evolving under H_eff = chi*Jx^2 - i*(gamma/2)*N_up, i.e. one-axis twisting
plus collective decay conditioned on observing no quantum jump. It computes
the Wineland squeezing parameter along conditional trajectories, locates
steady and optimal squeezing, the success probability of the no-jump
postselection, and their scalings with atom number, with Hermitian one-axis
and two-axis twisting baselines for comparison.
"""

from .basis import SpinSector, SpinState
from .operators import (
    ModelParams,
    BandedOperator,
    build_jx,
    build_jy,
    build_jz,
    build_n_up,
    build_jx_squared,
    build_h_eff,
    build_h_tact,
    expectation,
)
from .dynamics import (
    EigenPair,
    EvolutionTrace,
    propagate,
    survival_probability,
    steady_state,
    detect_steady_time,
)
from .squeezing import (
    SqueezingResult,
    PowerLawFit,
    squeezing_parameter,
    variance_along,
    to_db,
    husimi_q,
    detect_t_min,
    fit_power_law,
)
from .experiments import (
    run_evolution,
    run_steady_sweep,
    run_scaling_steady,
    run_scaling_dynamic,
    run_gamma_sweep_dynamic,
    baseline_oat,
    baseline_tact,
    sample_grid,
)

__version__ = "0.1.0"

__all__ = [
    "SpinSector",
    "SpinState",
    "ModelParams",
    "BandedOperator",
    "build_jx",
    "build_jy",
    "build_jz",
    "build_n_up",
    "build_jx_squared",
    "build_h_eff",
    "build_h_tact",
    "expectation",
    "EigenPair",
    "EvolutionTrace",
    "propagate",
    "survival_probability",
    "steady_state",
    "detect_steady_time",
    "SqueezingResult",
    "PowerLawFit",
    "squeezing_parameter",
    "variance_along",
    "to_db",
    "husimi_q",
    "detect_t_min",
    "fit_power_law",
    "run_evolution",
    "run_steady_sweep",
    "run_scaling_steady",
    "run_scaling_dynamic",
    "run_gamma_sweep_dynamic",
    "baseline_oat",
    "baseline_tact",
    "sample_grid",
    "__version__",
]
