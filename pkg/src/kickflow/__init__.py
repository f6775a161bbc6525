"""Spectral Galerkin simulator and diagnostics for kicked 2D Navier-Stokes.

The library is organised around a truncated Stokes eigenbasis on an
x-periodic strip: time integration of the kicked flow, an exact tangent
linearisation with its controllability Gramian, a regularised right
inverse used as a stabilising control for trajectory coupling, and
measure-level ergodicity diagnostics for particle ensembles.
"""

__version__ = "1.0.0"

from .basis import (
    DomainSpec,
    ModeIndex,
    analyze,
    bracket,
    eigenvalues,
    load_field,
    min_grid,
    mode_table,
    norms,
    poincare_constant,
    save_field,
    stokes_eigenvalue,
    synthesize,
)
from .config import ExperimentConfig, load_config, parse_config
from .dynamics import (
    SolverConfig,
    Trajectory,
    energy_identity_residual,
    flow,
    nonlinearity,
    step,
    time_one_map,
)
from .errors import (
    ConfigError,
    DivergedTrajectoryError,
    InsufficientDataError,
    KickflowError,
    SqueezingViolatedError,
    TuningFailedError,
)
from .ergodicity import (
    EmpiricalEnsemble,
    TestDictionary,
    absorbing_constants,
    bl_distance_1d,
    dual_lipschitz_lower,
    ensemble_step,
    k_star,
    krylov_average,
    make_compact,
    markov_run,
    mixing_fit,
    tail_energy,
)
from .linearization import (
    TangentOperators,
    assemble_gram,
    bilinear_q,
    compactness_diagnostic,
    forcing_derivative_apply,
    gram_limit_check,
    linearize_kick,
    psi_split,
    tangent_apply,
)
from .noise import (
    KickPath,
    NoiseSpec,
    amplitudes,
    eval_kick,
    kick_rng,
    load_kick,
    project_pm,
    sample_kick,
    save_kick,
    support_bound,
)
from .stabilisation import (
    ControlConfig,
    CouplingReport,
    couple,
    epsilon_check,
    phi,
    right_inverse_apply,
    right_inverse_matrix,
    tune,
)

__all__ = [
    "__version__",
    "DomainSpec",
    "ModeIndex",
    "SolverConfig",
    "Trajectory",
    "NoiseSpec",
    "KickPath",
    "TangentOperators",
    "ControlConfig",
    "CouplingReport",
    "EmpiricalEnsemble",
    "TestDictionary",
    "ExperimentConfig",
    "KickflowError",
    "ConfigError",
    "DivergedTrajectoryError",
    "TuningFailedError",
    "SqueezingViolatedError",
    "InsufficientDataError",
    "stokes_eigenvalue",
    "mode_table",
    "eigenvalues",
    "poincare_constant",
    "norms",
    "bracket",
    "min_grid",
    "synthesize",
    "analyze",
    "save_field",
    "load_field",
    "nonlinearity",
    "step",
    "flow",
    "time_one_map",
    "energy_identity_residual",
    "amplitudes",
    "sample_kick",
    "eval_kick",
    "project_pm",
    "support_bound",
    "kick_rng",
    "save_kick",
    "load_kick",
    "bilinear_q",
    "tangent_apply",
    "psi_split",
    "forcing_derivative_apply",
    "assemble_gram",
    "linearize_kick",
    "gram_limit_check",
    "compactness_diagnostic",
    "right_inverse_apply",
    "right_inverse_matrix",
    "phi",
    "epsilon_check",
    "tune",
    "couple",
    "make_compact",
    "markov_run",
    "ensemble_step",
    "krylov_average",
    "bl_distance_1d",
    "dual_lipschitz_lower",
    "mixing_fit",
    "tail_energy",
    "absorbing_constants",
    "k_star",
    "parse_config",
    "load_config",
]
