"""Numerical laboratory for a regularized chemotaxis-consumption system.

The package solves the coupled parabolic pair

    u_t = div(grad u) - div(u F'_eps(u) grad v),
    v_t = div(grad v) - F_eps(u) v,

with homogeneous Neumann boundary conditions on a rectangular box, where
``F_eps(s) = (1/eps) * ln(1 + eps*s)`` saturates the chemotactic flux.  Around
the solver it provides, as executable checks: exact mass conservation, the
maximum principle for the signal, an entropy/energy dissipation inequality,
a smooth truncation family with seven verified axioms, renormalized and
truncated weak-form residuals, defect-measure ladders, and refinement /
regularization-sweep studies, plus a command-line interface with binary
snapshot and CSV persistence.
"""

__version__ = "0.1.0"

from .grid import ScalarField, TensorGrid, integrate
from .regularization import (
    CutoffProfile,
    Regularization,
    TruncationFamily,
    f_eps,
    f_eps_prime,
    truncation_prime,
    truncation_second,
    truncation_value,
    verify_truncation_axioms,
)
from .dynamics import (
    DiagnosticsSinks,
    InitialData,
    NumericalBlowUp,
    PositivityViolation,
    SolverConfig,
    SolverFailure,
    SolverState,
    TrajectoryStore,
    initial_state,
    oracle_solve,
    run,
    step,
)
from .diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    check_budgets,
    check_energy_inequality,
    compute_record,
)
from .weakform import (
    DefectMeasureReport,
    Renormalizer,
    TemporalBump,
    TestFunction,
    defect_measures,
    renormalized_residual,
    truncated_identity_residual,
    v_weak_residual,
)
from .experiments import (
    DEFAULT_TRUNCATION_LEVELS,
    ScenarioSpec,
    StudyPlan,
    StudyVerdict,
    epsilon_sweep,
    make_initial_data,
    refinement_study,
    truncation_sweep,
)

__all__ = [
    "__version__",
    "CSV_COLUMNS",
    "CutoffProfile",
    "DEFAULT_TRUNCATION_LEVELS",
    "DefectMeasureReport",
    "DiagnosticsRecord",
    "DiagnosticsSinks",
    "InitialData",
    "NumericalBlowUp",
    "PositivityViolation",
    "Regularization",
    "Renormalizer",
    "ScalarField",
    "ScenarioSpec",
    "SolverConfig",
    "SolverFailure",
    "SolverState",
    "StudyPlan",
    "StudyVerdict",
    "TemporalBump",
    "TensorGrid",
    "TestFunction",
    "TrajectoryStore",
    "TruncationFamily",
    "check_budgets",
    "check_energy_inequality",
    "compute_record",
    "defect_measures",
    "epsilon_sweep",
    "f_eps",
    "f_eps_prime",
    "initial_state",
    "integrate",
    "make_initial_data",
    "oracle_solve",
    "refinement_study",
    "renormalized_residual",
    "run",
    "step",
    "truncated_identity_residual",
    "truncation_prime",
    "truncation_second",
    "truncation_sweep",
    "truncation_value",
    "v_weak_residual",
    "verify_truncation_axioms",
]
