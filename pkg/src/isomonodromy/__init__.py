"""Numerical isomonodromic deformations.

Schlesinger flow and monodromy of Fuchsian systems, Levelt formal solutions,
Birkhoff factorization, Frobenius structures from special initial
conditions, and the tau-function with its genus-1 companion.
"""

from .birkhoff import (BirkhoffFactorization, GammaReduction, GaugeStepResult,
                       NearIdentityFactorization, factor_column_reduction,
                       factor_near_identity, gamma_reduce, gauge_step)
from .core import (DEFAULT_TOL, EigenDecomposition, MatrixLaurentSeries, Tolerance,
                   eigen_decompose, laurent_mul, laurent_split, mat_inverse, winding_number)
from .errors import (CheckFailure, DegenerateMetricError, DegeneratePivotError, InputError,
                     IsomonodromyError, NearCollisionError, NonConvergenceError,
                     NumericFailure, PoleOfSolution, SingularMatrixError, StiffnessError)
from .frobenius import (FrobeniusFrame, SpecialInit, classification_residuals,
                        move_frame, n_independence_check, projectors_at, random_special_init,
                        residues_from_init, second_connection_flatness,
                        validate_special_init)
from .levelt import (FormalSolution, FuchsLocalData, formal_solution, jordan_order,
                     nilpotent_monodromy, ode_residual)
from .schlesinger import (DeformationPath, FuchsianSystem, SchlesingerState, StepControl,
                          circle_loop, continue_along, isomonodromy_check,
                          local_monodromies, monodromy, vector_field)
from .tau import (RMatrixExpansion, TauAccumulator, closedness_residual, gauge_shift_check,
                  genus1_gradient, omega_at, r_matrix, scan_poles, tau_along)

__version__ = "0.1.0"

__all__ = [
    "BirkhoffFactorization", "GammaReduction", "GaugeStepResult", "NearIdentityFactorization",
    "factor_column_reduction", "factor_near_identity", "gamma_reduce", "gauge_step",
    "DEFAULT_TOL", "EigenDecomposition", "MatrixLaurentSeries", "Tolerance", "eigen_decompose",
    "laurent_mul", "laurent_split", "mat_inverse", "winding_number", "CheckFailure",
    "DegenerateMetricError", "DegeneratePivotError", "InputError", "IsomonodromyError",
    "NearCollisionError", "NonConvergenceError", "NumericFailure", "PoleOfSolution",
    "SingularMatrixError", "StiffnessError", "FrobeniusFrame", "SpecialInit",
    "classification_residuals", "move_frame", "n_independence_check", "projectors_at",
    "random_special_init", "residues_from_init", "second_connection_flatness",
    "validate_special_init", "FormalSolution", "FuchsLocalData", "formal_solution",
    "jordan_order", "nilpotent_monodromy", "ode_residual", "DeformationPath", "FuchsianSystem",
    "SchlesingerState", "StepControl", "circle_loop", "continue_along", "isomonodromy_check",
    "local_monodromies", "monodromy", "vector_field", "RMatrixExpansion", "TauAccumulator",
    "closedness_residual", "gauge_shift_check", "genus1_gradient", "omega_at", "r_matrix",
    "scan_poles", "tau_along",
]
