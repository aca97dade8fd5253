"""A-optimal and model-robust designs for mixed-level factorial experiments.

Effects are coded in the baseline parametrization.  The package computes
the A-optimal design measure with a multiplicative algorithm, turns it
into exact designs of a requested run size and certifies each design with
lower bounds on its efficiency, both for the assumed model and under
minimax misspecification.
"""

from .design import (
    DesignScore,
    ExactDesign,
    a_value,
    eff_lb,
    eff_lb_rho,
    info_of_design,
    psi,
    read_design,
    round_measure,
    rounding_scale,
    score_design,
    v_matrix,
    write_design,
)
from .errors import (
    BasefracError,
    BudgetExceededError,
    DeadEndError,
    DegenerateModelError,
    InvalidModelError,
    InvalidTreatmentError,
    NoInitialDesignError,
    NonConvergenceError,
    NoValidScaleError,
    SingularDesignError,
)
from .factorial import (
    Effect,
    FactorialModel,
    FactorialSpace,
    RequirementSet,
    build_model_matrices,
    build_orthocomplement,
)
from .measure import OptimizerResult, info_of_measure, optimize, phi
from .search import (
    OracleResult,
    ProcedureConfig,
    SearchTrace,
    brute_force_binary_oracle,
    procedure_a,
    procedure_b1,
    procedure_b2,
)

__version__ = "0.1.0"
