"""Online resource allocation under the random-permutation model."""

from .algorithms import (
    DualVector,
    EsaState,
    algorithm1_run,
    dla_run,
    dual_estimate,
    esa_assign,
    esa_run,
    esa_run_traced,
    esa_update,
    estimate_prefix_value,
    krtv_run,
    ola_run,
    run_algorithm,
)
from .diagnostics import (
    EventStats,
    MartingaleTrace,
    event_stats,
    martingale_R,
    martingale_S,
    phi_trace,
    sandwich,
)
from .generators import (
    WorstCaseSpec,
    bit_vectors,
    build_worst_case,
    feasibility_instance,
    random_linear_instance,
    sample_permutation,
)
from .lp import LpProblem, LpSolution, offline_optimum, solve_lp, vertex_oracle
from .model import (
    INFEASIBLE,
    ConcaveLog,
    ConcavePower,
    ConcaveScalar,
    GammaBound,
    Instance,
    Item,
    LinearSimplex,
    LinearSimplexEq,
    RunResult,
    assign_from_dual,
    conjugate_value,
    eval_utility,
    gamma_of_instance,
    objective,
)
from .schedule import Schedule, build_schedule, eta, kappa, theta

__version__ = "0.1.0"
