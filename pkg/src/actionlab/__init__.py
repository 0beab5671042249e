"""actionlab: action minimization over discrete measures, with dual certificates.

Discretizes Lagrangian action minimization on the torus as a finite linear
program over edge measures, solves it with exact combinatorial algorithms,
extracts the dual decomposition L = c0 + df + g, and verifies the optimality
structure numerically (energy conservation, complementary slackness, momentum
regularity).  A finite-horizon optimal-control variant runs on a time-layered
state grid with value-function and maximum-principle checks.
"""

from .grid import (
    BoundaryCurrent,
    DiscreteMeasure,
    LagrangianTable,
    PhaseGrid,
    boundary_of_measure,
    build_torus_grid,
    discrete_differential,
    sample_lagrangian,
)
from .measure_lp import (
    CLOSED,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    FlowDecomposition,
    MinimizationProblem,
    OptimalSolution,
    decompose,
    solve_boundary,
    solve_closed,
)
from .certificates import (
    DualCertificate,
    WeakKamResult,
    certify_boundary,
    certify_closed,
    lax_oleinik_backward,
    lax_oleinik_forward,
    weak_kam_iterate,
)
from .convexify import (
    FiberEnvelope,
    envelope_fiber_derivative,
    fiber_convex_envelope,
    momentum_at,
    momentum_field,
)
from .diagnostics import (
    DiagnosticsReport,
    check_energy_conservation,
    discrete_hamiltonian,
    estimate_momentum_lipschitz,
    full_report,
    torus_distance,
)
from .control import (
    ControlCertificate,
    ControlMeasure,
    ControlProblem,
    ValueFunction,
    certify_control,
    check_u_v_relation,
    extract_optimal_trajectories,
    hjb_residual,
    make_control_problem,
    maximum_principle_check,
    solve_relaxed_lp,
    solve_value_function,
)
from .scenarios import SCENARIOS, parse_config, refinement_sweep, run_scenario

__version__ = "0.1.0"
