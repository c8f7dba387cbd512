"""Steady-state flow with nonlinear potential in general networks.

Simulation of network states, mixed discrete-continuous optimization of
equipment selection and operating parameters, and stability, capacity,
and reliability analysis.
"""

__version__ = "0.1.0"

from . import errors
from .continuous import (
    ContinuousProblem,
    MinimizeResult,
    PenaltyWeights,
    SearchOptions,
    assemble_penalty,
    build_dominant,
    build_problem,
    compass_search,
    minimize_continuous,
    realize_tension,
    solve_with_realizability,
)
from .discrete import (
    BnBOptions,
    BnBResult,
    EnumerationCursor,
    branch_and_bound,
    fragment_feasible,
    next_fragment,
)
from .documents import (
    Scenario,
    load_network,
    load_scenario,
    network_from_document,
    network_to_document,
    write_report,
)
from .elements import (
    EdgeModel,
    OperatingEnvelope,
    SideConstraint,
    envelope_violation,
    fixed_drop,
    linear_resistor,
    quadratic_pipe,
    ratio_machine,
    residual,
    side_constraint_value,
    solve_downstream,
    solve_flow,
    solve_upstream,
)
from .network import (
    EdgeObjective,
    EdgeSpec,
    Fragment,
    Network,
    NetworkState,
    NodeObjective,
    NodeSpec,
    TreeDecomposition,
    ValidationReport,
    build_spanning_tree,
    fragment_order,
    prefix_subnetwork,
    validate_network,
)
from .stability import (
    ControlSpec,
    ControlVector,
    ParameterSpec,
    ParameterTarget,
    StabilityCase,
    StabilityReport,
    coefficient_parameter,
    edge_capacity,
    intensity_parameter,
    monte_carlo_stability,
    potential_bound_parameter,
    strong_stability_interval,
    tighten_potential_intervals,
    weak_stability_check,
)
from .state import (
    FeasibilityReport,
    IndependentVariables,
    NewtonOptions,
    check_feasibility,
    chord_residuals,
    distribute_flows,
    distribute_potentials,
    solve_steady_state,
)
