"""Reliability toolkit: stability intervals, Monte Carlo verdicts,
edge capacities, and monotone potential-interval tightening.

Strong stability freezes the control vector and asks how far a scalar
parameter can move before the state turns infeasible; weak stability
allows re-optimizing the controls inside a neighborhood, charging a
switch cost and tolerating a bounded objective degradation. Both scans
assume the feasible parameter set is an interval around the base point
(doubling steps bracket the boundary, bisection pins it down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import elements
from .continuous import (
    SearchOptions,
    build_problem,
    fixed_objective,
    minimize_continuous,
)
from .errors import (
    BaseInfeasible,
    CapacityUndefined,
    EmptyInterval,
    NonConvergence,
    NoPositiveSolution,
)
from .network import EdgeSpec, Network, build_spanning_tree
from .state import IndependentVariables, check_feasibility, solve_steady_state

#: State feasibility slack for probe verdicts (absorbs Newton dust only).
PROBE_FEASIBILITY_TOL = 1e-9


# -- parameter and control specifications ------------------------------------

@dataclass(frozen=True)
class ParameterTarget:
    """Which scalar the analyzed parameter drives.

    kinds: "intensity" (node demand/supply, applied as scale*value),
    "potential_bound" (a node's lo or hi bound), "coefficient" (one
    model constant of one edge).
    """

    kind: str
    node: str | None = None
    edge: str | None = None
    model_index: int = 1
    coeff_index: int = 0
    which: str = "hi"
    scale: float = 1.0


def intensity_parameter(node: str, scale: float = 1.0) -> ParameterTarget:
    return ParameterTarget("intensity", node=node, scale=scale)


def potential_bound_parameter(node: str, which: str = "hi") -> ParameterTarget:
    return ParameterTarget("potential_bound", node=node, which=which)


def coefficient_parameter(edge: str, model_index: int = 1,
                          coeff_index: int = 0) -> ParameterTarget:
    return ParameterTarget("coefficient", edge=edge, model_index=model_index,
                           coeff_index=coeff_index)


@dataclass(frozen=True)
class ParameterSpec:
    """Analyzed scalar parameter: target, base value, radius, resolution."""

    target: ParameterTarget
    base_value: float
    radius: float
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("parameter radius must be positive")
        if self.tolerance <= 0:
            raise ValueError("endpoint tolerance must be positive")


@dataclass(frozen=True)
class ControlVector:
    """Operator-set independent variables: root potential, continuous
    machine/equipment parameters, and the discrete choices."""

    root_potential: float
    params: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    choices: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ControlSpec:
    """Neighborhood and switch-cost rules for weak stability.

    The re-optimization box covers the continuous controls only; the
    discrete choices stay at their u0 values. The switch cost is a
    weighted L1 distance from u0, so it vanishes exactly at u0.
    """

    u0: ControlVector
    root_box: tuple[float, float] | None = None
    param_boxes: Mapping[str, Sequence[tuple[float, float]]] = field(default_factory=dict)
    root_weight: float = 1.0
    param_weight: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.root_box is not None:
            lo, hi = self.root_box
            if not lo <= self.u0.root_potential <= hi:
                raise ValueError("u0 root potential outside its neighborhood box")


@dataclass(frozen=True)
class StabilityCase:
    """Operating point under analysis: instance, demands, frozen control."""

    network: Network
    intensities: Mapping[str, float]
    control: ControlVector
    chord_guesses: Mapping[str, float] = field(default_factory=dict)
    root: str | None = None


@dataclass
class StabilityReport:
    """Aggregated stability results (fields filled per analysis run)."""

    interval: tuple[float, float] | None = None
    strong_stable: bool | None = None
    weak_interval: tuple[float, float] | None = None
    weak_stable: bool | None = None
    mc_fraction: float | None = None
    mc_verdict: bool | None = None
    capacities: dict[str, float | None] = field(default_factory=dict)
    tightened_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


# -- applying a parameter value ----------------------------------------------

def apply_parameter(case: StabilityCase, target: ParameterTarget,
                    value: float) -> StabilityCase:
    """New case with the target scalar driven to `value`."""
    if target.kind == "intensity":
        intensities = dict(case.intensities)
        intensities[target.node] = target.scale * value
        return replace(case, intensities=intensities)
    if target.kind == "potential_bound":
        nodes = []
        for n in case.network.nodes:
            if n.id == target.node:
                if target.which == "hi":
                    n = replace(n, potential_hi=value)
                else:
                    n = replace(n, potential_lo=value)
            nodes.append(n)
        return replace(case, network=Network(tuple(nodes), case.network.edges,
                                             case.network.root))
    if target.kind == "coefficient":
        edges = []
        for e in case.network.edges:
            if e.id == target.edge:
                models = list(e.models)
                m = models[target.model_index - 1]
                coeffs = list(m.coefficients)
                coeffs[target.coeff_index] = value
                models[target.model_index - 1] = replace(m, coefficients=tuple(coeffs))
                e = replace(e, models=tuple(models))
            edges.append(e)
        return replace(case, network=Network(case.network.nodes, tuple(edges),
                                             case.network.root))
    raise ValueError(f"unknown parameter target kind {target.kind!r}")


def _full_choices(net: Network, control: ControlVector) -> dict[str, int]:
    choices = {}
    for e in net.edges:
        choices[e.id] = control.choices.get(e.id, 1)
    return choices


def frozen_state_objective(case: StabilityCase) -> tuple[bool, float]:
    """(feasible, objective) of the frozen-control state; objective is NaN
    when the solve fails outright."""
    net = case.network
    tree = build_spanning_tree(net, case.root)
    iv = IndependentVariables(
        chord_flows=dict(case.chord_guesses),
        root_potential=case.control.root_potential,
        intensities=dict(case.intensities),
        edge_params={k: tuple(v) for k, v in case.control.params.items()},
        edge_choice=_full_choices(net, case.control),
    )
    try:
        state = solve_steady_state(net, tree, iv)
    except (NoPositiveSolution, NonConvergence):
        return False, math.nan
    report = check_feasibility(net, state)
    value = fixed_objective(net, state, _full_choices(net, case.control))
    return report.max_violation <= PROBE_FEASIBILITY_TOL, value


def _fixed_problem(case: StabilityCase, root_box=None, param_boxes=None):
    net = case.network
    intensity_bounds = {n: (v, v) for n, v in case.intensities.items()}
    rp = case.control.root_potential
    param_bounds = {}
    for eid, vals in case.control.params.items():
        param_bounds[eid] = tuple((v, v) for v in vals)
    if param_boxes:
        for eid, boxes in param_boxes.items():
            param_bounds[eid] = tuple(boxes)
    from .network import Fragment, fragment_order

    order = fragment_order(net, case.root)
    fragment = Fragment(tuple(case.control.choices.get(eid, 1) for eid in order))
    return build_problem(
        net, root=case.root, fragment=fragment,
        intensity_bounds=intensity_bounds,
        root_potential_bounds=root_box if root_box is not None else (rp, rp),
        param_bounds=param_bounds,
        chord_guesses=case.chord_guesses,
    )


# -- interval scans -----------------------------------------------------------

@dataclass
class IntervalScan:
    interval: tuple[float, float]
    capped: tuple[bool, bool]
    probes: list[tuple[float, bool]] = field(default_factory=list)

    def beyond_bracket_warnings(self) -> list[str]:
        lo, hi = self.interval
        out = []
        for pi, ok in self.probes:
            if ok and (pi < lo - 1e-12 or pi > hi + 1e-12):
                out.append(f"feasible probe at {pi:.6g} beyond [{lo:.6g}, {hi:.6g}]; "
                           "feasible set may not be an interval")
        return out


def _scan_halfline(is_feasible: Callable[[float], bool], pi0: float,
                   delta0: float, tol: float, direction: float,
                   probes: list[tuple[float, bool]]) -> tuple[float, bool]:
    """Doubling steps from the tolerance until infeasible (cap 10*delta0),
    then bisection of the bracket to endpoint tolerance."""
    cap = 10.0 * delta0
    offset = tol
    good = 0.0
    bad = None
    while offset <= cap:
        pi = pi0 + direction * offset
        ok = is_feasible(pi)
        probes.append((pi, ok))
        if ok:
            good = offset
            offset *= 2.0
        else:
            bad = offset
            break
    if bad is None:
        pi = pi0 + direction * cap
        ok = is_feasible(pi)
        probes.append((pi, ok))
        if ok:
            return pi0 + direction * cap, True
        bad = cap
    lo, hi = good, bad
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        pi = pi0 + direction * mid
        ok = is_feasible(pi)
        probes.append((pi, ok))
        if ok:
            lo = mid
        else:
            hi = mid
    return pi0 + direction * lo, False


def _scan_interval(is_feasible: Callable[[float], bool],
                   pspec: ParameterSpec) -> IntervalScan:
    probes: list[tuple[float, bool]] = []
    hi, hi_capped = _scan_halfline(is_feasible, pspec.base_value, pspec.radius,
                                   pspec.tolerance, +1.0, probes)
    lo, lo_capped = _scan_halfline(is_feasible, pspec.base_value, pspec.radius,
                                   pspec.tolerance, -1.0, probes)
    return IntervalScan((lo, hi), (lo_capped, hi_capped), probes)


@dataclass
class StrongStabilityResult:
    interval: tuple[float, float]
    strong_stable: bool
    capped: tuple[bool, bool]
    warnings: list[str] = field(default_factory=list)


def strong_stability_interval(case: StabilityCase,
                              pspec: ParameterSpec) -> StrongStabilityResult:
    """Feasibility interval of the parameter under the frozen control.

    Raises:
        BaseInfeasible: the base point itself is infeasible.
    """

    def feasible_at(pi: float) -> bool:
        probe = apply_parameter(case, pspec.target, pi)
        ok, _ = frozen_state_objective(probe)
        return ok

    if not feasible_at(pspec.base_value):
        raise BaseInfeasible(f"base point {pspec.base_value:g} is infeasible")
    scan = _scan_interval(feasible_at, pspec)
    lo, hi = scan.interval
    margin = min(pspec.base_value - lo, hi - pspec.base_value)
    return StrongStabilityResult(scan.interval, margin >= pspec.radius,
                                 scan.capped, scan.beyond_bracket_warnings())


@dataclass
class WeakProbe:
    pi: float
    weak: bool
    witness_root_potential: float | None = None
    witness_params: dict[str, tuple[float, ...]] = field(default_factory=dict)
    frozen_reference_approximate: bool = False


@dataclass
class WeakStabilityResult:
    interval: tuple[float, float]
    weak_stable: bool
    capped: tuple[bool, bool]
    probes: list[WeakProbe] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _reoptimize_controls(case: StabilityCase, cspec: ControlSpec,
                         options: SearchOptions) -> tuple[bool, float, dict | None]:
    """(found, best F1, witness controls) for min F + switch cost over U0."""
    root_box = cspec.root_box or (cspec.u0.root_potential, cspec.u0.root_potential)
    problem = _fixed_problem(case, root_box=root_box, param_boxes=cspec.param_boxes)
    u0 = cspec.u0

    def switch_cost(x: np.ndarray) -> float:
        cost = 0.0
        for value, v in zip(x, problem.variables):
            if v.kind == "root_potential":
                cost += cspec.root_weight * abs(value - u0.root_potential)
            elif v.kind == "param":
                base = u0.params.get(v.key[0], ())
                if v.key[1] < len(base):
                    cost += cspec.param_weight * abs(value - base[v.key[1]])
        return cost

    x0 = problem.pack(root_potential=u0.root_potential, params=u0.params)
    result = minimize_continuous(problem, x0, options, extra_objective=switch_cost)
    if not result.feasible:
        return False, math.inf, None
    witness = {
        "root_potential": float(result.x[problem.index_of("root_potential")]),
        "params": {},
    }
    for i, v in enumerate(problem.variables):
        if v.kind == "param":
            witness["params"].setdefault(v.key[0], {})[v.key[1]] = float(result.x[i])
    return True, result.value, witness


def weak_stability_check(case: StabilityCase, cspec: ControlSpec,
                         pspec: ParameterSpec,
                         options: SearchOptions = SearchOptions()
                         ) -> WeakStabilityResult:
    """Weakly stable parameter interval: at each probed value some control
    in the neighborhood restores feasibility with total objective change
    (including the switch cost) below eta.

    Where the frozen state is itself infeasible, the frozen reference
    objective is taken at the nearest feasible probe of the frozen scan
    and the probe is flagged approximate.
    """
    frozen_values: list[tuple[float, float]] = []  # (pi, objective), feasible only

    def frozen_at(pi: float) -> tuple[bool, float]:
        probe = apply_parameter(case, pspec.target, pi)
        ok, value = frozen_state_objective(probe)
        if ok:
            frozen_values.append((pi, value))
        return ok, value

    base_ok, base_value = frozen_at(pspec.base_value)
    probes: list[WeakProbe] = []

    def weak_at(pi: float) -> bool:
        frozen_ok, frozen_value = frozen_at(pi)
        approx = not frozen_ok
        if approx:
            if not frozen_values:
                return False
            frozen_value = min(frozen_values, key=lambda fv: abs(fv[0] - pi))[1]
        probe_case = apply_parameter(case, pspec.target, pi)
        found, best_f1, witness = _reoptimize_controls(probe_case, cspec, options)
        weak = found and abs(frozen_value - best_f1) < cspec.eta
        probes.append(WeakProbe(
            pi, weak,
            witness["root_potential"] if witness else None,
            {k: tuple(v[j] for j in sorted(v)) for k, v in
             (witness["params"].items() if witness else ())},
            frozen_reference_approximate=approx,
        ))
        return weak

    if not weak_at(pspec.base_value):
        raise BaseInfeasible(
            f"base point {pspec.base_value:g} is not weakly stabilizable")
    scan = _scan_interval(weak_at, pspec)
    lo, hi = scan.interval
    margin = min(pspec.base_value - lo, hi - pspec.base_value)
    return WeakStabilityResult(scan.interval, margin >= pspec.radius, scan.capped,
                               probes, scan.beyond_bracket_warnings())


def monte_carlo_stability(case: StabilityCase, cspec: ControlSpec,
                          pspecs: Sequence[ParameterSpec], *,
                          samples: int = 200, threshold: float = 0.95,
                          seed: int = 0,
                          options: SearchOptions = SearchOptions()
                          ) -> tuple[float, bool]:
    """Fraction of uniform parameter-box samples that are weakly stable,
    and the verdict against the acceptance threshold.

    Sampling is driven by a seeded generator, so fixed inputs reproduce
    the fraction exactly. Where the frozen state is infeasible at a
    sample, the frozen reference objective is taken at the base point.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    rng = np.random.default_rng(seed)
    _, base_value = frozen_state_objective(case)

    hits = 0
    for _ in range(samples):
        probe_case = case
        for ps in pspecs:
            pi = rng.uniform(ps.base_value - ps.radius, ps.base_value + ps.radius)
            probe_case = apply_parameter(probe_case, ps.target, pi)
        frozen_ok, frozen_value = frozen_state_objective(probe_case)
        if not frozen_ok:
            frozen_value = base_value
        if isinstance(frozen_value, float) and math.isnan(frozen_value):
            continue
        found, best_f1, _ = _reoptimize_controls(probe_case, cspec, options)
        if found and abs(frozen_value - best_f1) < cspec.eta:
            hits += 1
    fraction = hits / samples
    return fraction, fraction >= threshold


# -- capacity and interval tightening -----------------------------------------

def edge_capacity(edge: EdgeSpec, p_i_bounds: tuple[float, float],
                  p_k_bounds: tuple[float, float], *, grid: int = 64) -> float:
    """Greatest flow the edge can carry over all choices and in-bounds
    endpoint potentials.

    Flow-determined models are monotone in both potentials, so the
    unconstrained maximum sits at the corner (p_i max, p_k min);
    envelope-constrained models fall back to a grid scan with per-point
    envelope feasibility.

    Raises:
        CapacityUndefined: no flow-determined model in the family.
    """
    best: float | None = None
    for model in edge.models:
        if not model.flow_determined:
            continue
        if model.envelope is None:
            q = elements.solve_flow(model, (), p_i_bounds[1], p_k_bounds[0])
            best = q if best is None else max(best, q)
        else:
            for p_i in np.linspace(p_i_bounds[0], p_i_bounds[1], grid):
                for p_k in np.linspace(p_k_bounds[0], p_k_bounds[1], grid):
                    q = elements.solve_flow(model, (), p_i, p_k)
                    if elements.envelope_violation(model.envelope, q, 0.0) == 0.0:
                        best = q if best is None else max(best, q)
    if best is None:
        raise CapacityUndefined(
            f"edge {edge.id!r} has no flow-determined model")
    return best


def _forward_interval(model, c, interval, q):
    """Image of the upstream potential interval through the edge relation."""
    a, b = interval
    if model.kind == elements.LINEAR_RESISTOR:
        drop = model.coefficients[0] * q
        return a - drop, b - drop
    if model.kind == elements.QUADRATIC_PIPE:
        drop = model.coefficients[0] * q * abs(q)
        hi2 = b * b - drop
        if hi2 <= 0.0:
            return 1.0, 0.0  # empty
        lo2 = a * a - drop
        return (math.sqrt(lo2) if lo2 > 0 else 0.0), math.sqrt(hi2)
    if model.kind == elements.RATIO_MACHINE:
        return c[0] * a, c[0] * b
    if model.kind == elements.FIXED_DROP:
        return a - c[0], b - c[0]
    raise ValueError(model.kind)


def _backward_interval(model, c, interval, q):
    """Preimage: upstream potentials compatible with a downstream interval."""
    a, b = interval
    if model.kind == elements.LINEAR_RESISTOR:
        drop = model.coefficients[0] * q
        return a + drop, b + drop
    if model.kind == elements.QUADRATIC_PIPE:
        drop = model.coefficients[0] * q * abs(q)
        hi2 = b * b + drop
        if hi2 <= 0.0:
            return 1.0, 0.0
        lo2 = a * a + drop
        return (math.sqrt(lo2) if lo2 > 0 else 0.0), math.sqrt(hi2)
    if model.kind == elements.RATIO_MACHINE:
        return a / c[0], b / c[0]
    if model.kind == elements.FIXED_DROP:
        return a + c[0], b + c[0]
    raise ValueError(model.kind)


def tighten_potential_intervals(net: Network, flows: Mapping[str, float],
                                choices: Mapping[str, int],
                                params: Mapping[str, tuple[float, ...]] | None = None,
                                ) -> dict[str, tuple[float, float]]:
    """Tightest per-node potential intervals consistent with the edge
    relations at the known flows.

    Interval constraint propagation to a fixed point: each edge maps its
    neighbor's interval through the (monotone) relation and intersects.
    The result is equivalent to the raw bounds: the system is solvable
    within the raw bounds iff it is within the tightened ones, and any
    potential outside a tightened interval extends to no in-bounds
    solution.

    Raises:
        EmptyInterval: tightening proved infeasibility at this flow.
    """
    params = params or {}
    intervals: dict[str, tuple[float, float]] = {
        n.id: (n.potential_lo, n.potential_hi) for n in net.nodes}

    def intersect(node: str, lo: float, hi: float) -> bool:
        cur_lo, cur_hi = intervals[node]
        new_lo, new_hi = max(cur_lo, lo), min(cur_hi, hi)
        if new_lo > new_hi + 1e-12 * (1.0 + abs(new_hi)):
            raise EmptyInterval(
                f"no admissible potential at node {node!r}", node_id=node)
        new_lo = min(new_lo, new_hi)
        changed = abs(new_lo - cur_lo) > 1e-12 or abs(new_hi - cur_hi) > 1e-12
        intervals[node] = (new_lo, new_hi)
        return changed

    max_sweeps = max(1, 10 * len(net.edges))
    for _ in range(max_sweeps):
        changed = False
        for e in net.edges:
            model = e.model(choices.get(e.id, 1))
            c = params.get(e.id, ())
            q = flows[e.id]
            lo, hi = _forward_interval(model, c, intervals[e.from_node], q)
            changed |= intersect(e.to_node, lo, hi)
            lo, hi = _backward_interval(model, c, intervals[e.to_node], q)
            changed |= intersect(e.from_node, lo, hi)
        if not changed:
            break
    return intervals
