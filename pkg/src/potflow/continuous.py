"""Continuous search with dominant relaxations and tension realizability.

A continuous problem fixes some discrete choices and relaxes the rest:
each undecided edge's equation family is replaced by the single relation
``t = p_i - p_k`` with the tension ``t`` a bounded free variable. The
feasible set of the original problem under any completion is contained
in the relaxed problem's feasible set, so relaxed infeasibility prunes
whole assignment subtrees and the relaxed optimum is a lower bound.

The search itself is a derivative-free compass (pattern) search over the
independent variables with quadratic exterior penalties escalating over
outer rounds; chord flows are eliminated per evaluation by the tree
solver, keeping the poll dimension small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import elements
from .errors import NonConvergence, NoPositiveSolution, UnrealizableOptimum
from .network import (
    EdgeSpec,
    Fragment,
    Network,
    NetworkState,
    TreeDecomposition,
    build_spanning_tree,
    fragment_order,
)
from .state import (
    FeasibilityReport,
    IndependentVariables,
    NewtonOptions,
    check_feasibility,
    solve_steady_state,
)

#: Penalized value assigned to points where the state solve fails; the
#: failure magnitude is added so searches have a slope out of dead regions.
FAILURE_PENALTY = 1e9

REALIZATION_TOLERANCE = 1e-8
REALIZABILITY_GAP_LIMIT = 1e-6


@dataclass(frozen=True)
class Variable:
    """One independent continuous variable with its box."""

    name: str
    kind: str  # "root_potential" | "intensity" | "param" | "tension"
    key: tuple
    lo: float
    hi: float


@dataclass(frozen=True)
class PenaltyWeights:
    feasibility: float = 10.0
    tension: float = 10.0


@dataclass(frozen=True)
class SearchOptions:
    """Knobs for the penalized compass search (all plain data)."""

    max_evaluations: int = 20_000
    initial_step_fraction: float = 0.1
    min_step_fraction: float = 1e-6
    penalty_rounds: int = 5
    penalty_growth: float = 10.0
    initial_weights: PenaltyWeights = PenaltyWeights()
    feasibility_tolerance: float = 1e-6
    newton: NewtonOptions = NewtonOptions()


@dataclass(frozen=True)
class ContinuousProblem:
    """A fully continuous problem: fixed choices plus tension relaxations.

    `source` keeps the original families (used for realization and
    costs); `network` is the effective instance where every relaxed edge
    carries the single fixed-drop relation whose parameter is the
    tension.
    """

    source: Network
    network: Network
    tree: TreeDecomposition
    order: tuple[str, ...]
    fragment: Fragment
    choices: dict[str, int]
    tension_edges: tuple[str, ...]
    variables: tuple[Variable, ...]
    chord_guesses: dict[str, float] = field(default_factory=dict)

    @property
    def lo(self) -> np.ndarray:
        return np.array([v.lo for v in self.variables], dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.array([v.hi for v in self.variables], dtype=float)

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def pack(self, root_potential: float | None = None,
             intensities: Mapping[str, float] | None = None,
             params: Mapping[str, Sequence[float]] | None = None,
             base: np.ndarray | None = None) -> np.ndarray:
        """Vector for the catalog with selected entries overridden."""
        x = self.midpoint() if base is None else np.array(base, dtype=float)
        for i, v in enumerate(self.variables):
            if v.kind == "root_potential" and root_potential is not None:
                x[i] = root_potential
            elif v.kind == "intensity" and intensities and v.key[0] in intensities:
                x[i] = intensities[v.key[0]]
            elif v.kind in ("param", "tension") and params and v.key[0] in params:
                vals = params[v.key[0]]
                if v.key[1] < len(vals):
                    x[i] = vals[v.key[1]]
        return np.clip(x, self.lo, self.hi)

    def independent_variables(self, x: np.ndarray,
                              chord_flows: Mapping[str, float] | None = None
                              ) -> IndependentVariables:
        root_potential = 0.0
        intensities: dict[str, float] = {}
        params: dict[str, list[float]] = {e.id: [] for e in self.network.edges}
        for value, v in zip(x, self.variables):
            if v.kind == "root_potential":
                root_potential = float(value)
            elif v.kind == "intensity":
                intensities[v.key[0]] = float(value)
            else:
                params[v.key[0]].append(float(value))
        return IndependentVariables(
            chord_flows=dict(chord_flows if chord_flows is not None
                             else self.chord_guesses),
            root_potential=root_potential,
            intensities=intensities,
            edge_params={k: tuple(v) for k, v in params.items()},
            edge_choice=dict(self.choices),
        )


def _tension_bounds(net: Network, edge: EdgeSpec) -> tuple[float, float]:
    ni = net.node_by_id[edge.from_node]
    nk = net.node_by_id[edge.to_node]
    return ni.potential_lo - nk.potential_hi, ni.potential_hi - nk.potential_lo


def build_problem(net: Network, root: str | None = None,
                  fragment: Fragment | None = None, *,
                  intensity_bounds: Mapping[str, tuple[float, float]] | None = None,
                  root_potential_bounds: tuple[float, float] | None = None,
                  param_bounds: Mapping[str, Sequence[tuple[float, float]]] | None = None,
                  chord_guesses: Mapping[str, float] | None = None,
                  tree: TreeDecomposition | None = None) -> ContinuousProblem:
    """Assemble the continuous problem for a fragment of discrete choices.

    Every discrete edge beyond the fragment's nonzero prefix is relaxed
    to a tension. Bound overrides narrow (or pin) the instance's boxes,
    e.g. to freeze scenario demands or restrict controls to a
    neighborhood.
    """
    if tree is None:
        tree = build_spanning_tree(net, root)
    order = fragment_order(net, root, net.discrete_edges, tree=tree)
    if fragment is None:
        fragment = Fragment((0,) * len(order))
    if len(fragment.values) != len(order):
        raise ValueError(
            f"fragment length {len(fragment.values)} != {len(order)} discrete edges")

    choices: dict[str, int] = {}
    tensions: list[str] = []
    eff_edges: list[EdgeSpec] = []
    by_order = {eid: j for j, eid in enumerate(order)}
    for e in net.edges:
        j = by_order.get(e.id)
        if j is None:
            choices[e.id] = 1
            eff_edges.append(e)
            continue
        d = fragment.values[j]
        if d > 0:
            if d > e.family_size:
                raise ValueError(f"choice {d} out of range for edge {e.id!r}")
            choices[e.id] = d
            eff_edges.append(e)
        else:
            t_lo, t_hi = _tension_bounds(net, e)
            choices[e.id] = 1
            tensions.append(e.id)
            eff_edges.append(replace(
                e, models=(elements.fixed_drop(),),
                continuous_lo=(t_lo,), continuous_hi=(t_hi,),
            ))
    effective = Network(net.nodes, tuple(eff_edges), tree.node_order[0])

    variables: list[Variable] = []
    root_node = net.node_by_id[tree.node_order[0]]
    rp_lo, rp_hi = root_node.potential_lo, root_node.potential_hi
    if root_potential_bounds is not None:
        rp_lo, rp_hi = root_potential_bounds
    variables.append(Variable("root_potential", "root_potential", (), rp_lo, rp_hi))

    for n in sorted(net.nodes, key=lambda n: n.id):
        if n.id == tree.node_order[0]:
            continue
        lo, hi = n.intensity_lo, n.intensity_hi
        if intensity_bounds and n.id in intensity_bounds:
            lo, hi = intensity_bounds[n.id]
        variables.append(Variable(f"intensity[{n.id}]", "intensity", (n.id,), lo, hi))

    for e in sorted(eff_edges, key=lambda e: e.id):
        arity = e.param_arity
        for j in range(arity):
            lo, hi = e.continuous_lo[j], e.continuous_hi[j]
            if e.id not in tensions and param_bounds and e.id in param_bounds:
                lo, hi = param_bounds[e.id][j]
            kind = "tension" if e.id in tensions else "param"
            name = f"{kind}[{e.id}]" if arity == 1 else f"{kind}[{e.id}][{j}]"
            variables.append(Variable(name, kind, (e.id, j), lo, hi))

    return ContinuousProblem(
        source=net, network=effective, tree=tree, order=order,
        fragment=fragment, choices=choices, tension_edges=tuple(sorted(tensions)),
        variables=tuple(variables),
        chord_guesses=dict(chord_guesses or {}),
    )


def build_dominant(problem: ContinuousProblem, fragment: Fragment) -> ContinuousProblem:
    """Continuous dominant for a fragment: prefix choices kept fixed, the
    undecided tail relaxed to tensions.
    """
    overrides = _bound_overrides(problem)
    return build_problem(problem.source, tree=problem.tree, fragment=fragment,
                         chord_guesses=problem.chord_guesses, **overrides)


def _bound_overrides(problem: ContinuousProblem) -> dict:
    intensity_bounds = {}
    root_potential_bounds = None
    param_bounds: dict[str, list[tuple[float, float]]] = {}
    for v in problem.variables:
        if v.kind == "root_potential":
            root_potential_bounds = (v.lo, v.hi)
        elif v.kind == "intensity":
            intensity_bounds[v.key[0]] = (v.lo, v.hi)
        elif v.kind == "param":
            param_bounds.setdefault(v.key[0], []).append((v.lo, v.hi))
    return {
        "intensity_bounds": intensity_bounds,
        "root_potential_bounds": root_potential_bounds,
        "param_bounds": {k: tuple(v) for k, v in param_bounds.items()},
    }


def objective_value(problem: ContinuousProblem, state: NetworkState) -> float:
    """Objective of a state: edge terms plus node terms.

    Tension edges contribute the family's least model cost (keeps the
    relaxed objective a lower bound of every completion) and no
    parameter-energy term.
    """
    return fixed_objective(problem.source, state, problem.choices,
                           tension_edges=problem.tension_edges)


def fixed_objective(net: Network, state: NetworkState,
                    choices: Mapping[str, int], *,
                    tension_edges: Sequence[str] = ()) -> float:
    tension = set(tension_edges)
    total = 0.0
    for e in net.edges:
        q = state.edge_flow[e.id]
        total += e.cost.constant + e.cost.flow_coeff * abs(q)
        if e.id in tension:
            total += min(m.cost for m in e.models)
        else:
            model = e.model(choices[e.id])
            total += model.cost
            params = state.edge_params.get(e.id, ())[:model.param_arity]
            total += e.cost.param_coeff * sum(c * c for c in params)
    for n in net.nodes:
        total += (n.cost.intensity_coeff * state.node_intensity[n.id]
                  + n.cost.potential_coeff * state.node_potential[n.id])
    return total


@dataclass(frozen=True)
class RealizationResult:
    """Outcome of mapping an operating point onto an equation family.

    `choice`/`params` name an exact realization (residual below
    tolerance, envelope satisfied) or are None; `best_choice` and
    `best_params` always carry the nearest candidate, whose scaled
    distance is `gap`.
    """

    choice: int | None
    params: tuple[float, ...] | None
    gap: float
    best_choice: int | None = None
    best_params: tuple[float, ...] | None = None

    @property
    def realized(self) -> bool:
        return self.choice is not None


def realize_tension(family: EdgeSpec, p_i: float, p_k: float, q: float) -> RealizationResult:
    """Map an edge operating point back onto its discrete family.

    Returns the least choice whose residual can be driven below tolerance
    by an in-bounds parameter (found by monotone bisection) with the
    operating envelope satisfied; otherwise the scaled residual gap over
    the whole family, used as a penalty magnitude, together with the
    nearest candidate.
    """
    scale = 1.0 + abs(p_i * p_i - p_k * p_k) + abs(q)
    best_gap = math.inf
    best_choice = None
    best_c: tuple[float, ...] | None = None
    for d, model in enumerate(family.models, start=1):
        arity = model.param_arity
        if arity == 0:
            c: tuple[float, ...] = ()
        else:
            c = _best_params(model, family.continuous_lo[:arity],
                             family.continuous_hi[:arity], p_i, p_k, q)
        r = abs(elements.residual(model, c, p_i, p_k, q))
        env = 0.0
        if model.envelope is not None:
            env = elements.envelope_violation(model.envelope, q, c[0] if c else 0.0)
        if r <= REALIZATION_TOLERANCE and env == 0.0:
            return RealizationResult(d, c, 0.0, d, c)
        gap = (r + env) / scale
        if gap < best_gap:
            best_gap, best_choice, best_c = gap, d, c
    return RealizationResult(None, None, best_gap, best_choice, best_c)


def _best_params(model: elements.EdgeModel, lo: Sequence[float], hi: Sequence[float],
                 p_i: float, p_k: float, q: float) -> tuple[float, ...]:
    # Residuals are monotone in each scalar parameter for shipped kinds,
    # so coordinate-wise bisection finds the |residual| minimizer.
    c = [0.5 * (a + b) for a, b in zip(lo, hi)]
    for _ in range(2 if len(c) > 1 else 1):
        for j in range(len(c)):
            c[j] = _bisect_param(
                lambda v: elements.residual(
                    model, tuple(c[:j] + [v] + c[j + 1:]), p_i, p_k, q),
                lo[j], hi[j])
    return tuple(c)


def _bisect_param(f: Callable[[float], float], lo: float, hi: float) -> float:
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        return lo if abs(f_lo) <= abs(f_hi) else hi
    a, b, f_a = lo, hi, f_lo
    for _ in range(100):
        m = 0.5 * (a + b)
        f_m = f(m)
        if abs(f_m) <= 1e-14:
            return m
        if (f_m > 0) == (f_a > 0):
            a, f_a = m, f_m
        else:
            b = m
    return 0.5 * (a + b)


@dataclass
class EvalOutcome:
    """One penalized evaluation of the problem at a poll point."""

    ok: bool
    objective: float
    penalized: float
    max_violation: float
    state: NetworkState | None = None
    report: FeasibilityReport | None = None
    gaps: dict[str, float] = field(default_factory=dict)

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)


def evaluate(problem: ContinuousProblem, x: np.ndarray, weights: PenaltyWeights,
             *, penalize_gaps: bool = False,
             chord_flows: Mapping[str, float] | None = None,
             newton: NewtonOptions = NewtonOptions()) -> EvalOutcome:
    """Objective, feasibility and penalty at one variable vector.

    The penalized value is the exact objective whenever the point is
    feasible and (when gap penalties are on) every tension is realizable.
    """
    iv = problem.independent_variables(x, chord_flows)
    try:
        state = solve_steady_state(problem.network, problem.tree, iv, newton)
    except NoPositiveSolution as err:
        return EvalOutcome(False, math.inf, FAILURE_PENALTY + err.magnitude, math.inf)
    except NonConvergence as err:
        return EvalOutcome(False, math.inf,
                           FAILURE_PENALTY + min(err.residual_norm, 1e6), math.inf)

    report = check_feasibility(problem.network, state)
    objective = objective_value(problem, state)
    penalized = objective + weights.feasibility * sum(
        v * v for _, v in report.violations)

    gaps: dict[str, float] = {}
    if penalize_gaps and problem.tension_edges:
        for eid in problem.tension_edges:
            e = problem.source.edge_by_id[eid]
            res = realize_tension(e, state.node_potential[e.from_node],
                                  state.node_potential[e.to_node],
                                  state.edge_flow[eid])
            gaps[eid] = res.gap
            # Charge the nearest candidate's true cost instead of the
            # family minimum so the search sees what a realization at
            # this tension would actually pay.
            delta = _candidate_cost_delta(e, res)
            objective += delta
            penalized += delta
        penalized += weights.tension * sum(g * g for g in gaps.values())

    return EvalOutcome(True, objective, penalized, report.max_violation,
                       state, report, gaps)


def _candidate_cost_delta(edge: EdgeSpec, res: RealizationResult) -> float:
    if res.best_choice is None:
        return 0.0
    model = edge.model(res.best_choice)
    delta = model.cost - min(m.cost for m in edge.models)
    if res.best_params:
        delta += edge.cost.param_coeff * sum(c * c for c in res.best_params)
    return delta


@dataclass
class CompassResult:
    x: np.ndarray
    value: float
    evaluations: int
    budget_exhausted: bool
    history: list[float] = field(default_factory=list)


def compass_search(fn: Callable[[np.ndarray], float], x0: np.ndarray,
                   lo: np.ndarray, hi: np.ndarray, *,
                   max_evaluations: int = 20_000,
                   initial_step_fraction: float = 0.1,
                   min_step_fraction: float = 1e-6,
                   abort_below: float | None = None) -> CompassResult:
    """Coordinate compass search on a box with halving steps.

    Polls coordinates in a fixed ascending order (deterministic for a
    given start), accepts strict improvements greedily, and halves every
    step once a full sweep fails to improve. Zero-width coordinates are
    never polled.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    widths = hi - lo
    active = np.where(widths > 0)[0]
    step = initial_step_fraction * widths
    floor = min_step_fraction * widths

    f = fn(x)
    evals = 1
    history = [f]
    if active.size == 0 or (abort_below is not None and f <= abort_below):
        return CompassResult(x, f, evals, False, history)

    exhausted = False
    while True:
        improved = False
        for j in active:
            if step[j] <= 0:
                continue
            for direction in (1.0, -1.0):
                if evals >= max_evaluations:
                    exhausted = True
                    break
                xj = min(hi[j], max(lo[j], x[j] + direction * step[j]))
                if xj == x[j]:
                    continue
                trial = x.copy()
                trial[j] = xj
                ft = fn(trial)
                evals += 1
                if ft < f:
                    x, f = trial, ft
                    improved = True
                    if abort_below is not None and f <= abort_below:
                        return CompassResult(x, f, evals, False, history + [f])
            if exhausted:
                break
        history.append(f)
        if exhausted:
            break
        if not improved:
            step = 0.5 * step
            if np.all(step[active] <= floor[active]):
                break
    return CompassResult(x, f, evals, exhausted, history)


@dataclass
class MinimizeResult:
    """Best point found by the penalized search.

    `value` is the raw objective at `x`; when no feasible point was seen,
    the least-infeasible point is returned and `feasible` is False.
    """

    x: np.ndarray
    value: float
    state: NetworkState | None
    feasible: bool
    max_violation: float
    max_gap: float
    evaluations: int
    budget_exhausted: bool
    round_histories: list[list[float]] = field(default_factory=list)


class _Tracker:
    """Records the best feasible and least-infeasible evaluations."""

    def __init__(self, problem: ContinuousProblem, weights: PenaltyWeights,
                 penalize_gaps: bool, tol: float, newton: NewtonOptions,
                 extra_objective: Callable[[np.ndarray], float] | None = None):
        self.problem = problem
        self.weights = weights
        self.penalize_gaps = penalize_gaps
        self.tol = tol
        self.newton = newton
        self.extra = extra_objective
        self.warm_chords: dict[str, float] = dict(problem.chord_guesses)
        self.best_feasible: tuple[float, np.ndarray, EvalOutcome] | None = None
        self.least_bad: tuple[float, float, np.ndarray, EvalOutcome] | None = None

    def __call__(self, x: np.ndarray) -> float:
        out = evaluate(self.problem, x, self.weights,
                       penalize_gaps=self.penalize_gaps,
                       chord_flows=self.warm_chords, newton=self.newton)
        if self.extra is not None:
            bonus = self.extra(x)
            out.objective += bonus
            out.penalized += bonus
        if out.ok and out.state is not None:
            self.warm_chords = {cid: out.state.edge_flow[cid]
                                for cid in self.problem.tree.chords}
            key = (out.max_violation, out.objective)
            if self.least_bad is None or key < self.least_bad[:2]:
                self.least_bad = (out.max_violation, out.objective, x.copy(), out)
            if out.max_violation <= self.tol and out.max_gap <= self.tol:
                if self.best_feasible is None or out.objective < self.best_feasible[0]:
                    self.best_feasible = (out.objective, x.copy(), out)
        return out.penalized


def minimize_continuous(problem: ContinuousProblem,
                        x0: np.ndarray | None = None,
                        options: SearchOptions = SearchOptions(), *,
                        penalize_gaps: bool = False,
                        extra_objective: Callable[[np.ndarray], float] | None = None
                        ) -> MinimizeResult:
    """Penalty-escalating compass search over the problem's variables.

    Runs up to `penalty_rounds` compass searches, multiplying the penalty
    weights by `penalty_growth` between rounds, restarting each round
    from the previous best point. Deterministic for a given start.
    `extra_objective` is added to the objective before penalties
    (switch-cost terms and the like).
    """
    lo, hi = problem.lo, problem.hi
    x = problem.midpoint() if x0 is None else np.clip(np.asarray(x0, float), lo, hi)
    weights = options.initial_weights
    tracker = _Tracker(problem, weights, penalize_gaps,
                       options.feasibility_tolerance, options.newton,
                       extra_objective)
    budget = options.max_evaluations
    evals = 0
    exhausted = False
    histories: list[list[float]] = []
    previous_best = math.inf

    for _ in range(options.penalty_rounds):
        tracker.weights = weights
        res = compass_search(tracker, x, lo, hi,
                             max_evaluations=max(1, budget - evals),
                             initial_step_fraction=options.initial_step_fraction,
                             min_step_fraction=options.min_step_fraction)
        evals += res.evaluations
        histories.append(res.history)
        x = res.x
        if res.budget_exhausted:
            exhausted = True
            break
        if penalize_gaps and problem.tension_edges:
            # Coordinate polls cannot trade a tension against the root
            # potential in one move; restart the next round from the
            # nearest realizable drops instead.
            snapped = _snap_tensions(problem, x, tracker, options.newton)
            if snapped is not None:
                x = snapped
        if tracker.best_feasible is not None:
            value = tracker.best_feasible[0]
            if abs(previous_best - value) <= 1e-12:
                break
            previous_best = value
        weights = PenaltyWeights(weights.feasibility * options.penalty_growth,
                                 weights.tension * options.penalty_growth)

    if tracker.best_feasible is not None:
        value, bx, out = tracker.best_feasible
        return MinimizeResult(bx, value, out.state, True, out.max_violation,
                              out.max_gap, evals, exhausted, histories)
    if tracker.least_bad is not None:
        violation, value, bx, out = tracker.least_bad
        return MinimizeResult(bx, value, out.state, False, violation,
                              out.max_gap, evals, exhausted, histories)
    return MinimizeResult(x, math.inf, None, False, math.inf, math.inf,
                          evals, exhausted, histories)


def _snap_tensions(problem: ContinuousProblem, x: np.ndarray,
                   tracker: "_Tracker",
                   newton: NewtonOptions) -> np.ndarray | None:
    """Project every tension onto the drop its nearest realization gives."""
    out = evaluate(problem, x, tracker.weights, penalize_gaps=True,
                   chord_flows=tracker.warm_chords, newton=newton)
    if not out.ok or out.state is None:
        return None
    state = out.state
    snapped = x.copy()
    moved = False
    for i, v in enumerate(problem.variables):
        if v.kind != "tension":
            continue
        eid = v.key[0]
        e = problem.source.edge_by_id[eid]
        res = realize_tension(e, state.node_potential[e.from_node],
                              state.node_potential[e.to_node],
                              state.edge_flow[eid])
        if res.best_choice is None or res.gap == 0.0:
            continue
        model = e.model(res.best_choice)
        try:
            p_k = elements.solve_downstream(model, res.best_params or (),
                                            state.node_potential[e.from_node],
                                            state.edge_flow[eid])
        except NoPositiveSolution:
            continue
        target = state.node_potential[e.from_node] - p_k
        snapped[i] = min(v.hi, max(v.lo, target))
        moved = moved or snapped[i] != x[i]
    return snapped if moved else None


def assemble_penalty(problem: ContinuousProblem, state: NetworkState,
                     weights: PenaltyWeights) -> float:
    """Objective plus quadratic exterior penalties at a given state.

    Exactly the objective when the state is feasible and every tension
    is realizable.
    """
    report = check_feasibility(problem.network, state)
    total = objective_value(problem, state)
    total += weights.feasibility * sum(v * v for _, v in report.violations)
    for eid in problem.tension_edges:
        e = problem.source.edge_by_id[eid]
        res = realize_tension(e, state.node_potential[e.from_node],
                              state.node_potential[e.to_node],
                              state.edge_flow[eid])
        total += _candidate_cost_delta(e, res)
        total += weights.tension * res.gap * res.gap
    return total


@dataclass
class RealizabilityResult:
    state: NetworkState
    choices: dict[str, int]
    params: dict[str, tuple[float, ...]]
    value: float
    evaluations: int


def solve_with_realizability(problem: ContinuousProblem,
                             options: SearchOptions = SearchOptions(), *,
                             x0: np.ndarray | None = None,
                             restart_root: str | None = None) -> RealizabilityResult:
    """Optimize the full dominant under realizability penalties, then map
    every tension onto a concrete (choice, parameters) pair.

    Raises:
        UnrealizableOptimum: some tension's best realization gap exceeds
            the limit. Callers may retry with `restart_root` to re-root
            the decomposition at another node.
    """
    if restart_root is not None:
        overrides = _bound_overrides(problem)
        problem = build_problem(problem.source, root=restart_root,
                                fragment=problem.fragment,
                                chord_guesses=problem.chord_guesses, **overrides)

    result = minimize_continuous(problem, x0, options, penalize_gaps=True)
    if result.state is None:
        raise UnrealizableOptimum("search produced no evaluable point")

    state = result.state
    choices = dict(problem.choices)
    realized_params: dict[str, tuple[float, ...]] = {}
    gaps: dict[str, float] = {}
    for eid in problem.tension_edges:
        e = problem.source.edge_by_id[eid]
        res = realize_tension(e, state.node_potential[e.from_node],
                              state.node_potential[e.to_node],
                              state.edge_flow[eid])
        if res.gap > REALIZABILITY_GAP_LIMIT or res.best_choice is None:
            gaps[eid] = res.gap
            continue
        choices[eid] = res.best_choice
        realized_params[eid] = res.best_params or ()
    if gaps or not result.feasible:
        if not result.feasible and not gaps:
            raise UnrealizableOptimum(
                f"no feasible relaxed point found (violation {result.max_violation:.3e})")
        raise UnrealizableOptimum(
            "unrealizable tensions: " + ", ".join(sorted(gaps)), gaps=gaps)

    # Re-solve with the realized family members fixed for a clean state.
    iv = problem.independent_variables(result.x,
                                       {cid: state.edge_flow[cid]
                                        for cid in problem.tree.chords})
    params = dict(iv.edge_params)
    params.update(realized_params)
    iv = IndependentVariables(iv.chord_flows, iv.root_potential, iv.intensities,
                              params, choices)
    final = solve_steady_state(problem.source, problem.tree, iv, options.newton)
    fixed = build_problem(problem.source, tree=problem.tree,
                          fragment=_full_fragment(problem, choices),
                          chord_guesses=problem.chord_guesses,
                          **_bound_overrides(problem))
    value = objective_value(fixed, final)
    return RealizabilityResult(final, choices, realized_params, value,
                               result.evaluations)


def _full_fragment(problem: ContinuousProblem, choices: Mapping[str, int]) -> Fragment:
    return Fragment(tuple(choices[eid] for eid in problem.order))
