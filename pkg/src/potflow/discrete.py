"""Branch-and-bound over prefix fragments of discrete choices.

Fragments are enumerated lexicographically: a feasible fragment shorter
than the full length is extended by appending choice 1; otherwise the
deepest non-saturated prefix position is incremented and the tail reset.
Infeasible fragments prune their whole extension subtree. Feasibility of
a fragment is probed on its continuous dominant, optionally backed by a
dominant-optimum lower bound against the incumbent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .continuous import (
    ContinuousProblem,
    MinimizeResult,
    SearchOptions,
    build_dominant,
    minimize_continuous,
)
from .network import Fragment, NetworkState


@dataclass
class EnumerationCursor:
    """Position in the lexicographic fragment enumeration."""

    current: Fragment
    arity: tuple[int, ...]
    exhausted: bool = False

    @classmethod
    def start(cls, arity: tuple[int, ...]) -> "EnumerationCursor":
        return cls(Fragment((0,) * len(arity)), tuple(arity))


def next_fragment(cursor: EnumerationCursor, current_is_feasible: bool) -> Fragment | None:
    """Successor of the cursor's fragment; None once the enumeration ends.

    A feasible fragment shorter than full length is lengthened by
    appending 1. Otherwise the last prefix entry is incremented if below
    its arity; else the carry zeroes the saturated tail and increments
    the deepest non-saturated entry. With every entry saturated the
    enumeration terminates.
    """
    if cursor.exhausted:
        raise ValueError("enumeration already exhausted")
    values = cursor.current.values
    arity = cursor.arity
    m = cursor.current.length
    total = len(arity)

    if current_is_feasible and m < total:
        nxt = Fragment(values[:m] + (1,) + (0,) * (total - m - 1))
        cursor.current = nxt
        return nxt

    j = m
    while j >= 1 and values[j - 1] == arity[j - 1]:
        j -= 1
    if j == 0:
        cursor.exhausted = True
        return None
    nxt = Fragment(values[:j - 1] + (values[j - 1] + 1,) + (0,) * (total - j))
    cursor.current = nxt
    return nxt


@dataclass(frozen=True)
class BnBOptions:
    budget: int = 100_000
    use_bound: bool = True
    bound_margin: float = 1e-6
    feasibility_budget: int = 2000
    feasibility_tolerance: float = 1e-6
    search: SearchOptions = SearchOptions()


@dataclass
class BnBResult:
    best_choice: tuple[int, ...] | None
    best_state: NetworkState | None
    best_value: float
    nodes_visited: int
    nodes_pruned: int
    proven_exhaustive: bool
    budget_exhausted: bool = False
    incumbent_trace: list[float] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.best_choice is not None


def fragment_feasible(problem: ContinuousProblem, fragment: Fragment,
                      options: BnBOptions = BnBOptions()) -> bool:
    """Probe the fragment's dominant for a feasible point.

    Runs a feasibility-phase compass search (objective = max violation)
    and accepts when the best point's violation is below tolerance. A
    positive verdict can err only toward keeping the branch; a negative
    one relies on the search finding a witness when one exists.
    """
    dominant = build_dominant(problem, fragment)
    res = _feasibility_search(dominant, options)
    return res <= options.feasibility_tolerance


def _feasibility_search(dominant: ContinuousProblem, options: BnBOptions) -> float:
    from .continuous import compass_search, evaluate

    warm: dict = {"chords": dict(dominant.chord_guesses)}

    def violation(x: np.ndarray) -> float:
        out = evaluate(dominant, x, options.search.initial_weights,
                       chord_flows=warm["chords"], newton=options.search.newton)
        if out.ok and out.state is not None:
            warm["chords"] = {cid: out.state.edge_flow[cid]
                              for cid in dominant.tree.chords}
            return out.max_violation
        return out.penalized

    res = compass_search(violation, dominant.midpoint(), dominant.lo, dominant.hi,
                         max_evaluations=options.feasibility_budget,
                         abort_below=options.feasibility_tolerance)
    return res.value


def _dominant_bound(problem: ContinuousProblem, fragment: Fragment,
                    options: BnBOptions) -> float | None:
    """Lower bound on every completion of the fragment, or None when the
    bound search did not terminate cleanly (never prune on a doubtful bound).
    """
    dominant = build_dominant(problem, fragment)
    res = minimize_continuous(dominant, options=options.search)
    if res.budget_exhausted or not res.feasible:
        return None
    return res.value


def branch_and_bound(problem: ContinuousProblem,
                     options: BnBOptions = BnBOptions()) -> BnBResult:
    """Enumerate fragments lexicographically, pruning infeasible subtrees.

    Every feasible full-length assignment is evaluated by the continuous
    search with its choices fixed; the incumbent is the least objective.
    Terminates exhaustively through the enumeration sentinel or on the
    node-visit budget.
    """
    arity = tuple(problem.source.edge_by_id[eid].family_size
                  for eid in problem.order)
    total = len(arity)
    cursor = EnumerationCursor.start(arity)

    best_value = math.inf
    best_choice: tuple[int, ...] | None = None
    best_state: NetworkState | None = None
    nodes_visited = 1
    nodes_pruned = 0
    trace: list[float] = []
    budget_exhausted = False

    if total == 0:
        result = _evaluate_full(problem, Fragment(()), options)
        if result.feasible:
            return BnBResult((), result.state, result.value, 1, 0,
                             proven_exhaustive=True, incumbent_trace=[result.value])
        return BnBResult(None, None, math.inf, 1, 1, proven_exhaustive=True)

    feasible = fragment_feasible(problem, cursor.current, options)
    if not feasible:
        nodes_pruned += 1

    while True:
        frag = next_fragment(cursor, feasible)
        if frag is None:
            return BnBResult(best_choice, best_state, best_value, nodes_visited,
                             nodes_pruned, proven_exhaustive=True,
                             incumbent_trace=trace)
        nodes_visited += 1
        if nodes_visited > options.budget:
            budget_exhausted = True
            break

        feasible = fragment_feasible(problem, frag, options)
        if not feasible:
            nodes_pruned += 1
            continue

        if frag.length == total:
            result = _evaluate_full(problem, frag, options)
            if result.feasible and result.value < best_value:
                best_value = result.value
                best_choice = frag.values
                best_state = result.state
            trace.append(best_value)
            continue

        if options.use_bound and best_choice is not None:
            bound = _dominant_bound(problem, frag, options)
            if bound is not None and bound > best_value + options.bound_margin * (
                    1.0 + abs(best_value)):
                feasible = False
                nodes_pruned += 1

    return BnBResult(best_choice, best_state, best_value, nodes_visited,
                     nodes_pruned, proven_exhaustive=False,
                     budget_exhausted=budget_exhausted, incumbent_trace=trace)


def _evaluate_full(problem: ContinuousProblem, fragment: Fragment,
                   options: BnBOptions) -> MinimizeResult:
    fixed = build_dominant(problem, fragment)
    return minimize_continuous(fixed, options=options.search)
