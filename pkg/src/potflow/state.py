"""Network state computation from independent variables.

Tree-edge flows come from node balances processed leaves-first (reverse
breadth-first order), potentials from a depth-first sweep away from the
root, and chord flows from a damped Newton iteration that drives the
chord equation residuals to zero. The iteration dimension equals the
cycle rank, so tree networks solve without any Newton step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import elements
from .errors import NonConvergence, NoPositiveSolution
from .network import Network, NetworkState, TreeDecomposition


@dataclass(frozen=True)
class IndependentVariables:
    """The independent components of a network state.

    Chord flows, the root potential, non-root intensities, continuous
    edge parameters, and the discrete choices. The root intensity is the
    dependent balance and is never given.
    """

    chord_flows: Mapping[str, float]
    root_potential: float
    intensities: Mapping[str, float]
    edge_params: Mapping[str, tuple[float, ...]]
    edge_choice: Mapping[str, int]

    def with_chords(self, chord_flows: Mapping[str, float]) -> "IndependentVariables":
        return replace(self, chord_flows=dict(chord_flows))


@dataclass(frozen=True)
class NewtonOptions:
    tolerance: float = 1e-9
    max_iterations: int = 200
    max_halvings: int = 60
    fd_step: float = 1e-6
    jacobian_regularization: float = 1e-12


@dataclass(frozen=True)
class FeasibilityReport:
    """Every violated bound with its magnitude (distance outside the interval)."""

    violations: tuple[tuple[str, float], ...] = ()
    max_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return not self.violations


def _interval_violation(value: float, lo: float, hi: float) -> float:
    if value < lo:
        return lo - value
    if value > hi:
        return value - hi
    return 0.0


def distribute_flows(net: Network, tree: TreeDecomposition,
                     iv: IndependentVariables) -> dict[str, float]:
    """Edge flows satisfying every node balance exactly.

    Chord flows are copied from the independent variables; tree-edge
    flows are forced by the balances, visiting nodes leaves-first so each
    node's parent edge is the single unknown. The root absorbs the
    residual balance.
    """
    flows: dict[str, float] = {cid: iv.chord_flows.get(cid, 0.0) for cid in tree.chords}
    adj = net.adjacency
    for node in reversed(tree.node_order[1:]):
        parent_node, parent_edge = tree.parent[node]
        out = 0.0
        for eid, _ in adj[node]:
            if eid == parent_edge:
                continue
            if eid in flows:
                e = net.edge_by_id[eid]
                out += flows[eid] if e.from_node == node else -flows[eid]
        target = iv.intensities.get(node, 0.0)
        e = net.edge_by_id[parent_edge]
        sign = 1.0 if e.from_node == node else -1.0
        flows[parent_edge] = sign * (target - out)
    return flows


def implied_root_intensity(net: Network, tree: TreeDecomposition,
                           flows: Mapping[str, float]) -> float:
    root = tree.node_order[0]
    out = 0.0
    for eid, _ in net.adjacency[root]:
        e = net.edge_by_id[eid]
        out += flows[eid] if e.from_node == root else -flows[eid]
    return out


def distribute_potentials(net: Network, tree: TreeDecomposition,
                          flows: Mapping[str, float],
                          iv: IndependentVariables) -> dict[str, float]:
    """Node potentials propagated depth-first away from the root.

    Raises:
        NoPositiveSolution: propagation left the positive-potential
            regime; the offending edge id is attached.
    """
    root = tree.node_order[0]
    potentials = {root: iv.root_potential}
    children: dict[str, list[tuple[str, str]]] = {}
    for node, (parent_node, eid) in tree.parent.items():
        children.setdefault(parent_node, []).append((eid, node))
    stack = [root]
    while stack:
        u = stack.pop()
        for eid, v in sorted(children.get(u, ()), reverse=True):
            e = net.edge_by_id[eid]
            model = e.model(iv.edge_choice[eid])
            c = iv.edge_params.get(eid, ())
            if e.from_node == u:
                potentials[v] = elements.solve_downstream(model, c, potentials[u],
                                                          flows[eid], edge_id=eid)
            else:
                potentials[v] = elements.solve_upstream(model, c, potentials[u],
                                                        flows[eid], edge_id=eid)
            stack.append(v)
    return potentials


def chord_residuals(net: Network, tree: TreeDecomposition,
                    state: NetworkState) -> dict[str, float]:
    """Residual of each chord's own equation at the tree-derived potentials."""
    out = {}
    for cid in tree.chords:
        e = net.edge_by_id[cid]
        model = e.model(state.edge_choice[cid])
        out[cid] = elements.residual(
            model, state.edge_params.get(cid, ()),
            state.node_potential[e.from_node], state.node_potential[e.to_node],
            state.edge_flow[cid],
        )
    return out


def _assemble_state(net: Network, tree: TreeDecomposition,
                    iv: IndependentVariables,
                    flows: Mapping[str, float],
                    potentials: Mapping[str, float]) -> NetworkState:
    intensity = dict(iv.intensities)
    intensity[tree.node_order[0]] = implied_root_intensity(net, tree, flows)
    for n in net.nodes:
        intensity.setdefault(n.id, 0.0)
    return NetworkState(
        edge_flow=dict(flows),
        node_intensity=intensity,
        node_potential=dict(potentials),
        edge_params={e.id: tuple(iv.edge_params.get(e.id, ())) for e in net.edges},
        edge_choice={e.id: iv.edge_choice[e.id] for e in net.edges},
    )


def _chord_residual_vector(net, tree, iv, chord_ids, q):
    trial = iv.with_chords(dict(zip(chord_ids, map(float, q))))
    flows = distribute_flows(net, tree, trial)
    potentials = distribute_potentials(net, tree, flows, trial)
    res = np.empty(len(chord_ids))
    for j, cid in enumerate(chord_ids):
        e = net.edge_by_id[cid]
        model = e.model(iv.edge_choice[cid])
        res[j] = elements.residual(model, iv.edge_params.get(cid, ()),
                                   potentials[e.from_node], potentials[e.to_node],
                                   flows[cid])
    return res, flows, potentials


def solve_steady_state(net: Network, tree: TreeDecomposition,
                       iv: IndependentVariables,
                       options: NewtonOptions = NewtonOptions()) -> NetworkState:
    """Full state with all node balances and edge equations satisfied.

    Chord-flow entries of `iv` are initial guesses; a damped Newton
    iteration with a forward finite-difference Jacobian drives the chord
    residuals below tolerance in max-norm.

    Raises:
        NoPositiveSolution: the fixed choices/parameters admit no positive
            potentials at the initial point (infeasible regime).
        NonConvergence: iteration or damping budget exhausted.
    """
    chord_ids = list(tree.chords)
    if not chord_ids:
        flows = distribute_flows(net, tree, iv)
        potentials = distribute_potentials(net, tree, flows, iv)
        return _assemble_state(net, tree, iv, flows, potentials)

    q = np.array([iv.chord_flows.get(cid, 0.0) for cid in chord_ids], dtype=float)
    res, flows, potentials = _chord_residual_vector(net, tree, iv, chord_ids, q)
    norm = float(np.max(np.abs(res)))

    for _ in range(options.max_iterations):
        if norm <= options.tolerance:
            trial = iv.with_chords(dict(zip(chord_ids, map(float, q))))
            return _assemble_state(net, tree, trial, flows, potentials)

        jac = np.empty((len(chord_ids), len(chord_ids)))
        for j in range(len(chord_ids)):
            h = options.fd_step * max(1.0, abs(q[j]))
            qj = q.copy()
            qj[j] += h
            try:
                res_j, _, _ = _chord_residual_vector(net, tree, iv, chord_ids, qj)
            except NoPositiveSolution:
                qj[j] = q[j] - h
                res_j, _, _ = _chord_residual_vector(net, tree, iv, chord_ids, qj)
                h = -h
            jac[:, j] = (res_j - res) / h

        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            jac = jac + options.jacobian_regularization * np.eye(len(chord_ids))
            step = np.linalg.solve(jac, -res)

        accepted = False
        scale = 1.0
        for _ in range(options.max_halvings + 1):
            q_trial = q + scale * step
            try:
                res_t, flows_t, pot_t = _chord_residual_vector(net, tree, iv,
                                                               chord_ids, q_trial)
            except NoPositiveSolution:
                scale *= 0.5
                continue
            norm_t = float(np.max(np.abs(res_t)))
            if norm_t < norm:
                q, res, flows, potentials, norm = q_trial, res_t, flows_t, pot_t, norm_t
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            raise NonConvergence(
                f"damping exhausted at residual {norm:.3e}", residual_norm=norm)

    if norm <= options.tolerance:
        trial = iv.with_chords(dict(zip(chord_ids, map(float, q))))
        return _assemble_state(net, tree, trial, flows, potentials)
    raise NonConvergence(
        f"no convergence in {options.max_iterations} iterations "
        f"(residual {norm:.3e})", residual_norm=norm)


def check_feasibility(net: Network, state: NetworkState) -> FeasibilityReport:
    """Evaluate every bound: intensities, potentials, parameters,
    side constraints, and operating envelopes.
    """
    violations: list[tuple[str, float]] = []

    for n in net.nodes:
        v = _interval_violation(state.node_intensity[n.id], n.intensity_lo, n.intensity_hi)
        if v > 0:
            violations.append((f"intensity[{n.id}]", v))
        v = _interval_violation(state.node_potential[n.id], n.potential_lo, n.potential_hi)
        if v > 0:
            violations.append((f"potential[{n.id}]", v))

    for e in net.edges:
        params = state.edge_params.get(e.id, ())
        for j, (lo, hi) in enumerate(zip(e.continuous_lo, e.continuous_hi)):
            if j < len(params):
                v = _interval_violation(params[j], lo, hi)
                if v > 0:
                    violations.append((f"param[{e.id}][{j}]", v))
        p_i = state.node_potential[e.from_node]
        p_k = state.node_potential[e.to_node]
        q = state.edge_flow[e.id]
        for idx, sc in enumerate(e.side_constraints):
            val = elements.side_constraint_value(sc, p_i, p_k, q)
            v = _interval_violation(val, sc.lo, sc.hi)
            if v > 0:
                violations.append((f"side[{e.id}][{idx}]", v))
        choice = state.edge_choice.get(e.id, 0)
        if choice:
            model = e.model(choice)
            if model.envelope is not None:
                c0 = params[0] if params else 0.0
                v = elements.envelope_violation(model.envelope, q, c0)
                if v > 0:
                    violations.append((f"envelope[{e.id}]", v))

    max_violation = max((v for _, v in violations), default=0.0)
    return FeasibilityReport(tuple(violations), max_violation)
