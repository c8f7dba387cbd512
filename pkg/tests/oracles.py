"""Independent oracles: dense linear solves, vectorized grid evaluation,
and exhaustive enumeration. None of these share code paths with the
package's solvers.
"""

import itertools
import math

import numpy as np
from scipy.optimize import brentq

import potflow as pf


def dense_linear_solve(net, root_potential, intensities):
    """Potentials and flows of an all-resistor network by one dense solve.

    Unknowns are the non-root potentials; the root row is replaced by the
    Dirichlet condition. Balance rows enforce net outflow = intensity.
    """
    ids = [n.id for n in net.nodes]
    index = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for node in ids:
        i = index[node]
        if node == net.root:
            a[i, i] = 1.0
            b[i] = root_potential
            continue
        b[i] = intensities.get(node, 0.0)
        for e in net.edges:
            if e.from_node == node:
                g = 1.0 / e.models[0].coefficients[0]
                a[i, index[e.from_node]] += g
                a[i, index[e.to_node]] -= g
            elif e.to_node == node:
                g = 1.0 / e.models[0].coefficients[0]
                a[i, index[e.to_node]] += g
                a[i, index[e.from_node]] -= g
    p = np.linalg.solve(a, b)
    potentials = {nid: float(p[index[nid]]) for nid in ids}
    flows = {}
    for e in net.edges:
        r = e.models[0].coefficients[0]
        flows[e.id] = (potentials[e.from_node] - potentials[e.to_node]) / r
    return potentials, flows


def tree_flows(net, intensities):
    """Edge flows of a tree network by peeling leaves (independent of the
    package's reverse-BFS elimination)."""
    adj = {n.id: [] for n in net.nodes}
    for e in net.edges:
        adj[e.from_node].append(e.id)
        adj[e.to_node].append(e.id)
    remaining = {n.id: set(adj[n.id]) for n in net.nodes}
    demand = {n.id: intensities.get(n.id, 0.0) for n in net.nodes}
    flows = {}
    leaves = [nid for nid, es in remaining.items() if len(es) == 1 and nid != net.root]
    while leaves:
        node = leaves.pop()
        (eid,) = remaining[node]
        e = net.edge_by_id[eid]
        out = demand[node]
        flows[eid] = out if e.from_node == node else -out
        other = e.to_node if e.from_node == node else e.from_node
        demand[other] += demand[node]
        remaining[node].clear()
        remaining[other].discard(eid)
        if len(remaining[other]) == 1 and other != net.root:
            leaves.append(other)
    return flows


def propagate_potentials_grid(net, choices, params, flows, root_p):
    """Vectorized potential propagation for tree networks.

    `root_p` may be a scalar or an array of candidate root potentials;
    returns node -> array. Invalid points turn into NaN.
    """
    root_p = np.atleast_1d(np.asarray(root_p, dtype=float))
    potentials = {net.root: root_p}
    remaining = list(net.edges)
    while remaining:
        progressed = False
        for e in list(remaining):
            model = e.models[choices.get(e.id, 1) - 1]
            c = params.get(e.id, ())
            q = flows[e.id]
            if e.from_node in potentials and e.to_node not in potentials:
                p = potentials[e.from_node]
                potentials[e.to_node] = _forward(model, c, p, q)
            elif e.to_node in potentials and e.from_node not in potentials:
                p = potentials[e.to_node]
                potentials[e.from_node] = _backward(model, c, p, q)
            else:
                continue
            remaining.remove(e)
            progressed = True
        if not progressed:
            raise AssertionError("not a tree or disconnected")
    return potentials


def _forward(model, c, p, q):
    kind = model.kind
    if kind == "linear_resistor":
        out = p - model.coefficients[0] * q
    elif kind == "quadratic_pipe":
        rad = p * p - model.coefficients[0] * q * abs(q)
        out = np.sqrt(np.where(rad > 0, rad, np.nan))
    elif kind == "ratio_machine":
        out = np.asarray(c)[..., 0] * p if np.ndim(c) else c[0] * p
    else:
        raise ValueError(kind)
    return np.where(out > 0, out, np.nan)


def _backward(model, c, p, q):
    kind = model.kind
    if kind == "linear_resistor":
        out = p + model.coefficients[0] * q
    elif kind == "quadratic_pipe":
        rad = p * p + model.coefficients[0] * q * abs(q)
        out = np.sqrt(np.where(rad > 0, rad, np.nan))
    elif kind == "ratio_machine":
        out = p / (np.asarray(c)[..., 0] if np.ndim(c) else c[0])
    else:
        raise ValueError(kind)
    return np.where(out > 0, out, np.nan)


def loop_flow_root(net, tree, choices, params, intensities, root_potential,
                   lo=-25.0, hi=25.0, points=2001):
    """Chord flow of a one-chord network by scanning for a sign change of
    the loop residual and refining with brentq."""
    (chord,) = tree.chords

    def loop_residual(lam):
        iv = pf.IndependentVariables({chord: lam}, root_potential, intensities,
                                     params, choices)
        flows = pf.distribute_flows(net, tree, iv)
        pot = pf.distribute_potentials(net, tree, flows, iv)
        e = net.edge_by_id[chord]
        model = e.models[choices[chord] - 1]
        return pf.residual(model, params.get(chord, ()),
                           pot[e.from_node], pot[e.to_node], flows[chord])

    grid = np.linspace(lo, hi, points)
    values = []
    for lam in grid:
        try:
            values.append(loop_residual(lam))
        except pf.errors.NoPositiveSolution:
            values.append(math.nan)
    values = np.array(values)
    for i in range(len(grid) - 1):
        a, b = values[i], values[i + 1]
        if math.isnan(a) or math.isnan(b):
            continue
        if a == 0.0:
            return grid[i]
        if (a > 0) != (b > 0):
            return brentq(loop_residual, grid[i], grid[i + 1], xtol=1e-12)
    raise AssertionError("no loop-flow sign change found")


def enumerate_instance(instance, grid_step=1e-3):
    """Exhaustive oracle for a small mixed instance.

    Enumerates every full discrete assignment; for each, grids the single
    free continuous variable (or evaluates once), checks all bounds, and
    returns (best assignment, best objective) or (None, inf).
    """
    net = instance.net
    arity = [net.edge_by_id[eid].family_size for eid in instance.discrete_order]
    best_value = math.inf
    best_d = None
    for combo in itertools.product(*(range(1, a + 1) for a in arity)):
        choices = dict(instance.fixed_choices)
        choices.update(dict(zip(instance.discrete_order, combo)))
        value = _best_continuous(instance, choices, grid_step)
        if value < best_value - 1e-12:
            best_value = value
            best_d = combo
    return best_d, best_value


def _best_continuous(instance, choices, grid_step):
    net = instance.net
    intensities = instance.intensities
    if instance.chord:
        tree = pf.build_spanning_tree(net)
        try:
            lam = loop_flow_root(net, tree, choices, instance.params, intensities,
                                 instance.root_potential)
        except (AssertionError, pf.errors.NoPositiveSolution):
            return math.inf
        iv = pf.IndependentVariables({tree.chords[0]: lam}, instance.root_potential,
                                     intensities, instance.params, choices)
        flows = pf.distribute_flows(net, tree, iv)
        try:
            pots = pf.distribute_potentials(net, tree, flows, iv)
        except pf.errors.NoPositiveSolution:
            return math.inf
        pot_arrays = {k: np.atleast_1d(v) for k, v in pots.items()}
        values = _objective_grid(instance, choices, flows, pot_arrays,
                                 np.atleast_1d(instance.root_potential), None)
        return float(values[0]) if values.size else math.inf

    flows = tree_flows(net, intensities)
    if instance.free_kind == "root_potential":
        lo, hi = instance.free_box
        grid = np.arange(lo, hi + grid_step / 2, grid_step)
        pots = propagate_potentials_grid(net, choices, instance.params, flows, grid)
        values = _objective_grid(instance, choices, flows, pots, grid, None)
    elif instance.free_kind == "param":
        lo, hi = instance.free_box
        grid = np.arange(lo, hi + grid_step / 2, grid_step)
        eid = instance.free_edge
        pots = {}
        root_p = np.full_like(grid, instance.root_potential)
        params = dict(instance.params)
        params[eid] = (grid,)
        pots = _propagate_with_param_grid(net, choices, params, flows, root_p, eid)
        values = _objective_grid(instance, choices, flows, pots, root_p,
                                 (eid, grid))
    else:
        pots = propagate_potentials_grid(net, choices, instance.params, flows,
                                         instance.root_potential)
        values = _objective_grid(instance, choices, flows, pots,
                                 np.atleast_1d(instance.root_potential), None)
    return float(np.nanmin(values)) if values.size else math.inf


def _propagate_with_param_grid(net, choices, params, flows, root_p, grid_edge):
    potentials = {net.root: root_p}
    remaining = list(net.edges)
    while remaining:
        progressed = False
        for e in list(remaining):
            model = e.models[choices.get(e.id, 1) - 1]
            c = params.get(e.id, ())
            if e.id == grid_edge:
                c = (c[0],)
            q = flows[e.id]
            if e.from_node in potentials and e.to_node not in potentials:
                potentials[e.to_node] = _forward(model, c, potentials[e.from_node], q)
            elif e.to_node in potentials and e.from_node not in potentials:
                potentials[e.from_node] = _backward(model, c, potentials[e.to_node], q)
            else:
                continue
            remaining.remove(e)
            progressed = True
        if not progressed:
            raise AssertionError("not a tree")
    return potentials


def _objective_grid(instance, choices, flows, potentials, root_p, param_grid):
    """Objective over the grid with infeasible points set to NaN."""
    net = instance.net
    shape = np.broadcast_shapes(*(np.shape(v) for v in potentials.values()))
    feasible = np.ones(shape, dtype=bool)
    value = np.zeros(shape)

    intensities = dict(instance.intensities)
    root_out = 0.0
    for e in net.edges:
        root_out += flows[e.id] * (1 if e.from_node == net.root else
                                   -1 if e.to_node == net.root else 0)
    intensities[net.root] = root_out

    for n in net.nodes:
        p = potentials[n.id]
        feasible &= ~np.isnan(p) & (p >= n.potential_lo - 1e-9) & (p <= n.potential_hi + 1e-9)
        q_i = intensities.get(n.id, 0.0)
        feasible &= (q_i >= n.intensity_lo - 1e-9) & (q_i <= n.intensity_hi + 1e-9)
        value = value + n.cost.intensity_coeff * q_i + n.cost.potential_coeff * p
    for e in net.edges:
        model = e.models[choices.get(e.id, 1) - 1]
        q = flows[e.id]
        value = value + e.cost.constant + model.cost + e.cost.flow_coeff * abs(q)
        p_i, p_k = potentials[e.from_node], potentials[e.to_node]
        for sc in e.side_constraints:
            if sc.kind == "power":
                v = q * (p_k - p_i)
            elif sc.kind == "dissipation":
                v = q * np.abs(p_i - p_k)
            else:
                v = abs(q)
            feasible &= (v >= sc.lo - 1e-9) & (v <= sc.hi + 1e-9)
        if model.param_arity:
            if param_grid is not None and param_grid[0] == e.id:
                c0 = param_grid[1]
            else:
                c0 = instance.params.get(e.id, (0.0,))[0]
            lo, hi = e.continuous_lo[0], e.continuous_hi[0]
            feasible &= (c0 >= lo - 1e-9) & (c0 <= hi + 1e-9)
            value = value + e.cost.param_coeff * c0 * c0
    return np.where(feasible, value, np.nan)
