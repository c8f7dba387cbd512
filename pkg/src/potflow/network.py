"""Problem-instance data model, validation, and spanning-tree decomposition.

A network is a directed multigraph: edge orientation is only a sign
convention for flow (reversing an edge negates its flow), and parallel
edges between the same node pair are allowed. The decomposition fixes a
breadth-first spanning tree with a deterministic ascending-edge-id
tie-break, so node orders, chord sets, and the discrete-edge order are
reproducible byte for byte.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from .elements import EdgeModel, SideConstraint
from .errors import DisconnectedGraph, InvalidChordKind, UnknownEdge


@dataclass(frozen=True)
class NodeObjective:
    """Linear node cost  intensity_coeff*Q + potential_coeff*p."""

    intensity_coeff: float = 0.0
    potential_coeff: float = 0.0


@dataclass(frozen=True)
class EdgeObjective:
    """Edge cost  constant + flow_coeff*|q| + param_coeff*sum(c**2).

    The chosen model's own `cost` constant is added on top, so equipment
    selection is visible to the objective.
    """

    constant: float = 0.0
    flow_coeff: float = 0.0
    param_coeff: float = 0.0


@dataclass(frozen=True)
class NodeSpec:
    id: str
    intensity_lo: float
    intensity_hi: float
    potential_lo: float
    potential_hi: float
    cost: NodeObjective = NodeObjective()


@dataclass(frozen=True)
class EdgeSpec:
    id: str
    from_node: str
    to_node: str
    models: tuple[EdgeModel, ...]
    continuous_lo: tuple[float, ...] = ()
    continuous_hi: tuple[float, ...] = ()
    side_constraints: tuple[SideConstraint, ...] = ()
    cost: EdgeObjective = EdgeObjective()

    @property
    def family_size(self) -> int:
        return len(self.models)

    @property
    def param_arity(self) -> int:
        return max((m.param_arity for m in self.models), default=0)

    def model(self, choice: int) -> EdgeModel:
        """Model selected by a 1-based discrete choice."""
        return self.models[choice - 1]


@dataclass(frozen=True)
class Network:
    """Static problem instance: nodes, edges, and the designated root."""

    nodes: tuple[NodeSpec, ...]
    edges: tuple[EdgeSpec, ...]
    root: str

    @cached_property
    def node_by_id(self) -> dict[str, NodeSpec]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def edge_by_id(self) -> dict[str, EdgeSpec]:
        return {e.id: e for e in self.edges}

    @cached_property
    def adjacency(self) -> dict[str, tuple[tuple[str, str], ...]]:
        """node id -> ((edge id, other endpoint), ...) sorted by edge id."""
        adj: dict[str, list[tuple[str, str]]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.from_node in adj:
                adj[e.from_node].append((e.id, e.to_node))
            if e.to_node in adj:
                adj[e.to_node].append((e.id, e.from_node))
        return {k: tuple(sorted(v)) for k, v in adj.items()}

    @cached_property
    def discrete_edges(self) -> tuple[str, ...]:
        """Edges carrying a real discrete decision (family size > 1)."""
        return tuple(e.id for e in self.edges if e.family_size > 1)


@dataclass
class NetworkState:
    """Full state vector: flows, intensities, potentials, parameters, choices.

    Flows are oriented from each edge's `from_node` to its `to_node`;
    reversing the stored orientation negates the flow. Choice 0 means the
    discrete variable is not set.
    """

    edge_flow: dict[str, float]
    node_intensity: dict[str, float]
    node_potential: dict[str, float]
    edge_params: dict[str, tuple[float, ...]]
    edge_choice: dict[str, int]


@dataclass(frozen=True)
class TreeDecomposition:
    """Rooted spanning tree plus its chord set and traversal orders."""

    tree_edges: frozenset[str]
    chords: tuple[str, ...]
    node_order: tuple[str, ...]
    parent: Mapping[str, tuple[str, str]]  # node -> (parent node, connecting edge)

    @cached_property
    def node_position(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.node_order)}


@dataclass(frozen=True)
class Fragment:
    """Prefix-supported partial assignment of discrete choices.

    ``values[j] == 0`` means the j-th discrete edge (in the fragment
    order) is not yet decided; all zeros follow the nonzero prefix.
    """

    values: tuple[int, ...]

    def __post_init__(self):
        seen_zero = False
        for v in self.values:
            if v < 0:
                raise ValueError("fragment entries must be nonnegative")
            if v == 0:
                seen_zero = True
            elif seen_zero:
                raise ValueError("fragment must be a nonzero prefix followed by zeros")

    @property
    def length(self) -> int:
        m = 0
        for i, v in enumerate(self.values):
            if v != 0:
                m = i + 1
        return m


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_network(net: Network) -> ValidationReport:
    """Collect every violated structural invariant (diagnostics only)."""
    issues: list[str] = []
    seen_nodes: set[str] = set()
    for n in net.nodes:
        if n.id in seen_nodes:
            issues.append(f"duplicate node id {n.id!r}")
        seen_nodes.add(n.id)
        if n.intensity_lo > n.intensity_hi:
            issues.append(f"node {n.id!r}: inverted intensity bounds")
        if n.potential_lo > n.potential_hi:
            issues.append(f"node {n.id!r}: inverted potential bounds")
        if n.potential_lo <= 0:
            issues.append(f"node {n.id!r}: potential lower bound must be positive")

    seen_edges: set[str] = set()
    for e in net.edges:
        if e.id in seen_edges:
            issues.append(f"duplicate edge id {e.id!r}")
        seen_edges.add(e.id)
        if not e.models:
            issues.append(f"edge {e.id!r}: empty model family")
        if e.from_node == e.to_node:
            issues.append(f"edge {e.id!r}: self loop")
        for end in (e.from_node, e.to_node):
            if end not in seen_nodes:
                issues.append(f"edge {e.id!r}: unknown endpoint {end!r}")
        arity = e.param_arity
        if len(e.continuous_lo) < arity or len(e.continuous_hi) < arity:
            issues.append(f"edge {e.id!r}: missing continuous parameter bounds")
        for lo, hi in zip(e.continuous_lo, e.continuous_hi):
            if lo > hi:
                issues.append(f"edge {e.id!r}: inverted continuous bounds")

    if net.root not in seen_nodes:
        issues.append(f"unknown root {net.root!r}")
    elif net.nodes and not _connected(net):
        issues.append("disconnected network")
    return ValidationReport(tuple(issues))


def _connected(net: Network) -> bool:
    if not net.nodes:
        return True
    start = net.nodes[0].id
    seen = {start}
    stack = [start]
    adj = net.adjacency
    while stack:
        u = stack.pop()
        for _, v in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(net.nodes)


def build_spanning_tree(net: Network, root: str | None = None) -> TreeDecomposition:
    """Breadth-first spanning tree from the root.

    Neighbors are explored in ascending edge-id order, so identical inputs
    give byte-identical decompositions. The node order is the BFS visit
    order: each non-root node has exactly one earlier-ordered tree
    neighbor.

    Raises:
        DisconnectedGraph: some node is unreachable from the root.
        InvalidChordKind: a chord's family contains a flow-undetermined
            kind; such edges must be tree edges.
    """
    root = net.root if root is None else root
    if root not in net.node_by_id:
        raise DisconnectedGraph(f"root {root!r} not in network")
    adj = net.adjacency
    parent: dict[str, tuple[str, str]] = {}
    order = [root]
    visited = {root}
    tree: set[str] = set()
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for edge_id, v in adj[u]:
            if v not in visited:
                visited.add(v)
                parent[v] = (u, edge_id)
                tree.add(edge_id)
                order.append(v)
                queue.append(v)
    if len(visited) != len(net.nodes):
        missing = sorted(set(net.node_by_id) - visited)
        raise DisconnectedGraph(f"unreachable nodes: {missing}")
    chords = tuple(sorted(e.id for e in net.edges if e.id not in tree))
    for cid in chords:
        family = net.edge_by_id[cid].models
        if any(not m.flow_determined for m in family):
            raise InvalidChordKind(
                f"chord {cid!r} has a flow-undetermined model; "
                "it must be a tree edge"
            )
    return TreeDecomposition(frozenset(tree), chords, tuple(order), parent)


def tree_path_edges(net: Network, tree: TreeDecomposition, node: str) -> list[str]:
    """Tree edges on the path from the root to `node`."""
    path = []
    u = node
    while u != tree.node_order[0]:
        p, eid = tree.parent[u]
        path.append(eid)
        u = p
    path.reverse()
    return path


def fragment_order(net: Network, root: str | None = None,
                   discrete_edges: Iterable[str] | None = None,
                   tree: TreeDecomposition | None = None) -> tuple[str, ...]:
    """Order discrete edges so every prefix spans a connected root subnetwork.

    Edges are sorted by the node-order position of their shallower
    endpoint (the tree-path attachment), ties broken by edge id. With a
    BFS tree this guarantees that the minimal subnetwork of each prefix
    contains no discrete edge outside the prefix.

    Raises:
        UnknownEdge: a requested edge id is not in the network.
    """
    if tree is None:
        tree = build_spanning_tree(net, root)
    if discrete_edges is None:
        discrete_edges = net.discrete_edges
    pos = tree.node_position
    keyed = []
    for eid in discrete_edges:
        e = net.edge_by_id.get(eid)
        if e is None:
            raise UnknownEdge(f"unknown edge {eid!r}")
        keyed.append((min(pos[e.from_node], pos[e.to_node]), eid))
    keyed.sort()
    return tuple(eid for _, eid in keyed)


def prefix_subnetwork(net: Network, order: tuple[str, ...], m: int,
                      tree: TreeDecomposition | None = None) -> Network:
    """Minimal connected subnetwork of the root, the first m ordered edges,
    and their endnodes (union of root tree paths plus the edges).
    """
    if not 0 <= m <= len(order):
        raise ValueError(f"prefix length {m} out of range")
    if tree is None:
        tree = build_spanning_tree(net)
    keep_edges: set[str] = set()
    keep_nodes: set[str] = {tree.node_order[0]}
    for eid in order[:m]:
        e = net.edge_by_id[eid]
        keep_edges.add(eid)
        for end in (e.from_node, e.to_node):
            keep_nodes.add(end)
            for peid in tree_path_edges(net, tree, end):
                keep_edges.add(peid)
                pe = net.edge_by_id[peid]
                keep_nodes.add(pe.from_node)
                keep_nodes.add(pe.to_node)
    return Network(
        nodes=tuple(n for n in net.nodes if n.id in keep_nodes),
        edges=tuple(e for e in net.edges if e.id in keep_edges),
        root=tree.node_order[0],
    )
