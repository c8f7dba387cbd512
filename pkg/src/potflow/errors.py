"""Exception types shared across the package."""

from __future__ import annotations


class PotflowError(Exception):
    """Base class for all errors raised by this package."""


class DisconnectedGraph(PotflowError):
    """The network is not connected as an undirected graph."""


class UnknownNode(PotflowError):
    pass


class UnknownEdge(PotflowError):
    pass


class ArityMismatch(PotflowError):
    """Continuous parameter vector does not match the model's arity."""


class NoPositiveSolution(PotflowError):
    """No positive downstream/upstream potential exists for the given flow.

    Signals an infeasible operating regime rather than a solver defect.
    `magnitude` grades how far the solve missed positivity (useful as a
    penalty slope for searches probing infeasible regions).
    """

    def __init__(self, message: str, edge_id: str | None = None, magnitude: float = 0.0):
        super().__init__(message)
        self.edge_id = edge_id
        self.magnitude = magnitude


class FlowUndetermined(PotflowError):
    """Edge flow is not determined by its endpoint potentials."""


class InvalidChordKind(PotflowError):
    """A chord's model family contains a flow-undetermined kind."""


class NonConvergence(PotflowError):
    """Iteration or damping budget exhausted before reaching tolerance.

    `residual_norm` is the best max-norm achieved.
    """

    def __init__(self, message: str, residual_norm: float = float("inf")):
        super().__init__(message)
        self.residual_norm = residual_norm


class CapacityUndefined(PotflowError):
    """No flow-determined model exists in the edge family."""


class EmptyInterval(PotflowError):
    """Interval tightening proved infeasibility at the given flow.

    A legitimate verdict, not a failure; `node_id` names where the
    intervals first became empty.
    """

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(message)
        self.node_id = node_id


class BaseInfeasible(PotflowError):
    """The stability base point itself is infeasible."""


class UnrealizableOptimum(PotflowError):
    """Some tension at the relaxed optimum has no discrete realization.

    `gaps` maps edge id to the residual realizability gap.
    """

    def __init__(self, message: str, gaps: dict[str, float] | None = None):
        super().__init__(message)
        self.gaps = dict(gaps or {})


class ParseError(PotflowError):
    """Input file is not syntactically valid JSON."""


class SchemaError(PotflowError):
    """Input document violates the published schema."""


class ValidationError(PotflowError):
    """Parsed document produced a structurally invalid network."""


class WriteError(PotflowError):
    """Report could not be written to the requested path."""
