"""Steady-state edge equation families.

Every shipped kind relates the two endpoint potentials and the edge flow
through one algebraic equation ``residual(p_i, p_k, q, c) = 0`` that is
monotone in each argument separately:

* ``linear_resistor``   -- ``(p_i - p_k) - R*q``            (Ohm analogue)
* ``quadratic_pipe``    -- ``(p_i**2 - p_k**2) - K*q*|q|``   (isothermal gas pipe)
* ``ratio_machine``     -- ``c*p_i - p_k``                   (compressor abstraction)
* ``fixed_drop``        -- ``(p_i - p_k) - t``               (tension relaxation)

``fixed_drop`` is the internal kind used when a discrete edge is relaxed
to a tension variable; it is not part of the document format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ArityMismatch, FlowUndetermined, NoPositiveSolution

LINEAR_RESISTOR = "linear_resistor"
QUADRATIC_PIPE = "quadratic_pipe"
RATIO_MACHINE = "ratio_machine"
FIXED_DROP = "fixed_drop"

_PARAM_ARITY = {
    LINEAR_RESISTOR: 0,
    QUADRATIC_PIPE: 0,
    RATIO_MACHINE: 1,
    FIXED_DROP: 1,
}

#: Kinds whose flow is determined by the endpoint potentials.
FLOW_DETERMINED_KINDS = frozenset({LINEAR_RESISTOR, QUADRATIC_PIPE})


@dataclass(frozen=True)
class OperatingEnvelope:
    """Admissible operating range of an active element in the (q, c) plane.

    The polygon is simple (non self-intersecting) and may be non-convex.
    For parameterless kinds the second coordinate is evaluated at 0.
    """

    polygon: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise ValueError("envelope polygon needs at least 3 vertices")
        if _self_intersects(self.polygon):
            raise ValueError("envelope polygon must be simple")


@dataclass(frozen=True)
class SideConstraint:
    """Bounded scalar function of the edge state (power, dissipation, ...)."""

    kind: str  # "power" | "dissipation" | "flow_magnitude"
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("power", "dissipation", "flow_magnitude"):
            raise ValueError(f"unknown side constraint kind {self.kind!r}")
        if self.lo > self.hi:
            raise ValueError("side constraint bounds inverted")


@dataclass(frozen=True)
class EdgeModel:
    """One member of an edge's equation family.

    Attributes:
        kind: one of the module-level kind constants.
        coefficients: kind-specific constants (resistance R, pipe constant K).
        cost: constant added to the edge objective when this model is chosen.
        envelope: optional admissible (q, c) region.
    """

    kind: str
    coefficients: tuple[float, ...] = ()
    cost: float = 0.0
    envelope: OperatingEnvelope | None = None

    @property
    def param_arity(self) -> int:
        return _PARAM_ARITY[self.kind]

    @property
    def flow_determined(self) -> bool:
        return self.kind in FLOW_DETERMINED_KINDS


def linear_resistor(resistance: float, cost: float = 0.0,
                    envelope: OperatingEnvelope | None = None) -> EdgeModel:
    if resistance <= 0:
        raise ValueError("resistance must be positive")
    return EdgeModel(LINEAR_RESISTOR, (float(resistance),), cost, envelope)


def quadratic_pipe(constant: float, cost: float = 0.0,
                   envelope: OperatingEnvelope | None = None) -> EdgeModel:
    if constant <= 0:
        raise ValueError("pipe constant must be positive")
    return EdgeModel(QUADRATIC_PIPE, (float(constant),), cost, envelope)


def ratio_machine(cost: float = 0.0,
                  envelope: OperatingEnvelope | None = None) -> EdgeModel:
    return EdgeModel(RATIO_MACHINE, (), cost, envelope)


def fixed_drop() -> EdgeModel:
    return EdgeModel(FIXED_DROP, ())


def _check_arity(model: EdgeModel, c: tuple[float, ...]) -> None:
    if len(c) < model.param_arity:
        raise ArityMismatch(
            f"{model.kind} expects {model.param_arity} parameter(s), got {len(c)}"
        )


def residual(model: EdgeModel, c: tuple[float, ...],
             p_i: float, p_k: float, q: float) -> float:
    """Equation residual; zero exactly when (p_i, p_k, q, c) satisfies the model."""
    _check_arity(model, c)
    if model.kind == LINEAR_RESISTOR:
        return (p_i - p_k) - model.coefficients[0] * q
    if model.kind == QUADRATIC_PIPE:
        return (p_i * p_i - p_k * p_k) - model.coefficients[0] * q * abs(q)
    if model.kind == RATIO_MACHINE:
        return c[0] * p_i - p_k
    if model.kind == FIXED_DROP:
        return (p_i - p_k) - c[0]
    raise ValueError(f"unknown model kind {model.kind!r}")


def solve_downstream(model: EdgeModel, c: tuple[float, ...],
                     p_i: float, q: float, edge_id: str | None = None) -> float:
    """Unique positive p_k with zero residual, given the upstream potential.

    Raises:
        NoPositiveSolution: no positive downstream potential exists; its
            `magnitude` grades the deficit.
    """
    _check_arity(model, c)
    if model.kind == LINEAR_RESISTOR:
        p_k = p_i - model.coefficients[0] * q
    elif model.kind == QUADRATIC_PIPE:
        rad = p_i * p_i - model.coefficients[0] * q * abs(q)
        if rad <= 0.0:
            raise NoPositiveSolution(
                f"pipe drop exceeds upstream potential (q={q:g})",
                edge_id=edge_id, magnitude=-rad + 1.0,
            )
        return math.sqrt(rad)
    elif model.kind == RATIO_MACHINE:
        p_k = c[0] * p_i
    elif model.kind == FIXED_DROP:
        p_k = p_i - c[0]
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    if p_k <= 0.0:
        raise NoPositiveSolution(
            f"downstream potential nonpositive ({p_k:g})",
            edge_id=edge_id, magnitude=-p_k + 1.0,
        )
    return p_k


def solve_upstream(model: EdgeModel, c: tuple[float, ...],
                   p_k: float, q: float, edge_id: str | None = None) -> float:
    """Unique positive p_i with zero residual, given the downstream potential."""
    _check_arity(model, c)
    if model.kind == LINEAR_RESISTOR:
        p_i = p_k + model.coefficients[0] * q
    elif model.kind == QUADRATIC_PIPE:
        rad = p_k * p_k + model.coefficients[0] * q * abs(q)
        if rad <= 0.0:
            raise NoPositiveSolution(
                f"pipe gain exceeds downstream potential (q={q:g})",
                edge_id=edge_id, magnitude=-rad + 1.0,
            )
        return math.sqrt(rad)
    elif model.kind == RATIO_MACHINE:
        if c[0] <= 0.0:
            raise NoPositiveSolution("machine ratio nonpositive",
                                     edge_id=edge_id, magnitude=-c[0] + 1.0)
        p_i = p_k / c[0]
    elif model.kind == FIXED_DROP:
        p_i = p_k + c[0]
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    if p_i <= 0.0:
        raise NoPositiveSolution(
            f"upstream potential nonpositive ({p_i:g})",
            edge_id=edge_id, magnitude=-p_i + 1.0,
        )
    return p_i


def solve_flow(model: EdgeModel, c: tuple[float, ...],
               p_i: float, p_k: float) -> float:
    """Unique flow with zero residual at the given endpoint potentials.

    Raises:
        FlowUndetermined: the kind's residual does not depend on flow.
    """
    _check_arity(model, c)
    if model.kind == LINEAR_RESISTOR:
        return (p_i - p_k) / model.coefficients[0]
    if model.kind == QUADRATIC_PIPE:
        diff = p_i * p_i - p_k * p_k
        return math.copysign(math.sqrt(abs(diff) / model.coefficients[0]), diff)
    raise FlowUndetermined(f"{model.kind} flow is not determined by potentials")


def side_constraint_value(sc: SideConstraint, p_i: float, p_k: float, q: float) -> float:
    if sc.kind == "power":
        return q * (p_k - p_i)
    if sc.kind == "dissipation":
        return q * abs(p_i - p_k)
    return abs(q)


def envelope_violation(env: OperatingEnvelope, q: float, c: float) -> float:
    """0 inside or on the polygon boundary, Euclidean distance to it otherwise."""
    if _point_in_polygon(q, c, env.polygon):
        return 0.0
    return _distance_to_polygon(q, c, env.polygon)


# -- polygon helpers ---------------------------------------------------------

def _point_in_polygon(x: float, y: float, poly: tuple[tuple[float, float], ...]) -> bool:
    # Ray casting with an explicit on-boundary check so edges count as inside.
    n = len(poly)
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def _on_segment(x, y, x1, y1, x2, y2, tol=1e-12):
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    scale = max(1.0, abs(x2 - x1), abs(y2 - y1))
    if abs(cross) > tol * scale:
        return False
    dot = (x - x1) * (x2 - x1) + (y - y1) * (y2 - y1)
    return -tol <= dot <= (x2 - x1) ** 2 + (y2 - y1) ** 2 + tol


def _distance_to_polygon(x, y, poly):
    best = math.inf
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        best = min(best, _point_segment_distance(x, y, x1, y1, x2, y2))
    return best


def _point_segment_distance(x, y, x1, y1, x2, y2):
    dx, dy = x2 - x1, y2 - y1
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(x - x1, y - y1)
    t = max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / seg2))
    return math.hypot(x - (x1 + t * dx), y - (y1 + t * dy))


def _self_intersects(poly):
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent segments share a vertex
            b1, b2 = poly[j], poly[(j + 1) % n]
            if _segments_cross(a1, a2, b1, b2):
                return True
    return False


def _segments_cross(a1, a2, b1, b2):
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _orient(p, q, r):
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
