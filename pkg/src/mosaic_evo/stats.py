"""Combinatorial state of a mosaic and the planes it is drawn in.

A mosaic is summarised by raw counts ``(X_0, ..., X_J)``; for crack networks
these are ``(N*, V, F)``: the total corner degree, the node count and the face
count.  Dividing by the normaliser ``X_0`` gives the *inverse symbolic plane*
``(x, y) = (V/N*, F/N*)``, whose reciprocals are the average nodal and cell
corner degrees.  Convex mosaics live in the quadrangle ``Q`` cut out by four
straight lines in the ``(x, y)`` plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InconsistentStateError, InvalidStateError

__all__ = [
    "StateVector",
    "RescaledState",
    "SymbolicPoint",
    "QMembership",
    "Q_LINES",
    "Q_CORNERS",
    "Q_TOL",
    "rescale",
    "to_symbolic",
    "irregular_count",
    "regularity",
    "q_margins",
    "q_membership",
    "q_boundary_polyline",
]

Q_TOL = 1e-12

# line id -> (a, b, c) with the line written as  a*x + b*y = c
Q_LINES = {
    "L1": (-0.5, 1.0, 0.0),  # y = x/2
    "L2": (1.0, 1.0, 0.5),  # y = 1/2 - x
    "L3": (0.0, 1.0, 1.0 / 3.0),  # y = 1/3
    "L4": (0.5, 1.0, 0.5),  # y = 1/2 - x/2
}

# counter-clockwise; consecutive corners share the line listed between them
Q_CORNERS = (
    (1.0 / 3.0, 1.0 / 6.0),  # L1 & L2
    (0.5, 0.25),  # L1 & L4
    (1.0 / 3.0, 1.0 / 3.0),  # L4 & L3
    (1.0 / 6.0, 1.0 / 3.0),  # L3 & L2
)
Q_EDGES = ("L1", "L4", "L3", "L2")


@dataclass(frozen=True)
class StateVector:
    """Raw counts ``(X_0, ..., X_J)``; ``X_0`` is the normaliser."""

    values: tuple

    def __post_init__(self):
        vals = tuple(self.values)
        if len(vals) < 2:
            raise InvalidStateError("a state vector needs a normaliser and at least one variable")
        for v in vals:
            if not math.isfinite(v) or v <= 0:
                raise InvalidStateError(f"state entries must be finite and positive, got {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def crack(cls, nstar, v, f) -> "StateVector":
        return cls((nstar, v, f))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, j):
        return self.values[j]

    def __iter__(self):
        return iter(self.values)

    @property
    def nstar(self):
        return self.values[0]

    @property
    def V(self):
        return self.values[1]

    @property
    def F(self):
        return self.values[2]


@dataclass(frozen=True)
class RescaledState:
    """Coordinates ``x_j = X_j / X_0`` for ``j = 1..J``."""

    coords: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coords)
        if not c:
            raise InvalidStateError("rescaled state needs at least one coordinate")
        if not all(math.isfinite(v) for v in c):
            raise InvalidStateError(f"non-finite rescaled state {c}")
        object.__setattr__(self, "coords", c)

    def __len__(self):
        return len(self.coords)

    def __getitem__(self, j):
        return self.coords[j]

    def __iter__(self):
        return iter(self.coords)

    @property
    def x(self) -> float:
        return self.coords[0]

    @property
    def y(self) -> float:
        return self.coords[1]


@dataclass(frozen=True)
class SymbolicPoint:
    nbar_star: float
    vbar_star: float


@dataclass(frozen=True)
class QMembership:
    """Classification of a point against the convex-mosaic domain.

    ``margins`` holds the raw slacks of the four defining inequalities in
    the order L1..L4; positive means strictly satisfied.
    """

    status: str  # "inside" | "boundary" | "outside"
    lines: tuple  # ids of lines the point lies on (within tolerance)
    margins: tuple

    @property
    def inside(self) -> bool:
        return self.status == "inside"

    @property
    def outside(self) -> bool:
        return self.status == "outside"

    @property
    def min_margin(self) -> float:
        return min(self.margins)


def _as_state(X) -> StateVector:
    return X if isinstance(X, StateVector) else StateVector(tuple(X))


def _as_point(p) -> RescaledState:
    return p if isinstance(p, RescaledState) else RescaledState(tuple(p))


def rescale(X) -> RescaledState:
    """Divide counts by the normaliser: ``x_j = X_j / X_0``."""
    if not isinstance(X, StateVector):
        vals = tuple(X)
        if not vals or vals[0] == 0:
            raise InvalidStateError("zero normaliser")
        X = StateVector(vals)
    x0 = X.values[0]
    return RescaledState(tuple(v / x0 for v in X.values[1:]))


def to_symbolic(p) -> SymbolicPoint:
    """Map ``(x, y)`` to the symbolic plane ``(1/x, 1/y)``."""
    p = _as_point(p)
    if len(p) != 2:
        raise InvalidStateError("the symbolic plane is defined for two coordinates")
    if p.x <= 0 or p.y <= 0:
        raise InvalidStateError(f"symbolic coordinates need x, y > 0, got {p.coords}")
    return SymbolicPoint(1.0 / p.x, 1.0 / p.y)


def irregular_count(X):
    """Number of irregular ('T') nodes, ``2V + 2F - N*``.

    Follows from summing corner angles over nodes and over faces: a regular
    node carries a full turn of corner angles, an irregular one only half.
    """
    X = _as_state(X)
    if len(X) != 3:
        raise InvalidStateError("irregular_count needs a crack-model state (N*, V, F)")
    n_irr = 2 * X.V + 2 * X.F - X.nstar
    if n_irr < 0:
        raise InconsistentStateError(f"negative irregular-node count {n_irr} for {X.values}")
    return n_irr


def regularity(X) -> float:
    """Fraction of regular nodes, ``(V - V_I) / V``."""
    X = _as_state(X)
    n_irr = irregular_count(X)
    if n_irr > X.V:
        raise InconsistentStateError(f"more irregular nodes ({n_irr}) than nodes ({X.V})")
    return (X.V - n_irr) / X.V


def q_margins(x: float, y: float) -> tuple:
    return (
        y - 0.5 * x,
        y - (0.5 - x),
        1.0 / 3.0 - y,
        (0.5 - 0.5 * x) - y,
    )


def q_membership(p, tol: float = Q_TOL) -> QMembership:
    p = _as_point(p)
    margins = q_margins(p.x, p.y)
    if min(margins) < -tol:
        status = "outside"
        lines = ()
    else:
        lines = tuple(f"L{i + 1}" for i, m in enumerate(margins) if abs(m) <= tol)
        status = "boundary" if lines else "inside"
    return QMembership(status, lines, margins)


def q_boundary_polyline(points_per_edge: int = 1) -> list:
    """Closed polyline around ``Q`` (first point repeated at the end).

    Each edge is subdivided into ``points_per_edge`` segments.
    """
    if points_per_edge < 1:
        raise ValueError("points_per_edge must be >= 1")
    pts = []
    n = len(Q_CORNERS)
    for k in range(n):
        (x0, y0), (x1, y1) = Q_CORNERS[k], Q_CORNERS[(k + 1) % n]
        for i in range(points_per_edge):
            s = i / points_per_edge
            pts.append((x0 + s * (x1 - x0), y0 + s * (y1 - y0)))
    pts.append(pts[0])
    return pts
