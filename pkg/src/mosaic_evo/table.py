"""Fundamental tables and everything derived from them.

A fundamental table lists, for each micro-event type ``i``, the linear
clock-count coefficients ``C[i, j]``, the individual clock intensity
``lambda_i`` and the deterministic increments ``dX[i, j]``.  From it one gets,
at any rescaled state ``x``:

* clock densities      ``c_i = C[i,0] + sum_j C[i,j] x_j``
* clock functions      ``gamma_i = c_i lambda_i`` and ``gamma = sum_i gamma_i``
* event probabilities  ``p_i = gamma_i / gamma``
* expected increments  ``nu_j = sum_i dX[i,j] p_i``
* target point         ``xhat_j = nu_j / nu_0``

and the mean-field field ``dx_j/dt = gamma * nu_0 * (xhat_j - x_j)``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateStateError, InvalidStateError, TableError
from .stats import RescaledState, StateVector

__all__ = [
    "EventType",
    "FundamentalTable",
    "DerivedRates",
    "validate",
    "clock_counts",
    "clock_densities",
    "rates",
    "vector_field",
    "builtin_linear",
    "builtin_nonlinear",
    "save_table",
    "load_table",
    "table_to_json",
    "table_from_json",
    "CRACK_VARIABLES",
    "SPLIT_INCREMENTS",
    "HEAL_INCREMENTS",
    "Q_EPSILON",
]

CRACK_VARIABLES = ("Nstar", "V", "F")
SPLIT_INCREMENTS = (4, 2, 1)
HEAL_INCREMENTS = (1, 0, 0)

# stand-in for a zero intensity so that row indices stay stable
Q_EPSILON = 1e-300


@dataclass(frozen=True)
class EventType:
    name: str
    clock_coeffs: tuple
    intensity: float
    increments: tuple

    def __post_init__(self):
        object.__setattr__(self, "clock_coeffs", tuple(self.clock_coeffs))
        object.__setattr__(self, "increments", tuple(self.increments))


@dataclass(frozen=True)
class FundamentalTable:
    """Rows of micro-event types acting on ``J+1`` variables.

    Construction does not validate; call :func:`validate` (or any derived
    quantity, which validates first).  ``model`` and ``params`` only label
    the built-in families and are carried into output headers.
    """

    variables: tuple
    events: tuple
    model: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_events(self) -> int:
        return len(self.events)

    def coeff_matrix(self) -> np.ndarray:
        return np.array([e.clock_coeffs for e in self.events], dtype=float)

    def intensities(self) -> np.ndarray:
        return np.array([e.intensity for e in self.events], dtype=float)

    def increment_matrix(self) -> np.ndarray:
        return np.array([e.increments for e in self.events], dtype=float)

    def label(self) -> str:
        if not self.params:
            return self.model
        inner = ",".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.model}({inner})"


@dataclass(frozen=True)
class DerivedRates:
    clock_densities: tuple
    clock_functions: tuple
    gamma: float
    probabilities: tuple
    expected_increments: tuple
    target: tuple | None  # None when nu_0 == 0

    @property
    def target_defined(self) -> bool:
        return self.target is not None


def validate(t: FundamentalTable) -> list:
    """Return a list of problems; empty means the table is usable."""
    problems = []
    n = len(t.variables)
    if n < 2:
        problems.append("dimension mismatch: need a normaliser and at least one variable")
    if not t.events:
        problems.append("table has no event rows")
    for i, e in enumerate(t.events):
        if len(e.clock_coeffs) != n:
            problems.append(
                f"dimension mismatch: row {i} ({e.name}) has {len(e.clock_coeffs)} clock coefficients, expected {n}"
            )
        if len(e.increments) != n:
            problems.append(
                f"dimension mismatch: row {i} ({e.name}) has {len(e.increments)} increments, expected {n}"
            )
        lam = e.intensity
        if not isinstance(lam, (int, float)) or not math.isfinite(lam):
            problems.append(f"row {i} ({e.name}): non-finite intensity {lam!r}")
        elif lam <= 0:
            problems.append(f"nonpositive intensity in row {i} ({e.name}): {lam}")
        for v in tuple(e.clock_coeffs) + tuple(e.increments):
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                problems.append(f"row {i} ({e.name}): non-finite entry {v!r}")
                break
    return problems


def _check(t):
    problems = validate(t)
    if problems:
        raise TableError(problems)


def clock_counts(t: FundamentalTable, X) -> tuple:
    """Number of clocks of each type, ``C_i = sum_j C[i,j] X_j``."""
    _check(t)
    vals = tuple(X.values if isinstance(X, StateVector) else X)
    if len(vals) != t.n_vars:
        raise TableError(f"dimension mismatch: state has {len(vals)} entries, table has {t.n_vars} variables")
    return tuple(sum(c * v for c, v in zip(e.clock_coeffs, vals)) for e in t.events)


def _coords(t, x):
    c = tuple(x.coords if isinstance(x, RescaledState) else x)
    if len(c) != t.n_vars - 1:
        raise TableError(f"dimension mismatch: point has {len(c)} coordinates, table expects {t.n_vars - 1}")
    return c


def clock_densities(t: FundamentalTable, x) -> tuple:
    _check(t)
    c = _coords(t, x)
    return tuple(e.clock_coeffs[0] + sum(a * b for a, b in zip(e.clock_coeffs[1:], c)) for e in t.events)


def rates(t: FundamentalTable, x) -> DerivedRates:
    dens = clock_densities(t, x)
    gam_i = tuple(d * e.intensity for d, e in zip(dens, t.events))
    gam = sum(gam_i)
    if not gam > 0:
        raise DegenerateStateError(f"cumulative clock function is {gam} at {tuple(x)}")
    p = tuple(g / gam for g in gam_i)
    nu = tuple(sum(e.increments[j] * pi for e, pi in zip(t.events, p)) for j in range(t.n_vars))
    target = None if nu[0] == 0 else tuple(v / nu[0] for v in nu[1:])
    return DerivedRates(dens, gam_i, gam, p, nu, target)


def vector_field(t: FundamentalTable, x) -> tuple:
    """Mean-field velocity ``gamma * nu_0 * (xhat_j - x_j)`` at ``x``.

    Written as ``gamma * (nu_j - x_j nu_0)`` so that it stays defined where
    ``nu_0`` vanishes.
    """
    r = rates(t, x)
    c = _coords(t, x)
    nu0 = r.expected_increments[0]
    return tuple(r.gamma * (r.expected_increments[j + 1] - c[j] * nu0) for j in range(len(c)))


def builtin_linear(q: float) -> FundamentalTable:
    """Fixed event probabilities: cracking with ``1-q``, healing with ``q``.

    Both clock types are counted by ``N*``.  At ``q`` in {0, 1} the vanishing
    intensity is replaced by a tiny positive one (with a warning).
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0, 1], got {q}")
    lam0, lam1 = 1.0 - q, float(q)
    if lam0 == 0.0 or lam1 == 0.0:
        warnings.warn(f"q={q}: zero intensity replaced by {Q_EPSILON}", RuntimeWarning, stacklevel=2)
        lam0 = lam0 or Q_EPSILON
        lam1 = lam1 or Q_EPSILON
    return FundamentalTable(
        CRACK_VARIABLES,
        (
            EventType("secondary crack", (1, 0, 0), lam0, SPLIT_INCREMENTS),
            EventType("crack healing", (1, 0, 0), lam1, HEAL_INCREMENTS),
        ),
        model="linear",
        params={"q": float(q)},
    )


def builtin_nonlinear(lambda0: float, mu: float) -> FundamentalTable:
    """Cracking clocks sit on faces, healing clocks on irregular nodes.

    ``C_0 = F`` and ``C_1 = -N* + 2V + 2F = V_I``; the healing intensity is
    ``lambda0 / mu``.
    """
    if not (lambda0 > 0 and mu > 0):
        raise ValueError(f"lambda0 and mu must be positive, got lambda0={lambda0}, mu={mu}")
    return FundamentalTable(
        CRACK_VARIABLES,
        (
            EventType("secondary crack", (0, 0, 1), float(lambda0), SPLIT_INCREMENTS),
            EventType("crack healing", (-1, 2, 2), float(lambda0) / float(mu), HEAL_INCREMENTS),
        ),
        model="nonlinear",
        params={"lambda0": float(lambda0), "mu": float(mu)},
    )


# -- file format ---------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        raise TypeError("booleans are not table entries")
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def _num_list(vals) -> str:
    return "[" + ", ".join(_fmt(v) for v in vals) + "]"


def table_to_json(t: FundamentalTable) -> str:
    """Serialise with every float at 17 significant digits (bit-exact)."""
    lines = ["{", f'  "variables": {json.dumps(list(t.variables))},']
    if t.model != "custom":
        lines.append(f'  "model": {json.dumps(t.model)},')
        params = ", ".join(f"{json.dumps(k)}: {_fmt(v)}" for k, v in t.params.items())
        lines.append(f'  "params": {{{params}}},')
    lines.append('  "events": [')
    rows = []
    for e in t.events:
        rows.append(
            "    {"
            f'"name": {json.dumps(e.name)}, '
            f'"clock_coeffs": {_num_list(e.clock_coeffs)}, '
            f'"intensity": {_fmt(e.intensity)}, '
            f'"increments": {_num_list(e.increments)}'
            "}"
        )
    lines.append(",\n".join(rows))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def table_from_json(text: str) -> FundamentalTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableError(f"not a JSON document: {exc}") from None
    if not isinstance(doc, dict) or "variables" not in doc or "events" not in doc:
        raise TableError("table file needs top-level 'variables' and 'events'")
    events = []
    for i, row in enumerate(doc["events"]):
        try:
            events.append(EventType(row["name"], row["clock_coeffs"], row["intensity"], row["increments"]))
        except (KeyError, TypeError):
            raise TableError(f"event row {i} needs name, clock_coeffs, intensity, increments") from None
    t = FundamentalTable(doc["variables"], events, model=doc.get("model", "custom"), params=doc.get("params", {}))
    _check(t)
    return t


def save_table(t: FundamentalTable, path) -> None:
    _check(t)
    Path(path).write_text(table_to_json(t), newline="\n")


def load_table(path) -> FundamentalTable:
    return table_from_json(Path(path).read_text())


def as_point(x) -> RescaledState:
    if isinstance(x, RescaledState):
        return x
    try:
        return RescaledState(tuple(x))
    except TypeError:
        raise InvalidStateError(f"not a point: {x!r}") from None
