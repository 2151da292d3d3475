"""Closed forms and diagnostics for the two crack models.

Polynomials here are written for healing intensity ``lambda1``; the
nonlinear field is ``lambda1 * (f1, g1)`` with ``f1, g1`` the ``lambda1 = 1``
polynomials below.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidStateError, PreconditionError
from ..stats import Q_CORNERS, Q_EDGES, Q_TOL, RescaledState, q_margins
from ..table import FundamentalTable, as_point, vector_field

__all__ = [
    "StabilityReport",
    "linear_fixed_point",
    "nonlinear_fixed_point",
    "nonlinear_field",
    "nonlinear_jacobian",
    "stability",
    "jacobian_numeric",
    "boundary_flux",
    "INWARD_NORMALS",
    "lyapunov_diag",
    "straightness_residual",
    "density_ratio_series",
    "is_monotone",
]

INWARD_NORMALS = {"L1": (-1.0, 2.0), "L2": (1.0, 1.0), "L3": (0.0, -1.0), "L4": (-1.0, -2.0)}


def linear_fixed_point(q: float) -> RescaledState:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    d = 4.0 - 3.0 * q
    return RescaledState(((2.0 - 2.0 * q) / d, (1.0 - q) / d))


def nonlinear_fixed_point(mu: float) -> RescaledState:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return RescaledState(((mu + 1.0) / (2.0 * mu + 3.0), (mu + 1.0) / (4.0 * mu + 6.0)))


def nonlinear_field(mu, x, y, lambda1=1.0):
    f = 2 * mu * y - 4 * mu * x * y - 2 * x * x - 2 * x * y + x
    g = mu * y - 4 * mu * y * y - 2 * x * y - 2 * y * y + y
    return lambda1 * f, lambda1 * g


def nonlinear_jacobian(mu: float, lambda1: float) -> np.ndarray:
    """Jacobian of the nonlinear field at its fixed point, in closed form."""
    s = lambda1 / (4 * mu + 6)
    return s * np.array(
        [
            [-4 * mu * mu - 10 * mu - 4, -4.0],
            [-2 * mu - 2, -4 * mu * mu - 6 * mu - 2],
        ]
    )


@dataclass(frozen=True)
class StabilityReport:
    fixed_point: RescaledState
    jacobian: np.ndarray
    eigenvalues: tuple
    eigenvectors: tuple  # unit vectors, first nonzero component positive

    @property
    def stable(self) -> bool:
        return all(a < 0 for a in self.eigenvalues)


def _canonical(v, tol=1e-14):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    for c in v:
        if abs(c) > tol:
            if c < 0:
                v = -v
            break
    return tuple(float(c) for c in v)


def stability(mu: float, lambda1: float = 1.0) -> StabilityReport:
    """Eigen-analysis of the nonlinear model at its fixed point.

    Eigenvalues come from the closed form ``-lambda1*mu`` and
    ``-lambda1*(mu+1)``; eigenvectors are taken numerically from the
    Jacobian and matched to the eigenvalue they belong to.
    """
    if not (mu > 0 and lambda1 > 0):
        raise ValueError("mu and lambda1 must be positive")
    J = nonlinear_jacobian(mu, lambda1)
    alphas = (float(-lambda1 * mu), float(-lambda1 * (mu + 1.0)))
    w, V = np.linalg.eig(J)
    w = np.real(w)
    V = np.real(V)
    vecs = []
    for a in alphas:
        k = int(np.argmin(np.abs(w - a)))
        vecs.append(_canonical(V[:, k]))
    return StabilityReport(nonlinear_fixed_point(mu), J, alphas, tuple(vecs))


def jacobian_numeric(table: FundamentalTable, x, h: float = 1e-6) -> np.ndarray:
    if not h > 0:
        raise ValueError("h must be positive")
    p = np.array(tuple(as_point(x)), dtype=float)
    n = p.size
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        fp = np.array(vector_field(table, tuple(p + e)))
        fm = np.array(vector_field(table, tuple(p - e)))
        J[:, k] = (fp - fm) / (2 * h)
    return J


def _on_segment(line, x, y, tol):
    i = Q_EDGES.index(line)
    a, b = Q_CORNERS[i], Q_CORNERS[(i + 1) % 4]
    m = q_margins(x, y)[int(line[1]) - 1]
    if abs(m) > tol:
        return False
    lo_x, hi_x = sorted((a[0], b[0]))
    lo_y, hi_y = sorted((a[1], b[1]))
    return lo_x - tol <= x <= hi_x + tol and lo_y - tol <= y <= hi_y + tol


def boundary_flux(mu: float, point, line: str, tol: float = 1e-9) -> float:
    """Inward normal component ``r_i . (f, g) / lambda1`` on boundary segment ``line``."""
    if line not in INWARD_NORMALS:
        raise ValueError(f"unknown boundary line {line!r}")
    p = as_point(point)
    if not _on_segment(line, p.x, p.y, tol):
        raise PreconditionError(f"point {p.coords} is not on segment {line} of Q")
    f, g = nonlinear_field(mu, p.x, p.y)
    r = INWARD_NORMALS[line]
    return r[0] * f + r[1] * g


def lyapunov_diag(mu, lambda1, x, y):
    """Return ``(V, dV/dt, dV/dt via the factored identity)`` for ``V = 2y - x``."""
    f, g = nonlinear_field(mu, x, y, lambda1)
    V = 2 * y - x
    dv = 2 * g - f
    factored = lambda1 * (x - 2 * y) * (4 * mu * y + 2 * x + 2 * y - 1)
    return V, dv, factored


def straightness_residual(traj, xhat) -> float:
    xh, yh = tuple(as_point(xhat))
    s = np.asarray(traj.states if hasattr(traj, "states") else traj, dtype=float)
    if s.shape[0] == 0:
        return 0.0
    dx0, dy0 = s[0, 0] - xh, s[0, 1] - yh
    r = (s[:, 0] - xh) * dy0 - (s[:, 1] - yh) * dx0
    return float(np.max(np.abs(r)))


def density_ratio_series(traj, j1: int = 0, j2: int = 1) -> np.ndarray:
    s = np.asarray(traj.states if hasattr(traj, "states") else traj, dtype=float)
    den = s[:, j2]
    if np.any(den == 0):
        raise InvalidStateError("density ratio undefined: denominator coordinate is zero")
    return s[:, j1] / den


def is_monotone(series, tol: float = 1e-10) -> bool:
    """True when no step goes against the overall direction by more than ``tol``."""
    d = np.diff(np.asarray(series, dtype=float))
    if d.size == 0:
        return True
    return bool(np.all(d <= tol) or np.all(d >= -tol))
