"""Shooting fits: which q (or mu) carries one mosaic's point onto another's.

A trajectory of the chosen family is launched from ``x0`` and run until it
settles or leaves ``Q`` (one step past the crossing); the miss is the
closest approach to ``target``.  ``fit`` scans the parameter range and
polishes the best sample with a golden-section search.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ode.integrator import Trajectory, integrate
from .stats import q_membership
from .table import builtin_linear, builtin_nonlinear

__all__ = [
    "FitResult",
    "DirectionReport",
    "FAMILIES",
    "family_table",
    "miss_distance",
    "fit",
    "direction_probe",
    "golden_section",
    "DEFAULT_TOL_HIT",
]

FAMILIES = ("linear", "nonlinear")
DEFAULT_TOL_HIT = 2e-3
DEFAULT_INTERVALS = {"linear": (0.0, 1.0), "nonlinear": (1e-4, 100.0)}
SCAN_SAMPLES = 200
PARAM_TOL = 1e-5
MAX_DT = 1e-3
# slowest decay rate is 1 for both families (lambda0 = 1), so by t = 40 the
# remaining distance to the fixed point is ~e^-40 and cannot improve the miss
T_HORIZON = 40.0

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a: float, b: float, tol: float):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def family_table(family: str, param: float):
    """Table for a one-parameter family; the nonlinear one uses ``lambda0 = 1``."""
    if family == "linear":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return builtin_linear(param)
    if family == "nonlinear":
        return builtin_nonlinear(1.0, param)
    raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def _polyline_distance(pts, target):
    """Return ``(distance, segment index, fraction along segment)``."""
    T = np.asarray(target, dtype=float)
    if len(pts) == 1:
        return float(np.hypot(*(pts[0] - T))), 0, 0.0
    A, B = pts[:-1], pts[1:]
    d = B - A
    L2 = np.einsum("ij,ij->i", d, d)
    s = np.einsum("ij,ij->i", T - A, d) / np.where(L2 > 0, L2, 1.0)
    s = np.clip(s, 0.0, 1.0)
    proj = A + s[:, None] * d
    dist = np.hypot(proj[:, 0] - T[0], proj[:, 1] - T[1])
    k = int(np.argmin(dist))
    return float(dist[k]), k, float(s[k])


def _shoot(family, param, x0):
    return integrate(family_table(family, param), x0, T_HORIZON, stop_on_exit=True)


def _closest_approach(traj: Trajectory, target):
    t_end = traj.t_final
    if t_end <= 0:
        p = traj.step_states[-1]
        return float(math.hypot(p[0] - target[0], p[1] - target[1])), 0.0
    n = max(2, int(math.ceil(t_end / MAX_DT)) + 1)
    ts = np.union1d(np.linspace(0.0, t_end, n), traj.step_t)
    pts = traj.dense(ts)
    dist, k, s = _polyline_distance(pts, target)
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 2, len(ts) - 1)]

    def g(tt):
        p = traj.dense([tt])[0]
        return math.hypot(p[0] - target[0], p[1] - target[1])

    t_ref, d_ref = golden_section(g, lo, hi, 1e-12 + 1e-10 * hi)
    if d_ref <= dist:
        return d_ref, float(t_ref)
    return dist, float(ts[k] + s * (ts[k + 1] - ts[k])) if k + 1 < len(ts) else float(ts[k])


def miss_distance(family: str, param: float, x0, target):
    """Closest approach ``(miss, t_hit)`` of the family trajectory to ``target``."""
    x0 = tuple(float(v) for v in x0)
    target = tuple(float(v) for v in target)
    if not all(math.isfinite(v) for v in x0 + target):
        raise ValueError("start and target must be finite")
    if x0 == target:
        return 0.0, 0.0
    traj = _shoot(family, param, x0)
    return _closest_approach(traj, target)


@dataclass
class FitResult:
    family: str
    param: float
    miss: float
    t_hit: float
    success: bool
    x0: tuple
    target: tuple
    tol_hit: float = DEFAULT_TOL_HIT
    trajectory: Trajectory | None = field(default=None, repr=False)
    scan_params: np.ndarray | None = field(default=None, repr=False)
    scan_miss: np.ndarray | None = field(default=None, repr=False)

    @property
    def param_name(self) -> str:
        return "q" if self.family == "linear" else "mu"

    def to_dict(self, trajectory_csv=None) -> dict:
        return {
            "family": self.family,
            "parameter": {"name": self.param_name, "value": self.param},
            "miss": self.miss,
            "t_hit": self.t_hit,
            "success": self.success,
            "tol_hit": self.tol_hit,
            "from": list(self.x0),
            "to": list(self.target),
            "exited_Q": bool(self.trajectory.exited_q) if self.trajectory is not None else None,
            "trajectory_csv": None if trajectory_csv is None else str(trajectory_csv),
        }

    def to_json(self, trajectory_csv=None) -> str:
        return json.dumps(self.to_dict(trajectory_csv), indent=2) + "\n"


def _scan_grid(family, interval, n):
    a, b = interval
    if not a < b:
        raise ValueError(f"empty parameter interval {interval}")
    if family == "nonlinear":
        if a <= 0:
            raise ValueError("mu interval must be positive")
        return np.geomspace(a, b, n)
    return np.linspace(a, b, n)


def fit(family: str, x0, target, param_interval=None, tol_hit: float = DEFAULT_TOL_HIT,
        samples: int = SCAN_SAMPLES) -> FitResult:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    x0 = tuple(float(v) for v in x0)
    target = tuple(float(v) for v in target)
    interval = tuple(param_interval) if param_interval is not None else DEFAULT_INTERVALS[family]
    grid = _scan_grid(family, interval, samples)
    miss = np.array([miss_distance(family, p, x0, target)[0] for p in grid])
    k = int(np.argmin(miss))
    best_p, best_m = float(grid[k]), float(miss[k])

    if x0 != target and samples > 1:
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        if family == "nonlinear":
            # search in log mu; stop when the bracket is below PARAM_TOL in mu
            f = lambda u: miss_distance(family, math.exp(u), x0, target)[0]  # noqa: E731
            u, m = golden_section(f, math.log(lo), math.log(hi), PARAM_TOL / hi)
            p = math.exp(u)
        else:
            p, m = golden_section(lambda v: miss_distance(family, v, x0, target)[0], lo, hi, PARAM_TOL)
        if m < best_m:
            best_p, best_m = float(p), float(m)

    if x0 == target:
        traj = integrate(family_table(family, best_p), x0, 0.0)
        t_hit = 0.0
    else:
        traj = _shoot(family, best_p, x0)
        best_m, t_hit = _closest_approach(traj, target)
    return FitResult(
        family=family,
        param=best_p,
        miss=float(best_m),
        t_hit=float(t_hit),
        success=bool(best_m <= tol_hit),
        x0=x0,
        target=target,
        tol_hit=tol_hit,
        trajectory=traj,
        scan_params=grid,
        scan_miss=miss,
    )


@dataclass
class DirectionReport:
    forward: FitResult
    backward: FitResult
    a_outside_q: bool
    b_outside_q: bool

    @property
    def one_way(self) -> bool:
        return self.forward.success != self.backward.success


def direction_probe(family: str, a, b, **kw) -> DirectionReport:
    """Fit ``a -> b`` and ``b -> a``; points outside ``Q`` are flagged, not rejected."""
    return DirectionReport(
        forward=fit(family, a, b, **kw),
        backward=fit(family, b, a, **kw),
        a_outside_q=q_membership(tuple(a)).outside,
        b_outside_q=q_membership(tuple(b)).outside,
    )
