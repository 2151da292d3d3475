"""Adaptive Dormand-Prince 5(4) integration of the mean-field ODE.

The right-hand side is evaluated straight from the table arrays in the
expanded form ``sum_i gamma_i (dX_j(i) - x_j dX_0(i))``, which is
algebraically ``gamma * nu_0 * (xhat_j - x_j)`` but needs no division.
Every accepted step keeps its continuous-extension coefficients, so the
solution can be sampled anywhere afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import IntegrationError, InvalidStateError
from ..stats import Q_TOL, RescaledState
from ..table import FundamentalTable, validate
from ..errors import TableError

__all__ = ["Trajectory", "integrate", "table_arrays", "write_trajectory_csv", "read_trajectory_csv"]

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12
DEFAULT_MAX_STEP = 0.1
CONVERGED_NORM = 1e-13

T_END, CONVERGED, EXITED_Q, UNDERFLOW, MAX_STEPS, NONFINITE = 0, 1, 2, 3, 4, 5
REASONS = {T_END: "t_end", CONVERGED: "converged-to-fixed-point", EXITED_Q: "exited-Q"}

# Dormand-Prince tableau
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423


@njit(cache=True)
def field_nb(coef, lam, inc, x, out):
    n_ev, n = coef.shape
    J = n - 1
    for j in range(J):
        out[j] = 0.0
    for i in range(n_ev):
        c = coef[i, 0]
        for j in range(J):
            c += coef[i, j + 1] * x[j]
        g = c * lam[i]
        d0 = inc[i, 0]
        for j in range(J):
            out[j] += g * (inc[i, j + 1] - x[j] * d0)


@njit(cache=True)
def q_min_margin_nb(x, y):
    m = y - 0.5 * x
    m2 = y - (0.5 - x)
    if m2 < m:
        m = m2
    m3 = 1.0 / 3.0 - y
    if m3 < m:
        m = m3
    m4 = (0.5 - 0.5 * x) - y
    if m4 < m:
        m = m4
    return m


@njit(cache=True)
def _err_norm(e, y0, y1, rtol, atol):
    s = 0.0
    for j in range(e.size):
        sk = atol + rtol * max(abs(y0[j]), abs(y1[j]))
        s += (e[j] / sk) ** 2
    return math.sqrt(s / e.size)


@njit(cache=True)
def _norm(v):
    s = 0.0
    for j in range(v.size):
        s += v[j] * v[j]
    return math.sqrt(s)


@njit(cache=True)
def dopri5_nb(coef, lam, inc, y0, t_end, rtol, atol, max_step, conv_tol, check_q, stop_on_exit, max_steps):
    J = y0.size
    cap = 256
    ts = np.empty(cap)
    ys = np.empty((cap, J))
    rc = np.empty((cap, 5, J))
    ts[0] = 0.0
    ys[0] = y0
    n = 1
    n_rej = 0
    nfev = 0
    exit_idx = -1
    after_exit = 0

    y = y0.copy()
    k1 = np.empty(J)
    k2 = np.empty(J)
    k3 = np.empty(J)
    k4 = np.empty(J)
    k5 = np.empty(J)
    k6 = np.empty(J)
    k7 = np.empty(J)
    tmp = np.empty(J)
    y1 = np.empty(J)
    err = np.empty(J)

    field_nb(coef, lam, inc, y, k1)
    nfev += 1
    t = 0.0
    inside = False
    if check_q and J == 2:
        inside = q_min_margin_nb(y[0], y[1]) >= -1e-12

    if _norm(k1) < conv_tol:
        return ts[:n], ys[:n], rc[: n - 1], n_rej, nfev, CONVERGED, exit_idx
    if t_end <= 0.0:
        return ts[:n], ys[:n], rc[: n - 1], n_rej, nfev, T_END, exit_idx

    # initial step guess (Hairer, Norsett & Wanner)
    d0 = 0.0
    d1 = 0.0
    for j in range(J):
        sk = atol + rtol * abs(y[j])
        d0 += (y[j] / sk) ** 2
        d1 += (k1[j] / sk) ** 2
    d0 = math.sqrt(d0 / J)
    d1 = math.sqrt(d1 / J)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for j in range(J):
        tmp[j] = y[j] + h0 * k1[j]
    field_nb(coef, lam, inc, tmp, k2)
    nfev += 1
    d2 = 0.0
    for j in range(J):
        sk = atol + rtol * abs(y[j])
        d2 += ((k2[j] - k1[j]) / sk) ** 2
    d2 = math.sqrt(d2 / J) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100.0 * h0, h1, max_step)

    status = T_END
    last_rejected = False
    while True:
        if t >= t_end:
            status = T_END
            break
        if n - 1 >= max_steps:
            status = MAX_STEPS
            break
        if h > max_step:
            h = max_step
        if t + h > t_end:
            h = t_end - t
        if h < 16.0 * 2.220446049250313e-16 * max(1.0, abs(t)):
            status = UNDERFLOW
            break

        for j in range(J):
            tmp[j] = y[j] + h * A21 * k1[j]
        field_nb(coef, lam, inc, tmp, k2)
        for j in range(J):
            tmp[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
        field_nb(coef, lam, inc, tmp, k3)
        for j in range(J):
            tmp[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
        field_nb(coef, lam, inc, tmp, k4)
        for j in range(J):
            tmp[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
        field_nb(coef, lam, inc, tmp, k5)
        for j in range(J):
            tmp[j] = y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j])
        field_nb(coef, lam, inc, tmp, k6)
        for j in range(J):
            y1[j] = y[j] + h * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j] + B5 * k5[j] + B6 * k6[j])
        field_nb(coef, lam, inc, y1, k7)
        nfev += 6
        for j in range(J):
            err[j] = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
        en = _err_norm(err, y, y1, rtol, atol)
        if not math.isfinite(en):
            # blow-up inside the step: shrink hard, give up if it persists
            n_rej += 1
            h *= 0.1
            last_rejected = True
            continue

        if en <= 1.0:
            if n >= cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, J))
                rc2 = np.empty((cap, 5, J))
                ts2[:n] = ts[:n]
                ys2[:n] = ys[:n]
                rc2[: n - 1] = rc[: n - 1]
                ts, ys, rc = ts2, ys2, rc2
            k = n - 1
            for j in range(J):
                ydiff = y1[j] - y[j]
                bspl = h * k1[j] - ydiff
                rc[k, 0, j] = y[j]
                rc[k, 1, j] = ydiff
                rc[k, 2, j] = bspl
                rc[k, 3, j] = ydiff - h * k7[j] - bspl
                rc[k, 4, j] = h * (D1 * k1[j] + D3 * k3[j] + D4 * k4[j] + D5 * k5[j] + D6 * k6[j] + D7 * k7[j])
            if t + h >= t_end:
                t = t_end
            else:
                t = t + h
            ts[n] = t
            finite = True
            for j in range(J):
                y[j] = y1[j]
                k1[j] = k7[j]
                ys[n, j] = y1[j]
                if not math.isfinite(y1[j]):
                    finite = False
            n += 1
            if not finite:
                status = NONFINITE
                break

            if check_q and J == 2:
                now_inside = q_min_margin_nb(y[0], y[1]) >= -1e-12
                if exit_idx >= 0:
                    after_exit += 1
                elif inside and not now_inside:
                    exit_idx = n - 2
                inside = now_inside
                if stop_on_exit and exit_idx >= 0 and after_exit >= 1:
                    status = EXITED_Q
                    break

            if _norm(k1) < conv_tol:
                status = CONVERGED
                break

            fac = 0.9 * en ** -0.2 if en > 0 else 5.0
            fac = min(5.0, max(0.2, fac))
            if last_rejected:
                fac = min(1.0, fac)
            h = h * fac
            last_rejected = False
        else:
            n_rej += 1
            h = h * max(0.2, 0.9 * en ** -0.2)
            last_rejected = True

    return ts[:n], ys[:n], rc[: n - 1], n_rej, nfev, status, exit_idx


def _dense(step_t, rc, final, times):
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, final.size))
    if rc.shape[0] == 0:
        out[:] = final
        return out
    idx = np.searchsorted(step_t, times, side="right") - 1
    idx = np.clip(idx, 0, rc.shape[0] - 1)
    h = step_t[idx + 1] - step_t[idx]
    th = ((times - step_t[idx]) / h)[:, None]
    c = rc[idx]
    out[:] = c[:, 0] + th * (c[:, 1] + (1 - th) * (c[:, 2] + th * (c[:, 3] + (1 - th) * c[:, 4])))
    beyond = times >= step_t[-1]
    out[beyond] = final
    before = times <= step_t[0]
    out[before] = c[0, 0] if c.shape[0] else final
    return out


def table_arrays(t: FundamentalTable):
    problems = validate(t)
    if problems:
        raise TableError(problems)
    return (
        np.ascontiguousarray(t.coeff_matrix()),
        np.ascontiguousarray(t.intensities()),
        np.ascontiguousarray(t.increment_matrix()),
    )


@dataclass
class Trajectory:
    """Samples of one ODE solution plus the data to re-sample it densely.

    ``t`` and ``states`` are the requested samples (or the accepted step
    nodes if none were requested).  Sample times past an early stop are
    filled with the terminal state.
    """

    t: np.ndarray
    states: np.ndarray
    reason: str
    n_steps: int
    n_rejected: int
    n_evals: int
    step_t: np.ndarray = field(repr=False)
    step_states: np.ndarray = field(repr=False)
    rcont: np.ndarray = field(repr=False)
    exit_time: float | None = None
    exit_point: tuple | None = None
    t_final: float = 0.0

    @property
    def final(self) -> RescaledState:
        return RescaledState(tuple(self.step_states[-1]))

    @property
    def samples(self):
        return [(float(ti), RescaledState(tuple(s))) for ti, s in zip(self.t, self.states)]

    @property
    def exited_q(self) -> bool:
        return self.exit_time is not None

    def dense(self, times) -> np.ndarray:
        return _dense(self.step_t, self.rcont, self.step_states[-1], times)

    def __len__(self):
        return len(self.t)


def _exit_time(traj_t, rc, k, final, tol=1e-10):
    """Bisect for the first crossing of the Q boundary inside step ``k``."""
    lo, hi = traj_t[k], traj_t[k + 1]

    def g(tt):
        p = _dense(traj_t, rc, final, [tt])[0]
        return q_min_margin_nb(p[0], p[1]) + Q_TOL

    if g(lo) < 0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def integrate(
    table: FundamentalTable,
    x0,
    t_end: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    sample_times=None,
    max_step: float = DEFAULT_MAX_STEP,
    stop_on_exit: bool = False,
    converged_norm: float = CONVERGED_NORM,
    max_steps: int = 10_000_000,
) -> Trajectory:
    """Integrate the mean-field ODE of ``table`` from ``x0`` up to ``t_end``.

    Stops early once ``|dx/dt| < converged_norm``.  For two-variable tables
    leaving ``Q`` is detected and its time refined; it only ends the run when
    ``stop_on_exit`` is set (one further step is taken after the crossing).

    Raises
    ------
    IntegrationError
        On step-size underflow, non-finite states or too many steps.
    """
    coef, lam, inc = table_arrays(table)
    y0 = np.array(tuple(x0.coords if isinstance(x0, RescaledState) else x0), dtype=float)
    if y0.size != coef.shape[1] - 1:
        raise InvalidStateError(f"initial point has {y0.size} coordinates, table expects {coef.shape[1] - 1}")
    if not np.all(np.isfinite(y0)):
        raise InvalidStateError(f"non-finite initial point {y0}")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if not t_end >= 0:
        raise ValueError("t_end must be nonnegative")
    check_q = y0.size == 2
    ts, ys, rc, n_rej, nfev, status, exit_idx = dopri5_nb(
        coef, lam, inc, y0, float(t_end), float(rtol), float(atol), float(max_step),
        float(converged_norm), check_q, bool(stop_on_exit), int(max_steps),
    )
    if status == UNDERFLOW:
        raise IntegrationError(f"step size underflow at t={ts[-1]:.17g}, x={ys[-1]}")
    if status == NONFINITE:
        raise IntegrationError(f"non-finite state reached near t={ts[-1]:.17g}")
    if status == MAX_STEPS:
        raise IntegrationError(f"step budget of {max_steps} exhausted at t={ts[-1]:.17g}")

    exit_time = exit_point = None
    if exit_idx >= 0:
        exit_time = _exit_time(ts, rc, exit_idx, ys[-1])
        exit_time = float(exit_time)
        exit_point = tuple(float(v) for v in _dense(ts, rc, ys[-1], [exit_time])[0])

    if sample_times is None:
        st, states = ts.copy(), ys.copy()
    else:
        st = np.asarray(sample_times, dtype=float)
        if st.ndim != 1 or (st.size > 1 and np.any(np.diff(st) <= 0)):
            raise ValueError("sample_times must be strictly increasing")
        states = _dense(ts, rc, ys[-1], st)
    return Trajectory(
        t=st,
        states=states,
        reason=REASONS[status],
        n_steps=len(ts) - 1,
        n_rejected=int(n_rej),
        n_evals=int(nfev),
        step_t=ts,
        step_states=ys,
        rcont=rc,
        exit_time=exit_time,
        exit_point=exit_point,
        t_final=float(ts[-1]),
    )


def write_trajectory_csv(traj: Trajectory, path, comment: str | None = None) -> None:
    names = ["x", "y"] if traj.states.shape[1] == 2 else [f"x{j + 1}" for j in range(traj.states.shape[1])]
    with open(path, "w", newline="\n") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(["t"] + names) + "\n")
        for ti, row in zip(traj.t, traj.states):
            fh.write(",".join(format(float(v), ".17g") for v in (ti, *row)) + "\n")


def read_trajectory_csv(path):
    """Return ``(t, states)`` arrays from a trajectory CSV (comment lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    width = len(lines[0].split(","))
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, width)
    return body[:, 0], body[:, 1:]
