"""Event-driven simulation driver: configuration, sampling, logs, CSV output."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvariantViolation, PreconditionError, TableError
from ..stats import RescaledState, StateVector
from ..table import HEAL_INCREMENTS, SPLIT_INCREMENTS, FundamentalTable, validate
from . import kernels as K
from .mesh import GEOMETRIC, MODES, TorusMosaic, parse_pattern, seed

__all__ = [
    "SimConfig",
    "EventRecord",
    "EventLog",
    "SimSeries",
    "event_kinds",
    "make_rng",
    "run",
    "ssa_step",
    "apply_secondary_crack",
    "apply_healing",
    "debug_enabled",
]

CHECK_EVERY = 1000
FULL_CHECK_EVERY = 10_000  # whole-mesh sweep cadence in debug mode
CHUNK = 1 << 16
SERIES_HEADER = "t,Nstar,V,F,x,y,V_I,r"
EVENTS_HEADER = "tau,type,location_id,dNstar,dV,dF"


def debug_enabled(flag=None) -> bool:
    if flag is not None:
        return bool(flag)
    return os.environ.get("MOSAIC_EVO_DEBUG", "") not in ("", "0")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def event_kinds(table: FundamentalTable) -> np.ndarray:
    """Map each table row to the mesh surgery that realises it."""
    problems = validate(table)
    if problems:
        raise TableError(problems)
    if table.n_vars != 3:
        raise TableError("the mesh simulator needs a crack-model table over (N*, V, F)")
    kinds = []
    for e in table.events:
        inc = tuple(e.increments)
        if inc == SPLIT_INCREMENTS:
            kinds.append(K.KIND_SPLIT)
        elif inc == HEAL_INCREMENTS:
            kinds.append(K.KIND_HEAL)
        else:
            raise TableError(f"row {e.name!r}: no mesh operation has increments {inc}")
    return np.array(kinds, np.int64)


@dataclass
class SimConfig:
    model: FundamentalTable
    seed_pattern: str = "brick:10x10"
    t_end: float | None = None
    max_events: int | None = None
    rng_seed: int = 0
    geometry_mode: str = GEOMETRIC
    heal_epsilon: float | None = None  # absolute; None means 1e-3 x local mean edge length
    heal_epsilon_rel: float = 1e-3
    split_delta_min: float = 1e-6  # fraction of the segment length
    sample_times: tuple | None = None
    sample_every: int = 0
    keep_events: bool = True
    debug: bool | None = None

    def __post_init__(self):
        if self.t_end is None and self.max_events is None:
            raise ValueError("give t_end or max_events")
        if self.t_end is not None and not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.max_events is not None and self.max_events < 0:
            raise ValueError("max_events must be nonnegative")
        if self.geometry_mode not in MODES:
            raise ValueError(f"geometry_mode must be one of {MODES}")
        if self.heal_epsilon is not None and not self.heal_epsilon > 0:
            raise ValueError("heal_epsilon must be positive")
        if not (self.heal_epsilon_rel > 0 and self.split_delta_min > 0):
            raise ValueError("heal_epsilon_rel and split_delta_min must be positive")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")
        if self.sample_every < 0:
            raise ValueError("sample_every must be >= 0")
        if self.sample_times is not None:
            st = np.asarray(self.sample_times, float)
            if st.ndim != 1 or np.any(np.diff(st) < 0) or np.any(st < 0):
                raise ValueError("sample_times must be nonnegative and sorted")
        parse_pattern(self.seed_pattern)
        event_kinds(self.model)

    def header(self) -> str:
        t = self.model
        params = ",".join(f"{k}={format(float(v), '.17g')}" for k, v in t.params.items()) or "-"
        return f"seed={int(self.rng_seed)} model={t.model} params={params} pattern={self.seed_pattern} mode={self.geometry_mode}"


@dataclass(frozen=True)
class EventRecord:
    event_time: float
    event_type: int
    location: int
    increments: tuple
    flag: str = "ok"  # "ok" | "stalled" | "geometric-fallback"

    @property
    def stalled(self) -> bool:
        return self.flag == "stalled"


_FLAG_NAMES = {K.FLAG_OK: "ok", K.FLAG_STALLED: "stalled", K.FLAG_FALLBACK: "geometric-fallback"}


@dataclass
class EventLog:
    tau: np.ndarray
    type: np.ndarray
    location: np.ndarray
    flag: np.ndarray
    increments: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.uint8),
                   np.zeros((0, 3), np.int64))

    def __len__(self):
        return len(self.tau)

    def record(self, k) -> EventRecord:
        return EventRecord(float(self.tau[k]), int(self.type[k]), int(self.location[k]),
                           tuple(int(v) for v in self.increments[k]), _FLAG_NAMES[int(self.flag[k])])

    def records(self):
        return [self.record(k) for k in range(len(self))]

    @property
    def n_stalled(self) -> int:
        return int(np.count_nonzero(self.flag == K.FLAG_STALLED))

    @property
    def n_fallback(self) -> int:
        return int(np.count_nonzero(self.flag == K.FLAG_FALLBACK))

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="\n") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(EVENTS_HEADER + "\n")
            for k in range(len(self)):
                d = self.increments[k]
                fh.write(f"{format(float(self.tau[k]), '.17g')},{int(self.type[k])},{int(self.location[k])},"
                         f"{int(d[0])},{int(d[1])},{int(d[2])}\n")


@dataclass
class SimSeries:
    """Sampled counts; ``counts`` columns are ``(N*, V, F)``."""

    t: np.ndarray
    counts: np.ndarray
    V_I: np.ndarray
    E: np.ndarray
    terminal: str = ""
    n_events: int = 0
    header: str = ""

    def __len__(self):
        return len(self.t)

    @property
    def x(self):
        return self.counts[:, 1] / self.counts[:, 0]

    @property
    def y(self):
        return self.counts[:, 2] / self.counts[:, 0]

    @property
    def r(self):
        return (self.counts[:, 1] - self.V_I) / self.counts[:, 1]

    @property
    def samples(self):
        out = []
        for k in range(len(self)):
            X = StateVector(tuple(int(v) for v in self.counts[k]))
            out.append((float(self.t[k]), X, RescaledState((self.x[k], self.y[k])), int(self.V_I[k]), float(self.r[k])))
        return out

    def to_csv(self, path, comment: str | None = None) -> None:
        comment = self.header if comment is None else comment
        x, y, r = self.x, self.y, self.r
        with open(path, "w", newline="\n") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(SERIES_HEADER + "\n")
            for k in range(len(self)):
                n, v, f = (int(c) for c in self.counts[k])
                fh.write(
                    f"{format(float(self.t[k]), '.17g')},{n},{v},{f},{format(float(x[k]), '.17g')},"
                    f"{format(float(y[k]), '.17g')},{int(self.V_I[k])},{format(float(r[k]), '.17g')}\n"
                )


def read_series_csv(path):
    """Return a dict of column arrays from a series CSV."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    cols = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


# -- driver ----------------------------------------------------------------------


class _Driver:
    def __init__(self, m: TorusMosaic, table, rng, *, delta_rel=1e-6, eps_rel=1e-3, eps_abs=None, debug=None):
        self.m = m
        self.table = table
        self.rng = rng
        self.kind = event_kinds(table)
        self.coef = np.ascontiguousarray(table.coeff_matrix())
        self.lam = np.ascontiguousarray(table.intensities())
        self.inc = np.ascontiguousarray(table.increment_matrix())
        self.delta_rel = float(delta_rel)
        self.eps_rel = float(eps_rel)
        self.eps_abs = float(eps_abs) if eps_abs else 0.0
        self.debug = debug_enabled(debug)
        self.err = np.zeros(2, np.int64)

    def ensure(self, n_events):
        m = self.m
        m.reserve(m.V + 2 * n_events + 2, int(m.cnt[K.NH]) + 6 * n_events + 6, m.F + n_events + 1)

    def chunk(self, clock, ctr, st, samp, sample_every, log, keep_log, local_every):
        m = self.m
        ctr[5], ctr[6], ctr[7] = m.capacity
        return K.run_chunk(
            m.arrays(), self.coef, self.lam, self.kind, self.inc, self.rng, m.geometric,
            self.delta_rel, self.eps_rel, self.eps_abs, clock, ctr, st, samp, sample_every,
            log[0], log[1], log[2], log[3], log[4], keep_log, local_every, self.err,
        )

    def violation(self, status):
        code = -status
        raise InvariantViolation(
            f"{K.VIOLATION_NAMES.get(code, 'unknown violation')} after event {int(self.err[0])} "
            f"(element {int(self.err[1])})"
        )


def _log_buffers(n):
    return (np.zeros(n), np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.uint8),
            np.zeros((n, 3), np.int64))


def run(config: SimConfig, mosaic: TorusMosaic | None = None, svg_every: int | None = None, svg_dir=None):
    """Simulate until ``t_end``, ``max_events`` or absorption.

    Returns ``(SimSeries, EventLog)`` and leaves the final mesh on
    ``run.last_mosaic`` for inspection.
    """
    from .svg import render_svg

    if mosaic is None:
        name, r, c = parse_pattern(config.seed_pattern)
        mosaic = seed(name, r, c, mode=config.geometry_mode)
    m = mosaic
    rng = make_rng(config.rng_seed)
    drv = _Driver(m, config.model, rng, delta_rel=config.split_delta_min, eps_rel=config.heal_epsilon_rel,
                  eps_abs=config.heal_epsilon, debug=config.debug)
    debug = drv.debug
    local_every = 1 if debug else CHECK_EVERY
    t_end = math.inf if config.t_end is None else float(config.t_end)
    budget = config.max_events if config.max_events is not None else np.iinfo(np.int64).max
    st = np.asarray(config.sample_times if config.sample_times is not None else (), float)
    st = np.ascontiguousarray(st[st <= t_end])
    every = int(config.sample_every)
    keep = bool(config.keep_events)

    clock = np.array([0.0, t_end])
    ctr = np.zeros(8, np.int64)
    rows = []
    if every:
        rows.append(np.array([[0.0, m.nstar, m.V, m.F, m.V_I, m.E]]))
    logs = []
    frames = 0
    if svg_every:
        Path(svg_dir).mkdir(parents=True, exist_ok=True)
        render_svg(m, Path(svg_dir) / f"frame_{0:08d}.svg")
        frames = 1

    step = CHECK_EVERY if debug else CHUNK
    if svg_every:
        step = min(step, int(svg_every))
    terminal = "max_events"
    last_full = 0
    while True:
        done = int(ctr[0])
        if done >= budget:
            break
        n = int(min(step, budget - done))
        drv.ensure(n)
        ctr[1] = done + n
        samp = np.zeros((len(st) - int(ctr[2]) + (n // every if every else 0) + 2, 6))
        ctr[3] = 0
        log = _log_buffers(n if keep else 0)
        ctr[4] = 0
        status = drv.chunk(clock, ctr, st, samp, every, log, keep, local_every)
        if ctr[3]:
            rows.append(samp[: ctr[3]].copy())
        if keep and ctr[4]:
            k = int(ctr[4])
            logs.append(tuple(a[:k].copy() for a in log))
        if status < 0:
            run.last_mosaic = m
            drv.violation(status)
        if status == K.ST_SPLITFAIL:
            raise InvariantViolation(f"no admissible chord in face {int(drv.err[1])} after {K.SPLIT_ATTEMPTS} attempts")
        if debug and int(ctr[0]) // FULL_CHECK_EVERY > last_full:
            last_full = int(ctr[0]) // FULL_CHECK_EVERY
            ok, msg = m.check()
            if not ok:
                run.last_mosaic = m
                raise InvariantViolation(f"{msg} after event {int(ctr[0])}")
        if svg_every and int(ctr[0]) // svg_every >= frames:
            render_svg(m, Path(svg_dir) / f"frame_{int(ctr[0]):08d}.svg")
            frames = int(ctr[0]) // svg_every + 1
        if status == K.ST_TEND:
            terminal = "t_end"
            break
        if status == K.ST_ABSORBED:
            terminal = "absorbed"
            break

    ok, msg = m.check()
    if not ok:
        run.last_mosaic = m
        raise InvariantViolation(f"{msg} at end of run")

    # sample times not yet reached see the final state when nothing else can happen before them
    if terminal in ("t_end", "absorbed") and int(ctr[2]) < len(st):
        rest = st[int(ctr[2]):]
        tail = np.empty((len(rest), 6))
        tail[:, 0] = rest
        tail[:, 1:] = (m.nstar, m.V, m.F, m.V_I, m.E)
        rows.append(tail)

    data = np.concatenate(rows) if rows else np.zeros((0, 6))
    series = SimSeries(
        t=data[:, 0].copy(),
        counts=data[:, 1:4].astype(np.int64),
        V_I=data[:, 4].astype(np.int64),
        E=data[:, 5].astype(np.int64),
        terminal=terminal,
        n_events=int(ctr[0]),
        header=config.header(),
    )
    if logs:
        events = EventLog(*(np.concatenate([lg[i] for lg in logs]) for i in range(5)))
    else:
        events = EventLog.empty()
    m.time = float(clock[0])
    run.last_mosaic = m
    return series, events


run.last_mosaic = None


# -- single events -----------------------------------------------------------------


def ssa_step(m: TorusMosaic, table: FundamentalTable, rng, *, delta_rel=1e-6, eps_rel=1e-3, eps_abs=None,
             debug=None):
    """One exact event on ``m``; returns its :class:`EventRecord`, or None when absorbed.

    The mesh carries its clock in ``m.time``.
    """
    drv = _Driver(m, table, rng, delta_rel=delta_rel, eps_rel=eps_rel, eps_abs=eps_abs, debug=debug)
    drv.ensure(1)
    clock = np.array([getattr(m, "time", 0.0), math.inf])
    ctr = np.zeros(8, np.int64)
    ctr[1] = 1
    log = _log_buffers(1)
    status = drv.chunk(clock, ctr, np.zeros(0), np.zeros((2, 6)), 0, log, True, 1)
    if status < 0:
        drv.violation(status)
    if status == K.ST_SPLITFAIL:
        raise InvariantViolation("no admissible chord found")
    if status == K.ST_ABSORBED:
        return None
    m.time = float(clock[0])
    return EventLog(*log).record(0)


def apply_secondary_crack(m: TorusMosaic, face: int, rng, delta_rel: float = 1e-6) -> EventRecord:
    if not 0 <= face < m.F:
        raise PreconditionError(f"no face {face}")
    m.reserve(m.V + 4, int(m.cnt[K.NH]) + 8, m.F + 2)
    before = (m.nstar, m.V, m.F)
    touched = np.zeros(6, np.int64)
    if K.split_face(m.arrays(), face, rng, m.geometric, float(delta_rel), touched) < 0:
        raise InvariantViolation(f"no admissible chord in face {face}")
    d = (m.nstar - before[0], m.V - before[1], m.F - before[2])
    return EventRecord(getattr(m, "time", 0.0), 0, int(face), d)


def apply_healing(m: TorusMosaic, vertex: int, eps_rel: float = 1e-3, eps_abs: float | None = None) -> EventRecord:
    if not 0 <= vertex < m.V:
        raise PreconditionError(f"no vertex {vertex}")
    if m.v_irr[vertex] < 0:
        raise PreconditionError(f"vertex {vertex} is regular; only T nodes can heal")
    before = (m.nstar, m.V, m.F)
    touched = np.zeros(6, np.int64)
    flag = K.heal_vertex(m.arrays(), vertex, m.geometric, float(eps_rel), float(eps_abs or 0.0), touched)
    d = (m.nstar - before[0], m.V - before[1], m.F - before[2])
    return EventRecord(getattr(m, "time", 0.0), 1, int(vertex), d, _FLAG_NAMES[int(flag)])
