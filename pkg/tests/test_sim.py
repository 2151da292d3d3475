import math
import warnings

import numpy as np
import pytest

from mosaic_evo.errors import InvariantViolation, TableError
from mosaic_evo.sim import SimConfig, make_rng, read_series_csv, run, seed_brick
from mosaic_evo.sim.run import EVENTS_HEADER, SERIES_HEADER, debug_enabled, event_kinds
from mosaic_evo.stats import q_margins
from mosaic_evo.table import EventType, FundamentalTable, builtin_linear, builtin_nonlinear, clock_counts


def cfg(**kw):
    base = dict(model=builtin_nonlinear(1.0, 1.0), seed_pattern="brick:10x10", max_events=2000, rng_seed=7)
    base.update(kw)
    return SimConfig(**base)


def test_pcg64_stream_matches_numpy():
    # the compiled kernels consume the same Generator; draws must match plain numpy
    a, b = make_rng(42), np.random.Generator(np.random.PCG64(42))
    assert a.random() == b.random()


def test_determinism():
    s1, e1 = run(cfg())
    s2, e2 = run(cfg())
    assert np.array_equal(e1.tau, e2.tau) and np.array_equal(e1.location, e2.location)
    assert np.array_equal(s1.counts, s2.counts)
    s3, e3 = run(cfg(rng_seed=8))
    assert not np.array_equal(e1.tau, e3.tau)


def test_telescoping_and_rows():
    c = cfg(sample_every=1, max_events=5000)
    series, events = run(c)
    assert len(events) == 5000
    assert np.array_equal(events.increments.sum(axis=0), series.counts[-1] - series.counts[0])
    rows = c.model.increment_matrix()[events.type]
    assert np.array_equal(events.increments, rows)
    assert np.all(np.diff(events.tau) > 0)


def test_clock_counts_match_mesh():
    t = builtin_nonlinear(1.0, 0.5)
    series, _ = run(cfg(model=t, sample_every=7))
    for counts, vi in zip(series.counts, series.V_I):
        assert clock_counts(t, tuple(counts)) == (counts[2], vi)


def test_states_stay_in_q():
    for model in (builtin_nonlinear(1.0, 0.05), builtin_nonlinear(1.0, 20.0), builtin_linear(0.5)):
        series, _ = run(cfg(model=model, sample_every=5, max_events=4000, geometry_mode="combinatorial"))
        m = np.array(q_margins(series.x, series.y))
        assert m.min() >= -1e-12


def test_linear_high_q_stalls():
    series, events = run(cfg(model=builtin_linear(0.9), max_events=5000))
    assert events.n_stalled > 0
    st = events.flag == 1
    assert np.all(events.increments[st] == 0) and np.all(events.type[st] == 1)
    assert np.all(events.location[st] == -1)
    assert any(r.stalled for r in events.records())


def test_healing_fraction_linear():
    q = 0.4
    _, events = run(cfg(model=builtin_linear(q), seed_pattern="brick:30x30", max_events=10_000,
                        geometry_mode="combinatorial"))
    n = len(events)
    sigma = math.sqrt(n * q * (1 - q))
    assert abs(np.count_nonzero(events.type == 1) - n * q) <= 4 * sigma


def test_interarrival_mean_linear():
    # with the linear table f = N* exactly, so the expected gap is 1/N*
    series, events = run(cfg(model=builtin_linear(0.4), seed_pattern="brick:30x30", max_events=10_000,
                             sample_every=1, geometry_mode="combinatorial"))
    gaps = np.diff(np.concatenate([[0.0], events.tau]))
    mean = 1.0 / series.counts[:-1, 0]
    z = (gaps.sum() - mean.sum()) / math.sqrt(np.sum(mean ** 2))
    assert abs(z) <= 4


def test_sample_times_and_fill():
    times = (0.0, 0.001, 0.002, 0.01, 0.01 + 1e-9, 0.5)
    series, events = run(cfg(t_end=0.01 + 1e-9, max_events=None, sample_times=times))
    assert tuple(series.t) == times[:-1]  # times past t_end are outside the run
    assert series.terminal == "t_end"
    assert tuple(series.counts[0]) == (400, 200, 100)
    # the sample taken at t_end shows the final mesh
    m = run.last_mosaic
    assert tuple(series.counts[-1]) == (m.nstar, m.V, m.F)
    assert series.n_events == len(events) == np.count_nonzero(events.tau <= 0.01 + 1e-9)


def test_absorbing_healing_only_table():
    heal = FundamentalTable(("Nstar", "V", "F"), (EventType("heal", (-1, 2, 2), 1.0, (1, 0, 0)),))
    series, events = run(SimConfig(model=heal, seed_pattern="brick:4x4", t_end=1e9, sample_every=1))
    m = run.last_mosaic
    assert series.terminal == "absorbed"
    assert len(events) == 32 and m.V_I == 0
    assert m.check()[0]


def test_unsupported_increments():
    t = FundamentalTable(("Nstar", "V", "F"), (EventType("odd", (1, 0, 0), 1.0, (2, 1, 0)),))
    with pytest.raises(TableError):
        event_kinds(t)
    with pytest.raises(TableError):
        cfg(model=t)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(model=builtin_linear(0.5))
    with pytest.raises(ValueError):
        cfg(heal_epsilon=0.0)
    with pytest.raises(ValueError):
        cfg(split_delta_min=-1.0)
    with pytest.raises(ValueError):
        cfg(seed_pattern="brick:1x4")
    with pytest.raises(ValueError):
        cfg(rng_seed=2**64)
    assert cfg(rng_seed=2**64 - 1).header().startswith(f"seed={2**64 - 1} model=nonlinear params=")


def test_capacity_growth_from_tiny_seed():
    series, events = run(cfg(seed_pattern="brick:2x2", max_events=20_000))
    m = run.last_mosaic
    assert series.n_events == 20_000
    assert m.F == 4 + np.count_nonzero(events.type == 0)
    assert m.check()[0]


def test_heal_fallbacks_are_flagged_not_fatal():
    _, events = run(cfg(seed_pattern="brick:20x20", max_events=20_000, model=builtin_nonlinear(1.0, 0.2)))
    assert np.all(events.increments[events.type == 1] == (1, 0, 0))
    assert events.n_fallback >= 0
    assert run.last_mosaic.check()[0]


def test_debug_env(monkeypatch):
    monkeypatch.setenv("MOSAIC_EVO_DEBUG", "1")
    assert debug_enabled()
    assert not debug_enabled(False)
    monkeypatch.delenv("MOSAIC_EVO_DEBUG")
    assert not debug_enabled()
    series, _ = run(cfg(debug=True, max_events=3000))
    assert series.n_events == 3000


def test_corruption_detected_in_run():
    m = seed_brick(4, 4)
    m.cnt[3] += 1  # N* out of step with the faces
    with pytest.raises(InvariantViolation):
        run(cfg(debug=True, max_events=10), mosaic=m)


def test_csv_outputs(tmp_path):
    series, events = run(cfg(sample_every=100))
    series.to_csv(tmp_path / "s.csv")
    events.to_csv(tmp_path / "e.csv", comment="x")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=7 model=nonlinear params=")
    assert lines[1] == SERIES_HEADER
    back = read_series_csv(tmp_path / "s.csv")
    assert np.array_equal(back["t"], series.t)
    assert np.array_equal(back["x"], series.x)
    assert np.array_equal(back["V_I"].astype(int), series.V_I)
    ev = (tmp_path / "e.csv").read_text().splitlines()
    assert ev[1] == EVENTS_HEADER and len(ev) == 2 + len(events)


def test_svg_frames(tmp_path):
    run(cfg(max_events=250), svg_every=100, svg_dir=tmp_path / "frames")
    frames = sorted(p.name for p in (tmp_path / "frames").iterdir())
    assert frames == ["frame_00000000.svg", "frame_00000100.svg", "frame_00000200.svg"]


def test_regularity_column():
    series, _ = run(cfg(sample_every=50))
    assert series.r[0] == 0.0  # brick start: every node is a T node
    assert np.all((series.r >= 0) & (series.r <= 1))
