import json
import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mosaic_evo.errors import PreconditionError
from mosaic_evo.sim import (
    apply_healing,
    apply_secondary_crack,
    check_invariants,
    make_rng,
    mosaic_state,
    parse_pattern,
    render_svg,
    seed,
    seed_brick,
    seed_hex,
    seed_square,
    ssa_step,
)
from mosaic_evo.stats import irregular_count, q_membership, rescale
from mosaic_evo.table import builtin_linear, builtin_nonlinear


@pytest.mark.parametrize(
    "make, counts",
    [
        (lambda mode: seed_brick(2, 2, mode=mode), (8, 12, 4, 16, 8)),
        (lambda mode: seed_square(3, 3, mode=mode), (9, 18, 9, 36, 0)),
        (lambda mode: seed_hex(2, 2, mode=mode), (8, 12, 4, 24, 0)),
    ],
)
@pytest.mark.parametrize("mode", ["geometric", "combinatorial"])
def test_seed_counts(make, counts, mode):
    m = make(mode)
    assert (m.V, m.E, m.F, m.nstar, m.V_I) == counts
    d = m.direct_counts()
    assert (d["V"], d["E"], d["F"], d["Nstar"], d["V_I"]) == counts
    assert check_invariants(m) == (True, "ok")


def test_seed_rescaled_points():
    assert rescale(mosaic_state(seed_brick(2, 2))).coords == (0.5, 0.25)
    assert rescale(mosaic_state(seed_square(3))).coords == (0.25, 0.25)
    assert rescale(mosaic_state(seed_hex(2, 2))).coords == pytest.approx((1 / 3, 1 / 6))


def test_brick_nodes_are_t_nodes():
    m = seed_brick(4, 6)
    assert m.V_I == m.V
    assert np.all(m.v_deg[: m.V] == 3) and np.all(m.v_ncor[: m.V] == 2)


def test_seed_size_checks():
    with pytest.raises(ValueError):
        seed_brick(1, 4)
    with pytest.raises(ValueError):
        seed_square(1)
    with pytest.raises(ValueError):
        seed_hex(3, 4)  # rows must be even to close the stagger on the torus


def test_parse_pattern():
    assert parse_pattern("brick:100x100") == ("brick", 100, 100)
    assert parse_pattern("hex:4x6") == ("hex", 4, 6)
    for bad in ("brick", "tri:2x2", "square:ax2"):
        with pytest.raises(ValueError):
            parse_pattern(bad)


def test_one_split():
    m = seed_brick(2, 2)
    rec = apply_secondary_crack(m, 0, make_rng(1))
    assert rec.increments == (4, 2, 1)
    assert tuple(mosaic_state(m)) == (20, 10, 5)
    assert m.E == 15
    for v in (m.V - 2, m.V - 1):
        assert m.v_deg[v] == 3 and m.v_ncor[v] == 2
    assert check_invariants(m)[0]


def test_k_splits():
    m = seed_brick(2, 2)
    rng = make_rng(3)
    for k in range(1, 30):
        apply_secondary_crack(m, int(rng.integers(m.F)), rng)
        assert m.F == 4 + k
        assert m.V - m.E + m.F == 0
    assert check_invariants(m)[0]


def test_heal_increments_and_angle():
    m = seed_brick(2, 2)
    v = int(m.irregular_vertices()[0])
    flat = [h for h in m.vertex_star(v) if not m.he_cor[h]]
    assert len(flat) == 1
    assert m.interior_angle(flat[0]) == pytest.approx(math.pi, abs=1e-12)
    before = m.V_I
    rec = apply_healing(m, v)
    assert rec.increments == (1, 0, 0) and rec.flag == "ok"
    assert m.V_I == before - 1
    assert m.V_I == 2 * m.V + 2 * m.F - m.nstar
    assert m.v_ncor[v] == 3
    assert m.interior_angle(flat[0]) < math.pi - 1e-12
    assert check_invariants(m)[0]


def test_heal_regular_vertex_rejected():
    m = seed_hex(2, 2)
    with pytest.raises(PreconditionError):
        apply_healing(m, 0)


def test_corrupted_twin_is_reported():
    m = seed_brick(2, 2)
    m.he_twin[0], m.he_twin[2] = m.he_twin[2], m.he_twin[0]
    ok, msg = check_invariants(m)
    assert not ok and "twin mismatch" in msg


def test_hundred_random_events_keep_invariants():
    m = seed_brick(2, 2)
    rng = make_rng(100)
    t = builtin_nonlinear(1.0, 1.0)
    for _ in range(100):
        ssa_step(m, t, rng)
    assert check_invariants(m) == (True, "ok")


def test_hex_first_event_is_split():
    for s in range(20):
        m = seed_hex(2, 2)
        assert ssa_step(m, builtin_nonlinear(1.0, 0.01), make_rng(s)).event_type == 0


def test_copy_is_independent():
    m = seed_brick(2, 2)
    c = m.copy()
    apply_secondary_crack(c, 1, make_rng(0))
    assert m.F == 4 and c.F == 5
    assert check_invariants(m)[0] and check_invariants(c)[0]


def test_snapshot(tmp_path):
    m = seed_hex(2, 2)
    m.save_snapshot(tmp_path / "snap.json")
    doc = json.loads((tmp_path / "snap.json").read_text())
    assert doc["counts"] == {"V": 8, "E": 12, "F": 4, "Nstar": 24, "V_I": 0}
    assert len(doc["faces"]) == 4 and all(len(f) == 6 for f in doc["faces"])
    assert len(doc["vertices"]["position"]) == 8
    assert len(doc["half_edges"]["twin"]) == 24


def test_svg_counts(tmp_path):
    p = tmp_path / "b.svg"
    render_svg(seed_brick(2, 2), p)
    text = p.read_text()
    assert text.count("<polygon") == 4 and text.count("<circle") == 8
    render_svg(seed_hex(2, 2), tmp_path / "h.svg")
    hx = (tmp_path / "h.svg").read_text()
    assert hx.count("<polygon") == 4 and hx.count("<circle") == 0
    assert len(re.findall(r"<use ", hx)) == 8
    with pytest.raises(OSError):
        render_svg(seed_brick(2, 2), "")
    with pytest.raises(PreconditionError):
        render_svg(seed_brick(2, 2, mode="combinatorial"), tmp_path / "c.svg")


@given(
    st.sampled_from(["brick:2x2", "brick:4x3", "square:3x3", "hex:2x2", "hex:4x3"]),
    st.sampled_from(["geometric", "combinatorial"]),
    st.integers(0, 2**63),
    st.floats(0.05, 5.0),
)
def test_random_surgery_keeps_mesh_exact(pattern, mode, s, mu):
    name, r, c = parse_pattern(pattern)
    m = seed(name, r, c, mode=mode)
    rng = make_rng(s)
    t = builtin_nonlinear(1.0, mu)
    for _ in range(60):
        before = tuple(mosaic_state(m))
        rec = ssa_step(m, t, rng)
        after = tuple(mosaic_state(m))
        assert tuple(a - b for a, b in zip(after, before)) == rec.increments
        d = m.direct_counts()
        assert d["V_I"] == irregular_count(after) == m.V_I
        assert d["V"] - d["E"] + d["F"] == 0
        assert not q_membership(rescale(after)).outside
    assert check_invariants(m) == (True, "ok")


@given(st.integers(0, 2**63), st.floats(0.0, 1.0))
def test_linear_model_surgery(s, q):
    m = seed_brick(2, 2)
    rng = make_rng(s)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = builtin_linear(q)
    for _ in range(40):
        rec = ssa_step(m, t, rng)
        if rec.stalled:
            assert rec.increments == (0, 0, 0) and m.V_I == 0
        else:
            assert rec.increments == ((4, 2, 1) if rec.event_type == 0 else (1, 0, 0))
    assert check_invariants(m)[0]
