from .mesh import (
    COMBINATORIAL,
    GEOMETRIC,
    TorusMosaic,
    assert_invariants,
    check_invariants,
    mosaic_state,
    parse_pattern,
    seed,
    seed_brick,
    seed_hex,
    seed_square,
)
from .run import (
    EventLog,
    EventRecord,
    SimConfig,
    SimSeries,
    apply_healing,
    apply_secondary_crack,
    make_rng,
    read_series_csv,
    run,
    ssa_step,
)
from .svg import render_svg
